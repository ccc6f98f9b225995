#pragma once

// Command-line front end. cli_main is kept apart from main() so tests can drive it.

#include "diffusec/diffusec.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace diffusec::cli {

namespace fs = std::filesystem;

inline constexpr int exit_ok = 0;
inline constexpr int exit_runtime = 1;
inline constexpr int exit_usage = 2;

/// Rng stream of each subcommand, split from the config seed.
enum Stream : std::uint64_t {
	data_stream = 1,
	classifier_stream,
	codec_stream,
	denoiser_stream,
	agent_stream,
	handshake_stream,
	sweep_stream,
	purify_stream,
	eval_stream,
	attack_stream,
	channel_stream,
};

inline Rng stream(const ExperimentConfig& cfg, Stream s) { return Rng(cfg.seed).split(s); }

/// Where every artifact lives under the output directory.
struct Layout {
	fs::path root;

	fs::path train_images() const { return root / "data" / "train_images.dtns"; }
	fs::path train_labels() const { return root / "data" / "train_labels.csv"; }
	fs::path heldout_images() const { return root / "data" / "heldout_images.dtns"; }
	fs::path heldout_labels() const { return root / "data" / "heldout_labels.csv"; }
	fs::path classifier() const { return root / "checkpoints" / "classifier.dcls"; }
	fs::path codec() const { return root / "checkpoints" / "codec.dcod"; }
	fs::path denoiser() const { return root / "checkpoints" / "denoiser.dden"; }
	fs::path agent() const { return root / "checkpoints" / "agent.dagt"; }
	fs::path agent_log() const { return root / "agent_log.csv"; }
	fs::path metrics() const { return root / "metrics.csv"; }
	fs::path sweep(SweepMode m) const { return root / (m == SweepMode::adaptive ? "sweep_adaptive.csv" : "sweep_fixed.csv"); }
	fs::path gallery() const { return root / "gallery.dtns"; }
	fs::path adversarial_images() const { return root / "attack" / "adv_images.dtns"; }
	fs::path adversarial_labels() const { return root / "attack" / "adv_labels.csv"; }
	fs::path received() const { return root / "channel" / "received.dtns"; }
};

/// Appends rows under `header`, writing the header first when the file is new or empty.
inline void append_csv(const fs::path& p, const std::string& header, const std::vector<std::string>& rows) {
	if (p.has_parent_path()) fs::create_directories(p.parent_path());
	const bool fresh = !fs::exists(p) || fs::file_size(p) == 0;
	if (!fresh) {
		std::ifstream in(p);
		std::string first;
		std::getline(in, first);
		if (first != header) throw IoError(p.string() + " has a different header; refusing to append");
	}
	std::ofstream out(p, std::ios::app);
	if (!out) throw IoError("cannot write " + p.string());
	if (fresh) out << header << '\n';
	for (const auto& r : rows) out << r << '\n';
}

inline void write_csv(const fs::path& p, const std::string& header, const std::vector<std::string>& rows) {
	if (fs::exists(p)) fs::remove(p);
	append_csv(p, header, rows);
}

/// "8/256" or a plain number.
inline double parse_fraction(const std::string& s) {
	const auto slash = s.find('/');
	auto num = [&](const std::string& v) {
		std::size_t used = 0;
		double d = 0;
		try {
			d = std::stod(v, &used);
		} catch (const std::exception&) {
			used = 0;
		}
		if (used == 0 || used != v.size()) throw CLI::ValidationError("'" + s + "' is not a number or fraction");
		return d;
	};
	if (slash == std::string::npos) return num(s);
	const double den = num(s.substr(slash + 1));
	if (den == 0.0) throw CLI::ValidationError("zero denominator in '" + s + "'");
	return num(s.substr(0, slash)) / den;
}

class Runner {
  public:
	Runner(ExperimentConfig cfg, fs::path root, std::ostream& out)
	    : m_cfg(std::move(cfg)), m_out(out), m_layout{std::move(root)} {}

	const Layout& layout() const { return m_layout; }
	const ExperimentConfig& config() const { return m_cfg; }

	void gen_data() {
		Rng rng = stream(m_cfg, data_stream);
		const auto d = make_splits(m_cfg, rng);
		save_dataset(m_layout.train_images(), m_layout.train_labels(), d.train);
		save_dataset(m_layout.heldout_images(), m_layout.heldout_labels(), d.heldout);
		m_out << "wrote " << d.train.size() << " training and " << d.heldout.size() << " held-out images to "
		      << (m_layout.root / "data").string() << '\n';
	}

	void train_classifier_cmd() {
		const auto d = splits();
		Rng rng = stream(m_cfg, classifier_stream);
		const auto rep = train_classifier(d.train, m_cfg.classifier, rng);
		save_classifier(m_layout.classifier(), rep.classifier);
		m_out << "classifier: train accuracy " << rep.train_accuracy << ", held-out accuracy "
		      << rep.classifier.accuracy(d.heldout) << '\n';
	}

	void train_codec_cmd(CodecPhase phase) {
		const auto d = splits();
		Rng rng = stream(m_cfg, codec_stream).split(std::uint64_t(phase));
		std::optional<Codec> start;
		if (phase == CodecPhase::jsc || phase == CodecPhase::joint) start = load_codec(require(m_layout.codec(), "train-codec --phase semantic"));
		const auto r = train_codec(m_cfg, d, phase, rng, std::move(start), [&](const std::string& s) { m_out << s << '\n'; });
		save_codec(m_layout.codec(), r.codec);
		m_out << "codec: held-out SSIM " << r.report.heldout_ssim << '\n';
	}

	void train_denoiser_cmd() {
		const auto d = splits();
		const auto codec = load_codec(require(m_layout.codec(), "train-codec"));
		Rng rng = stream(m_cfg, denoiser_stream);
		const auto r = train_denoiser(d.train, codec, m_cfg.schedule(), m_cfg.denoiser, rng);
		save_denoiser(m_layout.denoiser(), r.denoiser);
		if (!r.pretrain_losses.empty()) m_out << "denoiser: pretrain loss " << r.pretrain_losses.back() << '\n';
		if (!r.epoch_losses.empty()) m_out << "denoiser: purification loss " << r.epoch_losses.back() << '\n';
	}

	/// `stub` trains against the synthetic environment and needs no other artifacts.
	void train_agent_cmd(long epochs, const AgentHyperParams& hp, bool stub) {
		Rng rng = stream(m_cfg, agent_stream);
		AgentTrainResult res;
		if (stub) {
			StubEnvironment env{hp.limits};
			res = train_agent(env, epochs, hp, rng);
		} else {
			const auto c = components();
			Rng pool_rng = rng.split(1);
			PipelineEnvironment env(c, EvalPool::make(eval_set(), c, pool_rng), m_cfg.agent_eval_batch, hp.limits);
			res = train_agent(env, epochs, hp, rng);
		}
		save_agent(m_layout.agent(), res.nets, hp);
		std::vector<std::string> rows;
		for (const auto& e : res.log) rows.push_back(to_csv(e));
		write_csv(m_layout.agent_log(), agent_log_csv_header, rows);
		m_out << "agent: " << res.log.size() << " steps, " << res.updates << " updates\n";
	}

	void handshake(double snr_db, std::optional<PlanRequest> fixed, double drop) {
		Rng rng = stream(m_cfg, handshake_stream);
		TimestepSelector sel;
		if (fixed) {
			sel = fixed_selector(fixed->t_d, fixed->t_plus);
		} else if (fs::exists(m_layout.agent())) {
			auto a = load_agent(m_layout.agent());
			sel = agent_selector(std::move(a.nets), {20, 0}, 3, a.hp.limits);
		} else {
			sel = fixed_selector(20, 0);
		}
		const auto r = run_handshake(sel, LinkConfig{ChannelConfig::awgn(snr_db), drop}, rng);
		m_out << "agreed plan: t_D=" << r.receiver.plan()->t_d() << " t_plus=" << r.receiver.plan()->t_plus()
		      << "\nmeasured SNR: " << r.receiver.measured_snr_db() << " dB\nframes sent: " << r.frames_sent << '\n';
	}

	void sweep(const std::vector<double>& snrs, SweepMode mode, int steps) {
		const auto c = components();
		std::optional<DdpgNets> agent;
		SweepConfig sc;
		sc.mode = mode;
		sc.steps = steps;
		if (mode == SweepMode::adaptive) {
			auto a = load_agent(require(m_layout.agent(), "train-agent"));
			agent = std::move(a.nets);
			sc.limits = a.hp.limits;
		}
		Rng rng = stream(m_cfg, sweep_stream);
		Rng pool_rng = rng.split(1);
		const auto pool = EvalPool::make(eval_set(), c, pool_rng);
		const auto res = sweep_snr(snrs, sc, c, pool, agent ? &*agent : nullptr, rng);
		std::vector<std::string> rows;
		for (const auto& r : res.rows) rows.push_back(to_csv(r));
		write_csv(m_layout.sweep(mode), sweep_csv_header, rows);
		m_out << sweep_csv_header << '\n';
		for (const auto& r : rows) m_out << r << '\n';
		m_out << "mean reward " << mean_reward(res) << '\n';
	}

	void purify_cmd(const fs::path& input, const fs::path& output, const TimestepPlan& plan) {
		const auto d = load_denoiser(require(m_layout.denoiser(), "train-denoiser"));
		const auto t = load_tensor(input);
		if (t.size() % d.net().out_dim() != 0) throw ShapeError("input images do not match the denoiser image size");
		Rng rng = stream(m_cfg, purify_stream);
		const auto rows = t.size() / d.net().out_dim();
		const auto out = purify(t.reshaped({rows, d.net().out_dim()}), plan, d, rng);
		save_tensor(output, out.reshaped(t.shape()));
		m_out << "purified " << rows << " images with t_P=" << plan.t_p() << " -> " << output.string() << '\n';
	}

	void eval(double snr_db, const TimestepPlan& plan, const PipelineOptions& opt, std::size_t gallery_n) {
		const auto c = components();
		const auto data = eval_set();
		Rng rng = stream(m_cfg, eval_stream);
		const auto run = run_pipeline(data.images, data.labels, plan, c, ChannelConfig::awgn(snr_db), rng, opt);
		append_csv(m_layout.metrics(), metrics_csv_header, {to_csv(run.row)});
		if (gallery_n) save_tensor(m_layout.gallery(), gallery(c, data, plan, ChannelConfig::awgn(snr_db), gallery_n, rng));
		m_out << "robust accuracy " << run.outcome.robust_accuracy() << '\n' << metrics_csv_header << '\n' << to_csv(run.row) << '\n';
	}

	void attack(const AttackConfig& a) {
		const auto data = eval_set();
		const auto clf = load_classifier(require(m_layout.classifier(), "train-classifier"));
		Rng rng = stream(m_cfg, attack_stream);
		const auto adv = pgd_attack(data.images, data.labels, clf, a, rng);
		Dataset out = data;
		out.images = adv;
		save_dataset(m_layout.adversarial_images(), m_layout.adversarial_labels(), out);
		m_out << "clean accuracy " << clf.accuracy(data) << ", attacked accuracy " << clf.accuracy(adv, data.labels) << '\n';
	}

	void channel(const ChannelConfig& ch) {
		const auto data = eval_set();
		const auto codec = load_codec(require(m_layout.codec(), "train-codec"));
		Rng rng = stream(m_cfg, channel_stream);
		const auto rx = codec.decode(transmit(codec.encode(data.images), ch, rng));
		save_tensor(m_layout.received(), rx.reshaped({data.size(), data.height, data.width}));
		m_out << "received SSIM " << ssim_avg(data.images, rx, m_cfg.ssim) << ", MSE " << mean_squared_error(data.images, rx)
		      << '\n';
	}

  private:
	static const fs::path& require(const fs::path& p, const char* producer) {
		if (!fs::exists(p)) throw IoError(p.string() + " not found; run " + producer + " first");
		return p;
	}

	DataSplits splits() const {
		const auto c = m_cfg.data.classes;
		return {load_dataset(require(m_layout.train_images(), "gen-data"), m_layout.train_labels(), c),
		        load_dataset(require(m_layout.heldout_images(), "gen-data"), m_layout.heldout_labels(), c)};
	}

	Dataset eval_set() const {
		auto h = load_dataset(require(m_layout.heldout_images(), "gen-data"), m_layout.heldout_labels(), m_cfg.data.classes);
		return h.size() > m_cfg.eval_count ? h.slice(0, m_cfg.eval_count) : h;
	}

	Components components() const {
		return assemble(m_cfg, load_codec(require(m_layout.codec(), "train-codec")),
		                load_denoiser(require(m_layout.denoiser(), "train-denoiser")),
		                load_classifier(require(m_layout.classifier(), "train-classifier")));
	}

	ExperimentConfig m_cfg;
	std::ostream& m_out;
	Layout m_layout;
};

/// Parses argv and runs one subcommand. Exit codes: 0 ok, 1 runtime error, 2 usage error.
inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
	CLI::App app{"Diffusion-purified semantic communication simulator", "diffusec"};
	app.require_subcommand(1);
	std::string config_path, out_dir;
	std::optional<std::uint64_t> seed;
	app.add_option("-c,--config", config_path, "key=value config file")->check(CLI::ExistingFile);
	app.add_option("-o,--out", out_dir, "output directory (overrides DIFFUSEC_OUT and out_dir)");
	app.add_option("--seed", seed, "master seed");

	auto* gen = app.add_subcommand("gen-data", "generate the toy dataset");
	auto* clf = app.add_subcommand("train-classifier", "train the task classifier");

	auto* codec = app.add_subcommand("train-codec", "train the semantic-channel codec");
	std::string phase = "all";
	codec->add_option("--phase", phase, "semantic, jsc, joint or all")
	    ->check(CLI::IsMember({"semantic", "jsc", "joint", "all"}));

	auto* den = app.add_subcommand("train-denoiser", "train the receiver denoiser");

	auto* agent = app.add_subcommand("train-agent", "train the timestep agent");
	long epochs = -1;
	std::string optimizer, env = "pipeline";
	std::optional<int> episodes;
	std::optional<std::size_t> buffer, batch, hidden;
	std::optional<double> gamma, tau, lr_actor, lr_critic;
	std::optional<long> warmup;
	agent->add_option("--epochs", epochs, "training epochs (default from config)")->check(CLI::NonNegativeNumber);
	agent->add_option("--episodes", episodes, "steps per epoch")->check(CLI::PositiveNumber);
	agent->add_option("--buffer", buffer, "replay capacity")->check(CLI::PositiveNumber);
	agent->add_option("--batch", batch, "mini-batch size")->check(CLI::PositiveNumber);
	agent->add_option("--hidden", hidden, "hidden width")->check(CLI::PositiveNumber);
	agent->add_option("--gamma", gamma, "discount")->check(CLI::Range(0.0, 1.0));
	agent->add_option("--tau", tau, "soft update rate")->check(CLI::Range(0.0, 1.0));
	agent->add_option("--lr-actor", lr_actor, "actor learning rate")->check(CLI::PositiveNumber);
	agent->add_option("--lr-critic", lr_critic, "critic learning rate")->check(CLI::PositiveNumber);
	agent->add_option("--warmup", warmup, "random-action steps")->check(CLI::NonNegativeNumber);
	agent->add_option("--optimizer", optimizer, "sgd or adam")->check(CLI::IsMember({"sgd", "adam"}));
	agent->add_option("--env", env, "pipeline or stub")->check(CLI::IsMember({"pipeline", "stub"}));

	auto* hs = app.add_subcommand("handshake", "run one timestep-synchronization handshake");
	double hs_snr = 9.0, drop = 0.0;
	std::vector<int> hs_plan;
	hs->add_option("--snr-db", hs_snr, "channel SNR for the probe");
	hs->add_option("--plan", hs_plan, "fixed t_D,t_plus instead of the agent")->expected(2)->delimiter(',');
	hs->add_option("--drop", drop, "frame drop probability")->check(CLI::Range(0.0, 0.99));

	auto* sw = app.add_subcommand("sweep", "robust accuracy and reward across SNRs");
	std::vector<double> snrs(training_snrs_db.begin(), training_snrs_db.end());
	std::string mode = "adaptive";
	int steps = 3;
	sw->add_option("--snr", snrs, "comma-separated SNRs in dB")->delimiter(',');
	sw->add_option("--mode", mode, "adaptive or fixed")->check(CLI::IsMember({"adaptive", "fixed"}));
	sw->add_option("--steps", steps, "evaluations per SNR")->check(CLI::PositiveNumber);

	int t_d = 20, t_plus = 0;
	auto add_plan = [&](CLI::App* sub) {
		sub->add_option("--t-d", t_d, "diffusing steps");
		sub->add_option("--t-plus", t_plus, "extra denoising steps");
	};

	auto* pur = app.add_subcommand("purify", "purify a DTNS image batch");
	std::string input, output;
	pur->add_option("input", input, "input DTNS")->required()->check(CLI::ExistingFile);
	pur->add_option("output", output, "output DTNS")->required();
	add_plan(pur);

	auto* ev = app.add_subcommand("eval", "run the full pipeline on the held-out set");
	double ev_snr = 9.0;
	bool no_attack = false, no_purify = false;
	std::size_t gallery_n = 8;
	ev->add_option("--snr-db", ev_snr, "channel SNR");
	ev->add_flag("--no-attack", no_attack, "skip PGD");
	ev->add_flag("--no-purify", no_purify, "skip diffusion and denoising");
	ev->add_option("--gallery", gallery_n, "images in gallery.dtns (0 to skip)");
	add_plan(ev);

	auto* atk = app.add_subcommand("attack", "PGD on the held-out set");
	std::string gamma_s = "8/256";
	int iters = 10;
	atk->add_option("--gamma", gamma_s, "l-inf radius, e.g. 8/256");
	atk->add_option("--iters", iters, "iterations")->check(CLI::PositiveNumber);

	auto* chn = app.add_subcommand("channel", "send held-out images through codec and channel");
	double ch_snr = 9.0, attack_power = 0.0;
	chn->add_option("--snr-db", ch_snr, "channel SNR");
	chn->add_option("--attack-power", attack_power, "channel-attack noise power relative to the signal")
	    ->check(CLI::NonNegativeNumber);

	try {
		app.parse(argc, argv);
	} catch (const CLI::Success&) {
		out << app.help();
		return exit_ok;
	} catch (const CLI::ParseError& e) {
		err << "usage error: " << e.what() << "\n" << "run with --help for usage\n";
		return exit_usage;
	}

	try {
		ExperimentConfig cfg;
		if (!config_path.empty()) cfg = load_config(fs::path(config_path));
		if (seed) cfg.seed = *seed;
		cfg.validate();
		// an explicit --out beats DIFFUSEC_OUT, which beats the config's out_dir
		Runner run(cfg, out_dir.empty() ? resolve_out_dir(cfg) : fs::path(out_dir), out);

		if (*gen) run.gen_data();
		else if (*clf) run.train_classifier_cmd();
		else if (*codec) {
			const CodecPhase ph = phase == "semantic" ? CodecPhase::semantic
			                      : phase == "jsc"    ? CodecPhase::jsc
			                      : phase == "joint"  ? CodecPhase::joint
			                                          : CodecPhase::all;
			run.train_codec_cmd(ph);
		} else if (*den) run.train_denoiser_cmd();
		else if (*agent) {
			AgentHyperParams hp = cfg.agent;
			if (episodes) hp.episodes = *episodes;
			if (buffer) hp.buffer = *buffer;
			if (batch) hp.batch = *batch;
			if (hidden) hp.hidden = *hidden;
			if (gamma) hp.gamma = *gamma;
			if (tau) hp.tau = *tau;
			if (lr_actor) hp.lr_actor = *lr_actor;
			if (lr_critic) hp.lr_critic = *lr_critic;
			if (warmup) hp.warmup_steps = *warmup;
			if (!optimizer.empty()) hp.optimizer = optimizer == "adam" ? OptimizerKind::adam : OptimizerKind::sgd;
			hp.validate();
			run.train_agent_cmd(epochs >= 0 ? epochs : cfg.agent_epochs, hp, env == "stub");
		} else if (*hs) {
			std::optional<PlanRequest> fixed;
			if (!hs_plan.empty()) fixed = PlanRequest{hs_plan[0], hs_plan[1]};
			run.handshake(hs_snr, fixed, drop);
		} else if (*sw) {
			run.sweep(snrs, mode == "adaptive" ? SweepMode::adaptive : SweepMode::fixed, steps);
		} else if (*pur) {
			run.purify_cmd(input, output, TimestepPlan::make(t_d, t_plus));
		} else if (*ev) {
			run.eval(ev_snr, TimestepPlan::make(t_d, t_plus), {.attack = !no_attack, .purify = !no_purify}, gallery_n);
		} else if (*atk) {
			run.attack(AttackConfig::with_radius(parse_fraction(gamma_s), iters));
		} else if (*chn) {
			run.channel(ChannelConfig::awgn(ch_snr, attack_power));
		}
		return exit_ok;
	} catch (const CLI::ParseError& e) {
		err << "usage error: " << e.what() << '\n';
		return exit_usage;
	} catch (const std::exception& e) {
		err << "error: " << e.what() << '\n';
		return exit_runtime;
	}
}

} // namespace diffusec::cli
