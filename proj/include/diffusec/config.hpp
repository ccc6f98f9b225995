#pragma once

#include "diffusec/agent_training.hpp"
#include "diffusec/channel.hpp"
#include "diffusec/classifier.hpp"
#include "diffusec/codec.hpp"
#include "diffusec/dataset.hpp"
#include "diffusec/denoiser_training.hpp"
#include "diffusec/pgd.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <string>

namespace diffusec {

/// Every knob of an experiment. Loaded from flat `section.key=value` lines.
struct ExperimentConfig {
	std::uint64_t seed = 20240611;
	std::filesystem::path out_dir = "out";

	ToyDatasetConfig data{};
	std::size_t heldout_count = 256;

	int schedule_steps = 1000;
	double beta_start = 1e-4;
	double beta_end = 0.02;

	CodecDims codec_dims{};
	int codec_semantic_epochs = 60;
	int codec_jsc_epochs = 60;
	int codec_joint_epochs = 60;
	std::size_t batch_semantic = 128; // B_S
	std::size_t batch_jsc = 64;       // B_J
	CodecTrainConfig codec{};

	DenoiserTrainConfig denoiser{};
	ClassifierConfig classifier{};
	AttackConfig attack{};
	ChannelConfig channel = ChannelConfig::awgn(9.0);
	RewardConfig reward{};
	SsimParams ssim{};

	AgentHyperParams agent{};
	long agent_epochs = 2000;
	std::size_t agent_eval_batch = 64;
	std::size_t eval_count = 512;

	CodecDims codec_dimensions() const {
		auto d = codec_dims;
		d.image_dim = data.side * data.side;
		return d;
	}

	NoiseSchedule schedule() const { return NoiseSchedule::linear(schedule_steps, beta_start, beta_end); }

	CodecTrainConfig codec_phase(int epochs, std::size_t batch) const {
		auto c = codec;
		c.epochs = epochs;
		c.batch = batch;
		c.ssim = ssim;
		return c;
	}

	void validate() const {
		data.validate();
		if (!(codec_dims.latent_dim < data.side * data.side)) throw ConfigError("latent dim must be below the image dim");
		schedule();
		denoiser.limits.validate();
		attack.validate();
		channel.validate();
		reward.validate();
		agent.validate();
		if (agent_epochs < 0) throw ConfigError("agent epochs must be non-negative");
		if (batch_semantic == 0 || batch_jsc == 0 || denoiser.batch == 0 || classifier.batch == 0)
			throw ConfigError("batch sizes must be positive");
	}
};

namespace detail {

inline std::string trim(std::string_view s) {
	const auto b = s.find_first_not_of(" \t\r");
	if (b == std::string_view::npos) return {};
	const auto e = s.find_last_not_of(" \t\r");
	return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
	T out{};
	if constexpr (std::is_floating_point_v<T>) {
		char* end = nullptr;
		const double d = std::strtod(v.c_str(), &end);
		if (v.empty() || end != v.c_str() + v.size()) throw ConfigError(key + ": '" + v + "' is not a number");
		out = T(d);
	} else {
		auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
		if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError(key + ": '" + v + "' is not an integer");
	}
	return out;
}

inline std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
	std::vector<std::size_t> out;
	std::stringstream ss(v);
	for (std::string item; std::getline(ss, item, ',');) out.push_back(parse_number<std::size_t>(key, trim(item)));
	if (out.empty()) throw ConfigError(key + ": empty list");
	return out;
}

} // namespace detail

/// Reads `key=value` lines; '#' starts a comment, blank lines are skipped.
inline std::map<std::string, std::string> parse_key_values(std::istream& in) {
	std::map<std::string, std::string> kv;
	std::string line;
	for (int n = 1; std::getline(in, line); ++n) {
		if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
		const auto t = detail::trim(line);
		if (t.empty()) continue;
		const auto eq = t.find('=');
		if (eq == std::string::npos) throw ConfigError("line " + std::to_string(n) + ": expected key=value");
		auto key = detail::trim(std::string_view(t).substr(0, eq));
		if (key.empty()) throw ConfigError("line " + std::to_string(n) + ": empty key");
		kv[key] = detail::trim(std::string_view(t).substr(eq + 1));
	}
	return kv;
}

/// Applies one setting; unknown keys are rejected.
inline void set_option(ExperimentConfig& c, const std::string& key, const std::string& v) {
	using detail::parse_list;
	using detail::parse_number;
	static const std::map<std::string, std::function<void(ExperimentConfig&, const std::string&, const std::string&)>>
	    setters = [] {
		    std::map<std::string, std::function<void(ExperimentConfig&, const std::string&, const std::string&)>> m;
#define DIFFUSEC_NUM(name, member)                                                                                       \
	m[name] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {                                     \
		c.member = parse_number<std::remove_cvref_t<decltype(c.member)>>(k, v);                                          \
	}
		    DIFFUSEC_NUM("seed", seed);
		    DIFFUSEC_NUM("data.side", data.side);
		    DIFFUSEC_NUM("data.classes", data.classes);
		    DIFFUSEC_NUM("data.count", data.count);
		    DIFFUSEC_NUM("data.heldout", heldout_count);
		    DIFFUSEC_NUM("data.background", data.background);
		    DIFFUSEC_NUM("data.bump_amplitude", data.bump_amplitude);
		    DIFFUSEC_NUM("data.bump_sigma", data.bump_sigma);
		    DIFFUSEC_NUM("data.center_radius", data.center_radius);
		    DIFFUSEC_NUM("data.jitter", data.jitter);
		    DIFFUSEC_NUM("data.texture_amplitude", data.texture_amplitude);
		    DIFFUSEC_NUM("data.texture_frequencies", data.texture_frequencies);
		    DIFFUSEC_NUM("data.pixel_noise", data.pixel_noise);
		    DIFFUSEC_NUM("schedule.steps", schedule_steps);
		    DIFFUSEC_NUM("schedule.beta_start", beta_start);
		    DIFFUSEC_NUM("schedule.beta_end", beta_end);
		    DIFFUSEC_NUM("codec.semantic_hidden", codec_dims.semantic_hidden);
		    DIFFUSEC_NUM("codec.embed_dim", codec_dims.embed_dim);
		    DIFFUSEC_NUM("codec.channel_hidden", codec_dims.channel_hidden);
		    DIFFUSEC_NUM("codec.latent_dim", codec_dims.latent_dim);
		    DIFFUSEC_NUM("codec.semantic_epochs", codec_semantic_epochs);
		    DIFFUSEC_NUM("codec.jsc_epochs", codec_jsc_epochs);
		    DIFFUSEC_NUM("codec.joint_epochs", codec_joint_epochs);
		    DIFFUSEC_NUM("codec.batch_semantic", batch_semantic);
		    DIFFUSEC_NUM("codec.batch_jsc", batch_jsc);
		    DIFFUSEC_NUM("codec.lr", codec.learning_rate);
		    DIFFUSEC_NUM("codec.iota", codec.iota);
		    DIFFUSEC_NUM("codec.snr_min_db", codec.snr_min_db);
		    DIFFUSEC_NUM("codec.snr_max_db", codec.snr_max_db);
		    DIFFUSEC_NUM("denoiser.pretrain_epochs", denoiser.pretrain_epochs);
		    DIFFUSEC_NUM("denoiser.epochs", denoiser.epochs);
		    DIFFUSEC_NUM("denoiser.batch", denoiser.batch);
		    DIFFUSEC_NUM("denoiser.lr", denoiser.learning_rate);
		    DIFFUSEC_NUM("denoiser.pretrain_lr", denoiser.pretrain_learning_rate);
		    DIFFUSEC_NUM("denoiser.zeta", denoiser.zeta);
		    DIFFUSEC_NUM("denoiser.iota_prime", denoiser.iota_prime);
		    DIFFUSEC_NUM("denoiser.max_t_d", denoiser.max_t_d);
		    DIFFUSEC_NUM("denoiser.snr_db", denoiser.channel.snr_db);
		    DIFFUSEC_NUM("denoiser.snr_min_db", denoiser.snr_min_db);
		    DIFFUSEC_NUM("denoiser.snr_max_db", denoiser.snr_max_db);
		    DIFFUSEC_NUM("classifier.epochs", classifier.epochs);
		    DIFFUSEC_NUM("classifier.batch", classifier.batch);
		    DIFFUSEC_NUM("classifier.lr", classifier.learning_rate);
		    DIFFUSEC_NUM("attack.gamma", attack.gamma);
		    DIFFUSEC_NUM("attack.iterations", attack.iterations);
		    DIFFUSEC_NUM("attack.step_size", attack.step_size);
		    DIFFUSEC_NUM("channel.snr_db", channel.snr_db);
		    DIFFUSEC_NUM("channel.attack_noise_power", channel.attack_noise_power);
		    DIFFUSEC_NUM("reward.eta", reward.eta);
		    DIFFUSEC_NUM("reward.eta1", reward.eta1);
		    DIFFUSEC_NUM("reward.eta2", reward.eta2);
		    DIFFUSEC_NUM("reward.eta3", reward.eta3);
		    DIFFUSEC_NUM("ssim.c1", ssim.c1);
		    DIFFUSEC_NUM("ssim.c2", ssim.c2);
		    DIFFUSEC_NUM("ssim.window", ssim.window);
		    DIFFUSEC_NUM("agent.hidden", agent.hidden);
		    DIFFUSEC_NUM("agent.buffer", agent.buffer);
		    DIFFUSEC_NUM("agent.batch", agent.batch);
		    DIFFUSEC_NUM("agent.gamma", agent.gamma);
		    DIFFUSEC_NUM("agent.tau", agent.tau);
		    DIFFUSEC_NUM("agent.lr_actor", agent.lr_actor);
		    DIFFUSEC_NUM("agent.lr_critic", agent.lr_critic);
		    DIFFUSEC_NUM("agent.episodes", agent.episodes);
		    DIFFUSEC_NUM("agent.warmup", agent.warmup_steps);
		    DIFFUSEC_NUM("agent.noise_start", agent.noise_start);
		    DIFFUSEC_NUM("agent.noise_end", agent.noise_end);
		    DIFFUSEC_NUM("agent.epochs", agent_epochs);
		    DIFFUSEC_NUM("agent.eval_batch", agent_eval_batch);
		    DIFFUSEC_NUM("eval.count", eval_count);
#undef DIFFUSEC_NUM
		    m["out_dir"] = [](ExperimentConfig& c, const std::string&, const std::string& v) { c.out_dir = v; };
		    m["denoiser.hidden"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
			    c.denoiser.hidden = parse_list(k, v);
		    };
		    m["classifier.hidden"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
			    c.classifier.hidden = parse_list(k, v);
		    };
		    m["denoiser.randomize_snr"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
			    if (v != "true" && v != "false") throw ConfigError(k + " must be true or false");
			    c.denoiser.randomize_snr = v == "true";
		    };
		    m["codec.activation"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
			    if (v == "linear") c.codec_dims.hidden_activation = Activation::linear;
			    else if (v == "relu") c.codec_dims.hidden_activation = Activation::relu;
			    else if (v == "tanh") c.codec_dims.hidden_activation = Activation::tanh;
			    else throw ConfigError(k + " must be linear, relu or tanh");
		    };
		    m["agent.optimizer"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
			    if (v == "sgd") c.agent.optimizer = OptimizerKind::sgd;
			    else if (v == "adam") c.agent.optimizer = OptimizerKind::adam;
			    else throw ConfigError(k + " must be sgd or adam");
		    };
		    return m;
	    }();
	const auto it = setters.find(key);
	if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
	it->second(c, key, v);
}

inline ExperimentConfig load_config(std::istream& in, ExperimentConfig base = {}) {
	const auto kv = parse_key_values(in);
	for (const auto& [k, v] : kv) set_option(base, k, v);
	// the step length follows the radius unless pinned explicitly
	if (kv.contains("attack.gamma") && !kv.contains("attack.step_size")) base.attack.step_size = base.attack.gamma / 4.0;
	return base;
}

inline ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {}) {
	std::ifstream in(path);
	if (!in) throw IoError("cannot open config " + path.string());
	return load_config(in, std::move(base));
}

/// DIFFUSEC_OUT, when set and non-empty, replaces the configured output directory.
inline std::filesystem::path resolve_out_dir(const ExperimentConfig& c) {
	if (const char* env = std::getenv("DIFFUSEC_OUT"); env && *env) return env;
	return c.out_dir;
}

} // namespace diffusec
