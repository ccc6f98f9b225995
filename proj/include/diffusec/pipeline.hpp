#pragma once

#include "diffusec/agent_training.hpp"
#include "diffusec/codec.hpp"
#include "diffusec/diffusion.hpp"
#include "diffusec/pgd.hpp"
#include "diffusec/sync.hpp"

#include <future>
#include <optional>
#include <string>
#include <vector>

namespace diffusec {

/// Everything the receiver and sender share once training is done.
struct Components {
	Codec codec;
	Denoiser denoiser = Denoiser::gaussian_oracle(NoiseSchedule::standard());
	Classifier classifier;
	AttackConfig attack{};
	SsimParams ssim{};
	RewardConfig reward{};
	std::size_t height = 16;
	std::size_t width = 16;

	void validate() const {
		codec.validate();
		if (classifier.net().empty()) throw ConfigError("pipeline needs a classifier");
		if (classifier.net().in_dim() != codec.image_dim()) throw ConfigError("classifier and codec image dims differ");
		if (denoiser.kind() == DenoiserKind::learned && denoiser.net().out_dim() != codec.image_dim())
			throw ConfigError("denoiser and codec image dims differ");
		if (height * width != codec.image_dim()) throw ConfigError("image geometry does not match the codec");
		attack.validate();
	}
};

struct PipelineOptions {
	bool attack = true;
	/// Off means the plain codec: no diffusion before encoding and no denoising after decoding.
	bool purify = true;
};

struct PipelineRun {
	BatchOutcome outcome;
	MetricsRow row;
};

/// x -> PGD -> diffuse(t_D) -> encode -> channel -> decode -> purify(t_D + t_plus) -> classify.
/// `x_adv` may carry a precomputed attack on `x`, which is then used instead of running PGD.
inline PipelineRun run_pipeline(const Tensor& x, std::span<const int> labels, const TimestepPlan& plan,
                                const Components& c, const ChannelConfig& channel, Rng& rng,
                                const PipelineOptions& opt = {}, const Tensor* x_adv = nullptr) {
	const Tensor X = x.as_batch();
	if (X.rows() != labels.size()) throw ShapeError("pipeline: one label per image required");
	Tensor attacked = !opt.attack ? X : x_adv ? x_adv->as_batch() : pgd_attack(X, labels, c.classifier, c.attack, rng);
	require_same_shape(X, attacked, "pipeline attack");
	const auto& sched = c.denoiser.schedule();
	Tensor sent = opt.purify ? diffuse(attacked, plan.t_d(), sched, rng) : attacked;
	Tensor received = c.codec.decode(transmit(c.codec.encode(sent), channel, rng));
	Tensor final = opt.purify ? purify(received, plan, c.denoiser, rng) : received;
	auto outcome = BatchOutcome::make(X, std::move(attacked), std::move(final),
	                                  std::vector<int>(labels.begin(), labels.end()), c.classifier);
	const auto row = metrics_row(outcome, 0, channel.snr_db, plan.t_d(), plan.t_plus(), c.reward, c.ssim);
	return {std::move(outcome), row};
}

/// Observed SNR: the pilot sent through the channel, measured at the receiver.
inline double observe_snr(double true_snr_db, Rng& rng) {
	const auto& p = known_pilot();
	const auto rx = transmit(Tensor({pilot_length}, std::vector<float>(p.begin(), p.end())), ChannelConfig::awgn(true_snr_db), rng);
	return measure_snr(rx.values(), p);
}

/// Attacked evaluation pool, computed once so that repeated environment steps only pay for
/// the pipeline itself.
struct EvalPool {
	Tensor clean;
	Tensor adversarial;
	std::vector<int> labels;

	std::size_t size() const noexcept { return labels.size(); }

	static EvalPool make(const Dataset& data, const Components& c, Rng& rng) {
		data.validate();
		return {data.images, pgd_attack(data.images, data.labels, c.classifier, c.attack, rng), data.labels};
	}

	EvalPool subset(std::span<const std::size_t> idx) const {
		EvalPool out{gather_rows(clean, idx), gather_rows(adversarial, idx), {}};
		for (auto i : idx) out.labels.push_back(labels.at(i));
		return out;
	}
};

/// The real step-selection environment: each step evaluates the pipeline on a fresh batch
/// from the pool at the epoch's true SNR; the agent only sees the pilot-measured SNR.
class PipelineEnvironment {
  public:
	PipelineEnvironment(const Components& c, EvalPool pool, std::size_t batch, AgentLimits limits = {},
	                    std::vector<double> snrs = {training_snrs_db.begin(), training_snrs_db.end()})
	    : m_components(&c), m_pool(std::move(pool)), m_batch(batch), m_limits(limits), m_snrs(std::move(snrs)) {
		c.validate();
		if (m_pool.size() == 0 || batch == 0) throw ConfigError("environment needs a non-empty pool and batch");
		if (m_snrs.empty()) throw ConfigError("environment needs at least one SNR");
	}

	AgentState reset(Rng& rng) {
		m_true_snr = m_snrs[rng.index(m_snrs.size())];
		const int t_d = rng.uniform_int(1, m_limits.t_d_max), t_plus = rng.uniform_int(0, m_limits.t_plus_max);
		return project_state(t_d, t_plus, observe_snr(m_true_snr, rng), m_limits);
	}

	StepResult step(const AgentState& s, const AgentAction& a, Rng& rng) {
		StepResult r;
		r.next = apply_action(s, a, m_limits);
		std::vector<std::size_t> idx(std::min(m_batch, m_pool.size()));
		for (auto& i : idx) i = rng.index(m_pool.size());
		const auto b = m_pool.subset(idx);
		auto run = run_pipeline(b.clean, b.labels, r.next.plan(m_limits), *m_components,
		                        ChannelConfig::awgn(m_true_snr), rng, {}, &b.adversarial);
		r.reward = run.row.reward;
		r.metrics = run.row;
		r.next.snr_db = observe_snr(m_true_snr, rng);
		return r;
	}

	double true_snr_db() const noexcept { return m_true_snr; }

  private:
	const Components* m_components;
	EvalPool m_pool;
	std::size_t m_batch;
	AgentLimits m_limits;
	std::vector<double> m_snrs;
	double m_true_snr = 0;
};

enum class SweepMode { adaptive, fixed };

struct SweepRow {
	double snr_db = 0;
	double robust_accuracy = 0;
	double clean_accuracy = 0;
	double ssim_avg = 0;
	double mean_reward = 0;
	int t_d = 0;
	int t_plus = 0;
};

inline constexpr const char* sweep_csv_header = "snr_db,robust_accuracy,clean_accuracy,ssim_avg,mean_reward,t_D,t_plus";

inline std::string to_csv(const SweepRow& r) {
	char buf[192];
	std::snprintf(buf, sizeof buf, "%.4f,%.6f,%.6f,%.6f,%.6f,%d,%d", r.snr_db, r.robust_accuracy, r.clean_accuracy,
	              r.ssim_avg, r.mean_reward, r.t_d, r.t_plus);
	return buf;
}

struct SweepResult {
	SweepMode mode = SweepMode::fixed;
	std::vector<SweepRow> rows;
};

struct SweepConfig {
	SweepMode mode = SweepMode::fixed;
	int steps = 3;
	/// Plan used in fixed mode (the plain symmetric setting).
	PlanRequest fixed_plan{20, 0};
	AgentLimits limits{};
	bool parallel = true;
};

/// Per SNR: adaptive mode starts from a random plan and takes `steps` greedy agent steps,
/// evaluating the pipeline after each; fixed mode evaluates the fixed plan `steps` times.
/// Metrics are averaged over the evaluations. Every SNR point uses its own Rng stream, split
/// from `rng` by position, so the two modes see the same plan initialisations and channel
/// draws and results do not depend on scheduling.
inline SweepResult sweep_snr(std::span<const double> snrs, const SweepConfig& cfg, const Components& c,
                             const EvalPool& pool, const DdpgNets* agent, Rng& rng) {
	c.validate();
	if (cfg.steps < 1) throw ConfigError("sweep needs at least one step per SNR");
	if (cfg.mode == SweepMode::adaptive && !agent) throw ConfigError("adaptive sweep needs a trained agent");
	check_assign(cfg.fixed_plan.t_d, cfg.fixed_plan.t_plus);
	const std::uint64_t base = rng.next_u64();

	auto point = [&](std::size_t k) {
		Rng r = Rng(base).split(k);
		const double snr = snrs[k];
		SweepRow row{snr, 0, 0, 0, 0, 0, 0};
		auto s = project_state(r.uniform_int(1, cfg.limits.t_d_max), r.uniform_int(0, cfg.limits.t_plus_max), 0,
		                       cfg.limits);
		if (cfg.mode == SweepMode::fixed) s = project_state(cfg.fixed_plan.t_d, cfg.fixed_plan.t_plus, 0, cfg.limits);
		for (int i = 0; i < cfg.steps; ++i) {
			s.snr_db = observe_snr(snr, r);
			if (cfg.mode == SweepMode::adaptive) s = apply_action(s, act(s, *agent, 0.0, r, cfg.limits), cfg.limits);
			auto run = run_pipeline(pool.clean, pool.labels, s.plan(cfg.limits), c, ChannelConfig::awgn(snr), r, {},
			                        &pool.adversarial);
			row.robust_accuracy += run.outcome.robust_accuracy() / cfg.steps;
			row.ssim_avg += run.row.ssim_avg / cfg.steps;
			row.mean_reward += run.row.reward / cfg.steps;
		}
		row.t_d = s.t_d;
		row.t_plus = s.t_plus;
		auto clean = run_pipeline(pool.clean, pool.labels, s.plan(cfg.limits), c, ChannelConfig::awgn(snr), r,
		                          {.attack = false, .purify = true});
		row.clean_accuracy = clean.outcome.robust_accuracy();
		return row;
	};

	SweepResult res{cfg.mode, {}};
	if (cfg.parallel && snrs.size() > 1) {
		std::vector<std::future<SweepRow>> jobs;
		for (std::size_t k = 0; k < snrs.size(); ++k) jobs.push_back(std::async(std::launch::async, point, k));
		for (auto& j : jobs) res.rows.push_back(j.get());
	} else {
		for (std::size_t k = 0; k < snrs.size(); ++k) res.rows.push_back(point(k));
	}
	return res;
}

inline double mean_reward(const SweepResult& r) {
	if (r.rows.empty()) return 0.0;
	double s = 0;
	for (const auto& row : r.rows) s += row.mean_reward;
	return s / double(r.rows.size());
}

} // namespace diffusec
