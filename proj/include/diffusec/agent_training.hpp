#pragma once

#include "diffusec/ddpg.hpp"
#include "diffusec/metrics.hpp"

#include <array>
#include <concepts>
#include <cstdio>
#include <string>
#include <vector>

namespace diffusec {

inline constexpr std::array<double, 4> training_snrs_db{-3.0, 3.0, 9.0, 15.0};

struct StepResult {
	AgentState next;
	double reward = 0;
	MetricsRow metrics{};
};

/// reset() picks the epoch's starting state (including its observed SNR); step() applies
/// an action and reports the reward of the resulting plan.
template <typename E>
concept Environment = requires(E& e, Rng& rng, const AgentState& s, const AgentAction& a) {
	{ e.reset(rng) } -> std::same_as<AgentState>;
	{ e.step(s, a, rng) } -> std::same_as<StepResult>;
};

struct AgentHyperParams {
	std::size_t hidden = 256;
	std::size_t buffer = 1000000;
	std::size_t batch = 256;
	double gamma = 0.99;
	double tau = 0.005;
	OptimizerKind optimizer = OptimizerKind::sgd;
	double lr_actor = 1e-5;
	double lr_critic = 1e-4;
	/// Steps per epoch; the SNR stays fixed within an epoch.
	int episodes = 3;
	/// Uniformly random actions for this many global steps.
	long warmup_steps = 2500;
	double noise_start = 0.3;
	double noise_end = 0.05;
	AgentLimits limits{};

	void validate() const {
		if (hidden == 0 || batch == 0 || buffer < batch) throw ConfigError("agent: need hidden > 0 and buffer >= batch > 0");
		if (!(gamma >= 0 && gamma <= 1) || !(tau >= 0 && tau <= 1)) throw ConfigError("agent: gamma and tau must lie in [0, 1]");
		if (!(lr_actor > 0) || !(lr_critic > 0)) throw ConfigError("agent: learning rates must be positive");
		if (episodes < 1 || warmup_steps < 0) throw ConfigError("agent: episodes >= 1 and warmup >= 0 required");
	}
};

/// Linear decay from noise_start to noise_end over the first half of training, then flat.
inline double exploration_sigma(long step, long total_steps, const AgentHyperParams& hp) {
	const double half = std::max(1.0, double(total_steps) / 2.0);
	const double f = std::min(1.0, double(step) / half);
	return hp.noise_start + (hp.noise_end - hp.noise_start) * f;
}

struct AgentLogEntry {
	long epoch = 0;
	int episode = 0;
	bool random_action = false;
	bool learned = false;  // an update ran after this step
	double critic_loss = 0;
	MetricsRow metrics{};
};

inline constexpr const char* agent_log_csv_header =
    "epoch,episode,step,snr_db,t_D,t_plus,ssim_avg,adv_rate,err_rate,reward";

inline std::string to_csv(const AgentLogEntry& e) {
	return std::to_string(e.epoch) + "," + std::to_string(e.episode) + "," + to_csv(e.metrics);
}

struct AgentTrainResult {
	DdpgNets nets;
	std::vector<AgentLogEntry> log;
	long updates = 0;
};

/// Off-policy actor-critic loop: per epoch reset the environment, then take `episodes`
/// steps of act -> step -> store; once the buffer holds a mini-batch, every step also runs
/// one critic step, one actor step and a soft target update.
template <Environment E>
AgentTrainResult train_agent(E& env, long epochs, const AgentHyperParams& hp, Rng& rng) {
	hp.validate();
	if (epochs < 0) throw ConfigError("agent: epochs must be non-negative");
	AgentTrainResult res{DdpgNets::make(hp.hidden, rng), {}, 0};
	auto& nets = res.nets;
	ReplayBuffer buffer(hp.buffer);
	Optimizer actor_opt(hp.optimizer, hp.lr_actor), critic_opt(hp.optimizer, hp.lr_critic);
	const long total = epochs * hp.episodes;
	long step = 0;
	for (long epoch = 0; epoch < epochs; ++epoch) {
		AgentState s = env.reset(rng);
		for (int ep = 0; ep < hp.episodes; ++ep, ++step) {
			AgentLogEntry entry{epoch, ep, step < hp.warmup_steps, false, 0, {}};
			const AgentAction a = entry.random_action
			                          ? AgentAction::from_raw({2 * rng.uniform() - 1, 2 * rng.uniform() - 1}, hp.limits)
			                          : act(s, nets, exploration_sigma(step, total, hp), rng, hp.limits);
			auto out = env.step(s, a, rng);
			if (!out.next.valid(hp.limits)) throw ConstraintError("environment produced an invalid state");
			buffer.push({s, a, out.reward, out.next});
			if (buffer.size() >= hp.batch) {
				const auto batch = buffer.sample(hp.batch, rng);
				entry.critic_loss = update_critic(batch, nets, critic_opt, hp.gamma, hp.limits);
				update_actor(batch, nets, actor_opt, hp.limits);
				soft_update(nets, hp.tau);
				entry.learned = true;
				++res.updates;
			}
			entry.metrics = out.metrics;
			entry.metrics.step = step;
			res.log.push_back(entry);
			s = out.next;
		}
	}
	return res;
}

/// Greedy rollout: `steps` noise-free actions from `start`, returning the final state.
inline AgentState greedy_rollout(const DdpgNets& nets, AgentState start, int steps, const AgentLimits& l = {}) {
	Rng unused(0);
	for (int i = 0; i < steps; ++i) start = apply_action(start, act(start, nets, 0.0, unused, l), l);
	return start;
}

/// Synthetic environment with a known optimum t*(snr) = round(33 - 5 snr / 3), which gives
/// 38, 28, 18, 8 at the four training SNRs. Reward is -|t_D' - t*| / t_d_max.
struct StubEnvironment {
	AgentLimits limits{};

	static int optimum(double snr_db) { return int(std::lround(33.0 - 5.0 * snr_db / 3.0)); }

	AgentState reset(Rng& rng) const {
		const double snr = training_snrs_db[rng.index(training_snrs_db.size())];
		return project_state(rng.uniform_int(1, limits.t_d_max), rng.uniform_int(0, limits.t_plus_max), snr, limits);
	}

	StepResult step(const AgentState& s, const AgentAction& a, Rng&) const {
		StepResult r;
		r.next = apply_action(s, a, limits);
		r.reward = -std::abs(r.next.t_d - optimum(s.snr_db)) / double(limits.t_d_max);
		r.metrics = {0, s.snr_db, r.next.t_d, r.next.t_plus, 0, 0, 0, r.reward};
		return r;
	}
};

/// Trailing moving average, used for the learning-curve checks.
inline std::vector<double> moving_average(std::span<const double> v, std::size_t window) {
	std::vector<double> out(v.size());
	double acc = 0;
	for (std::size_t i = 0; i < v.size(); ++i) {
		acc += v[i];
		if (i >= window) acc -= v[i - window];
		out[i] = acc / double(std::min(i + 1, window));
	}
	return out;
}

} // namespace diffusec
