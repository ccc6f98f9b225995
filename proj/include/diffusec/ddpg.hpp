#pragma once

#include "diffusec/dense_net.hpp"
#include "diffusec/optimizer.hpp"
#include "diffusec/schedule.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace diffusec {

/// Bounds of the step-selection MDP: 1 <= t_D, 0 <= t_plus, t_D + t_plus < t_d_max and
/// per-step deltas within +-delta_max.
struct AgentLimits {
	int t_d_max = 50;
	int t_plus_max = 50;
	int delta_max = 25;
	// state feature for the SNR: (snr_db - snr_center) / snr_scale
	double snr_center = 6.0;
	double snr_scale = 12.0;

	PlanLimits plan_limits(int total_steps = 1000) const { return {t_d_max, t_plus_max, total_steps}; }
};

struct AgentState {
	int t_d = 1;
	int t_plus = 0;
	double snr_db = 0.0;

	bool valid(const AgentLimits& l = {}) const {
		return t_d >= 1 && t_d <= l.t_d_max && t_plus >= 0 && t_plus <= l.t_plus_max && t_d + t_plus < l.t_d_max;
	}

	std::array<float, 3> features(const AgentLimits& l = {}) const {
		return {float(double(t_d) / l.t_d_max), float(double(t_plus) / l.t_d_max),
		        float((snr_db - l.snr_center) / l.snr_scale)};
	}

	TimestepPlan plan(const AgentLimits& l = {}) const { return TimestepPlan::make(t_d, t_plus, l.plan_limits()); }
};

struct AgentAction {
	std::array<double, 2> raw{};  // actor space, [-1, 1]
	std::array<int, 2> mapped{};  // (delta t_D, delta t_plus)

	/// Scales raw components by delta_max and rounds half away from zero.
	static AgentAction from_raw(std::array<double, 2> raw, const AgentLimits& l = {}) {
		AgentAction a;
		for (std::size_t i = 0; i < 2; ++i) {
			a.raw[i] = std::clamp(raw[i], -1.0, 1.0);
			a.mapped[i] = int(std::lround(a.raw[i] * l.delta_max));
		}
		return a;
	}
};

/// Clamps t_D into [1, t_d_max - 1], then t_plus into the budget left by t_D.
inline AgentState project_state(int t_d, int t_plus, double snr_db, const AgentLimits& l = {}) {
	AgentState s;
	s.t_d = std::clamp(t_d, 1, l.t_d_max - 1);
	s.t_plus = std::clamp(t_plus, 0, std::min(l.t_plus_max, l.t_d_max - 1 - s.t_d));
	s.snr_db = snr_db;
	return s;
}

inline AgentState apply_action(const AgentState& s, const AgentAction& a, const AgentLimits& l = {}) {
	return project_state(s.t_d + a.mapped[0], s.t_plus + a.mapped[1], s.snr_db, l);
}

struct Transition {
	AgentState s;
	AgentAction a;
	double r = 0;
	AgentState s_next;
};

/// Fixed-capacity ring; once full, each push overwrites the oldest record.
class ReplayBuffer {
  public:
	explicit ReplayBuffer(std::size_t capacity) : m_capacity(capacity) {
		if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
	}

	void push(const Transition& t) {
		if (!std::isfinite(t.r)) throw DivergenceError("non-finite reward");
		if (m_items.size() < m_capacity) {
			m_items.push_back(t);
		} else {
			m_items[m_cursor] = t;
		}
		m_cursor = (m_cursor + 1) % m_capacity;
	}

	std::size_t size() const noexcept { return m_items.size(); }
	std::size_t capacity() const noexcept { return m_capacity; }
	bool full() const noexcept { return m_items.size() == m_capacity; }

	/// Records from oldest to newest.
	std::vector<Transition> contents() const {
		std::vector<Transition> out;
		const std::size_t start = full() ? m_cursor : 0;
		for (std::size_t i = 0; i < m_items.size(); ++i) out.push_back(m_items[(start + i) % m_items.size()]);
		return out;
	}

	/// Uniform sampling with replacement.
	std::vector<Transition> sample(std::size_t n, Rng& rng) const {
		if (m_items.empty()) throw DataError("sampling from an empty replay buffer");
		std::vector<Transition> out;
		out.reserve(n);
		for (std::size_t i = 0; i < n; ++i) out.push_back(m_items[rng.index(m_items.size())]);
		return out;
	}

  private:
	std::size_t m_capacity;
	std::size_t m_cursor = 0;
	std::vector<Transition> m_items;
};

/// Online and target actor/critic. Actor: state(3) -> action(2), tanh output. Critic:
/// [state, action](5) -> Q. Both are three dense layers with ReLU hidden activations.
struct DdpgNets {
	DenseNet actor;
	DenseNet target_actor;
	DenseNet critic;
	DenseNet target_critic;

	static constexpr std::size_t state_dim = 3;
	static constexpr std::size_t action_dim = 2;

	static DdpgNets make(std::size_t hidden, Rng& rng) {
		DdpgNets n;
		n.actor = DenseNet::make({state_dim, hidden, hidden, action_dim}, Activation::relu, Activation::tanh, rng);
		n.critic = DenseNet::make({state_dim + action_dim, hidden, hidden, 1}, Activation::relu, Activation::linear, rng);
		n.target_actor = n.actor;
		n.target_critic = n.critic;
		return n;
	}
};

inline Tensor state_features(std::span<const AgentState> states, const AgentLimits& l = {}) {
	Tensor out({states.size(), DdpgNets::state_dim});
	for (std::size_t i = 0; i < states.size(); ++i) {
		const auto f = states[i].features(l);
		std::copy(f.begin(), f.end(), out.row(i).begin());
	}
	return out;
}

/// Deterministic policy output for a state, before exploration noise.
inline std::array<double, 2> policy(const DenseNet& actor, const AgentState& s, const AgentLimits& l = {}) {
	const auto f = s.features(l);
	const auto out = actor.forward(Tensor({3}, std::vector<float>(f.begin(), f.end())));
	return {out[0], out[1]};
}

/// raw = clip(mu(s) + N(0, noise_sigma^2), -1, 1), then mapped to integer deltas.
inline AgentAction act(const AgentState& s, const DdpgNets& nets, double noise_sigma, Rng& rng,
                       const AgentLimits& l = {}) {
	auto raw = policy(nets.actor, s, l);
	if (noise_sigma > 0.0)
		for (auto& v : raw) v += noise_sigma * rng.normal();
	return AgentAction::from_raw(raw, l);
}

namespace detail {

inline Tensor critic_input(const Tensor& states, const Tensor& actions) { return concat_cols(states, actions); }

inline Tensor action_matrix(std::span<const Transition> batch) {
	Tensor out({batch.size(), DdpgNets::action_dim});
	for (std::size_t i = 0; i < batch.size(); ++i) {
		out.row(i)[0] = float(batch[i].a.raw[0]);
		out.row(i)[1] = float(batch[i].a.raw[1]);
	}
	return out;
}

template <typename Get>
Tensor states_of(std::span<const Transition> batch, Get get, const AgentLimits& l) {
	std::vector<AgentState> s;
	for (const auto& t : batch) s.push_back(get(t));
	return state_features(s, l);
}

} // namespace detail

/// y_m = r_m + gamma * Q'(s_{m+1}, mu'(s_{m+1})). No terminal masking.
inline std::vector<float> td_target(std::span<const Transition> batch, const DdpgNets& nets, double gamma,
                                    const AgentLimits& l = {}) {
	if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("discount must lie in [0, 1]");
	const auto next = detail::states_of(batch, [](const Transition& t) { return t.s_next; }, l);
	const auto q = nets.target_critic.forward(detail::critic_input(next, nets.target_actor.forward(next)));
	std::vector<float> y(batch.size());
	for (std::size_t m = 0; m < batch.size(); ++m) y[m] = float(batch[m].r + gamma * q[m]);
	return y;
}

struct LossAndGradient {
	double loss;
	GradientSet grads;
};

/// (1/B) sum (Q(s_m, a_m) - y_m)^2 and its gradient with respect to the critic.
inline LossAndGradient critic_loss(std::span<const Transition> batch, std::span<const float> targets,
                                   const DenseNet& critic, const AgentLimits& l = {}) {
	if (batch.empty() || targets.size() != batch.size()) throw ShapeError("critic batch/target mismatch");
	const auto s = detail::states_of(batch, [](const Transition& t) { return t.s; }, l);
	auto tr = critic.trace(detail::critic_input(s, detail::action_matrix(batch)));
	const auto& q = tr.output();
	const double B = double(batch.size());
	Tensor g(q.shape());
	double loss = 0;
	for (std::size_t m = 0; m < batch.size(); ++m) {
		const double diff = double(q[m]) - targets[m];
		loss += diff * diff / B;
		g[m] = float(2.0 * diff / B);
	}
	if (!std::isfinite(loss)) throw DivergenceError("critic loss is not finite");
	return {loss, critic.backprop(tr, g).params};
}

/// One gradient step on the critic loss; returns the loss before the step.
inline double update_critic(std::span<const Transition> batch, DdpgNets& nets, Optimizer& opt, double gamma,
                            const AgentLimits& l = {}) {
	const auto y = td_target(batch, nets, gamma, l);
	auto lg = critic_loss(batch, y, nets.critic, l);
	opt.apply(nets.critic, lg.grads);
	return lg.loss;
}

/// Mean Q(s, mu(s)) over the batch states and the gradient of its negation with respect to
/// the actor (critic held fixed): -(1/B) sum grad_a Q(s, a)|_{a = mu(s)} grad_theta mu(s).
inline LossAndGradient actor_objective(std::span<const AgentState> states, const DenseNet& actor, const DenseNet& critic,
                                       const AgentLimits& l = {}) {
	if (states.empty()) throw ShapeError("actor update needs at least one state");
	const auto s = state_features(states, l);
	auto a_tr = actor.trace(s);
	auto q_tr = critic.trace(detail::critic_input(s, a_tr.output()));
	const double B = double(states.size());
	double mean_q = 0;
	for (float v : q_tr.output().values()) mean_q += v / B;
	Tensor dq(q_tr.output().shape(), float(-1.0 / B));
	const auto dinput = critic.backprop(q_tr, dq).input_grad;
	Tensor da({states.size(), DdpgNets::action_dim});
	for (std::size_t m = 0; m < states.size(); ++m)
		for (std::size_t k = 0; k < DdpgNets::action_dim; ++k)
			da.row(m)[k] = dinput.row(m)[DdpgNets::state_dim + k];
	if (!std::isfinite(mean_q)) throw DivergenceError("actor objective is not finite");
	return {mean_q, actor.backprop(a_tr, da).params};
}

/// One ascent step along the sampled policy gradient; returns mean Q before the step.
inline double update_actor(std::span<const Transition> batch, DdpgNets& nets, Optimizer& opt,
                           const AgentLimits& l = {}) {
	std::vector<AgentState> states;
	for (const auto& t : batch) states.push_back(t.s);
	auto obj = actor_objective(states, nets.actor, nets.critic, l);
	opt.apply(nets.actor, obj.grads);
	return obj.loss;
}

/// theta' <- tau theta + (1 - tau) theta' for both target networks.
inline void soft_update(DdpgNets& nets, double tau) {
	if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in [0, 1]");
	auto blend = [tau](DenseNet& target, const DenseNet& online) {
		for (std::size_t l = 0; l < target.layers().size(); ++l) {
			auto mix = [tau](Tensor& t, const Tensor& o) {
				for (std::size_t i = 0; i < t.size(); ++i) t[i] = float(tau * o[i] + (1.0 - tau) * t[i]);
			};
			mix(target.layers()[l].weight, online.layers()[l].weight);
			mix(target.layers()[l].bias, online.layers()[l].bias);
		}
	};
	blend(nets.target_critic, nets.critic);
	blend(nets.target_actor, nets.actor);
}

} // namespace diffusec
