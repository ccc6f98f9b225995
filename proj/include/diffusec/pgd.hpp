#pragma once

#include "diffusec/classifier.hpp"

#include <algorithm>
#include <cmath>

namespace diffusec {

/// l-infinity PGD budget. `step_size` is the per-iteration sign-step length.
struct AttackConfig {
	double gamma = 8.0 / 256.0;
	int iterations = 10;
	double step_size = 8.0 / 256.0 / 4.0;

	/// Step length gamma / 4, the default used throughout.
	static AttackConfig with_radius(double gamma, int iterations = 10) { return {gamma, iterations, gamma / 4.0}; }

	void validate() const {
		if (!(gamma >= 0.0)) throw ConfigError("attack radius must be non-negative");
		if (iterations < 1) throw ConfigError("attack needs at least one iteration");
		if (gamma > 0.0 && !(step_size > 0.0 && step_size <= gamma))
			throw ConfigError("attack step size must lie in (0, gamma]");
	}
};

struct NoIterateObserver {
	void operator()(int, const Tensor&) const noexcept {}
};

/// Untargeted PGD on the classifier's cross-entropy from a random start inside the ball:
///   x <- clip_[0,1](clip_ball(x + step * sign(grad_x loss)))
/// `observer(iteration, x)` sees every iterate (iteration 0 is the random start).
template <typename Observer = NoIterateObserver>
Tensor pgd_attack(const Tensor& x, std::span<const int> labels, const Classifier& c, const AttackConfig& cfg, Rng& rng,
                  Observer&& observer = {}) {
	cfg.validate();
	const Tensor x0 = x.as_batch();
	if (x0.rows() != labels.size()) throw ShapeError("pgd: one label per image required");
	if (cfg.gamma == 0.0) return x;
	const float gamma = float(cfg.gamma), step = float(cfg.step_size);
	auto project = [&](Tensor& xa) {
		for (std::size_t i = 0; i < xa.size(); ++i)
			xa[i] = std::clamp(std::clamp(xa[i], x0[i] - gamma, x0[i] + gamma), 0.0f, 1.0f);
	};
	Tensor xa = x0;
	for (auto& v : xa.values()) v += float((2 * rng.uniform() - 1) * cfg.gamma);
	project(xa);
	observer(0, xa);
	for (int it = 1; it <= cfg.iterations; ++it) {
		auto tr = c.net().trace(xa);
		Tensor grad;
		cross_entropy(tr.output(), labels, &grad);
		const auto g = c.net().backprop(tr, grad).input_grad;
		for (std::size_t i = 0; i < xa.size(); ++i) xa[i] += g[i] > 0.0f ? step : (g[i] < 0.0f ? -step : 0.0f);
		project(xa);
		observer(it, xa);
	}
	return xa.reshaped(x.shape());
}

} // namespace diffusec
