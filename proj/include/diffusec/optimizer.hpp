#pragma once

#include "diffusec/dense_net.hpp"

#include <cmath>
#include <optional>

namespace diffusec {

enum class OptimizerKind { sgd, adam };

/// First-order optimizer state for one network. Adam uses bias-corrected moments with
/// beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
class Optimizer {
  public:
	static Optimizer sgd(double learning_rate) { return Optimizer(OptimizerKind::sgd, learning_rate); }
	static Optimizer adam(double learning_rate) { return Optimizer(OptimizerKind::adam, learning_rate); }

	Optimizer(OptimizerKind kind, double learning_rate) : m_kind(kind), m_lr(learning_rate) {
		if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
	}

	OptimizerKind kind() const noexcept { return m_kind; }
	double learning_rate() const noexcept { return m_lr; }
	long step_count() const noexcept { return m_step; }

	/// Descends along `grads`: theta <- theta - update(grads).
	void apply(DenseNet& net, const GradientSet& grads) {
		if (grads.weight.size() != net.layers().size()) throw ShapeError("gradient set does not match network");
		if (!grads.finite()) throw DivergenceError("non-finite gradient");
		++m_step;
		if (m_kind == OptimizerKind::sgd) {
			for (std::size_t l = 0; l < grads.weight.size(); ++l) {
				sgd_block(net.layers()[l].weight, grads.weight[l]);
				sgd_block(net.layers()[l].bias, grads.bias[l]);
			}
		} else {
			if (!m_first) {
				m_first = GradientSet::zeros_like(net);
				m_second = GradientSet::zeros_like(net);
			}
			const double c1 = 1.0 - std::pow(beta1, double(m_step));
			const double c2 = 1.0 - std::pow(beta2, double(m_step));
			for (std::size_t l = 0; l < grads.weight.size(); ++l) {
				adam_block(net.layers()[l].weight, grads.weight[l], m_first->weight[l], m_second->weight[l], c1, c2);
				adam_block(net.layers()[l].bias, grads.bias[l], m_first->bias[l], m_second->bias[l], c1, c2);
			}
		}
		if (!net.finite()) throw DivergenceError("parameters became non-finite");
	}

	static constexpr double beta1 = 0.9;
	static constexpr double beta2 = 0.999;
	static constexpr double epsilon = 1e-8;

  private:
	void sgd_block(Tensor& theta, const Tensor& g) const {
		if (g.shape() != theta.shape()) throw ShapeError("gradient block shape mismatch");
		const float lr = float(m_lr);
		for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * g[i];
	}

	void adam_block(Tensor& theta, const Tensor& g, Tensor& m, Tensor& v, double c1, double c2) const {
		if (g.shape() != theta.shape()) throw ShapeError("gradient block shape mismatch");
		for (std::size_t i = 0; i < theta.size(); ++i) {
			m[i] = float(beta1 * m[i] + (1 - beta1) * g[i]);
			v[i] = float(beta2 * v[i] + (1 - beta2) * double(g[i]) * g[i]);
			const double mhat = m[i] / c1, vhat = v[i] / c2;
			theta[i] -= float(m_lr * mhat / (std::sqrt(vhat) + epsilon));
		}
	}

	OptimizerKind m_kind;
	double m_lr;
	long m_step = 0;
	std::optional<GradientSet> m_first, m_second;
};

inline void apply_update(DenseNet& net, const GradientSet& grads, Optimizer& opt) { opt.apply(net, grads); }

} // namespace diffusec
