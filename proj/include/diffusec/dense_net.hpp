#pragma once

#include "diffusec/rng.hpp"
#include "diffusec/tensor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace diffusec {

enum class Activation : std::uint8_t { linear = 0, relu = 1, tanh = 2 };

inline std::string to_string(Activation a) {
	switch (a) {
	case Activation::linear: return "linear";
	case Activation::relu: return "relu";
	case Activation::tanh: return "tanh";
	}
	return "?";
}

struct DenseLayer {
	Tensor weight; // [out × in]
	Tensor bias;   // [out]
	Activation activation = Activation::linear;

	std::size_t in_dim() const { return weight.dim(1); }
	std::size_t out_dim() const { return weight.dim(0); }
};

namespace detail {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using ConstVectorMap = Eigen::Map<const Eigen::RowVectorXf>;

inline ConstMatrixMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
	return ConstMatrixMap(t.data(), Eigen::Index(rows), Eigen::Index(cols));
}
inline MatrixMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
	return MatrixMap(t.data(), Eigen::Index(rows), Eigen::Index(cols));
}

} // namespace detail

class DenseNet;

/// Per-parameter gradients, shape-congruent with the network they came from.
struct GradientSet {
	std::vector<Tensor> weight;
	std::vector<Tensor> bias;

	static GradientSet zeros_like(const DenseNet& net);

	GradientSet& operator+=(const GradientSet& o) {
		for (std::size_t l = 0; l < weight.size(); ++l) {
			weight[l] = weight[l] + o.weight[l];
			bias[l] = bias[l] + o.bias[l];
		}
		return *this;
	}

	GradientSet& operator*=(float s) {
		for (auto& w : weight)
			for (auto& v : w.values()) v *= s;
		for (auto& b : bias)
			for (auto& v : b.values()) v *= s;
		return *this;
	}

	bool finite() const {
		for (std::size_t l = 0; l < weight.size(); ++l)
			if (!all_finite(weight[l].values()) || !all_finite(bias[l].values())) return false;
		return true;
	}

	double squared_norm() const {
		double acc = 0;
		for (std::size_t l = 0; l < weight.size(); ++l) {
			for (float v : weight[l].values()) acc += double(v) * v;
			for (float v : bias[l].values()) acc += double(v) * v;
		}
		return acc;
	}
};

/// Activations recorded by a forward pass: inputs[l] feeds layer l, outputs[l] is its
/// post-activation result. All entries are [B × dim].
struct ForwardTrace {
	std::vector<Tensor> inputs;
	std::vector<Tensor> outputs;
	bool flat_input = false;

	const Tensor& output() const { return outputs.back(); }
};

struct BackpropResult {
	GradientSet params;
	Tensor input_grad; // same shape as the forward input
};

/// Fully connected network: affine map then activation, layer by layer.
class DenseNet {
  public:
	DenseNet() = default;

	explicit DenseNet(std::vector<DenseLayer> layers) : m_layers(std::move(layers)) {
		if (m_layers.empty()) throw ShapeError("network needs at least one layer");
		for (std::size_t l = 0; l < m_layers.size(); ++l) {
			const auto& L = m_layers[l];
			if (L.weight.rank() != 2 || L.bias.rank() != 1 || L.bias.size() != L.out_dim())
				throw ShapeError("layer " + std::to_string(l) + " has inconsistent weight/bias shapes");
			if (l > 0 && m_layers[l - 1].out_dim() != L.in_dim())
				throw ShapeError("layer " + std::to_string(l) + " input does not chain with previous output");
		}
	}

	/// dims = {in, hidden..., out}. Hidden layers use `hidden`, the last layer `output`.
	/// Parameters are drawn from uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
	static DenseNet make(const std::vector<std::size_t>& dims, Activation hidden, Activation output, Rng& rng) {
		if (dims.size() < 2) throw ShapeError("network needs input and output dims");
		std::vector<DenseLayer> layers;
		for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
			const auto in = dims[l], out = dims[l + 1];
			const float bound = 1.0f / std::sqrt(float(in));
			DenseLayer layer{Tensor({out, in}), Tensor({out}), l + 2 == dims.size() ? output : hidden};
			for (auto& v : layer.weight.values()) v = float((2 * rng.uniform() - 1) * bound);
			for (auto& v : layer.bias.values()) v = float((2 * rng.uniform() - 1) * bound);
			layers.push_back(std::move(layer));
		}
		return DenseNet(std::move(layers));
	}

	const std::vector<DenseLayer>& layers() const noexcept { return m_layers; }
	std::vector<DenseLayer>& layers() noexcept { return m_layers; }
	bool empty() const noexcept { return m_layers.empty(); }
	std::size_t in_dim() const { return m_layers.front().in_dim(); }
	std::size_t out_dim() const { return m_layers.back().out_dim(); }

	std::size_t parameter_count() const {
		std::size_t n = 0;
		for (const auto& L : m_layers) n += L.weight.size() + L.bias.size();
		return n;
	}

	/// Visits every parameter block (weights then bias, per layer).
	template <typename Fn>
	void for_each_block(Fn&& fn) {
		for (auto& L : m_layers) {
			fn(L.weight.values());
			fn(L.bias.values());
		}
	}
	template <typename Fn>
	void for_each_block(Fn&& fn) const {
		for (const auto& L : m_layers) {
			fn(L.weight.values());
			fn(L.bias.values());
		}
	}

	bool finite() const {
		bool ok = true;
		for_each_block([&](std::span<const float> b) { ok = ok && all_finite(b); });
		return ok;
	}

	ForwardTrace trace(const Tensor& input) const {
		if (m_layers.empty()) throw ShapeError("forward through an empty network");
		if (input.empty() || input.cols() != in_dim())
			throw ShapeError("input width " + std::to_string(input.cols()) + " does not match network input " +
			                 std::to_string(in_dim()));
		ForwardTrace tr;
		tr.flat_input = input.rank() == 1;
		Tensor x = input.as_batch();
		const auto B = x.rows();
		for (const auto& L : m_layers) {
			Tensor y({B, L.out_dim()});
			auto Y = detail::as_matrix(y, B, L.out_dim());
			Y.noalias() = detail::as_matrix(x, B, L.in_dim()) * detail::as_matrix(L.weight, L.out_dim(), L.in_dim()).transpose();
			Y.rowwise() += detail::ConstVectorMap(L.bias.data(), Eigen::Index(L.out_dim()));
			activate(y, L.activation);
			tr.inputs.push_back(std::move(x));
			x = y;
			tr.outputs.push_back(std::move(y));
		}
		return tr;
	}

	Tensor forward(const Tensor& input) const {
		auto tr = trace(input);
		Tensor out = std::move(tr.outputs.back());
		return tr.flat_input ? out.reshaped({out.size()}) : out;
	}

	/// Exact reverse-mode gradient given dLoss/dOutput at the trace's output.
	BackpropResult backprop(const ForwardTrace& tr, const Tensor& grad_output) const {
		const auto& out = tr.output();
		if (grad_output.size() != out.size()) throw ShapeError("output gradient does not match network output");
		const auto B = out.rows();
		BackpropResult res{GradientSet::zeros_like(*this), {}};
		Tensor delta = grad_output.reshaped(out.shape());
		for (std::size_t li = m_layers.size(); li-- > 0;) {
			const auto& L = m_layers[li];
			const auto& y = tr.outputs[li];
			switch (L.activation) {
			case Activation::linear: break;
			case Activation::relu:
				for (std::size_t i = 0; i < delta.size(); ++i)
					if (!(y[i] > 0.0f)) delta[i] = 0.0f;
				break;
			case Activation::tanh:
				for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= 1.0f - y[i] * y[i];
				break;
			}
			const auto D = detail::as_matrix(delta, B, L.out_dim());
			const auto X = detail::as_matrix(tr.inputs[li], B, L.in_dim());
			detail::as_matrix(res.params.weight[li], L.out_dim(), L.in_dim()).noalias() = D.transpose() * X;
			Eigen::Map<Eigen::RowVectorXf>(res.params.bias[li].data(), Eigen::Index(L.out_dim())) = D.colwise().sum();
			Tensor next({B, L.in_dim()});
			detail::as_matrix(next, B, L.in_dim()).noalias() = D * detail::as_matrix(L.weight, L.out_dim(), L.in_dim());
			delta = std::move(next);
		}
		res.input_grad = tr.flat_input ? delta.reshaped({delta.size()}) : std::move(delta);
		return res;
	}

	BackpropResult backprop(const Tensor& input, const Tensor& grad_output) const {
		return backprop(trace(input), grad_output);
	}

  private:
	static void activate(Tensor& y, Activation a) {
		switch (a) {
		case Activation::linear: return;
		case Activation::relu:
			for (auto& v : y.values()) v = v > 0.0f ? v : 0.0f;
			return;
		case Activation::tanh:
			for (auto& v : y.values()) v = std::tanh(v);
			return;
		}
	}

	std::vector<DenseLayer> m_layers;
};

inline GradientSet GradientSet::zeros_like(const DenseNet& net) {
	GradientSet g;
	for (const auto& L : net.layers()) {
		g.weight.emplace_back(L.weight.shape());
		g.bias.emplace_back(L.bias.shape());
	}
	return g;
}

inline Tensor forward(const DenseNet& net, const Tensor& input) { return net.forward(input); }

inline BackpropResult backprop(const DenseNet& net, const Tensor& input, const Tensor& loss_grad_at_output) {
	return net.backprop(input, loss_grad_at_output);
}

} // namespace diffusec
