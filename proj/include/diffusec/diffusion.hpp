#pragma once

#include "diffusec/dense_net.hpp"
#include "diffusec/rng.hpp"
#include "diffusec/schedule.hpp"

#include <cmath>
#include <optional>

namespace diffusec {

/// Closed-form forward marginal: sqrt(abar_t) x0 + sqrt(1 - abar_t) n, n ~ N(0, I).
template <NormalSource R>
Tensor diffuse(const Tensor& x0, int t, const NoiseSchedule& schedule, R& rng) {
	const double abar = schedule.alpha_bar(t);
	const float signal = float(std::sqrt(abar)), noise = float(std::sqrt(1.0 - abar));
	Tensor out = x0;
	for (auto& v : out.values()) v = signal * v + noise * float(rng.normal());
	return out;
}

/// One forward kernel q(x^t | x^{t-1}) = N(sqrt(1 - beta_t) x^{t-1}, beta_t I).
template <NormalSource R>
Tensor forward_step(const Tensor& x_prev, int t, const NoiseSchedule& schedule, R& rng) {
	const float keep = float(std::sqrt(schedule.alpha(t))), noise = float(std::sqrt(schedule.beta(t)));
	Tensor out = x_prev;
	for (auto& v : out.values()) v = keep * v + noise * float(rng.normal());
	return out;
}

enum class DenoiserKind { learned, gaussian_oracle };

/// What the learned net outputs. `clean` nets estimate x0 and the noise follows as
/// (x_t - sqrt(abar) x0_hat) / sqrt(1 - abar); a plain dense net narrower than the image cannot
/// carry x_t through to a direct noise estimate.
enum class Parameterization : std::uint8_t { noise = 0, clean = 1 };

/// Noise predictor eps_hat(x_t, t) driving the reverse chain. The learned variant is a dense
/// net over [flattened image, t / T]; the Gaussian oracle is the exact posterior predictor
/// sqrt(1 - abar_t) x_t for a standard-normal source.
class Denoiser {
  public:
	static Denoiser learned(DenseNet net, NoiseSchedule schedule, Parameterization param = Parameterization::clean) {
		if (net.empty() || net.in_dim() != net.out_dim() + 1)
			throw ShapeError("denoiser net must map image_dim + 1 inputs to image_dim outputs");
		return Denoiser(DenoiserKind::learned, std::move(net), std::move(schedule), param);
	}

	static Denoiser gaussian_oracle(NoiseSchedule schedule) {
		return Denoiser(DenoiserKind::gaussian_oracle, {}, std::move(schedule));
	}

	static DenseNet make_network(std::size_t image_dim, const std::vector<std::size_t>& hidden, Rng& rng) {
		std::vector<std::size_t> dims{image_dim + 1};
		dims.insert(dims.end(), hidden.begin(), hidden.end());
		dims.push_back(image_dim);
		return DenseNet::make(dims, Activation::relu, Activation::linear, rng);
	}

	DenoiserKind kind() const noexcept { return m_kind; }
	Parameterization parameterization() const noexcept { return m_param; }
	const NoiseSchedule& schedule() const noexcept { return m_schedule; }
	const DenseNet& net() const noexcept { return m_net; }
	DenseNet& net() noexcept { return m_net; }

	/// Appends the scalar timestep feature t / T to every row.
	Tensor network_input(const Tensor& x_t, int t) const {
		const auto X = x_t.as_batch();
		Tensor feature({X.rows(), 1}, float(double(t) / double(m_schedule.steps())));
		return concat_cols(X, feature);
	}

	Tensor predict_noise(const Tensor& x_t, int t) const {
		if (m_kind == DenoiserKind::gaussian_oracle) return x_t * float(std::sqrt(1.0 - m_schedule.alpha_bar(t)));
		auto out = m_net.forward(network_input(x_t, t)).reshaped(x_t.shape());
		if (m_param == Parameterization::noise) return out;
		const double abar = m_schedule.alpha_bar(t);
		const float s = float(std::sqrt(abar)), inv_n = float(1.0 / std::sqrt(1.0 - abar));
		for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_t[i] - s * out[i]) * inv_n;
		return out;
	}

  private:
	Denoiser(DenoiserKind kind, DenseNet net, NoiseSchedule schedule,
	         Parameterization param = Parameterization::noise)
	    : m_kind(kind), m_net(std::move(net)), m_schedule(std::move(schedule)), m_param(param) {}

	DenoiserKind m_kind;
	DenseNet m_net;
	NoiseSchedule m_schedule;
	Parameterization m_param;
};

/// Coefficients of one reverse step: mean = (x_t - noise_coef * eps_hat) * inv_sqrt_alpha.
struct ReverseCoefficients {
	float inv_sqrt_alpha;
	float noise_coef;
	float sigma;

	static ReverseCoefficients at(const NoiseSchedule& s, int t) {
		return {float(1.0 / std::sqrt(s.alpha(t))), float(s.beta(t) / std::sqrt(1.0 - s.alpha_bar(t))),
		        t > 1 ? float(s.sigma(t)) : 0.0f};
	}
};

/// Samples x^{t-1} ~ N(mu(x^t, t), sigma_t^2 I); the final step (t = 1) adds no noise.
template <NormalSource R>
Tensor reverse_step(const Tensor& x_t, int t, const Denoiser& d, R& rng) {
	const auto c = ReverseCoefficients::at(d.schedule(), t);
	const auto eps = d.predict_noise(x_t, t);
	Tensor out = x_t;
	for (std::size_t i = 0; i < out.size(); ++i) {
		out[i] = (x_t[i] - c.noise_coef * eps[i]) * c.inv_sqrt_alpha;
		if (t > 1) out[i] += c.sigma * float(rng.normal());
	}
	return out;
}

enum class OutputRange { image, unbounded };

/// Receiver-side asymmetric denoising: the received image is taken to sit at index
/// t_P = t_D + t_plus and walked back to t = 1. Image outputs are clamped to [0, 1].
template <NormalSource R>
Tensor purify(const Tensor& x_received, const TimestepPlan& plan, const Denoiser& d, R& rng,
              OutputRange range = OutputRange::image) {
	if (plan.t_p() > d.schedule().steps()) throw PlanError("plan exceeds the schedule length");
	Tensor x = x_received;
	for (int t = plan.t_p(); t >= 1; --t) x = reverse_step(x, t, d, rng);
	return range == OutputRange::image ? clamp01(x) : x;
}

} // namespace diffusec
