#pragma once

#include "diffusec/codec.hpp"
#include "diffusec/diffusion.hpp"

#include <vector>

namespace diffusec {

/// zeta * iota' * (1 - SSIM_avg) + (1 - zeta) * MSE.
inline double purification_loss(const Tensor& y, const Tensor& y_prime, double zeta, double iota_prime,
                                 const SsimParams& p = {}) {
	return zeta * iota_prime * (1.0 - ssim_avg(y, y_prime, p)) + (1.0 - zeta) * mean_squared_error(y, y_prime);
}

inline Tensor purification_loss_gradient(const Tensor& y, const Tensor& y_prime, double zeta, double iota_prime,
                                         const SsimParams& p = {}) {
	Tensor g(y_prime.shape());
	if (zeta > 0.0) g = g + semantic_loss_gradient(y, y_prime, zeta * iota_prime, p);
	if (zeta < 1.0) g = g + mse_gradient(y, y_prime) * float(1.0 - zeta);
	return g;
}

/// One reverse step of a learned denoiser written as x_{t-1} = keep * x_t + output * net(x_t, t)
/// + sigma * z, whichever quantity the net estimates.
struct ChainCoefficients {
	float keep;
	float output;
	float sigma;

	static ChainCoefficients at(const Denoiser& d, int t) {
		const auto c = ReverseCoefficients::at(d.schedule(), t);
		if (d.parameterization() == Parameterization::noise)
			return {c.inv_sqrt_alpha, -c.noise_coef * c.inv_sqrt_alpha, c.sigma};
		const double abar = d.schedule().alpha_bar(t);
		const double inv_n = 1.0 / std::sqrt(1.0 - abar);
		return {float(c.inv_sqrt_alpha * (1.0 - c.noise_coef * inv_n)),
		        float(c.inv_sqrt_alpha * c.noise_coef * std::sqrt(abar) * inv_n), c.sigma};
	}
};

/// Reverse chain from t_P down to 1 with every denoiser evaluation recorded, so that the
/// loss on the (unclamped) output can be differentiated with respect to the denoiser weights.
struct ReverseChainTrace {
	std::vector<int> timesteps;
	std::vector<ForwardTrace> steps;
	Tensor output;
};

template <NormalSource R>
ReverseChainTrace trace_reverse_chain(const Tensor& x_received, int t_p, const Denoiser& d, R& rng) {
	if (d.kind() != DenoiserKind::learned) throw ConfigError("only learned denoisers can be traced");
	ReverseChainTrace tr;
	Tensor x = x_received.as_batch();
	for (int t = t_p; t >= 1; --t) {
		const auto c = ChainCoefficients::at(d, t);
		auto step = d.net().trace(d.network_input(x, t));
		const auto& o = step.output();
		for (std::size_t i = 0; i < x.size(); ++i) {
			x[i] = c.keep * x[i] + c.output * o[i];
			if (t > 1) x[i] += c.sigma * float(rng.normal());
		}
		tr.timesteps.push_back(t);
		tr.steps.push_back(std::move(step));
	}
	tr.output = std::move(x);
	return tr;
}

/// Parameter gradient of a loss on the chain output, given dLoss/dOutput.
inline GradientSet backprop_reverse_chain(const ReverseChainTrace& tr, const Denoiser& d, const Tensor& grad_output) {
	auto total = GradientSet::zeros_like(d.net());
	Tensor g = grad_output.as_batch();
	const auto B = g.rows(), D = g.cols();
	for (std::size_t k = tr.steps.size(); k-- > 0;) {
		const auto c = ChainCoefficients::at(d, tr.timesteps[k]);
		auto bp = d.net().backprop(tr.steps[k], g * c.output);
		total += bp.params;
		for (std::size_t b = 0; b < B; ++b)
			for (std::size_t i = 0; i < D; ++i) g.row(b)[i] = c.keep * g.row(b)[i] + bp.input_grad.row(b)[i];
	}
	return total;
}

struct DenoiserStep {
	double loss = 0;
	GradientSet grads;
	Tensor output;
};

/// One L_P batch: reverse chain from t_p on the received images, loss against the clean
/// images y, and the denoiser's parameter gradient through the whole unrolled chain.
template <NormalSource R>
DenoiserStep denoiser_gradients(const Denoiser& d, const Tensor& y, const Tensor& x_received, int t_p, double zeta,
                                double iota_prime, R& rng, const SsimParams& p = {}) {
	auto chain = trace_reverse_chain(x_received, t_p, d, rng);
	DenoiserStep s;
	s.loss = purification_loss(y, chain.output, zeta, iota_prime, p);
	s.grads = backprop_reverse_chain(chain, d, purification_loss_gradient(y, chain.output, zeta, iota_prime, p));
	s.output = std::move(chain.output);
	return s;
}

struct DenoiserTrainConfig {
	std::vector<std::size_t> hidden{256, 256};
	Parameterization parameterization = Parameterization::clean;
	/// Epochs of plain denoising-score training (regressing the net's own target: noise or
	/// clean image) on diffused images before the pipeline loss.
	int pretrain_epochs = 300;
	int epochs = 4;
	std::size_t batch = 128; // B_P
	double pretrain_learning_rate = 1e-3;
	/// The unrolled pipeline loss is noisy; a large step undoes what pretraining learned.
	double learning_rate = 1e-4;
	double zeta = 0.8;
	double iota_prime = 0.5;
	/// Training plans are drawn uniformly from the valid plans with t_D <= max_t_d.
	PlanLimits limits{};
	int max_t_d = 49;
	ChannelConfig channel = ChannelConfig::awgn(9.0);
	/// When set, the SNR is redrawn per batch from [snr_min_db, snr_max_db].
	bool randomize_snr = false;
	double snr_min_db = -3.0;
	double snr_max_db = 12.0;
	SsimParams ssim{};
};

struct DenoiserTrainResult {
	Denoiser denoiser;
	std::vector<double> pretrain_losses;
	std::vector<double> epoch_losses;
};

inline TimestepPlan sample_plan(const PlanLimits& limits, int max_t_d, Rng& rng) {
	const int t_d = rng.uniform_int(1, std::min(max_t_d, limits.t_d_max - 1));
	const int t_plus = rng.uniform_int(0, std::min(limits.t_plus_max, limits.t_d_max - 1 - t_d));
	return TimestepPlan::make(t_d, t_plus, limits);
}

/// Pipeline output seen by the receiver before denoising: decode(channel(encode(diffuse(x)))).
template <NormalSource R>
Tensor received_image(const Tensor& x, int t_d, const Codec& codec, const NoiseSchedule& schedule,
                      const ChannelConfig& channel, R& rng) {
	return codec.decode(transmit(codec.encode(diffuse(x, t_d, schedule, rng)), channel, rng));
}

/// Trains a learned denoiser against the purification loss on full-pipeline outputs
/// (diffuse -> encode -> channel -> decode -> reverse chain) of clean images.
inline DenoiserTrainResult train_denoiser(const Dataset& data, const Codec& codec, const NoiseSchedule& schedule,
                                          const DenoiserTrainConfig& cfg, Rng& rng) {
	data.validate();
	if (!(cfg.zeta >= 0.0 && cfg.zeta <= 1.0)) throw ConfigError("zeta must lie in [0, 1]");
	cfg.limits.validate();
	DenoiserTrainResult res{Denoiser::learned(Denoiser::make_network(data.image_dim(), cfg.hidden, rng), schedule,
	                                                 cfg.parameterization),
	                               {},
	                               {}};
	auto& d = res.denoiser;
	Optimizer opt = Optimizer::adam(cfg.pretrain_learning_rate);

	for (int e = 0; e < cfg.pretrain_epochs; ++e) {
		double total = 0;
		std::size_t batches = 0;
		detail::for_each_minibatch(data.size(), cfg.batch, rng, [&](std::span<const std::size_t> idx) {
			const auto x0 = gather_rows(data.images, idx);
			const auto B = x0.rows(), D = x0.cols();
			Tensor input({B, D + 1}), eps({B, D});
			for (std::size_t b = 0; b < B; ++b) {
				const int t = rng.uniform_int(1, cfg.max_t_d);
				const double abar = schedule.alpha_bar(t);
				for (std::size_t i = 0; i < D; ++i) {
					eps.row(b)[i] = rng.normal();
					input.row(b)[i] = float(std::sqrt(abar) * x0.row(b)[i] + std::sqrt(1 - abar) * eps.row(b)[i]);
				}
				input.row(b)[D] = float(double(t) / schedule.steps());
			}
			const Tensor& target = cfg.parameterization == Parameterization::noise ? eps : x0;
			auto tr = d.net().trace(input);
			total += mean_squared_error(target, tr.output());
			opt.apply(d.net(), d.net().backprop(tr, mse_gradient(target, tr.output())).params);
			++batches;
		});
		res.pretrain_losses.push_back(total / double(batches));
	}

	opt = Optimizer::adam(cfg.learning_rate);
	for (int e = 0; e < cfg.epochs; ++e) {
		double total = 0;
		std::size_t batches = 0;
		detail::for_each_minibatch(data.size(), cfg.batch, rng, [&](std::span<const std::size_t> idx) {
			const auto y = gather_rows(data.images, idx);
			const auto plan = sample_plan(cfg.limits, cfg.max_t_d, rng);
			auto channel = cfg.channel;
			if (cfg.randomize_snr) channel.snr_db = cfg.snr_min_db + (cfg.snr_max_db - cfg.snr_min_db) * rng.uniform();
			const auto x_hat = received_image(y, plan.t_d(), codec, schedule, channel, rng);
			auto step = denoiser_gradients(d, y, x_hat, plan.t_p(), cfg.zeta, cfg.iota_prime, rng, cfg.ssim);
			total += step.loss;
			opt.apply(d.net(), step.grads);
			++batches;
		});
		res.epoch_losses.push_back(total / double(batches));
	}
	return res;
}

} // namespace diffusec
