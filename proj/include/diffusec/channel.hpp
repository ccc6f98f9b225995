#pragma once

#include "diffusec/rng.hpp"
#include "diffusec/tensor.hpp"

#include <cmath>
#include <limits>

namespace diffusec {

/// AWGN channel with an optional channel attack. The attack noise is itself AWGN whose power
/// is `attack_noise_power` times the measured signal power.
struct ChannelConfig {
	double snr_db = std::numeric_limits<double>::infinity();
	double attack_noise_power = 0.0;

	static ChannelConfig noiseless() { return {}; }
	static ChannelConfig awgn(double snr_db, double attack_noise_power = 0.0) { return {snr_db, attack_noise_power}; }

	bool has_noise() const noexcept { return std::isfinite(snr_db) || attack_noise_power > 0.0; }

	void validate() const {
		if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity())
			throw ConfigError("snr_db must be a number or +inf");
		if (!(attack_noise_power >= 0.0) || !std::isfinite(attack_noise_power))
			throw ConfigError("attack noise power must be finite and non-negative");
	}
};

/// Noise standard deviation giving `snr_db` against a signal of mean power `signal_power`.
inline double snr_to_sigma(double snr_db, double signal_power) {
	if (!(signal_power > 0.0)) throw ConfigError("signal power must be positive");
	return std::sqrt(signal_power / std::pow(10.0, snr_db / 10.0));
}

/// One channel use. `unit_noise` holds (n_c' + n_a') / sqrt(P) so the output is
/// z + sqrt(P) * unit_noise with P the batch mean power of z.
struct ChannelRealization {
	Tensor output;
	Tensor unit_noise;
	double signal_power = 0.0;

	/// Maps dL/d(output) to dL/dz, including the dependence of the noise scale on P.
	Tensor backward(const Tensor& z, const Tensor& grad_output) const {
		Tensor grad = grad_output;
		if (signal_power <= 0.0) return grad;
		double coupling = 0.0;
		for (std::size_t i = 0; i < grad.size(); ++i) coupling += double(grad_output[i]) * unit_noise[i];
		// d sqrt(P) / dz_j = z_j / (N sqrt(P))
		const double scale = coupling / (double(z.size()) * std::sqrt(signal_power));
		for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += float(scale * z[j]);
		return grad;
	}
};

template <NormalSource R>
ChannelRealization transmit_traced(const Tensor& z, const ChannelConfig& cfg, R& rng) {
	cfg.validate();
	ChannelRealization out{z, Tensor(z.shape()), mean_square(z.values())};
	if (!cfg.has_noise() || out.signal_power <= 0.0) return out;
	const double channel_rel = std::isfinite(cfg.snr_db) ? std::pow(10.0, -cfg.snr_db / 20.0) : 0.0;
	const double attack_rel = std::sqrt(cfg.attack_noise_power);
	const double amplitude = std::sqrt(out.signal_power);
	for (std::size_t i = 0; i < z.size(); ++i) {
		const double n_c = channel_rel > 0.0 ? channel_rel * rng.normal() : 0.0;
		const double n_a = attack_rel > 0.0 ? attack_rel * rng.normal() : 0.0;
		out.unit_noise[i] = float(n_c + n_a);
		out.output[i] = float(z[i] + amplitude * (n_c + n_a));
	}
	return out;
}

/// z_hat = z + n_c' + n_a' with identity channel matrix.
template <NormalSource R>
Tensor transmit(const Tensor& z, const ChannelConfig& cfg, R& rng) {
	return transmit_traced(z, cfg, rng).output;
}

} // namespace diffusec
