#pragma once

#include "diffusec/classifier.hpp"
#include "diffusec/ssim.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace diffusec {

/// Mean per-image SSIM over the rows of two equally shaped batches.
inline double ssim_avg(const Tensor& x, const Tensor& x_final, const SsimParams& p = {}) {
	require_same_shape(x, x_final, "ssim_avg");
	const auto X = x.as_batch(), F = x_final.as_batch();
	if (X.rows() == 0) throw ShapeError("ssim_avg of an empty batch");
	double total = 0;
	for (std::size_t b = 0; b < X.rows(); ++b) {
		const Tensor xb({X.cols()}, std::vector<float>(X.row(b).begin(), X.row(b).end()));
		const Tensor fb({X.cols()}, std::vector<float>(F.row(b).begin(), F.row(b).end()));
		total += ssim(xb, fb, p);
	}
	return total / double(X.rows());
}

/// Classifier decisions H(x), H(x_adv), H(x_final) for one image.
struct ClassTriple {
	int clean;
	int adversarial;
	int final;
};

/// Attack changed the class and the purified image kept the adversarial class.
inline int adv_indicator(const ClassTriple& c) { return c.clean != c.adversarial && c.adversarial == c.final; }

/// Attack changed the class and purification landed on a third class, neither the adversarial
/// one nor the original.
inline int err_indicator(const ClassTriple& c) {
	return c.clean != c.adversarial && c.final != c.adversarial && c.final != c.clean;
}

namespace detail {
template <typename Indicator>
double rooted_rate(std::span<const ClassTriple> cs, Indicator ind) {
	if (cs.empty()) return 0.0;
	double n = 0;
	for (const auto& c : cs) n += ind(c);
	return std::sqrt(n / double(cs.size()));
}
} // namespace detail

inline double adv_rate(std::span<const ClassTriple> cs) { return detail::rooted_rate(cs, adv_indicator); }
inline double err_rate(std::span<const ClassTriple> cs) { return detail::rooted_rate(cs, err_indicator); }

/// Everything the metrics need from one pipeline round.
struct BatchOutcome {
	Tensor original;
	Tensor adversarial;
	Tensor final;
	std::vector<int> labels;
	std::vector<ClassTriple> classes;

	static BatchOutcome make(Tensor x, Tensor x_adv, Tensor x_final, std::vector<int> labels, const Classifier& h) {
		require_same_shape(x, x_adv, "batch outcome");
		require_same_shape(x, x_final, "batch outcome");
		BatchOutcome o{std::move(x), std::move(x_adv), std::move(x_final), std::move(labels), {}};
		const auto hc = h.classify_batch(o.original), ha = h.classify_batch(o.adversarial),
		           hf = h.classify_batch(o.final);
		for (std::size_t i = 0; i < hc.size(); ++i) o.classes.push_back({hc[i], ha[i], hf[i]});
		return o;
	}

	std::size_t size() const noexcept { return classes.size(); }

	/// Fraction of final classifications that match the true label.
	double robust_accuracy() const {
		if (labels.size() != classes.size() || classes.empty()) return 0.0;
		std::size_t hits = 0;
		for (std::size_t i = 0; i < classes.size(); ++i) hits += classes[i].final == labels[i];
		return double(hits) / double(classes.size());
	}
};

inline double adv_rate(const BatchOutcome& o) { return adv_rate(o.classes); }
inline double err_rate(const BatchOutcome& o) { return err_rate(o.classes); }

struct RewardConfig {
	double eta = 1.0;
	double eta1 = -0.8;
	double eta2 = -0.7;
	double eta3 = -0.5;

	void validate() const {
		if (!std::isfinite(eta) || !std::isfinite(eta1) || !std::isfinite(eta2) || !std::isfinite(eta3))
			throw ConfigError("reward weights must be finite");
	}
};

/// R = eta * (eta1 (1 - SSIM_avg) + eta2 Adv + eta3 Err).
inline double reward(double ssim_average, double adv, double err, const RewardConfig& cfg = {}) {
	cfg.validate();
	return cfg.eta * (cfg.eta1 * (1.0 - ssim_average) + cfg.eta2 * adv + cfg.eta3 * err);
}

inline double reward(const BatchOutcome& o, const RewardConfig& cfg = {}, const SsimParams& p = {}) {
	return reward(ssim_avg(o.original, o.final, p), adv_rate(o), err_rate(o), cfg);
}

struct MetricsRow {
	long step = 0;
	double snr_db = 0;
	int t_d = 0;
	int t_plus = 0;
	double ssim_avg = 0;
	double adv_rate = 0;
	double err_rate = 0;
	double reward = 0;
};

inline MetricsRow metrics_row(const BatchOutcome& o, long step, double snr_db, int t_d, int t_plus,
                              const RewardConfig& cfg = {}, const SsimParams& p = {}) {
	MetricsRow r{step, snr_db, t_d, t_plus, ssim_avg(o.original, o.final, p), adv_rate(o), err_rate(o), 0};
	r.reward = reward(r.ssim_avg, r.adv_rate, r.err_rate, cfg);
	return r;
}

inline constexpr const char* metrics_csv_header = "step,snr_db,t_D,t_plus,ssim_avg,adv_rate,err_rate,reward";

inline std::string to_csv(const MetricsRow& r) {
	char buf[256];
	std::snprintf(buf, sizeof buf, "%ld,%.4f,%d,%d,%.6f,%.6f,%.6f,%.6f", r.step, r.snr_db, r.t_d, r.t_plus, r.ssim_avg,
	              r.adv_rate, r.err_rate, r.reward);
	return buf;
}

} // namespace diffusec
