#pragma once

#include "diffusec/tensor.hpp"

#include <cmath>
#include <vector>

namespace diffusec {

struct SsimParams {
	double c1 = 1e-4; // (0.01 * R)^2 with dynamic range R = 1
	double c2 = 9e-4; // (0.03 * R)^2
	/// 0 selects global statistics (one mean/variance per image); an odd k > 0 averages
	/// SSIM over every k×k sliding window, per channel.
	int window = 0;
	/// Image geometry for flat inputs under a sliding window. Ignored for global windows and
	/// for inputs of rank >= 2, which are read as [H, W] or [H, W, C].
	std::size_t height = 0;
	std::size_t width = 0;

	static SsimParams global() { return {}; }
	static SsimParams sliding(int k, std::size_t height = 0, std::size_t width = 0) {
		SsimParams p;
		p.window = k;
		p.height = height;
		p.width = width;
		return p;
	}

	void validate() const {
		if (!(c1 > 0.0) || !(c2 > 0.0)) throw ConfigError("ssim constants c1, c2 must be positive");
		if (window < 0 || (window > 0 && window % 2 == 0)) throw ConfigError("ssim window must be 0 (global) or odd");
	}
};

namespace detail {

struct SsimGeometry {
	std::size_t height, width, channels;
};

inline SsimGeometry ssim_geometry(const Tensor& a, const SsimParams& p) {
	if (a.rank() >= 2) {
		std::size_t channels = a.rank() >= 3 ? a.size() / (a.dim(0) * a.dim(1)) : 1;
		return {a.dim(0), a.dim(1), channels};
	}
	if (p.height == 0 || p.width == 0 || a.size() % (p.height * p.width) != 0)
		throw ShapeError("sliding-window ssim on a flat tensor needs height and width");
	return {p.height, p.width, a.size() / (p.height * p.width)};
}

/// Calls fn(indices) once per window. The index list is reused between calls.
template <typename Fn>
void for_each_window(const Tensor& a, const SsimParams& p, Fn&& fn) {
	std::vector<std::size_t> idx;
	if (p.window == 0) {
		idx.resize(a.size());
		for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
		fn(idx);
		return;
	}
	const auto g = ssim_geometry(a, p);
	const auto k = std::size_t(p.window);
	if (k > g.height || k > g.width) throw ShapeError("ssim window larger than image");
	idx.resize(k * k);
	for (std::size_t c = 0; c < g.channels; ++c)
		for (std::size_t i = 0; i + k <= g.height; ++i)
			for (std::size_t j = 0; j + k <= g.width; ++j) {
				std::size_t n = 0;
				for (std::size_t di = 0; di < k; ++di)
					for (std::size_t dj = 0; dj < k; ++dj)
						idx[n++] = ((i + di) * g.width + (j + dj)) * g.channels + c;
				fn(idx);
			}
}

struct WindowStats {
	double mu_a, mu_b, var_a, var_b, cov;
};

inline WindowStats window_stats(std::span<const float> a, std::span<const float> b,
                                const std::vector<std::size_t>& idx) {
	const double n = double(idx.size());
	double sa = 0, sb = 0;
	for (auto i : idx) {
		sa += a[i];
		sb += b[i];
	}
	WindowStats s{sa / n, sb / n, 0, 0, 0};
	for (auto i : idx) {
		const double da = a[i] - s.mu_a, db = b[i] - s.mu_b;
		s.var_a += da * da;
		s.var_b += db * db;
		s.cov += da * db;
	}
	s.var_a /= n;
	s.var_b /= n;
	s.cov /= n;
	return s;
}

inline double ssim_formula(const WindowStats& s, const SsimParams& p) {
	return ((2 * s.mu_a * s.mu_b + p.c1) * (2 * s.cov + p.c2)) /
	       ((s.mu_a * s.mu_a + s.mu_b * s.mu_b + p.c1) * (s.var_a + s.var_b + p.c2));
}

} // namespace detail

/// Unclamped SSIM, averaged over windows.
inline double ssim_raw(const Tensor& a, const Tensor& b, const SsimParams& p = {}) {
	require_same_shape(a, b, "ssim");
	p.validate();
	double total = 0;
	std::size_t windows = 0;
	detail::for_each_window(a, p, [&](const std::vector<std::size_t>& idx) {
		total += detail::ssim_formula(detail::window_stats(a.values(), b.values(), idx), p);
		++windows;
	});
	return total / double(windows);
}

/// Structural similarity of two single images, clamped to [0, 1].
inline double ssim(const Tensor& a, const Tensor& b, const SsimParams& p = {}) {
	return std::clamp(ssim_raw(a, b, p), 0.0, 1.0);
}

/// Gradient of ssim_raw(a, b) with respect to b.
inline std::vector<double> ssim_gradient(const Tensor& a, const Tensor& b, const SsimParams& p = {}) {
	require_same_shape(a, b, "ssim");
	p.validate();
	std::vector<double> grad(b.size(), 0.0);
	std::size_t windows = 0;
	const auto av = a.values(), bv = b.values();
	detail::for_each_window(a, p, [&](const std::vector<std::size_t>& idx) {
		const auto s = detail::window_stats(av, bv, idx);
		const double n = double(idx.size());
		const double A1 = 2 * s.mu_a * s.mu_b + p.c1, A2 = 2 * s.cov + p.c2;
		const double B1 = s.mu_a * s.mu_a + s.mu_b * s.mu_b + p.c1, B2 = s.var_a + s.var_b + p.c2;
		const double value = A1 * A2 / (B1 * B2);
		// d log S = dA1/A1 + dA2/A2 - dB1/B1 - dB2/B2
		for (auto i : idx) {
			const double dA1 = 2 * s.mu_a / n, dA2 = 2 * (av[i] - s.mu_a) / n;
			const double dB1 = 2 * s.mu_b / n, dB2 = 2 * (bv[i] - s.mu_b) / n;
			grad[i] += value * (dA1 / A1 + dA2 / A2 - dB1 / B1 - dB2 / B2);
		}
		++windows;
	});
	for (auto& g : grad) g /= double(windows);
	return grad;
}

} // namespace diffusec
