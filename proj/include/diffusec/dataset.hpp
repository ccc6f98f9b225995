#pragma once

#include "diffusec/io.hpp"
#include "diffusec/rng.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

namespace diffusec {

/// Labeled image batch. `images` is [N × (height * width)] with values in [0, 1].
struct Dataset {
	Tensor images;
	std::vector<int> labels;
	std::size_t classes = 0;
	std::size_t height = 0;
	std::size_t width = 0;

	std::size_t size() const noexcept { return labels.size(); }
	std::size_t image_dim() const noexcept { return height * width; }

	void validate() const {
		if (labels.empty()) throw DataError("dataset is empty");
		if (images.rows() != labels.size() || images.cols() != image_dim())
			throw DataError("dataset images do not match labels/geometry");
		for (int y : labels)
			if (y < 0 || std::size_t(y) >= classes) throw DataError("label " + std::to_string(y) + " out of range");
	}

	Dataset subset(std::span<const std::size_t> indices) const {
		Dataset out{gather_rows(images, indices), {}, classes, height, width};
		for (auto i : indices) out.labels.push_back(labels.at(i));
		return out;
	}

	Dataset slice(std::size_t begin, std::size_t count) const {
		std::vector<std::size_t> idx(count);
		for (std::size_t i = 0; i < count; ++i) idx[i] = begin + i;
		return subset(idx);
	}

	Tensor image(std::size_t i) const {
		auto r = images.row(i);
		return Tensor({height, width}, std::vector<float>(r.begin(), r.end()));
	}
};

/// Procedural "class blob" images: background level plus a Gaussian bump at a class-specific
/// location (with small positional jitter), a smooth low-frequency texture shared by all
/// classes, and a little per-pixel noise.
struct ToyDatasetConfig {
	std::size_t side = 16;
	std::size_t classes = 4;
	std::size_t count = 4096;
	double background = 0.4;
	double bump_amplitude = 0.4;
	double bump_sigma = 1.0;
	double center_radius = 0.25; // fraction of side
	int jitter = 2;
	double texture_amplitude = 0.03;
	int texture_frequencies = 2;
	double pixel_noise = 0.01;

	void validate() const {
		if (classes < 2) throw ConfigError("toy dataset needs at least 2 classes");
		if (side < 4) throw ConfigError("toy dataset side must be at least 4");
		if (count == 0 || count % classes != 0) throw ConfigError("dataset count must be a positive multiple of classes");
		if (bump_sigma <= 0 || texture_amplitude < 0 || pixel_noise < 0 || jitter < 0)
			throw ConfigError("toy dataset noise parameters out of range");
	}
};

inline std::pair<double, double> class_center(const ToyDatasetConfig& cfg, std::size_t k) {
	const double c = (double(cfg.side) - 1.0) / 2.0;
	const double r = cfg.center_radius * double(cfg.side);
	const double angle = 2.0 * std::numbers::pi * double(k) / double(cfg.classes) + std::numbers::pi / 4.0;
	return {c + r * std::sin(angle), c + r * std::cos(angle)};
}

/// Balanced and interleaved: image i has label i % classes.
inline Dataset make_toy_dataset(const ToyDatasetConfig& cfg, Rng& rng) {
	cfg.validate();
	const auto side = cfg.side, dim = side * side;
	Dataset ds{Tensor({cfg.count, dim}), {}, cfg.classes, side, side};
	std::vector<std::pair<int, int>> modes;
	for (int u = 0; u <= cfg.texture_frequencies; ++u)
		for (int v = 0; v <= cfg.texture_frequencies; ++v)
			if (u || v) modes.emplace_back(u, v);
	std::vector<double> basis(modes.size() * dim);
	for (std::size_t m = 0; m < modes.size(); ++m)
		for (std::size_t i = 0; i < side; ++i)
			for (std::size_t j = 0; j < side; ++j)
				basis[m * dim + i * side + j] =
				    std::cos(std::numbers::pi * modes[m].first * (double(i) + 0.5) / double(side)) *
				    std::cos(std::numbers::pi * modes[m].second * (double(j) + 0.5) / double(side));

	std::vector<double> coef(modes.size());
	for (std::size_t n = 0; n < cfg.count; ++n) {
		const auto label = n % cfg.classes;
		auto [ci, cj] = class_center(cfg, label);
		ci += cfg.jitter ? rng.uniform_int(-cfg.jitter, cfg.jitter) : 0;
		cj += cfg.jitter ? rng.uniform_int(-cfg.jitter, cfg.jitter) : 0;
		for (auto& c : coef) c = cfg.texture_amplitude * rng.normal();
		auto row = ds.images.row(n);
		for (std::size_t i = 0; i < side; ++i)
			for (std::size_t j = 0; j < side; ++j) {
				const double di = double(i) - ci, dj = double(j) - cj;
				double v = cfg.background +
				           cfg.bump_amplitude * std::exp(-(di * di + dj * dj) / (2 * cfg.bump_sigma * cfg.bump_sigma));
				for (std::size_t m = 0; m < modes.size(); ++m) v += coef[m] * basis[m * dim + i * side + j];
				v += cfg.pixel_noise * rng.normal();
				row[i * side + j] = float(std::clamp(v, 0.0, 1.0));
			}
		ds.labels.push_back(int(label));
	}
	return ds;
}

/// Images as one DTNS file of shape [N, H, W]; labels as a one-column CSV beside it.
inline void save_dataset(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                         const Dataset& ds) {
	save_tensor(images_path, ds.images.reshaped({ds.size(), ds.height, ds.width}));
	std::ofstream out(labels_path);
	if (!out) throw IoError("cannot write " + labels_path.string());
	out << "label\n";
	for (int y : ds.labels) out << y << '\n';
}

inline Dataset load_dataset(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                            std::size_t classes) {
	auto t = load_tensor(images_path);
	if (t.rank() != 3) throw DataError("dataset tensor must be [N, H, W]");
	Dataset ds{t.reshaped({t.dim(0), t.dim(1) * t.dim(2)}), {}, classes, t.dim(1), t.dim(2)};
	std::ifstream in(labels_path);
	if (!in) throw IoError("cannot open " + labels_path.string());
	std::string line;
	std::getline(in, line);
	while (std::getline(in, line))
		if (!line.empty()) ds.labels.push_back(std::stoi(line));
	ds.validate();
	return ds;
}

} // namespace diffusec
