#pragma once

#include "diffusec/tensor.hpp"

#include <concepts>
#include <cstdint>
#include <random>

namespace diffusec {

/// Any source of standard-normal draws. Stochastic operations are templated on this so that
/// tests can inject deterministic stubs (e.g. a source that always returns zero).
template <typename R>
concept NormalSource = requires(R& r) {
	{ r.normal() } -> std::convertible_to<float>;
};

/// Seeded random stream. Identical seeds give bit-identical streams; copies continue
/// independently from the copied state.
class Rng {
  public:
	explicit Rng(std::uint64_t seed) : m_seed(seed), m_engine(seed) {}

	std::uint64_t seed() const noexcept { return m_seed; }

	float normal() { return m_normal(m_engine); }
	double uniform() { return m_uniform(m_engine); }
	std::uint64_t next_u64() { return m_engine(); }

	/// Uniform integer in [lo, hi].
	int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(m_engine); }
	std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(m_engine); }

	/// Independent child stream keyed by `stream`; does not advance this generator.
	Rng split(std::uint64_t stream) const { return Rng(mix(m_seed ^ mix(stream + 0x9e3779b97f4a7c15ULL))); }

	std::mt19937_64& engine() noexcept { return m_engine; }

  private:
	static std::uint64_t mix(std::uint64_t z) {
		z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
		z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
		return z ^ (z >> 31);
	}

	std::uint64_t m_seed;
	std::mt19937_64 m_engine;
	std::normal_distribution<float> m_normal{0.0f, 1.0f};
	std::uniform_real_distribution<double> m_uniform{0.0, 1.0};
};

template <NormalSource R>
Tensor gaussian_sample(const Shape& shape, R& rng) {
	Tensor out(shape);
	for (auto& v : out.values()) v = rng.normal();
	return out;
}

} // namespace diffusec
