#pragma once

#include "diffusec/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace diffusec {

using Shape = std::vector<std::size_t>;

inline std::string to_string(const Shape& shape) {
	std::string out = "[";
	for (std::size_t i = 0; i < shape.size(); ++i) {
		if (i) out += ", ";
		out += std::to_string(shape[i]);
	}
	return out + "]";
}

inline std::size_t element_count(const Shape& shape) {
	return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline void validate_shape(const Shape& shape) {
	if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
	for (auto d : shape)
		if (d == 0) throw ShapeError("tensor shape " + to_string(shape) + " has a zero dimension");
}

/// Dense row-major float tensor. A default-constructed tensor is empty (rank 0, no data) and
/// acts as a "not yet set" value; every other tensor has a non-empty shape with positive dims.
class Tensor {
  public:
	Tensor() = default;

	explicit Tensor(Shape shape, float fill = 0.0f) : m_shape(std::move(shape)) {
		validate_shape(m_shape);
		m_data.assign(element_count(m_shape), fill);
	}

	Tensor(Shape shape, std::vector<float> data) : m_shape(std::move(shape)), m_data(std::move(data)) {
		validate_shape(m_shape);
		if (element_count(m_shape) != m_data.size())
			throw ShapeError("shape " + to_string(m_shape) + " does not match " + std::to_string(m_data.size()) + " values");
	}

	static Tensor vector(std::initializer_list<float> values) {
		return Tensor({values.size()}, std::vector<float>(values));
	}

	static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<float> values) {
		return Tensor({rows, cols}, std::vector<float>(values));
	}

	const Shape& shape() const noexcept { return m_shape; }
	std::size_t rank() const noexcept { return m_shape.size(); }
	std::size_t size() const noexcept { return m_data.size(); }
	bool empty() const noexcept { return m_data.empty(); }
	std::size_t dim(std::size_t i) const { return m_shape.at(i); }

	std::span<float> values() noexcept { return m_data; }
	std::span<const float> values() const noexcept { return m_data; }
	float* data() noexcept { return m_data.data(); }
	const float* data() const noexcept { return m_data.data(); }

	float& operator[](std::size_t i) noexcept { return m_data[i]; }
	float operator[](std::size_t i) const noexcept { return m_data[i]; }

	/// Rows of a rank-2 tensor; a rank-1 tensor is one row.
	std::size_t rows() const noexcept { return rank() >= 2 ? m_shape[0] : (empty() ? 0 : 1); }
	std::size_t cols() const noexcept { return rows() ? size() / rows() : 0; }

	std::span<float> row(std::size_t r) { return values().subspan(r * cols(), cols()); }
	std::span<const float> row(std::size_t r) const { return values().subspan(r * cols(), cols()); }

	Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), m_data); }

	/// Views the tensor as [rows × cols]; rank-1 tensors become a single row.
	Tensor as_batch() const { return rank() >= 2 ? reshaped({rows(), cols()}) : reshaped({1, size()}); }

	bool operator==(const Tensor&) const = default;

  private:
	Shape m_shape;
	std::vector<float> m_data;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
	if (a.shape() != b.shape())
		throw ShapeError(std::string(what) + ": shape " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

inline Tensor clamp01(const Tensor& x) {
	Tensor out = x;
	for (auto& v : out.values()) v = std::min(std::max(v, 0.0f), 1.0f);
	return out;
}

inline Tensor operator+(const Tensor& a, const Tensor& b) {
	require_same_shape(a, b, "add");
	Tensor out = a;
	for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
	return out;
}

inline Tensor operator-(const Tensor& a, const Tensor& b) {
	require_same_shape(a, b, "subtract");
	Tensor out = a;
	for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
	return out;
}

inline Tensor operator*(const Tensor& a, float s) {
	Tensor out = a;
	for (auto& v : out.values()) v *= s;
	return out;
}

inline double mean_square(std::span<const float> v) {
	if (v.empty()) return 0.0;
	double acc = 0.0;
	for (float x : v) acc += double(x) * x;
	return acc / double(v.size());
}

inline double mean_squared_error(const Tensor& a, const Tensor& b) {
	require_same_shape(a, b, "mse");
	double acc = 0.0;
	for (std::size_t i = 0; i < a.size(); ++i) {
		double d = double(a[i]) - b[i];
		acc += d * d;
	}
	return acc / double(a.size());
}

inline bool all_finite(std::span<const float> v) {
	return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

/// Rows [begin, begin + count) of a batch tensor.
inline Tensor slice_rows(const Tensor& batch, std::size_t begin, std::size_t count) {
	if (begin + count > batch.rows() || count == 0) throw ShapeError("row slice out of range");
	const auto cols = batch.cols();
	std::vector<float> data(batch.values().begin() + std::ptrdiff_t(begin * cols),
	                        batch.values().begin() + std::ptrdiff_t((begin + count) * cols));
	return Tensor({count, cols}, std::move(data));
}

inline Tensor gather_rows(const Tensor& batch, std::span<const std::size_t> indices) {
	if (indices.empty()) throw ShapeError("gather of zero rows");
	const auto cols = batch.cols();
	Tensor out({indices.size(), cols});
	for (std::size_t r = 0; r < indices.size(); ++r) {
		if (indices[r] >= batch.rows()) throw ShapeError("gather index out of range");
		auto src = batch.row(indices[r]);
		std::copy(src.begin(), src.end(), out.row(r).begin());
	}
	return out;
}

/// Concatenates two batches column-wise: [B×m] ++ [B×n] -> [B×(m+n)].
inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
	const auto A = a.as_batch(), Bt = b.as_batch();
	if (A.rows() != Bt.rows()) throw ShapeError("concat_cols row mismatch");
	Tensor out({A.rows(), A.cols() + Bt.cols()});
	for (std::size_t r = 0; r < A.rows(); ++r) {
		auto dst = out.row(r);
		std::copy(A.row(r).begin(), A.row(r).end(), dst.begin());
		std::copy(Bt.row(r).begin(), Bt.row(r).end(), dst.begin() + std::ptrdiff_t(A.cols()));
	}
	return out;
}

} // namespace diffusec
