#pragma once

#include "diffusec/tensor.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string_view>
#include <vector>

namespace diffusec {

using Bytes = std::vector<std::uint8_t>;

/// Little-endian byte sink.
class ByteWriter {
  public:
	void u8(std::uint8_t v) { m_bytes.push_back(v); }
	void u16(std::uint16_t v) { put(v, 2); }
	void u32(std::uint32_t v) { put(v, 4); }
	void u64(std::uint64_t v) { put(v, 8); }
	void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
	void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
	void raw(std::string_view s) { m_bytes.insert(m_bytes.end(), s.begin(), s.end()); }
	void raw(std::span<const std::uint8_t> s) { m_bytes.insert(m_bytes.end(), s.begin(), s.end()); }

	const Bytes& bytes() const noexcept { return m_bytes; }
	Bytes take() noexcept { return std::move(m_bytes); }

  private:
	void put(std::uint64_t v, int n) {
		for (int i = 0; i < n; ++i) m_bytes.push_back(std::uint8_t(v >> (8 * i)));
	}

	Bytes m_bytes;
};

/// Little-endian byte source; running past the end throws IncompleteError.
class ByteReader {
  public:
	explicit ByteReader(std::span<const std::uint8_t> bytes) : m_bytes(bytes) {}

	std::uint8_t u8() { return std::uint8_t(get(1)); }
	std::uint16_t u16() { return std::uint16_t(get(2)); }
	std::uint32_t u32() { return std::uint32_t(get(4)); }
	std::uint64_t u64() { return get(8); }
	float f32() { return std::bit_cast<float>(u32()); }
	double f64() { return std::bit_cast<double>(u64()); }

	std::span<const std::uint8_t> raw(std::size_t n) {
		need(n);
		auto out = m_bytes.subspan(m_pos, n);
		m_pos += n;
		return out;
	}

	bool expect(std::string_view magic) {
		auto got = raw(magic.size());
		return std::equal(got.begin(), got.end(), magic.begin(), magic.end(),
		                  [](std::uint8_t a, char b) { return a == std::uint8_t(b); });
	}

	std::size_t remaining() const noexcept { return m_bytes.size() - m_pos; }
	std::size_t position() const noexcept { return m_pos; }

  private:
	void need(std::size_t n) const {
		if (m_pos + n > m_bytes.size()) throw IncompleteError("unexpected end of data");
	}

	std::uint64_t get(int n) {
		need(std::size_t(n));
		std::uint64_t v = 0;
		for (int i = 0; i < n; ++i) v |= std::uint64_t(m_bytes[m_pos + std::size_t(i)]) << (8 * i);
		m_pos += std::size_t(n);
		return v;
	}

	std::span<const std::uint8_t> m_bytes;
	std::size_t m_pos = 0;
};

inline constexpr std::uint8_t dtns_version = 1;

/// DTNS block: "DTNS", version, rank, rank × u32 dims, payload as f32, all little-endian.
inline void write_dtns(ByteWriter& w, const Tensor& t) {
	if (t.rank() == 0 || t.rank() > 255) throw ShapeError("DTNS tensors need rank 1..255");
	w.raw("DTNS");
	w.u8(dtns_version);
	w.u8(std::uint8_t(t.rank()));
	for (auto d : t.shape()) w.u32(std::uint32_t(d));
	for (float v : t.values()) w.f32(v);
}

inline Tensor read_dtns(ByteReader& r) {
	if (!r.expect("DTNS")) throw IoError("bad DTNS magic");
	if (r.u8() != dtns_version) throw IoError("unsupported DTNS version");
	const auto rank = r.u8();
	Shape shape(rank);
	for (auto& d : shape) d = r.u32();
	validate_shape(shape);
	std::vector<float> data(element_count(shape));
	for (auto& v : data) v = r.f32();
	return Tensor(std::move(shape), std::move(data));
}

inline Bytes encode_dtns(const Tensor& t) {
	ByteWriter w;
	write_dtns(w, t);
	return w.take();
}

inline Tensor decode_dtns(std::span<const std::uint8_t> bytes) {
	ByteReader r(bytes);
	return read_dtns(r);
}

inline Bytes read_file(const std::filesystem::path& path) {
	std::ifstream in(path, std::ios::binary);
	if (!in) throw IoError("cannot open " + path.string());
	return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
	if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
	std::ofstream out(path, std::ios::binary);
	if (!out) throw IoError("cannot write " + path.string());
	out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
	if (!out) throw IoError("short write to " + path.string());
}

inline void save_tensor(const std::filesystem::path& path, const Tensor& t) { write_file(path, encode_dtns(t)); }
inline Tensor load_tensor(const std::filesystem::path& path) { return decode_dtns(read_file(path)); }

} // namespace diffusec
