#pragma once

#include "diffusec/dense_net.hpp"
#include "diffusec/io.hpp"

namespace diffusec {

inline constexpr std::uint8_t dnet_version = 1;

// DNET: "DNET", version u8, layer count u32, then per layer (in u32, out u32, activation u8),
// then per layer the weight and bias as DTNS blocks.
inline void write_dnet(ByteWriter& w, const DenseNet& net) {
	w.raw("DNET");
	w.u8(dnet_version);
	w.u32(std::uint32_t(net.layers().size()));
	for (const auto& L : net.layers()) {
		w.u32(std::uint32_t(L.in_dim()));
		w.u32(std::uint32_t(L.out_dim()));
		w.u8(std::uint8_t(L.activation));
	}
	for (const auto& L : net.layers()) {
		write_dtns(w, L.weight);
		write_dtns(w, L.bias);
	}
}

inline DenseNet read_dnet(ByteReader& r) {
	if (!r.expect("DNET")) throw IoError("bad DNET magic");
	if (r.u8() != dnet_version) throw IoError("unsupported DNET version");
	const auto count = r.u32();
	struct Header {
		std::uint32_t in, out;
		std::uint8_t act;
	};
	std::vector<Header> headers(count);
	for (auto& h : headers) {
		h.in = r.u32();
		h.out = r.u32();
		h.act = r.u8();
		if (h.act > std::uint8_t(Activation::tanh)) throw IoError("unknown activation tag");
	}
	std::vector<DenseLayer> layers;
	for (const auto& h : headers) {
		DenseLayer L{read_dtns(r), read_dtns(r), Activation(h.act)};
		if (L.weight.shape() != Shape{h.out, h.in} || L.bias.shape() != Shape{h.out})
			throw IoError("DNET parameter block does not match its header");
		layers.push_back(std::move(L));
	}
	return DenseNet(std::move(layers));
}

inline Bytes encode_dnet(const DenseNet& net) {
	ByteWriter w;
	write_dnet(w, net);
	return w.take();
}

inline DenseNet decode_dnet(std::span<const std::uint8_t> bytes) {
	ByteReader r(bytes);
	return read_dnet(r);
}

} // namespace diffusec
