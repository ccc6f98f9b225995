#pragma once

#include "diffusec/agent_training.hpp"
#include "diffusec/checkpoint.hpp"
#include "diffusec/classifier.hpp"
#include "diffusec/codec.hpp"
#include "diffusec/diffusion.hpp"

#include <filesystem>

// Checkpoint containers. Each is a four-byte magic, a version byte, a small header and one
// or more DNET blocks.

namespace diffusec {

inline constexpr std::uint8_t artifact_version = 1;

namespace detail {
inline void open_artifact(ByteReader& r, std::string_view magic) {
	if (!r.expect(magic)) throw DataError("not a " + std::string(magic) + " checkpoint");
	if (const auto v = r.u8(); v != artifact_version)
		throw UnsupportedError(std::string(magic) + " version " + std::to_string(v) + " is not supported");
}

inline void close_artifact(const ByteReader& r, std::string_view magic) {
	if (r.remaining() != 0) throw DataError("trailing bytes in " + std::string(magic) + " checkpoint");
}
} // namespace detail

inline Bytes encode_codec(const Codec& c) {
	ByteWriter w;
	w.raw("DCOD");
	w.u8(artifact_version);
	for (const auto* n : {&c.semantic_encoder, &c.channel_encoder, &c.channel_decoder, &c.semantic_decoder})
		write_dnet(w, *n);
	return w.take();
}

inline Codec decode_codec(std::span<const std::uint8_t> bytes) {
	ByteReader r(bytes);
	detail::open_artifact(r, "DCOD");
	Codec c;
	c.semantic_encoder = read_dnet(r);
	c.channel_encoder = read_dnet(r);
	c.channel_decoder = read_dnet(r);
	c.semantic_decoder = read_dnet(r);
	detail::close_artifact(r, "DCOD");
	c.validate();
	return c;
}

/// Learned denoisers only; the schedule and parameterization travel with the network.
inline Bytes encode_denoiser(const Denoiser& d) {
	if (d.kind() != DenoiserKind::learned) throw UnsupportedError("only learned denoisers are stored");
	ByteWriter w;
	w.raw("DDEN");
	w.u8(artifact_version);
	w.u32(std::uint32_t(d.schedule().steps()));
	w.f64(d.schedule().beta_start());
	w.f64(d.schedule().beta_end());
	w.u8(std::uint8_t(d.parameterization()));
	write_dnet(w, d.net());
	return w.take();
}

inline Denoiser decode_denoiser(std::span<const std::uint8_t> bytes) {
	ByteReader r(bytes);
	detail::open_artifact(r, "DDEN");
	const auto steps = r.u32();
	const auto b0 = r.f64(), b1 = r.f64();
	const auto param = r.u8();
	if (param > 1) throw UnsupportedError("unknown denoiser parameterization");
	auto net = read_dnet(r);
	detail::close_artifact(r, "DDEN");
	return Denoiser::learned(std::move(net), NoiseSchedule::linear(int(steps), b0, b1), Parameterization(param));
}

inline Bytes encode_classifier(const Classifier& c) {
	ByteWriter w;
	w.raw("DCLS");
	w.u8(artifact_version);
	w.u32(std::uint32_t(c.classes()));
	write_dnet(w, c.net());
	return w.take();
}

inline Classifier decode_classifier(std::span<const std::uint8_t> bytes) {
	ByteReader r(bytes);
	detail::open_artifact(r, "DCLS");
	const auto classes = r.u32();
	auto net = read_dnet(r);
	detail::close_artifact(r, "DCLS");
	return Classifier(std::move(net), classes);
}

/// Manifest of the hyperparameters the agent was trained with, then actor, target actor,
/// critic, target critic.
inline Bytes encode_agent(const DdpgNets& n, const AgentHyperParams& hp) {
	ByteWriter w;
	w.raw("DAGT");
	w.u8(artifact_version);
	w.u32(std::uint32_t(hp.hidden));
	w.u64(hp.buffer);
	w.u64(hp.batch);
	w.f64(hp.gamma);
	w.f64(hp.tau);
	w.u8(std::uint8_t(hp.optimizer));
	w.f64(hp.lr_actor);
	w.f64(hp.lr_critic);
	w.u32(std::uint32_t(hp.episodes));
	w.u64(std::uint64_t(hp.warmup_steps));
	w.f64(hp.noise_start);
	w.f64(hp.noise_end);
	w.u32(std::uint32_t(hp.limits.t_d_max));
	w.u32(std::uint32_t(hp.limits.t_plus_max));
	w.u32(std::uint32_t(hp.limits.delta_max));
	for (const auto* net : {&n.actor, &n.target_actor, &n.critic, &n.target_critic}) write_dnet(w, *net);
	return w.take();
}

struct AgentCheckpoint {
	DdpgNets nets;
	AgentHyperParams hp;
};

inline AgentCheckpoint decode_agent(std::span<const std::uint8_t> bytes) {
	ByteReader r(bytes);
	detail::open_artifact(r, "DAGT");
	AgentCheckpoint a;
	auto& hp = a.hp;
	hp.hidden = r.u32();
	hp.buffer = r.u64();
	hp.batch = r.u64();
	hp.gamma = r.f64();
	hp.tau = r.f64();
	const auto kind = r.u8();
	if (kind > 1) throw UnsupportedError("unknown optimizer kind in agent checkpoint");
	hp.optimizer = OptimizerKind(kind);
	hp.lr_actor = r.f64();
	hp.lr_critic = r.f64();
	hp.episodes = int(r.u32());
	hp.warmup_steps = long(r.u64());
	hp.noise_start = r.f64();
	hp.noise_end = r.f64();
	hp.limits.t_d_max = int(r.u32());
	hp.limits.t_plus_max = int(r.u32());
	hp.limits.delta_max = int(r.u32());
	a.nets.actor = read_dnet(r);
	a.nets.target_actor = read_dnet(r);
	a.nets.critic = read_dnet(r);
	a.nets.target_critic = read_dnet(r);
	detail::close_artifact(r, "DAGT");
	if (a.nets.actor.in_dim() != DdpgNets::state_dim || a.nets.actor.out_dim() != DdpgNets::action_dim ||
	    a.nets.critic.in_dim() != DdpgNets::state_dim + DdpgNets::action_dim || a.nets.critic.out_dim() != 1)
		throw ShapeError("agent checkpoint networks have the wrong shape");
	return a;
}

inline void save_codec(const std::filesystem::path& p, const Codec& c) { write_file(p, encode_codec(c)); }
inline Codec load_codec(const std::filesystem::path& p) { return decode_codec(read_file(p)); }
inline void save_denoiser(const std::filesystem::path& p, const Denoiser& d) { write_file(p, encode_denoiser(d)); }
inline Denoiser load_denoiser(const std::filesystem::path& p) { return decode_denoiser(read_file(p)); }
inline void save_classifier(const std::filesystem::path& p, const Classifier& c) { write_file(p, encode_classifier(c)); }
inline Classifier load_classifier(const std::filesystem::path& p) { return decode_classifier(read_file(p)); }
inline void save_agent(const std::filesystem::path& p, const DdpgNets& n, const AgentHyperParams& hp) {
	write_file(p, encode_agent(n, hp));
}
inline AgentCheckpoint load_agent(const std::filesystem::path& p) { return decode_agent(read_file(p)); }

} // namespace diffusec
