#pragma once

#include "diffusec/channel.hpp"
#include "diffusec/agent_training.hpp"
#include "diffusec/io.hpp"

#include <array>
#include <atomic>
#include <exception>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>
#include <variant>

namespace diffusec {

inline constexpr std::size_t pilot_length = 64;
inline constexpr std::uint64_t pilot_seed = 0x44535f50494c4f54ULL;  // "DS_PILOT"
inline constexpr double snr_ceiling_db = 120.0;
inline constexpr double error_power_floor = 1e-12;

using Pilot = std::array<float, pilot_length>;

/// BPSK +-1 samples (exactly unit power) drawn from the fixed pilot seed; both ends know it.
inline const Pilot& known_pilot() {
	static const Pilot pilot = [] {
		Pilot p{};
		Rng rng(pilot_seed);
		for (auto& v : p) v = (rng.next_u64() & 1) ? 1.0f : -1.0f;
		return p;
	}();
	return pilot;
}

struct Probe {
	std::uint32_t session = 0;
	Pilot pilot{};
	bool operator==(const Probe&) const = default;
};

struct TimestepAssign {
	std::uint32_t session = 0;
	std::uint16_t t_d = 0;
	std::uint16_t t_plus = 0;
	float snr_db = 0;
	bool operator==(const TimestepAssign&) const = default;
};

struct Ack {
	std::uint32_t session = 0;
	bool operator==(const Ack&) const = default;
};

using SyncMessage = std::variant<Probe, TimestepAssign, Ack>;

enum class FrameType : std::uint8_t { probe = 1, assign = 2, ack = 3 };

inline constexpr std::uint8_t frame_version = 1;
inline constexpr std::size_t frame_header_size = 10;

inline std::uint32_t session_of(const SyncMessage& m) {
	return std::visit([](const auto& v) { return v.session; }, m);
}

inline void check_assign(int t_d, int t_plus, const PlanLimits& limits = {}) {
	if (!TimestepPlan::valid(t_d, t_plus, limits))
		throw ConstraintError("assigned plan (" + std::to_string(t_d) + ", " + std::to_string(t_plus) +
		                      ") violates the timestep constraints");
}

/// "DS", version, type, u32 session, u16 payload length, payload; little-endian, reals as f32.
inline Bytes encode_message(const SyncMessage& m) {
	ByteWriter payload;
	FrameType type{};
	if (const auto* p = std::get_if<Probe>(&m)) {
		type = FrameType::probe;
		for (float v : p->pilot) payload.f32(v);
	} else if (const auto* a = std::get_if<TimestepAssign>(&m)) {
		type = FrameType::assign;
		check_assign(a->t_d, a->t_plus);
		payload.u16(a->t_d);
		payload.u16(a->t_plus);
		payload.f32(a->snr_db);
	} else {
		type = FrameType::ack;
	}
	const auto body = payload.take();
	if (body.size() > 0xffff) throw FrameError("sync payload exceeds 65535 bytes");
	ByteWriter w;
	w.raw("DS");
	w.u8(frame_version);
	w.u8(std::uint8_t(type));
	w.u32(session_of(m));
	w.u16(std::uint16_t(body.size()));
	w.raw(body);
	return w.take();
}

inline SyncMessage decode_message(std::span<const std::uint8_t> bytes) {
	ByteReader r(bytes);
	if (!r.expect("DS")) throw ProtocolError("bad sync frame magic");
	if (const auto v = r.u8(); v != frame_version) throw ProtocolError("unknown sync frame version " + std::to_string(v));
	const auto type = r.u8();
	const auto session = r.u32();
	const auto length = r.u16();
	std::size_t expected = 0;
	switch (FrameType(type)) {
	case FrameType::probe: expected = pilot_length * 4; break;
	case FrameType::assign: expected = 8; break;
	case FrameType::ack: expected = 0; break;
	default: throw UnsupportedError("unknown sync frame type " + std::to_string(type));
	}
	if (length != expected) throw FrameError("payload length " + std::to_string(length) + " does not match frame type");
	ByteReader body(r.raw(length));
	if (r.remaining() != 0) throw FrameError("trailing bytes after sync frame");
	switch (FrameType(type)) {
	case FrameType::probe: {
		Probe p{session, {}};
		for (auto& v : p.pilot) v = body.f32();
		return p;
	}
	case FrameType::assign: {
		TimestepAssign a{session, body.u16(), body.u16(), 0};
		a.snr_db = body.f32();
		check_assign(a.t_d, a.t_plus);
		return a;
	}
	default: return Ack{session};
	}
}

/// 10 log10(P_known / P_err), with P_err floored at 1e-12 and the result capped at 120 dB.
inline double measure_snr(std::span<const float> received, std::span<const float> known) {
	if (received.size() != known.size() || known.empty()) throw ProtocolError("pilot length mismatch");
	double p_known = 0, p_err = 0;
	for (std::size_t i = 0; i < known.size(); ++i) {
		p_known += double(known[i]) * known[i];
		const double e = double(received[i]) - known[i];
		p_err += e * e;
	}
	p_known /= double(known.size());
	p_err = std::max(p_err / double(known.size()), error_power_floor);
	return std::min(snr_ceiling_db, 10.0 * std::log10(p_known / p_err));
}

enum class SyncRole { sender, receiver };
enum class SyncPhase { idle = 0, probed = 1, assigned = 2, acked = 3 };

inline const char* to_string(SyncPhase p) {
	constexpr const char* names[] = {"idle", "probed", "assigned", "acked"};
	return names[int(p)];
}

/// Raw selector output; validated before it can become an agreed plan.
struct PlanRequest {
	int t_d = 0;
	int t_plus = 0;
};

using TimestepSelector = std::function<PlanRequest(double measured_snr_db)>;

inline TimestepSelector fixed_selector(int t_d, int t_plus) {
	return [=](double) { return PlanRequest{t_d, t_plus}; };
}

/// Piecewise-constant lookup: the first entry whose threshold is <= snr wins; entries are
/// sorted by descending threshold, and the last entry is the fallback.
inline TimestepSelector table_selector(std::vector<std::pair<double, PlanRequest>> table) {
	if (table.empty()) throw ConfigError("selector table is empty");
	std::sort(table.begin(), table.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
	return [table = std::move(table)](double snr) {
		for (const auto& [threshold, plan] : table)
			if (snr >= threshold) return plan;
		return table.back().second;
	};
}

/// Runs `steps` greedy agent actions from `start` at the measured SNR.
inline TimestepSelector agent_selector(DdpgNets nets, PlanRequest start = {20, 0}, int steps = 3,
                                       AgentLimits limits = {}) {
	return [nets = std::move(nets), start, steps, limits](double snr) {
		const auto s = greedy_rollout(nets, project_state(start.t_d, start.t_plus, snr, limits), steps, limits);
		return PlanRequest{s.t_d, s.t_plus};
	};
}

/// One endpoint's view of a handshake. Phases only move forward.
class SyncSession {
  public:
	SyncSession(std::uint32_t id, SyncRole role) : m_id(id), m_role(role) {}

	std::uint32_t id() const noexcept { return m_id; }
	SyncRole role() const noexcept { return m_role; }
	SyncPhase phase() const noexcept { return m_phase; }
	const std::optional<TimestepPlan>& plan() const noexcept { return m_plan; }
	double measured_snr_db() const noexcept { return m_snr; }
	bool acked() const noexcept { return m_phase == SyncPhase::acked; }

	/// Sender: emit the probe.
	Bytes start() {
		require(SyncRole::sender, "start");
		if (m_phase != SyncPhase::idle) throw ProtocolError("handshake already started");
		advance(SyncPhase::probed);
		return remember(Probe{m_id, known_pilot()});
	}

	/// Feeds one received frame; returns the reply to send, if any.
	std::optional<Bytes> on_frame(std::span<const std::uint8_t> frame, const TimestepSelector& selector = {}) {
		const auto msg = decode_message(frame);
		if (session_of(msg) != m_id) return std::nullopt;  // stale or foreign session
		return m_role == SyncRole::sender ? sender_receive(msg) : receiver_receive(msg, selector);
	}

	/// The frame to resend after a timeout, if this side is still waiting for a reply.
	std::optional<Bytes> retransmission() const {
		const bool waiting = (m_role == SyncRole::sender && m_phase == SyncPhase::probed) ||
		                     (m_role == SyncRole::receiver && m_phase == SyncPhase::assigned);
		if (!waiting) return std::nullopt;
		return m_last;
	}

  private:
	void require(SyncRole r, const char* what) const {
		if (m_role != r) throw ProtocolError(std::string(what) + " called on the wrong endpoint role");
	}

	void advance(SyncPhase next) {
		if (int(next) < int(m_phase)) throw ProtocolError("sync phase may not move backwards");
		m_phase = next;
	}

	Bytes remember(const SyncMessage& m) {
		m_last = encode_message(m);
		return m_last;
	}

	std::optional<Bytes> sender_receive(const SyncMessage& msg) {
		const auto* a = std::get_if<TimestepAssign>(&msg);
		if (!a) return std::nullopt;
		if (m_phase == SyncPhase::acked) return m_last;  // our Ack was lost; repeat it
		if (m_phase != SyncPhase::probed) return std::nullopt;
		m_plan = TimestepPlan::make(a->t_d, a->t_plus);
		m_snr = a->snr_db;
		advance(SyncPhase::assigned);
		advance(SyncPhase::acked);
		return remember(Ack{m_id});
	}

	std::optional<Bytes> receiver_receive(const SyncMessage& msg, const TimestepSelector& selector) {
		if (const auto* p = std::get_if<Probe>(&msg)) {
			if (m_phase == SyncPhase::assigned) return m_last;  // the Assign was lost
			if (m_phase != SyncPhase::idle) return std::nullopt;
			if (!selector) throw ConfigError("receiver needs a timestep selector");
			advance(SyncPhase::probed);
			m_snr = measure_snr(p->pilot, known_pilot());
			const auto req = selector(m_snr);
			check_assign(req.t_d, req.t_plus);
			const auto reply = remember(TimestepAssign{m_id, std::uint16_t(req.t_d), std::uint16_t(req.t_plus), float(m_snr)});
			m_plan = TimestepPlan::make(req.t_d, req.t_plus);
			advance(SyncPhase::assigned);
			return reply;
		}
		if (std::holds_alternative<Ack>(msg) && m_phase == SyncPhase::assigned) advance(SyncPhase::acked);
		return std::nullopt;
	}

	std::uint32_t m_id;
	SyncRole m_role;
	SyncPhase m_phase = SyncPhase::idle;
	std::optional<TimestepPlan> m_plan;
	double m_snr = 0;
	Bytes m_last;
};

/// Simulated link: frames may be dropped; the channel perturbs the probe's pilot waveform.
/// Control fields are assumed to be protected by the link's own coding.
struct LinkConfig {
	ChannelConfig channel = ChannelConfig::noiseless();
	double drop_probability = 0.0;

	void validate() const {
		channel.validate();
		if (!(drop_probability >= 0.0 && drop_probability < 1.0)) throw ConfigError("drop probability must lie in [0, 1)");
	}
};

inline std::optional<Bytes> carry(const Bytes& frame, const LinkConfig& link, Rng& rng) {
	if (link.drop_probability > 0.0 && rng.uniform() < link.drop_probability) return std::nullopt;
	if (frame.size() < 4 || frame[3] != std::uint8_t(FrameType::probe) || !link.channel.has_noise()) return frame;
	auto probe = std::get<Probe>(decode_message(frame));
	const auto noisy = transmit(Tensor({pilot_length}, std::vector<float>(probe.pilot.begin(), probe.pilot.end())),
	                            link.channel, rng);
	std::copy(noisy.values().begin(), noisy.values().end(), probe.pilot.begin());
	return encode_message(probe);
}

struct HandshakeResult {
	SyncSession sender;
	SyncSession receiver;
	std::size_t frames_sent = 0;
	std::size_t frames_delivered = 0;
};

/// Probe -> Assign -> Ack over the simulated link. Each side resends its last frame when its
/// reply does not arrive, up to `max_attempts` transmissions of that frame.
inline HandshakeResult run_handshake(const TimestepSelector& selector, const LinkConfig& link, Rng& rng,
                                     int max_attempts = 8) {
	link.validate();
	if (max_attempts < 1) throw ConfigError("handshake needs at least one attempt");
	const auto id = std::uint32_t(rng.next_u64());
	HandshakeResult res{SyncSession(id, SyncRole::sender), SyncSession(id, SyncRole::receiver), 0, 0};
	auto& tx = res.sender;
	auto& rx = res.receiver;
	int sender_attempts = 1, receiver_attempts = 0;

	// in-flight frames: (frame, true if addressed to the receiver)
	std::deque<std::pair<Bytes, bool>> wire;
	auto send = [&](Bytes f, bool to_receiver) {
		++res.frames_sent;
		if (auto got = carry(f, link, rng)) wire.emplace_back(std::move(*got), to_receiver);
	};
	send(tx.start(), true);

	while (!(tx.acked() && rx.acked())) {
		if (!wire.empty()) {
			auto [frame, to_receiver] = std::move(wire.front());
			wire.pop_front();
			++res.frames_delivered;
			auto& dst = to_receiver ? rx : tx;
			if (auto reply = dst.on_frame(frame, selector)) {
				receiver_attempts += to_receiver;
				send(std::move(*reply), !to_receiver);
			}
			continue;
		}
		// Nothing in flight: whoever is still waiting times out.
		if (auto again = tx.retransmission()) {
			if (++sender_attempts > max_attempts) throw HandshakeError("sender timed out waiting for an assignment");
			send(std::move(*again), true);
		} else if (auto again = rx.retransmission()) {
			if (++receiver_attempts > max_attempts) throw HandshakeError("receiver timed out waiting for an ack");
			send(std::move(*again), false);
		} else {
			throw HandshakeError("handshake stalled");
		}
	}
	return res;
}

/// Thread-safe FIFO of frames with a blocking, time-limited pop.
class FrameQueue {
  public:
	void push(Bytes frame) {
		{
			std::lock_guard lock(m_mutex);
			m_frames.push_back(std::move(frame));
		}
		m_ready.notify_one();
	}

	std::optional<Bytes> pop(std::chrono::milliseconds timeout) {
		std::unique_lock lock(m_mutex);
		if (!m_ready.wait_for(lock, timeout, [this] { return !m_frames.empty(); })) return std::nullopt;
		Bytes f = std::move(m_frames.front());
		m_frames.pop_front();
		return f;
	}

  private:
	std::mutex m_mutex;
	std::condition_variable m_ready;
	std::deque<Bytes> m_frames;
};

/// The two directions of an in-process transport.
struct DuplexTransport {
	FrameQueue to_receiver;
	FrameQueue to_sender;
};

/// Same exchange with each endpoint on its own thread and only the transport shared. Link
/// impairments are applied by the sending side with its own Rng stream.
inline HandshakeResult run_handshake_threaded(const TimestepSelector& selector, const LinkConfig& link, Rng& rng,
                                              int max_attempts = 8,
                                              std::chrono::milliseconds timeout = std::chrono::milliseconds(50)) {
	link.validate();
	const auto id = std::uint32_t(rng.next_u64());
	SyncSession tx(id, SyncRole::sender), rx(id, SyncRole::receiver);
	DuplexTransport wire;
	Rng tx_rng = rng.split(1), rx_rng = rng.split(2);
	std::atomic<std::size_t> sent{0}, delivered{0};
	std::atomic<bool> sender_done{false}, receiver_done{false};
	std::exception_ptr tx_error, rx_error;

	auto send = [&](FrameQueue& q, const Bytes& f, Rng& r) {
		++sent;
		if (auto got = carry(f, link, r)) q.push(std::move(*got));
	};

	std::thread receiver([&] {
		try {
			int attempts = 0;
			while (!rx.acked()) {
				if (auto f = wire.to_receiver.pop(timeout)) {
					++delivered;
					if (auto reply = rx.on_frame(*f, selector)) {
						++attempts;
						send(wire.to_sender, *reply, rx_rng);
					}
				} else if (auto again = rx.retransmission()) {
					if (++attempts > max_attempts) throw HandshakeError("receiver timed out waiting for an ack");
					send(wire.to_sender, *again, rx_rng);
				} else if (sender_done) {
					throw HandshakeError("sender gave up");
				}
			}
		} catch (...) {
			rx_error = std::current_exception();
		}
		receiver_done = true;
	});

	try {
		int attempts = 1;
		send(wire.to_receiver, tx.start(), tx_rng);
		// After acking, keep answering repeated assignments until the receiver finishes.
		while (!receiver_done) {
			if (auto f = wire.to_sender.pop(timeout)) {
				++delivered;
				if (auto reply = tx.on_frame(*f)) send(wire.to_receiver, *reply, tx_rng);
			} else if (auto again = tx.retransmission()) {
				if (++attempts > max_attempts) throw HandshakeError("sender timed out waiting for an assignment");
				send(wire.to_receiver, *again, tx_rng);
			}
		}
	} catch (...) {
		tx_error = std::current_exception();
	}
	sender_done = true;
	receiver.join();
	if (tx_error) std::rethrow_exception(tx_error);
	if (rx_error) std::rethrow_exception(rx_error);
	if (!tx.acked()) throw HandshakeError("sender never received an assignment");
	return {tx, rx, sent.load(), delivered.load()};
}

/// Blocks semantic traffic unless the last handshake completed on both ends and fewer than
/// `interval` batches have gone out since.
class SyncGuard {
  public:
	explicit SyncGuard(int interval = 32) : m_interval(interval) {
		if (interval < 1) throw ConfigError("sync interval must be positive");
	}

	void on_handshake(const HandshakeResult& r) {
		if (!r.sender.acked() || !r.receiver.acked()) throw HandshakeError("handshake incomplete");
		if (r.sender.plan()->t_d() != r.receiver.plan()->t_d()) throw HandshakeError("endpoints disagree on t_D");
		m_plan = r.receiver.plan();
		m_sent = 0;
	}

	bool may_transmit() const noexcept { return m_plan.has_value() && m_sent < m_interval; }
	bool needs_resync() const noexcept { return !may_transmit(); }
	int batches_since_sync() const noexcept { return m_sent; }
	int interval() const noexcept { return m_interval; }
	const std::optional<TimestepPlan>& plan() const noexcept { return m_plan; }

	/// Call once per semantic batch; throws if the batch would be sent unsynchronized.
	const TimestepPlan& record_batch() {
		if (!may_transmit()) throw HandshakeError("semantic batch attempted before synchronization");
		++m_sent;
		return *m_plan;
	}

  private:
	int m_interval;
	int m_sent = 0;
	std::optional<TimestepPlan> m_plan;
};

} // namespace diffusec
