#include "diffusec/sync.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace diffusec;

namespace {

// 0 dB and up: light diffusion; below: heavier.
TimestepSelector two_level() { return table_selector({{0.0, {10, 0}}, {-100.0, {30, 5}}}); }

Pilot noisy_pilot(double snr_db, Rng& rng) {
	const auto& k = known_pilot();
	const auto out = transmit(Tensor({pilot_length}, std::vector<float>(k.begin(), k.end())), ChannelConfig::awgn(snr_db), rng);
	Pilot p{};
	std::copy(out.values().begin(), out.values().end(), p.begin());
	return p;
}

} // namespace

TEST(Frames, AckBytes) {
	const auto bytes = encode_message(Ack{7});
	EXPECT_EQ(bytes, (Bytes{0x44, 0x53, 0x01, 0x03, 0x07, 0x00, 0x00, 0x00, 0x00, 0x00}));
}

TEST(Frames, SizesAndRoundTrips) {
	Rng rng(1);
	const Probe probe{0xdeadbeef, noisy_pilot(5, rng)};
	const auto pb = encode_message(probe);
	EXPECT_EQ(pb.size(), 266u);
	EXPECT_EQ(std::get<Probe>(decode_message(pb)), probe);

	const TimestepAssign assign{42, 20, 15, 9.5f};
	const auto ab = encode_message(assign);
	EXPECT_EQ(ab.size(), 18u);
	EXPECT_EQ(ab[3], 2);
	EXPECT_EQ(std::get<TimestepAssign>(decode_message(ab)), assign);
	EXPECT_EQ(std::get<Ack>(decode_message(encode_message(Ack{9}))).session, 9u);
}

TEST(Frames, RandomAssignRoundTrips) {
	Rng rng(2);
	for (int i = 0; i < 5000; ++i) {
		const int t_d = rng.uniform_int(1, 49);
		const TimestepAssign a{std::uint32_t(rng.next_u64()), std::uint16_t(t_d), std::uint16_t(rng.uniform_int(0, 49 - t_d)),
		                       float(40 * rng.uniform() - 10)};
		ASSERT_EQ(std::get<TimestepAssign>(decode_message(encode_message(a))), a);
	}
}

TEST(Frames, Rejections) {
	auto ack = encode_message(Ack{1});
	auto bad = ack;
	bad[0] = 'X';
	EXPECT_THROW(decode_message(bad), ProtocolError);
	bad = ack;
	bad[2] = 2;
	EXPECT_THROW(decode_message(bad), ProtocolError);
	bad = ack;
	bad[3] = 9;
	EXPECT_THROW(decode_message(bad), UnsupportedError);
	EXPECT_THROW(decode_message(std::span(ack).first(6)), IncompleteError);
	bad = ack;
	bad[8] = 4;  // claims a payload
	EXPECT_THROW(decode_message(bad), FrameError);
	bad = ack;
	bad.push_back(0);
	EXPECT_THROW(decode_message(bad), FrameError);

	EXPECT_THROW(encode_message(TimestepAssign{1, 30, 30, 0}), ConstraintError);
	auto assign = encode_message(TimestepAssign{1, 20, 10, 0});
	assign[10] = 30;
	assign[12] = 30;  // (30, 30) written past the encoder's check
	EXPECT_THROW(decode_message(assign), ConstraintError);
	auto truncated = encode_message(TimestepAssign{1, 20, 10, 0});
	truncated.pop_back();
	EXPECT_THROW(decode_message(truncated), IncompleteError);
}

TEST(Snr, PerfectPilotHitsCeiling) {
	const auto& k = known_pilot();
	EXPECT_EQ(measure_snr(k, k), snr_ceiling_db);
	for (float v : k) EXPECT_EQ(std::abs(v), 1.0f);
	const std::vector<float> short_pilot(3);
	EXPECT_THROW(measure_snr(short_pilot, k), ProtocolError);
}

TEST(Snr, EstimateTracksChannel) {
	Rng rng(3);
	for (double snr : {0.0, 10.0}) {
		double mean = 0;
		const int n = 2000;
		for (int i = 0; i < n; ++i) mean += measure_snr(noisy_pilot(snr, rng), known_pilot()) / n;
		EXPECT_NEAR(mean, snr, 1.0) << snr << " dB";
	}
}

TEST(Handshake, NoiselessAssignsTheSelectedPlan) {
	Rng rng(4);
	const auto r = run_handshake(fixed_selector(20, 15), {}, rng);
	ASSERT_TRUE(r.sender.acked());
	ASSERT_TRUE(r.receiver.acked());
	EXPECT_EQ(*r.sender.plan(), TimestepPlan::make(20, 15));
	EXPECT_EQ(*r.receiver.plan(), TimestepPlan::make(20, 15));
	EXPECT_EQ(r.frames_sent, 3u);
	EXPECT_EQ(r.frames_delivered, 3u);
	EXPECT_EQ(r.sender.measured_snr_db(), snr_ceiling_db);
}

TEST(Handshake, InvalidSelectionAssignsNothing) {
	SyncSession tx(5, SyncRole::sender), rx(5, SyncRole::receiver);
	const auto probe = tx.start();
	EXPECT_THROW(rx.on_frame(probe, fixed_selector(30, 30)), ConstraintError);
	EXPECT_FALSE(rx.plan().has_value());
	EXPECT_FALSE(tx.plan().has_value());
	Rng rng(5);
	EXPECT_THROW(run_handshake(fixed_selector(0, 0), {}, rng), ConstraintError);
}

TEST(Handshake, PlanFollowsMeasuredSnr) {
	Rng rng(6);
	const auto sel = two_level();
	int low = 0;
	for (int i = 0; i < 300; ++i) {
		const auto r = run_handshake(sel, {ChannelConfig::awgn(0), 0.0}, rng);
		const auto want = sel(r.receiver.measured_snr_db());
		ASSERT_EQ(r.receiver.plan()->t_d(), want.t_d);
		ASSERT_EQ(r.receiver.plan()->t_plus(), want.t_plus);
		ASSERT_EQ(*r.sender.plan(), *r.receiver.plan());
		ASSERT_FLOAT_EQ(float(r.sender.measured_snr_db()), float(r.receiver.measured_snr_db()));
		ASSERT_EQ(r.frames_sent, 3u);
		low += want.t_d == 30;
	}
	// measurements straddle 0 dB, so both branches are exercised
	EXPECT_GT(low, 30);
	EXPECT_LT(low, 270);
}

TEST(Handshake, LossyLinkStillAgrees) {
	Rng rng(7);
	int completed = 0;
	for (int i = 0; i < 1000; ++i) {
		try {
			const auto r = run_handshake(two_level(), {ChannelConfig::awgn(6), 0.2}, rng);
			++completed;
			ASSERT_EQ(*r.sender.plan(), *r.receiver.plan());
			ASSERT_GE(r.frames_sent, 3u);
		} catch (const HandshakeError&) {
		}
	}
	EXPECT_GE(completed, 990);
}

TEST(Handshake, ThreadedEndpointsAgree) {
	Rng rng(8);
	for (int i = 0; i < 20; ++i) {
		const auto r = run_handshake_threaded(two_level(), {ChannelConfig::awgn(3), 0.1}, rng, 12,
		                                      std::chrono::milliseconds(5));
		ASSERT_TRUE(r.sender.acked());
		ASSERT_TRUE(r.receiver.acked());
		ASSERT_EQ(*r.sender.plan(), *r.receiver.plan());
	}
}

TEST(Handshake, RejectsBadLink) {
	Rng rng(9);
	EXPECT_THROW(run_handshake(two_level(), {ChannelConfig::noiseless(), 1.0}, rng), ConfigError);
	EXPECT_THROW(run_handshake(two_level(), {}, rng, 0), ConfigError);
}

TEST(Session, PhasesOnlyMoveForward) {
	SyncSession tx(11, SyncRole::sender), rx(11, SyncRole::receiver);
	EXPECT_EQ(tx.phase(), SyncPhase::idle);
	EXPECT_THROW(rx.start(), ProtocolError);
	const auto probe = tx.start();
	EXPECT_EQ(tx.phase(), SyncPhase::probed);
	EXPECT_THROW(tx.start(), ProtocolError);
	EXPECT_EQ(tx.retransmission(), probe);

	const auto assign = rx.on_frame(probe, fixed_selector(12, 3));
	ASSERT_TRUE(assign);
	EXPECT_EQ(rx.phase(), SyncPhase::assigned);
	// a repeated probe (our assign was lost) gets the same assign back
	EXPECT_EQ(rx.on_frame(probe, fixed_selector(40, 0)), assign);
	EXPECT_EQ(rx.plan()->t_d(), 12);

	const auto ack = tx.on_frame(*assign);
	ASSERT_TRUE(ack);
	EXPECT_EQ(tx.phase(), SyncPhase::acked);
	EXPECT_FALSE(tx.retransmission());
	EXPECT_EQ(tx.on_frame(*assign), ack);  // duplicate assign: repeat the ack
	EXPECT_FALSE(rx.on_frame(*ack));
	EXPECT_EQ(rx.phase(), SyncPhase::acked);
	EXPECT_STREQ(to_string(rx.phase()), "acked");
}

TEST(Session, ForeignFramesIgnored) {
	SyncSession tx(1, SyncRole::sender), rx(2, SyncRole::receiver);
	EXPECT_FALSE(rx.on_frame(tx.start(), fixed_selector(5, 0)));
	EXPECT_EQ(rx.phase(), SyncPhase::idle);
}

TEST(Selector, TableLookup) {
	const auto sel = table_selector({{-3, {38, 0}}, {9, {18, 0}}, {3, {28, 2}}});
	EXPECT_EQ(sel(12).t_d, 18);
	EXPECT_EQ(sel(9).t_d, 18);
	EXPECT_EQ(sel(5).t_d, 28);
	EXPECT_EQ(sel(-3).t_d, 38);
	EXPECT_EQ(sel(-20).t_d, 38);  // below every threshold: the lowest entry
	EXPECT_THROW(table_selector({}), ConfigError);
}

TEST(Guard, BlocksUntilSyncedAndAfterInterval) {
	SyncGuard guard(4);
	EXPECT_FALSE(guard.may_transmit());
	EXPECT_THROW(guard.record_batch(), HandshakeError);
	Rng rng(12);
	guard.on_handshake(run_handshake(fixed_selector(20, 15), {}, rng));
	for (int i = 0; i < 4; ++i) EXPECT_EQ(guard.record_batch(), TimestepPlan::make(20, 15));
	EXPECT_TRUE(guard.needs_resync());
	EXPECT_THROW(guard.record_batch(), HandshakeError);
	guard.on_handshake(run_handshake(fixed_selector(7, 0), {}, rng));
	EXPECT_EQ(guard.batches_since_sync(), 0);
	EXPECT_EQ(guard.record_batch().t_d(), 7);
	EXPECT_EQ(SyncGuard{}.interval(), 32);
	EXPECT_THROW(SyncGuard(0), ConfigError);
}

TEST(Guard, RejectsIncompleteHandshake) {
	SyncGuard guard;
	HandshakeResult partial{SyncSession(1, SyncRole::sender), SyncSession(1, SyncRole::receiver), 0, 0};
	EXPECT_THROW(guard.on_handshake(partial), HandshakeError);
}
