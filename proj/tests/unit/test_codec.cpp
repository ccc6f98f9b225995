#include "diffusec/diffusec.hpp"

#include "support/gradient_suite.hpp"
#include "support/toy_pipeline.hpp"

#include <gtest/gtest.h>

using namespace diffusec;

namespace {

CodecDims small_dims() {
	CodecDims d;
	d.image_dim = 36;
	d.semantic_hidden = 12;
	d.embed_dim = 10;
	d.channel_hidden = 8;
	d.latent_dim = 6;
	return d;
}

DenseNet identity(std::size_t n, float scale = 1.0f) {
	Tensor w({n, n});
	for (std::size_t i = 0; i < n; ++i) w[i * n + i] = scale;
	return DenseNet({DenseLayer{w, Tensor({n}), Activation::linear}});
}

// Identity codec apart from dropping the last pixel (the latent must be narrower than the
// image), with the channel decoder scaled. Probes keep that pixel at zero.
Codec pass_through(std::size_t n, float decoder_scale) {
	const std::size_t latent = n - 1;
	Tensor down({latent, n}), up({n, latent});
	for (std::size_t i = 0; i < latent; ++i) {
		down[i * n + i] = 1.0f;
		up[i * latent + i] = decoder_scale;
	}
	Codec c{identity(n), DenseNet({DenseLayer{down, Tensor({latent}), Activation::linear}}),
	        DenseNet({DenseLayer{up, Tensor({n}), Activation::linear}}), identity(n)};
	c.validate();
	return c;
}

Dataset small_data(std::size_t count, Rng& rng) {
	ToyDatasetConfig dc;
	dc.side = 6;
	dc.count = count;
	return make_toy_dataset(dc, rng);
}

} // namespace

TEST(Codec, ShapesAndDeterminism) {
	Rng a(3), b(3);
	const auto c = Codec::make({}, a);
	EXPECT_EQ(encode_codec(c), encode_codec(Codec::make({}, b)));
	Rng rng(4);
	const auto x = gaussian_sample({5, 256}, rng);
	EXPECT_EQ(c.encode(x).shape(), (Shape{5, 40}));
	EXPECT_EQ(c.decode(c.encode(x)).shape(), (Shape{5, 256}));
	EXPECT_EQ(c.encode(Tensor({256})).shape(), (Shape{1, 40}));
	EXPECT_THROW(c.encode(Tensor({2, 100})), ShapeError);
}

TEST(Codec, LatentMustBeNarrowerThanImage) {
	Rng rng(1);
	CodecDims d = small_dims();
	d.latent_dim = d.image_dim;
	EXPECT_THROW(Codec::make(d, rng), ShapeError);
}

TEST(Codec, ZeroLatentDecodesToOneFixedImage) {
	Rng rng(5);
	const auto c = Codec::make({}, rng);
	const auto out = c.decode(Tensor({3, 40}));
	for (std::size_t r = 1; r < 3; ++r)
		for (std::size_t i = 0; i < 256; ++i) ASSERT_EQ(out.row(r)[i], out.row(0)[i]);
	for (float v : out.values()) {
		EXPECT_GE(v, 0.0f);
		EXPECT_LE(v, 1.0f);
	}
}

TEST(SemanticLoss, ScaledDissimilarity) {
	Rng rng(6);
	const auto y = clamp01(gaussian_sample({4, 64}, rng) * 0.2f + Tensor({4, 64}, 0.5f));
	const auto yh = clamp01(y + gaussian_sample({4, 64}, rng) * 0.05f);
	EXPECT_NEAR(semantic_loss(y, yh, 0.5), 0.5 * (1 - ssim_avg(y, yh)), 1e-12);
	EXPECT_EQ(semantic_loss(y, y, 0.5), 0.0);
	// SSIM 0.9 at iota 0.5 gives 0.05
	EXPECT_NEAR(0.5 * (1 - 0.9), 0.05, 1e-15);
}

TEST(Gain, LeastSquaresExamples) {
	const auto x = Tensor::vector({0.1f, 0.5f, 0.9f});
	EXPECT_DOUBLE_EQ(least_squares_gain(x, x), 1.0);
	EXPECT_NEAR(least_squares_gain(x, x * 0.5f), 0.5, 1e-7);
	EXPECT_THROW(least_squares_gain(Tensor({3}), x), MeasurementError);
	EXPECT_THROW(least_squares_gain(x, Tensor({4})), ShapeError);
}

TEST(Gain, StubCodecs) {
	Rng rng(7);
	Tensor probe({8, 16});
	for (std::size_t r = 0; r < 8; ++r)
		for (std::size_t i = 0; i + 1 < 16; ++i) probe.row(r)[i] = float(rng.uniform());
	EXPECT_NEAR(measure_codec_gain(pass_through(16, 1.0f), probe, ChannelConfig::noiseless(), rng), 1.0, 1e-6);
	EXPECT_NEAR(measure_codec_gain(pass_through(16, 0.5f), probe, ChannelConfig::noiseless(), rng), 0.5, 1e-6);
	EXPECT_THROW(measure_codec_gain(pass_through(16, 1.0f), Tensor({2, 16}), ChannelConfig::noiseless(), rng),
	             MeasurementError);
}

TEST(TrainCodec, ZeroEpochsLeavesWeights) {
	Rng rng(8);
	const auto data = small_data(64, rng);
	const auto c = Codec::make(small_dims(), rng);
	CodecTrainConfig cfg;
	cfg.epochs = 0;
	EXPECT_EQ(encode_codec(train_semantic(c, data, cfg, rng).codec), encode_codec(c));
	EXPECT_EQ(encode_codec(train_jsc(c, data, cfg, rng).codec), encode_codec(c));
	EXPECT_EQ(encode_codec(train_joint(c, data, {}, cfg, rng).codec), encode_codec(c));
}

TEST(TrainCodec, RejectsBadConfig) {
	Rng rng(9);
	const auto data = small_data(16, rng);
	const auto c = Codec::make(small_dims(), rng);
	CodecTrainConfig cfg;
	cfg.iota = 0;
	EXPECT_THROW(train_semantic(c, data, cfg, rng), ConfigError);
	cfg = {};
	cfg.batch = 0;
	EXPECT_THROW(train_semantic(c, data, cfg, rng), ConfigError);
	EXPECT_THROW(train_semantic(c, Dataset{}, {}, rng), DataError);
	EXPECT_THROW(train_jsc(c, Tensor({4, 3}), {}, rng), ShapeError);
}

TEST(TrainCodec, SemanticLossAtLeastHalves) {
	Rng rng(10);
	ToyDatasetConfig dc;
	dc.count = 128;
	const auto data = make_toy_dataset(dc, rng);
	CodecTrainConfig cfg;
	cfg.epochs = 200;
	const auto r = train_semantic(Codec::make({}, rng), data, cfg, rng);
	ASSERT_EQ(r.epoch_losses.size(), 200u);
	EXPECT_LE(r.epoch_losses.back(), 0.5 * r.epoch_losses.front())
	    << r.epoch_losses.front() << " -> " << r.epoch_losses.back();
}

TEST(TrainCodec, NoiselessChannelLearnsIdentity) {
	// latent as wide as the embedding, so the channel pair can be exact
	Rng rng(11);
	CodecDims d;
	d.embed_dim = 16;
	d.channel_hidden = 16;
	d.latent_dim = 16;
	auto c = Codec::make(d, rng);
	const auto y = gaussian_sample({256, 16}, rng) * 0.5f;
	CodecTrainConfig cfg;
	cfg.epochs = 1000;
	cfg.batch = 64;
	cfg.snr_min_db = cfg.snr_max_db = 200;  // noise 1e-10 of the signal
	c = train_jsc(std::move(c), y, cfg, rng).codec;
	const auto y_hat = c.channel_decoder.forward(c.channel_encoder.forward(y));
	EXPECT_LT(jsc_loss(y, y_hat), 1e-3);
}

TEST(CodecGradients, MatchOracle) {
	Rng rng(12);
	const auto c = Codec::make(small_dims(), rng);
	const auto data = small_data(4, rng);
	for (const auto& chk : oracle::check_codec(c, data.images, 6.0, 0.5, 100, rng)) {
		EXPECT_GE(chk.result.checked, 100u) << chk.name;
		EXPECT_EQ(chk.result.failed, 0u) << chk.name << " worst " << chk.result.worst;
	}
}

TEST(CodecCheckpoint, RoundTrip) {
	Rng rng(13);
	const auto c = Codec::make(small_dims(), rng);
	const auto bytes = encode_codec(c);
	const auto back = decode_codec(bytes);
	EXPECT_EQ(encode_codec(back), bytes);
	const auto x = gaussian_sample({2, 36}, rng);
	EXPECT_EQ(back.decode(back.encode(x)), c.decode(c.encode(x)));
	auto extra = bytes;
	extra.push_back(0);
	EXPECT_THROW(decode_codec(extra), DataError);
	EXPECT_THROW(decode_codec(std::span(bytes).first(bytes.size() - 1)), IncompleteError);
}

// Trained toy codec.

namespace {

double mean_ssim_through(const Codec& c, const Tensor& x, const ChannelConfig& ch, std::uint64_t seed) {
	Rng rng(seed);
	return ssim_avg(x, c.decode(transmit(c.encode(x), ch, rng)));
}

} // namespace

TEST(TrainedCodec, HeldOutReconstruction) {
	auto& p = toy::pipeline();
	const auto& x = p.splits.heldout.images;
	const double s = ssim_avg(x, p.codec().decode(p.codec().encode(x)));
	EXPECT_GE(s, 0.85);
	Rng rng(1);
	const double gain = measure_codec_gain(p.codec(), x, ChannelConfig::awgn(30), rng);
	EXPECT_GE(gain, 0.9);
	EXPECT_LE(gain, 1.1);
}

TEST(TrainedCodec, JointFineTuneNoWorseThanPhasedTraining) {
	auto& p = toy::pipeline();
	const auto& x = p.splits.heldout.images;
	Rng a(31), b(31);
	const double joint = pipeline_loss(p.codec(), x, ChannelConfig::awgn(9), 0.5, a);
	const double phased = pipeline_loss(p.codec_before_joint(), x, ChannelConfig::awgn(9), 0.5, b);
	EXPECT_LE(joint, phased);
}

TEST(TrainedCodec, SimilarityFallsWithSnr) {
	auto& p = toy::pipeline();
	const auto& x = p.splits.heldout.images;
	double prev = 1.0;
	for (double snr : {15.0, 9.0, 3.0, -3.0}) {
		const double s = mean_ssim_through(p.codec(), x, ChannelConfig::awgn(snr), 41);
		EXPECT_LE(s, prev) << snr << " dB";
		prev = s;
	}
}

TEST(TrainedCodec, BeatsUntrained) {
	auto& p = toy::pipeline();
	const auto& x = p.splits.heldout.images;
	Rng rng(p.cfg.seed + 1);
	const auto fresh = Codec::make(p.cfg.codec_dimensions(), rng);
	EXPECT_LT(mean_ssim_through(fresh, x, ChannelConfig::awgn(9), 5), mean_ssim_through(p.codec(), x, ChannelConfig::awgn(9), 5));
}
