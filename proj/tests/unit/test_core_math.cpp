#include "diffusec/io.hpp"
#include "diffusec/rng.hpp"
#include "diffusec/ssim.hpp"
#include "diffusec/tensor.hpp"

#include "support/oracle.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace diffusec;

namespace {

Tensor random_image(Rng& rng, std::size_t n = 256) {
	Tensor t({n});
	for (auto& v : t.values()) v = float(rng.uniform());
	return t;
}

struct Moments {
	double mean, var;
};

Moments moments(const Tensor& t) {
	double m = 0, v = 0;
	for (float x : t.values()) m += x;
	m /= double(t.size());
	for (float x : t.values()) v += (x - m) * (x - m);
	return {m, v / double(t.size() - 1)};
}

} // namespace

TEST(Tensor, ShapeMustMatchData) {
	EXPECT_THROW(Tensor({2, 3}, std::vector<float>(5)), ShapeError);
	Tensor t({2, 3}, 1.5f);
	EXPECT_EQ(t.size(), 6u);
	EXPECT_EQ(t.rows(), 2u);
	EXPECT_EQ(t.cols(), 3u);
	EXPECT_THROW(Tensor(Shape{}), ShapeError);
	EXPECT_THROW(Tensor(Shape{3, 0}), ShapeError);
}

TEST(Tensor, RowHelpers) {
	const auto m = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
	EXPECT_EQ(slice_rows(m, 1, 2), Tensor::matrix(2, 2, {3, 4, 5, 6}));
	const std::vector<std::size_t> idx{2, 0};
	EXPECT_EQ(gather_rows(m, idx), Tensor::matrix(2, 2, {5, 6, 1, 2}));
	EXPECT_EQ(concat_cols(m, Tensor::matrix(3, 1, {7, 8, 9})),
	          Tensor::matrix(3, 3, {1, 2, 7, 3, 4, 8, 5, 6, 9}));
	EXPECT_THROW(slice_rows(m, 2, 2), ShapeError);
}

TEST(Gaussian, SameSeedSameSample) {
	Rng a(7), b(7);
	EXPECT_EQ(gaussian_sample({4}, a), gaussian_sample({4}, b));
}

TEST(Gaussian, EmptyShapeRejected) {
	Rng rng(1);
	EXPECT_THROW(gaussian_sample({}, rng), ShapeError);
}

TEST(Gaussian, MomentsAtFixedSeeds) {
	for (std::uint64_t seed : {1u, 2u, 3u, 7u, 2024u}) {
		Rng rng(seed);
		const auto m = moments(gaussian_sample({100000}, rng));
		EXPECT_LT(std::abs(m.mean), 0.02) << "seed " << seed;
		EXPECT_GT(m.var, 0.97) << "seed " << seed;
		EXPECT_LT(m.var, 1.03) << "seed " << seed;
	}
}

TEST(Rng, SplitStreamsAreIndependentAndStable) {
	Rng base(42);
	Rng a = base.split(1), a2 = base.split(1), b = base.split(2);
	int same = 0;
	for (int i = 0; i < 64; ++i) {
		const auto x = a.next_u64();
		EXPECT_EQ(x, a2.next_u64());
		same += x == b.next_u64();
	}
	EXPECT_EQ(same, 0);
	// splitting does not advance the parent
	Rng fresh(42);
	EXPECT_EQ(base.next_u64(), fresh.next_u64());
}

TEST(Ssim, IdentityIsOne) {
	Rng rng(3);
	for (int k = 0; k < 20; ++k) {
		const auto a = random_image(rng);
		EXPECT_DOUBLE_EQ(ssim(a, a), 1.0);
	}
	const Tensor flat({16}, 0.25f);
	EXPECT_DOUBLE_EQ(ssim(flat, flat), 1.0);
}

TEST(Ssim, OnePixelBumpMatchesHandEvaluation) {
	Tensor a({16, 16}, 0.5f), b({16, 16}, 0.5f);
	b[37] = 0.6f;
	const double n = 256, d = double(0.6f) - 0.5;
	const double mu_a = 0.5, mu_b = 0.5 + d / n;
	const double var_b = d * d / n - (d / n) * (d / n);
	const double c1 = 1e-4, c2 = 9e-4;
	const double expect = (2 * mu_a * mu_b + c1) * c2 / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_b + c2));
	EXPECT_NEAR(ssim(a, b, SsimParams::global()), expect, 1e-9);
	EXPECT_LT(expect, 1.0);
}

TEST(Ssim, SymmetricAndInUnitRange) {
	Rng rng(11);
	for (int k = 0; k < 200; ++k) {
		const auto a = random_image(rng, 64), b = random_image(rng, 64);
		const double ab = ssim(a, b), ba = ssim(b, a);
		EXPECT_NEAR(ab, ba, 1e-12);
		EXPECT_GE(ab, 0.0);
		EXPECT_LE(ab, 1.0);
	}
	// anti-correlated images would go negative without the clamp
	Tensor a({64}), b({64});
	for (std::size_t i = 0; i < 64; ++i) {
		a[i] = float(i) / 63.0f;
		b[i] = 1.0f - a[i];
	}
	EXPECT_LT(ssim_raw(a, b), 0.0);
	EXPECT_EQ(ssim(a, b), 0.0);
}

TEST(Ssim, AgreesWithStraightLineOracle) {
	Rng rng(5);
	for (int k = 0; k < 50; ++k) {
		const auto a = random_image(rng), b = random_image(rng);
		const auto va = oracle::to_vec(a), vb = oracle::to_vec(b);
		EXPECT_NEAR(ssim_raw(a, b), oracle::ssim_global(va.data(), vb.data(), va.size()), 1e-9);
	}
}

TEST(Ssim, ShapeMismatchThrows) {
	EXPECT_THROW(ssim(Tensor({4}), Tensor({5})), ShapeError);
}

TEST(Ssim, SlidingWindow) {
	Rng rng(9);
	const auto a = random_image(rng).reshaped({16, 16});
	EXPECT_NEAR(ssim(a, a, SsimParams::sliding(7)), 1.0, 1e-12);
	EXPECT_THROW(ssim(a, a, SsimParams::sliding(4)), ConfigError);
	EXPECT_THROW(ssim(a, a, SsimParams::sliding(17)), ShapeError);
	// flat input needs its geometry
	const auto flat = a.reshaped({256});
	EXPECT_THROW(ssim(flat, flat, SsimParams::sliding(3)), ShapeError);
	const auto b = random_image(rng).reshaped({16, 16});
	EXPECT_NEAR(ssim(a, b, SsimParams::sliding(3)), ssim(flat, b.reshaped({256}), SsimParams::sliding(3, 16, 16)), 1e-12);
}

TEST(Ssim, GradientMatchesCentralDifferences) {
	Rng rng(21);
	for (auto p : {SsimParams::global(), SsimParams::sliding(3, 8, 8)}) {
		const auto a = random_image(rng, 64), b = random_image(rng, 64);
		const auto g = ssim_gradient(a, b, p);
		auto va = oracle::to_vec(a), vb = oracle::to_vec(b);
		for (std::size_t i = 0; i < 64; i += 5) {
			auto f = [&](double delta) {
				Tensor bb = b;
				bb[i] = float(vb[i] + delta);
				return ssim_raw(a, bb, p);
			};
			const double h = 1e-2;
			const double numeric = (f(h) - f(-h)) / (2 * h);
			EXPECT_NEAR(g[i], numeric, 1e-3 * std::max(1.0, std::abs(numeric))) << "pixel " << i;
		}
	}
}

TEST(Clamp01, Examples) {
	EXPECT_EQ(clamp01(Tensor::vector({-0.2f, 0.5f, 1.3f})), Tensor::vector({0.0f, 0.5f, 1.0f}));
	const auto in = Tensor::vector({0.0f, 0.1f, 0.9f, 1.0f});
	EXPECT_EQ(clamp01(in), in);
}

TEST(Clamp01, Idempotent) {
	Rng rng(4);
	for (int k = 0; k < 20; ++k) {
		const auto x = gaussian_sample({50}, rng) * 2.0f;
		const auto once = clamp01(x);
		EXPECT_EQ(clamp01(once), once);
		for (float v : once.values()) {
			EXPECT_GE(v, 0.0f);
			EXPECT_LE(v, 1.0f);
		}
	}
}

TEST(Dtns, HeaderLayoutIsBitExact) {
	const auto bytes = encode_dtns(Tensor::matrix(2, 1, {1.0f, -2.0f}));
	const std::vector<std::uint8_t> header{'D', 'T', 'N', 'S', 1, 2, 2, 0, 0, 0, 1, 0, 0, 0};
	ASSERT_EQ(bytes.size(), header.size() + 8);
	EXPECT_TRUE(std::equal(header.begin(), header.end(), bytes.begin()));
	// 1.0f and -2.0f, little-endian
	EXPECT_EQ(bytes[14 + 3], 0x3f);
	EXPECT_EQ(bytes[14 + 2], 0x80);
	EXPECT_EQ(bytes[18 + 3], 0xc0);
}

TEST(Dtns, RoundTripAndRejection) {
	Rng rng(8);
	for (int k = 0; k < 20; ++k) {
		const std::size_t r = 1 + rng.index(4), c = 1 + rng.index(9);
		const auto t = gaussian_sample({r, c, 2}, rng);
		EXPECT_EQ(decode_dtns(encode_dtns(t)), t);
	}
	auto bytes = encode_dtns(Tensor::vector({1, 2, 3}));
	auto truncated = bytes;
	truncated.pop_back();
	EXPECT_THROW(decode_dtns(truncated), IncompleteError);
	bytes[0] = 'X';
	EXPECT_THROW(decode_dtns(bytes), IoError);
}
