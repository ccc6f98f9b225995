#include "diffusec/diffusec.hpp"

#include "support/gradient_suite.hpp"
#include "support/toy_pipeline.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace diffusec;

namespace {

struct Stats {
	double mean = 0, var = 0;
};

// Per-column sample moments of an [n x d] batch.
std::vector<Stats> column_stats(const Tensor& x) {
	const auto n = x.rows(), d = x.cols();
	std::vector<Stats> s(d);
	for (std::size_t r = 0; r < n; ++r)
		for (std::size_t c = 0; c < d; ++c) s[c].mean += x.row(r)[c] / double(n);
	for (std::size_t r = 0; r < n; ++r)
		for (std::size_t c = 0; c < d; ++c) s[c].var += std::pow(x.row(r)[c] - s[c].mean, 2) / double(n - 1);
	return s;
}

// |sample mean - mu| and |sample var - v| in Monte-Carlo standard errors for a Gaussian.
// Four of them: a dozen of these run per binary.
void expect_within_4_sigma(const Stats& s, double mu, double v, std::size_t n, const std::string& what) {
	EXPECT_LE(std::abs(s.mean - mu) / std::sqrt(v / double(n)), 4.0) << what << " mean " << s.mean;
	EXPECT_LE(std::abs(s.var - v) / (v * std::sqrt(2.0 / double(n - 1))), 4.0) << what << " var " << s.var;
}

Tensor repeat_rows(std::initializer_list<float> row, std::size_t n) {
	Tensor out({n, row.size()});
	for (std::size_t r = 0; r < n; ++r) std::copy(row.begin(), row.end(), out.row(r).begin());
	return out;
}

Denoiser zero_noise_net(std::size_t dim, const NoiseSchedule& s) {
	DenseNet net({DenseLayer{Tensor({dim, dim + 1}), Tensor({dim}), Activation::linear}});
	return Denoiser::learned(std::move(net), s, Parameterization::noise);
}

} // namespace

TEST(Schedule, TwoStepProducts) {
	const auto s = build_schedule(2, 0.1, 0.2);
	EXPECT_DOUBLE_EQ(s.beta(1), 0.1);
	EXPECT_DOUBLE_EQ(s.beta(2), 0.2);
	EXPECT_DOUBLE_EQ(s.alpha(1), 0.9);
	EXPECT_DOUBLE_EQ(s.alpha(2), 0.8);
	EXPECT_DOUBLE_EQ(s.alpha_bar(1), 0.9);
	EXPECT_NEAR(s.alpha_bar(2), 0.72, 1e-15);
	EXPECT_DOUBLE_EQ(s.sigma(2), std::sqrt(0.2));
}

TEST(Schedule, AlphaBarStrictlyDecreasing) {
	Rng rng(14);
	for (int k = 0; k < 50; ++k) {
		// kept small enough that the product cannot underflow
		const int T = 2 + int(rng.index(1000));
		const double b0 = 1e-5 + rng.uniform() * 0.01, b1 = b0 + rng.uniform() * (0.05 - b0);
		const auto s = build_schedule(T, b0, b1);
		for (int t = 2; t <= T; ++t) ASSERT_LT(s.alpha_bar(t), s.alpha_bar(t - 1)) << T << " " << t;
		EXPECT_GT(s.alpha_bar(T), 0.0);
	}
}

TEST(Schedule, HundredStepProductAgainstLongDouble) {
	const auto s = build_schedule(100, 1e-4, 0.02);
	long double prod = 1;
	for (int i = 0; i < 100; ++i) prod *= 1.0L - (1e-4L + (0.02L - 1e-4L) * i / 99.0L);
	EXPECT_NEAR(s.alpha_bar(100), double(prod), 1e-5);
}

TEST(Schedule, RejectsBadBounds) {
	EXPECT_THROW(build_schedule(1, 1e-4, 0.02), ConfigError);
	EXPECT_THROW(build_schedule(10, 0.0, 0.02), ConfigError);
	EXPECT_THROW(build_schedule(10, 0.03, 0.02), ConfigError);
	EXPECT_THROW(build_schedule(10, 1e-4, 1.0), ConfigError);
	const auto s = NoiseSchedule::standard();
	EXPECT_THROW(s.beta(0), TimestepError);
	EXPECT_THROW(s.beta(1001), TimestepError);
}

TEST(Diffuse, ZeroNoiseIsScaledSignal) {
	const auto s = NoiseSchedule::standard();
	const auto x0 = Tensor::vector({0.0f, 0.3f, 1.0f, -2.0f});
	oracle::ZeroSource zero;
	for (int t : {1, 20, 500, 1000}) {
		const auto out = diffuse(x0, t, s, zero);
		for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(out[i], float(std::sqrt(s.alpha_bar(t))) * x0[i]);
	}
}

TEST(Diffuse, TimestepOutOfRange) {
	Rng rng(1);
	const auto s = NoiseSchedule::standard();
	EXPECT_THROW(diffuse(Tensor({3}), 0, s, rng), TimestepError);
	EXPECT_THROW(diffuse(Tensor({3}), 1001, s, rng), TimestepError);
}

TEST(Diffuse, MarginalAtFinalStep) {
	const auto s = NoiseSchedule::standard();
	const std::size_t n = 10000;
	Rng rng(23);
	const auto x0 = repeat_rows({0.0f, 0.5f, 1.0f}, n);
	const auto st = column_stats(diffuse(x0, 1000, s, rng));
	const double ab = s.alpha_bar(1000);
	for (std::size_t c = 0; c < 3; ++c)
		expect_within_4_sigma(st[c], std::sqrt(ab) * x0[c], 1 - ab, n, "pixel " + std::to_string(c));
}

TEST(Diffuse, ZeroSignalGivesCentredNoise) {
	const auto s = NoiseSchedule::standard();
	Rng rng(24);
	const std::size_t n = 10000;
	for (int t : {3, 40}) {
		const auto st = column_stats(diffuse(Tensor({n, 2}), t, s, rng));
		for (const auto& c : st) expect_within_4_sigma(c, 0.0, 1 - s.alpha_bar(t), n, "t=" + std::to_string(t));
	}
}

TEST(Diffuse, IteratedKernelsMatchClosedForm) {
	const auto s = NoiseSchedule::standard();
	const std::size_t n = 10000;
	Rng rng(26);
	const auto x0 = repeat_rows({0.0f, 1.0f}, n);
	Tensor x = x0;
	for (int t = 1; t <= 5; ++t) x = forward_step(x, t, s, rng);
	const auto st = column_stats(x);
	for (std::size_t c = 0; c < 2; ++c)
		expect_within_4_sigma(st[c], std::sqrt(s.alpha_bar(5)) * x0[c], 1 - s.alpha_bar(5), n, "t=5");
}

TEST(ReverseStep, ZeroPredictionNoNoiseRescales) {
	const auto s = NoiseSchedule::standard();
	const auto d = zero_noise_net(3, s);
	oracle::ZeroSource zero;
	const auto x = Tensor::vector({0.2f, -1.0f, 3.0f});
	for (int t : {1, 7, 300}) {
		const auto out = reverse_step(x, t, d, zero);
		for (std::size_t i = 0; i < 3; ++i) EXPECT_FLOAT_EQ(out[i], x[i] / float(std::sqrt(s.alpha(t))));
	}
}

TEST(ReverseStep, FinalStepIsDeterministic) {
	const auto s = NoiseSchedule::standard();
	const auto d = Denoiser::gaussian_oracle(s);
	Rng a(1), b(2);
	const auto x = Tensor::vector({0.4f, -0.1f});
	EXPECT_EQ(reverse_step(x, 1, d, a), reverse_step(x, 1, d, b));
	EXPECT_NE(reverse_step(x, 2, d, a), reverse_step(x, 2, d, b));
}

TEST(ReverseStep, OracleChainKeepsStandardNormal) {
	const auto s = NoiseSchedule::standard();
	const auto d = Denoiser::gaussian_oracle(s);
	const std::size_t n = 10000;
	for (int t : {1, 10, 30}) {
		Rng rng(400 + t);
		const auto x0 = gaussian_sample({n, 2}, rng);
		const auto out = purify(diffuse(x0, t, s, rng), TimestepPlan::make(t, 0), d, rng, OutputRange::unbounded);
		for (const auto& c : column_stats(out)) {
			EXPECT_LT(std::abs(c.mean), 0.05) << "t=" << t;
			EXPECT_LT(std::abs(c.var - 1), 0.05) << "t=" << t;
		}
	}
}

TEST(ReverseStep, OracleMeanIsPosteriorMean) {
	// eps_hat = sqrt(1 - abar) x_t, so E[x0 | x_t] = sqrt(abar) x_t
	const auto s = NoiseSchedule::standard();
	const auto d = Denoiser::gaussian_oracle(s);
	const auto x = Tensor::vector({1.5f, -0.5f});
	for (int t : {5, 25}) {
		const auto eps = d.predict_noise(x, t);
		for (std::size_t i = 0; i < 2; ++i) {
			const double x0 = (x[i] - std::sqrt(1 - s.alpha_bar(t)) * eps[i]) / std::sqrt(s.alpha_bar(t));
			EXPECT_NEAR(x0, std::sqrt(s.alpha_bar(t)) * x[i], 1e-5);
		}
	}
}

TEST(Purify, SymmetricPlanIsPlainChain) {
	const auto s = NoiseSchedule::standard();
	const auto d = Denoiser::gaussian_oracle(s);
	Rng r1(77), r2(77);
	const auto x = Tensor::vector({0.6f, 0.2f, 0.9f});
	Tensor manual = x;
	for (int t = 12; t >= 1; --t) manual = reverse_step(manual, t, d, r1);
	EXPECT_EQ(purify(x, TimestepPlan::make(12, 0), d, r2), clamp01(manual));
}

TEST(Purify, PlusStepsExtendTheChain) {
	const auto s = NoiseSchedule::standard();
	const auto d = Denoiser::gaussian_oracle(s);
	Rng r1(5), r2(5);
	const auto x = Tensor::vector({0.6f, 0.2f});
	EXPECT_EQ(purify(x, TimestepPlan::make(10, 6), d, r1), purify(x, TimestepPlan::make(16, 0), d, r2));
}

TEST(Purify, OutputIsClamped) {
	const auto s = NoiseSchedule::standard();
	const auto d = Denoiser::gaussian_oracle(s);
	Rng rng(6);
	const auto out = purify(gaussian_sample({64}, rng) * 5.0f, TimestepPlan::make(20, 0), d, rng);
	for (float v : out.values()) {
		EXPECT_GE(v, 0.0f);
		EXPECT_LE(v, 1.0f);
	}
}

TEST(Plan, ConstructionEnforcesConstraints) {
	EXPECT_THROW(TimestepPlan::make(30, 20), PlanError);
	EXPECT_THROW(TimestepPlan::make(50, 0), PlanError);
	EXPECT_THROW(TimestepPlan::make(0, 0), PlanError);
	EXPECT_THROW(TimestepPlan::make(10, -1), PlanError);
	const auto p = TimestepPlan::make(20, 15);
	EXPECT_EQ(p.t_p(), 35);
	EXPECT_LT(p.t_d(), p.t_p());
	EXPECT_THROW(TimestepPlan::make(5, 0, PlanLimits{60, 50, 100}), ConfigError);
}

TEST(Plan, RandomRequestsValidIffConstructible) {
	Rng rng(90);
	for (int k = 0; k < 20000; ++k) {
		const int t_d = rng.uniform_int(-5, 60), t_plus = rng.uniform_int(-5, 60);
		const bool ok = t_d >= 1 && t_plus >= 0 && t_plus <= 50 && t_d + t_plus < 50;
		ASSERT_EQ(TimestepPlan::valid(t_d, t_plus), ok);
		if (ok) {
			const auto p = TimestepPlan::make(t_d, t_plus);
			ASSERT_LT(p.t_d() + p.t_plus(), 50);
			ASSERT_TRUE(p.t_plus() == 0 || p.t_d() < p.t_p());
		} else {
			ASSERT_THROW(TimestepPlan::make(t_d, t_plus), PlanError);
		}
	}
}

TEST(Plan, GaussianNoiseDominatesAttackWithinTheStepCap) {
	// smallest t with sqrt(abar) * 8/256 < 0.2 sqrt(1 - abar); the cap t_D <= 49 reaches it
	const auto s = NoiseSchedule::standard();
	int first = 0;
	for (int t = 1; t <= 1000 && !first; ++t)
		if (std::sqrt(s.alpha_bar(t)) * 8.0 / 256.0 < 0.2 * std::sqrt(1 - s.alpha_bar(t))) first = t;
	EXPECT_GT(first, 20);
	EXPECT_LE(first, 49);
}

TEST(PurificationLoss, Boundaries) {
	Rng rng(3);
	const auto y = clamp01(gaussian_sample({4, 16}, rng) * 0.3f + Tensor({4, 16}, 0.5f));
	const auto yp = clamp01(gaussian_sample({4, 16}, rng) * 0.3f + Tensor({4, 16}, 0.5f));
	EXPECT_NEAR(purification_loss(y, yp, 0.0, 0.5), mean_squared_error(y, yp), 1e-12);
	EXPECT_NEAR(purification_loss(y, yp, 1.0, 0.5), 0.5 * (1 - ssim_avg(y, yp)), 1e-12);
	EXPECT_EQ(purification_loss(y, y, 0.8, 0.5), 0.0);
}

TEST(DenoiserGradients, MatchOracleForBothParameterizations) {
	const auto s = NoiseSchedule::standard();
	for (auto param : {Parameterization::noise, Parameterization::clean}) {
		Rng rng(50 + int(param));
		const auto d = Denoiser::learned(Denoiser::make_network(12, {16, 16}, rng), s, param);
		const auto y = clamp01(gaussian_sample({3, 12}, rng) * 0.2f + Tensor({3, 12}, 0.5f));
		const auto received = diffuse(y, 4, s, rng);
		const auto r = oracle::check_denoiser(d, y, received, 5, 0.8, 0.5, 100, rng);
		EXPECT_GE(r.checked, 100u);
		EXPECT_EQ(r.failed, 0u) << "worst " << r.worst;
	}
}

TEST(Denoiser, ShapeAndCheckpoint) {
	Rng rng(8);
	EXPECT_THROW(Denoiser::learned(DenseNet::make({5, 5}, Activation::relu, Activation::linear, rng),
	                               NoiseSchedule::standard()),
	             ShapeError);
	const auto d = Denoiser::learned(Denoiser::make_network(6, {8}, rng), build_schedule(200, 2e-4, 0.03),
	                                 Parameterization::noise);
	const auto back = decode_denoiser(encode_denoiser(d));
	EXPECT_EQ(back.parameterization(), Parameterization::noise);
	EXPECT_EQ(back.schedule().steps(), 200);
	EXPECT_DOUBLE_EQ(back.schedule().beta_end(), 0.03);
	const auto x = gaussian_sample({2, 6}, rng);
	EXPECT_EQ(back.predict_noise(x, 17), d.predict_noise(x, 17));
	EXPECT_THROW(encode_denoiser(Denoiser::gaussian_oracle(NoiseSchedule::standard())), UnsupportedError);
}

TEST(TrainDenoiser, RejectsBadInputs) {
	Rng rng(1);
	Dataset empty;
	const auto codec = Codec::make({}, rng);
	EXPECT_THROW(train_denoiser(empty, codec, NoiseSchedule::standard(), {}, rng), DataError);
	ToyDatasetConfig dc;
	dc.count = 8;
	const auto data = make_toy_dataset(dc, rng);
	DenoiserTrainConfig cfg;
	cfg.zeta = 1.5;
	EXPECT_THROW(train_denoiser(data, codec, NoiseSchedule::standard(), cfg, rng), ConfigError);
}

// The rest use the trained toy pipeline (cached across test processes).

TEST(TrainedDenoiser, PurificationDoesNotReduceSimilarity) {
	auto& p = toy::pipeline();
	const auto& d = p.denoiser();
	const auto batch = p.splits.heldout.slice(0, 64).images;
	Rng rng(2024);
	const auto diffused = diffuse(batch, 20, d.schedule(), rng);
	const auto out = purify(diffused, TimestepPlan::make(20, 0), d, rng);
	int better = 0;
	for (std::size_t i = 0; i < 64; ++i) {
		const Tensor x({256}, std::vector<float>(batch.row(i).begin(), batch.row(i).end()));
		const Tensor a({256}, std::vector<float>(diffused.row(i).begin(), diffused.row(i).end()));
		const Tensor b({256}, std::vector<float>(out.row(i).begin(), out.row(i).end()));
		better += ssim(x, b) >= ssim(x, a);
	}
	EXPECT_GE(better, 58) << better << " of 64";  // >= 90%
}

TEST(TrainedDenoiser, LossAtLeastHalvedByTraining) {
	auto& p = toy::pipeline();
	const auto& trained = p.denoiser();
	const auto& cfg = p.cfg;
	Rng init_rng(cfg.seed + 3);
	const Denoiser initial = Denoiser::learned(Denoiser::make_network(256, cfg.denoiser.hidden, init_rng), cfg.schedule(),
	                                           cfg.denoiser.parameterization);
	// same batches, plans and channel draws for both
	auto loss_of = [&](const Denoiser& d) {
		Rng rng(515);
		double total = 0;
		for (int b = 0; b < 8; ++b) {
			const auto y = p.splits.heldout.slice(std::size_t(b) * 32, 32).images;
			const auto plan = sample_plan(cfg.denoiser.limits, cfg.denoiser.max_t_d, rng);
			const auto x_hat = received_image(y, plan.t_d(), p.codec(), cfg.schedule(), ChannelConfig::awgn(9), rng);
			total += denoiser_gradients(d, y, x_hat, plan.t_p(), cfg.denoiser.zeta, cfg.denoiser.iota_prime, rng).loss;
		}
		return total / 8;
	};
	const double before = loss_of(initial), after = loss_of(trained);
	EXPECT_LT(after, 0.5 * before) << "initial " << before << " trained " << after;
}
