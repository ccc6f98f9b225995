#pragma once

#include "diffusec/channel.hpp"
#include "diffusec/dataset.hpp"
#include "diffusec/metrics.hpp"
#include "diffusec/optimizer.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace diffusec {

struct CodecDims {
	std::size_t image_dim = 256;
	std::size_t semantic_hidden = 128;
	std::size_t embed_dim = 64;
	std::size_t channel_hidden = 64;
	std::size_t latent_dim = 40;
	/// Hidden-layer activation of all four nets. Linear keeps the codec a faithful projection:
	/// a ReLU codec trained on clean images snaps attacked inputs onto another class's
	/// reconstruction, which no receiver-side purifier can undo.
	Activation hidden_activation = Activation::linear;
};

/// Joint semantic-channel codec: z = C(S(x)) on the sender, x_hat = S^-1(C^-1(z_hat)) on the
/// receiver.
struct Codec {
	DenseNet semantic_encoder; // image -> embedding
	DenseNet channel_encoder;  // embedding -> latent (L)
	DenseNet channel_decoder;  // latent -> embedding
	DenseNet semantic_decoder; // embedding -> image

	static Codec make(const CodecDims& d, Rng& rng) {
		const auto h = d.hidden_activation, out = Activation::linear;
		Codec c{DenseNet::make({d.image_dim, d.semantic_hidden, d.embed_dim}, h, out, rng),
		        DenseNet::make({d.embed_dim, d.channel_hidden, d.latent_dim}, h, out, rng),
		        DenseNet::make({d.latent_dim, d.channel_hidden, d.embed_dim}, h, out, rng),
		        DenseNet::make({d.embed_dim, d.semantic_hidden, d.image_dim}, h, out, rng)};
		c.validate();
		return c;
	}

	void validate() const {
		if (semantic_encoder.out_dim() != channel_encoder.in_dim() || channel_encoder.out_dim() != channel_decoder.in_dim() ||
		    channel_decoder.out_dim() != semantic_decoder.in_dim() || semantic_decoder.out_dim() != semantic_encoder.in_dim())
			throw ShapeError("codec networks do not chain");
		if (!(latent_dim() < image_dim())) throw ShapeError("codec latent length must be below the image dim");
	}

	std::size_t image_dim() const { return semantic_encoder.in_dim(); }
	std::size_t embed_dim() const { return semantic_encoder.out_dim(); }
	std::size_t latent_dim() const { return channel_encoder.out_dim(); }

	Tensor embed(const Tensor& x) const { return semantic_encoder.forward(x.as_batch()); }
	Tensor encode(const Tensor& x) const { return channel_encoder.forward(embed(x)); }
	Tensor decode_raw(const Tensor& z_hat) const {
		return semantic_decoder.forward(channel_decoder.forward(z_hat.as_batch()));
	}
	Tensor decode(const Tensor& z_hat) const { return clamp01(decode_raw(z_hat)); }
	Tensor decode_embedding(const Tensor& e) const { return clamp01(semantic_decoder.forward(e.as_batch())); }
};

inline Tensor encode(const Codec& c, const Tensor& x) { return c.encode(x); }
inline Tensor decode(const Codec& c, const Tensor& z_hat) { return c.decode(z_hat); }

/// iota * (1 - mean SSIM).
inline double semantic_loss(const Tensor& y, const Tensor& y_hat, double iota, const SsimParams& p = {}) {
	return iota * (1.0 - ssim_avg(y, y_hat, p));
}

/// dLoss/dy_hat for semantic_loss, using the unclamped SSIM.
inline Tensor semantic_loss_gradient(const Tensor& y, const Tensor& y_hat, double iota, const SsimParams& p = {}) {
	const auto Y = y.as_batch(), Yh = y_hat.as_batch();
	Tensor grad(Yh.shape());
	const double scale = -iota / double(Y.rows());
	for (std::size_t b = 0; b < Y.rows(); ++b) {
		const Tensor yb({Y.cols()}, std::vector<float>(Y.row(b).begin(), Y.row(b).end()));
		const Tensor hb({Y.cols()}, std::vector<float>(Yh.row(b).begin(), Yh.row(b).end()));
		const auto g = ssim_gradient(yb, hb, p);
		for (std::size_t i = 0; i < g.size(); ++i) grad.row(b)[i] = float(scale * g[i]);
	}
	return grad;
}

/// Batch mean squared error.
inline double jsc_loss(const Tensor& y, const Tensor& y_hat) { return mean_squared_error(y, y_hat); }

inline Tensor mse_gradient(const Tensor& y, const Tensor& y_hat) {
	require_same_shape(y, y_hat, "mse");
	Tensor g(y_hat.shape());
	const float scale = 2.0f / float(y.size());
	for (std::size_t i = 0; i < g.size(); ++i) g[i] = scale * (y_hat[i] - y[i]);
	return g;
}

/// Scalar least-squares fit of reconstructions against inputs: sum(x * x_hat) / sum(x^2).
inline double least_squares_gain(const Tensor& x, const Tensor& x_hat) {
	if (x.size() != x_hat.size()) throw ShapeError("gain fit: size mismatch");
	double num = 0, den = 0;
	for (std::size_t i = 0; i < x.size(); ++i) {
		num += double(x[i]) * x_hat[i];
		den += double(x[i]) * x[i];
	}
	if (!(den > 0.0)) throw MeasurementError("gain fit needs a non-zero probe batch");
	return num / den;
}

struct CodecTrainConfig {
	int epochs = 200;
	std::size_t batch = 128;
	double learning_rate = 1e-3;
	double iota = 0.5;
	double snr_min_db = -3.0;
	double snr_max_db = 12.0;
	SsimParams ssim{};
};

struct CodecPhaseResult {
	Codec codec;
	std::vector<double> epoch_losses;
};

struct TrainReport {
	std::vector<double> epoch_losses;
	double heldout_ssim = 0;
	double codec_gain = 0;
};

struct CodecJointResult {
	Codec codec;
	TrainReport report;
};

namespace detail {

template <typename Fn>
void for_each_minibatch(std::size_t n, std::size_t batch, Rng& rng, Fn&& fn) {
	if (n == 0) throw DataError("empty dataset");
	if (batch == 0) throw ConfigError("batch size must be positive");
	std::vector<std::size_t> order(n);
	std::iota(order.begin(), order.end(), 0);
	std::shuffle(order.begin(), order.end(), rng.engine());
	for (std::size_t s = 0; s < n; s += batch) fn(std::span<const std::size_t>(order).subspan(s, std::min(batch, n - s)));
}

inline ChannelConfig training_channel(const CodecTrainConfig& cfg, Rng& rng) {
	return ChannelConfig::awgn(cfg.snr_min_db + (cfg.snr_max_db - cfg.snr_min_db) * rng.uniform());
}

} // namespace detail

/// Loss and parameter gradients of one training batch, with the channel draw that was used
/// (empty when the phase has no channel).
struct PhaseGradients {
	double loss = 0;
	std::vector<GradientSet> grads;
	ChannelRealization channel;
};

/// Semantic phase batch: L_S on S^-1(S(x)); gradients for {semantic encoder, semantic decoder}.
inline PhaseGradients semantic_gradients(const Codec& c, const Tensor& x, double iota, const SsimParams& p = {}) {
	auto t_enc = c.semantic_encoder.trace(x);
	auto t_dec = c.semantic_decoder.trace(t_enc.output());
	PhaseGradients g;
	g.loss = semantic_loss(x, t_dec.output(), iota, p);
	auto g_dec = c.semantic_decoder.backprop(t_dec, semantic_loss_gradient(x, t_dec.output(), iota, p));
	auto g_enc = c.semantic_encoder.backprop(t_enc, g_dec.input_grad);
	g.grads = {std::move(g_enc.params), std::move(g_dec.params)};
	return g;
}

/// Channel phase batch: MSE of C^-1(C(y) + noise) against the embeddings y; gradients for
/// {channel encoder, channel decoder}.
template <NormalSource R>
PhaseGradients jsc_gradients(const Codec& c, const Tensor& y, const ChannelConfig& channel, R& rng) {
	auto t_enc = c.channel_encoder.trace(y);
	PhaseGradients g;
	g.channel = transmit_traced(t_enc.output(), channel, rng);
	auto t_dec = c.channel_decoder.trace(g.channel.output);
	g.loss = jsc_loss(y, t_dec.output());
	auto g_dec = c.channel_decoder.backprop(t_dec, mse_gradient(y, t_dec.output()));
	auto g_enc = c.channel_encoder.backprop(t_enc, g.channel.backward(t_enc.output(), g_dec.input_grad));
	g.grads = {std::move(g_enc.params), std::move(g_dec.params)};
	return g;
}

/// End-to-end batch: L_S on the unclamped reconstruction through the channel; gradients for
/// {semantic encoder, channel encoder, channel decoder, semantic decoder}.
template <NormalSource R>
PhaseGradients joint_gradients(const Codec& c, const Tensor& x, const ChannelConfig& channel, double iota, R& rng,
                               const SsimParams& p = {}) {
	auto t_se = c.semantic_encoder.trace(x);
	auto t_ce = c.channel_encoder.trace(t_se.output());
	PhaseGradients g;
	g.channel = transmit_traced(t_ce.output(), channel, rng);
	auto t_cd = c.channel_decoder.trace(g.channel.output);
	auto t_sd = c.semantic_decoder.trace(t_cd.output());
	g.loss = semantic_loss(x, t_sd.output(), iota, p);
	auto g_sd = c.semantic_decoder.backprop(t_sd, semantic_loss_gradient(x, t_sd.output(), iota, p));
	auto g_cd = c.channel_decoder.backprop(t_cd, g_sd.input_grad);
	auto g_ce = c.channel_encoder.backprop(t_ce, g.channel.backward(t_ce.output(), g_cd.input_grad));
	auto g_se = c.semantic_encoder.backprop(t_se, g_ce.input_grad);
	g.grads = {std::move(g_se.params), std::move(g_ce.params), std::move(g_cd.params), std::move(g_sd.params)};
	return g;
}

/// Phase 1: semantic encoder/decoder alone (no channel), SSIM loss.
inline CodecPhaseResult train_semantic(Codec codec, const Dataset& data, const CodecTrainConfig& cfg, Rng& rng) {
	data.validate();
	if (!(cfg.iota > 0.0)) throw ConfigError("iota must be positive");
	CodecPhaseResult res{std::move(codec), {}};
	auto& c = res.codec;
	Optimizer enc = Optimizer::adam(cfg.learning_rate), dec = Optimizer::adam(cfg.learning_rate);
	for (int e = 0; e < cfg.epochs; ++e) {
		double total = 0;
		std::size_t batches = 0;
		detail::for_each_minibatch(data.size(), cfg.batch, rng, [&](std::span<const std::size_t> idx) {
			auto g = semantic_gradients(c, gather_rows(data.images, idx), cfg.iota, cfg.ssim);
			total += g.loss;
			enc.apply(c.semantic_encoder, g.grads[0]);
			dec.apply(c.semantic_decoder, g.grads[1]);
			++batches;
		});
		res.epoch_losses.push_back(total / double(batches));
	}
	return res;
}

/// Phase 2: channel encoder/decoder on frozen semantic embeddings through the AWGN channel,
/// MSE loss; the SNR is redrawn uniformly from the training range for every batch.
inline CodecPhaseResult train_jsc(Codec codec, const Tensor& embeddings, const CodecTrainConfig& cfg, Rng& rng) {
	CodecPhaseResult res{std::move(codec), {}};
	auto& c = res.codec;
	const auto E = embeddings.as_batch();
	if (E.cols() != c.embed_dim()) throw ShapeError("embeddings do not match the codec embed dim");
	Optimizer enc = Optimizer::adam(cfg.learning_rate), dec = Optimizer::adam(cfg.learning_rate);
	for (int e = 0; e < cfg.epochs; ++e) {
		double total = 0;
		std::size_t batches = 0;
		detail::for_each_minibatch(E.rows(), cfg.batch, rng, [&](std::span<const std::size_t> idx) {
			auto g = jsc_gradients(c, gather_rows(E, idx), detail::training_channel(cfg, rng), rng);
			total += g.loss;
			enc.apply(c.channel_encoder, g.grads[0]);
			dec.apply(c.channel_decoder, g.grads[1]);
			++batches;
		});
		res.epoch_losses.push_back(total / double(batches));
	}
	return res;
}

inline CodecPhaseResult train_jsc(Codec codec, const Dataset& data, const CodecTrainConfig& cfg, Rng& rng) {
	data.validate();
	const auto embeddings = codec.embed(data.images);
	return train_jsc(std::move(codec), embeddings, cfg, rng);
}

/// Semantic loss of the full codec through `channel` on a batch.
inline double pipeline_loss(const Codec& c, const Tensor& x, const ChannelConfig& channel, double iota, Rng& rng,
                            const SsimParams& p = {}) {
	return semantic_loss(x, c.decode(transmit(c.encode(x), channel, rng)), iota, p);
}

inline double measure_codec_gain(const Codec& c, const Tensor& probe, const ChannelConfig& channel, Rng& rng) {
	return least_squares_gain(probe, c.decode(transmit(c.encode(probe), channel, rng)));
}

/// Phase 3: end-to-end fine-tuning of all four networks through the channel with the SSIM loss.
inline CodecJointResult train_joint(Codec codec, const Dataset& data, const Dataset& heldout, const CodecTrainConfig& cfg,
                                    Rng& rng) {
	data.validate();
	CodecJointResult res{std::move(codec), {}};
	auto& c = res.codec;
	Optimizer o_se = Optimizer::adam(cfg.learning_rate), o_ce = Optimizer::adam(cfg.learning_rate),
	          o_cd = Optimizer::adam(cfg.learning_rate), o_sd = Optimizer::adam(cfg.learning_rate);
	for (int e = 0; e < cfg.epochs; ++e) {
		double total = 0;
		std::size_t batches = 0;
		detail::for_each_minibatch(data.size(), cfg.batch, rng, [&](std::span<const std::size_t> idx) {
			const auto x = gather_rows(data.images, idx);
			auto g = joint_gradients(c, x, detail::training_channel(cfg, rng), cfg.iota, rng, cfg.ssim);
			total += g.loss;
			o_se.apply(c.semantic_encoder, g.grads[0]);
			o_ce.apply(c.channel_encoder, g.grads[1]);
			o_cd.apply(c.channel_decoder, g.grads[2]);
			o_sd.apply(c.semantic_decoder, g.grads[3]);
			++batches;
		});
		res.report.epoch_losses.push_back(total / double(batches));
	}
	if (heldout.size()) {
		res.report.heldout_ssim = ssim_avg(heldout.images, c.decode(c.encode(heldout.images)), cfg.ssim);
		Rng probe_rng = rng.split(0x6a17);
		res.report.codec_gain = measure_codec_gain(c, heldout.images, ChannelConfig::awgn(30.0), probe_rng);
	}
	return res;
}

} // namespace diffusec
