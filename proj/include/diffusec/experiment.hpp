#pragma once

#include "diffusec/artifacts.hpp"
#include "diffusec/config.hpp"
#include "diffusec/pipeline.hpp"

#include <functional>
#include <string>

namespace diffusec {

/// Training and held-out splits from one generated pool (both stay class-balanced because
/// labels are interleaved).
struct DataSplits {
	Dataset train;
	Dataset heldout;
};

inline DataSplits make_splits(const ExperimentConfig& cfg, Rng& rng) {
	auto dc = cfg.data;
	dc.count = cfg.data.count + cfg.heldout_count;
	if (cfg.heldout_count % cfg.data.classes != 0) throw ConfigError("held-out count must be a multiple of the class count");
	auto all = make_toy_dataset(dc, rng);
	return {all.slice(0, cfg.data.count), all.slice(cfg.data.count, cfg.heldout_count)};
}

using ProgressFn = std::function<void(const std::string&)>;

enum class CodecPhase { semantic, jsc, joint, all };

/// Runs the requested codec phases in order: semantic (SSIM, no channel), JSC (MSE on
/// embeddings through the channel), joint (SSIM end to end).
inline CodecJointResult train_codec(const ExperimentConfig& cfg, const DataSplits& d, CodecPhase phase, Rng& rng,
                                    std::optional<Codec> start = std::nullopt, const ProgressFn& log = {}) {
	Codec codec = start ? std::move(*start) : Codec::make(cfg.codec_dimensions(), rng);
	const bool all = phase == CodecPhase::all;
	TrainReport report;
	if (all || phase == CodecPhase::semantic) {
		auto r = train_semantic(std::move(codec), d.train, cfg.codec_phase(cfg.codec_semantic_epochs, cfg.batch_semantic), rng);
		codec = std::move(r.codec);
		if (log && !r.epoch_losses.empty()) log("codec semantic: final loss " + std::to_string(r.epoch_losses.back()));
	}
	if (all || phase == CodecPhase::jsc) {
		auto r = train_jsc(std::move(codec), d.train, cfg.codec_phase(cfg.codec_jsc_epochs, cfg.batch_jsc), rng);
		codec = std::move(r.codec);
		if (log && !r.epoch_losses.empty()) log("codec jsc: final loss " + std::to_string(r.epoch_losses.back()));
	}
	if (all || phase == CodecPhase::joint) {
		auto r = train_joint(std::move(codec), d.train, d.heldout,
		                     cfg.codec_phase(cfg.codec_joint_epochs, cfg.batch_semantic), rng);
		if (log && !r.report.epoch_losses.empty())
			log("codec joint: final loss " + std::to_string(r.report.epoch_losses.back()) + ", held-out SSIM " +
			    std::to_string(r.report.heldout_ssim));
		return r;
	}
	report.heldout_ssim = ssim_avg(d.heldout.images, codec.decode(codec.encode(d.heldout.images)), cfg.ssim);
	return {std::move(codec), report};
}

inline Components assemble(const ExperimentConfig& cfg, Codec codec, Denoiser denoiser, Classifier classifier) {
	Components c{std::move(codec), std::move(denoiser), std::move(classifier), cfg.attack, cfg.ssim, cfg.reward,
	             cfg.data.side, cfg.data.side};
	c.validate();
	return c;
}

/// Toy gallery: clean, attacked, received and purified versions of the first few held-out
/// images as one [4, n, H, W] tensor.
inline Tensor gallery(const Components& c, const Dataset& data, const TimestepPlan& plan, const ChannelConfig& channel,
                      std::size_t n, Rng& rng) {
	n = std::min(n, data.size());
	const auto sub = data.slice(0, n);
	const auto adv = pgd_attack(sub.images, sub.labels, c.classifier, c.attack, rng);
	const auto received = c.codec.decode(transmit(c.codec.encode(diffuse(adv, plan.t_d(), c.denoiser.schedule(), rng)), channel, rng));
	const auto final = purify(received, plan, c.denoiser, rng);
	std::vector<float> v;
	for (const Tensor* t : {&sub.images, &adv, &received, &final}) v.insert(v.end(), t->values().begin(), t->values().end());
	return Tensor({4, n, data.height, data.width}, std::move(v));
}

} // namespace diffusec
