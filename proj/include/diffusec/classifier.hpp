#pragma once

#include "diffusec/dataset.hpp"
#include "diffusec/dense_net.hpp"
#include "diffusec/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace diffusec {

/// Index of the largest value; ties go to the lowest index.
inline int argmax(std::span<const float> v) {
	int best = 0;
	for (std::size_t i = 1; i < v.size(); ++i)
		if (v[i] > v[std::size_t(best)]) best = int(i);
	return best;
}

/// Mean softmax cross-entropy over the batch; writes dLoss/dLogits into `grad`.
inline double cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor* grad = nullptr) {
	const auto L = logits.as_batch();
	if (L.rows() != labels.size()) throw ShapeError("cross entropy: label count mismatch");
	if (grad) *grad = Tensor(L.shape());
	const auto B = L.rows(), K = L.cols();
	double loss = 0;
	std::vector<double> p(K);
	for (std::size_t b = 0; b < B; ++b) {
		auto row = L.row(b);
		const double mx = *std::max_element(row.begin(), row.end());
		double z = 0;
		for (std::size_t k = 0; k < K; ++k) z += p[k] = std::exp(double(row[k]) - mx);
		const auto y = std::size_t(labels[b]);
		if (y >= K) throw DataError("label out of range");
		loss += -(double(row[y]) - mx - std::log(z));
		if (grad)
			for (std::size_t k = 0; k < K; ++k) grad->row(b)[k] = float((p[k] / z - (k == y ? 1.0 : 0.0)) / double(B));
	}
	return loss / double(B);
}

/// The task classifier H: image -> class logits.
class Classifier {
  public:
	Classifier() = default;
	Classifier(DenseNet net, std::size_t classes) : m_net(std::move(net)), m_classes(classes) {
		if (m_net.empty() || m_net.out_dim() != classes) throw ShapeError("classifier output dim must equal class count");
	}

	static Classifier make(std::size_t image_dim, std::size_t classes, const std::vector<std::size_t>& hidden, Rng& rng) {
		std::vector<std::size_t> dims{image_dim};
		dims.insert(dims.end(), hidden.begin(), hidden.end());
		dims.push_back(classes);
		return Classifier(DenseNet::make(dims, Activation::relu, Activation::linear, rng), classes);
	}

	std::size_t classes() const noexcept { return m_classes; }
	const DenseNet& net() const noexcept { return m_net; }
	DenseNet& net() noexcept { return m_net; }

	Tensor logits(const Tensor& x) const { return m_net.forward(x); }

	int classify(const Tensor& image) const { return argmax(logits(image.reshaped({image.size()})).values()); }

	std::vector<int> classify_batch(const Tensor& batch) const {
		const auto L = logits(batch.as_batch());
		std::vector<int> out(L.rows());
		for (std::size_t b = 0; b < L.rows(); ++b) out[b] = argmax(L.row(b));
		return out;
	}

	double accuracy(const Tensor& batch, std::span<const int> labels) const {
		const auto pred = classify_batch(batch);
		std::size_t hits = 0;
		for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
		return double(hits) / double(pred.size());
	}

	double accuracy(const Dataset& ds) const { return accuracy(ds.images, ds.labels); }

  private:
	DenseNet m_net;
	std::size_t m_classes = 0;
};

inline int classify(const Classifier& c, const Tensor& image) { return c.classify(image); }

struct ClassifierConfig {
	std::vector<std::size_t> hidden{64};
	int epochs = 40;
	std::size_t batch = 64;
	double learning_rate = 1e-3;
};

struct ClassifierReport {
	Classifier classifier;
	std::vector<double> epoch_losses;
	double train_accuracy = 0;
};

/// Cross-entropy training with Adam on shuffled mini-batches.
inline ClassifierReport train_classifier(const Dataset& train, const ClassifierConfig& cfg, Rng& rng) {
	train.validate();
	if (train.classes < 2) throw DataError("classifier needs at least 2 classes");
	ClassifierReport rep{Classifier::make(train.image_dim(), train.classes, cfg.hidden, rng), {}, 0};
	Optimizer opt = Optimizer::adam(cfg.learning_rate);
	std::vector<std::size_t> order(train.size());
	std::iota(order.begin(), order.end(), 0);
	for (int e = 0; e < cfg.epochs; ++e) {
		std::shuffle(order.begin(), order.end(), rng.engine());
		double total = 0;
		std::size_t batches = 0;
		for (std::size_t s = 0; s < order.size(); s += cfg.batch) {
			const auto n = std::min(cfg.batch, order.size() - s);
			const auto mb = train.subset(std::span(order).subspan(s, n));
			auto tr = rep.classifier.net().trace(mb.images);
			Tensor grad;
			total += cross_entropy(tr.output(), mb.labels, &grad);
			opt.apply(rep.classifier.net(), rep.classifier.net().backprop(tr, grad).params);
			++batches;
		}
		rep.epoch_losses.push_back(total / double(batches));
	}
	rep.train_accuracy = rep.classifier.accuracy(train);
	return rep;
}

} // namespace diffusec
