#include "camaudit/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "camaudit/errors.hpp"
#include "camaudit/parallel.hpp"
#include "camaudit/rng.hpp"

namespace camaudit {

namespace {

// Samples per accumulation chunk; fixed so sums are thread-count independent.
constexpr std::size_t kChunk = 8;

std::size_t resolve_threads(std::size_t threads) { return threads == 0 ? default_thread_count() : threads; }

}  // namespace

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be a finite value >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight_decay must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (schedule.interval == 0) throw ConfigError("lr schedule interval must be >= 1");
  if (!(schedule.factor > 0.0)) throw ConfigError("lr schedule factor must be > 0");
}

double TrainConfig::lr_at(std::size_t epoch) const {
  return lr * std::pow(schedule.factor, static_cast<double>(epoch / schedule.interval));
}

std::string TrainLog::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,loss,acc\n";
  for (std::size_t e = 0; e < loss.size(); ++e) out << e + 1 << ',' << loss[e] << ',' << accuracy[e] << '\n';
  return out.str();
}

LossAndGradient cross_entropy_with_softmax(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw DimensionError("label " + std::to_string(label) + " out of range for " + std::to_string(logits.size()) + " classes");
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  LossAndGradient out;
  out.gradient.resize(logits.size());
  double total = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    out.gradient[c] = std::exp(logits[c] - peak);
    total += out.gradient[c];
  }
  for (double& p : out.gradient) p /= total;
  out.loss = std::log(total) - (logits[label] - peak);
  out.gradient[label] -= 1.0;
  return out;
}

double evaluate(const Model& model, const LabeledDataset& dataset, std::size_t threads) {
  if (dataset.empty()) throw ConfigError("cannot evaluate on an empty dataset");
  std::vector<std::uint8_t> hit(dataset.size(), 0);
  parallel_for(dataset.size(), resolve_threads(threads), [&](std::size_t n) {
    hit[n] = argmax(predict(model, dataset.images[n])) == dataset.labels[n] ? 1 : 0;
  });
  return static_cast<double>(std::accumulate(hit.begin(), hit.end(), std::size_t{0})) / static_cast<double>(dataset.size());
}

void sgd_step(Model& model, SgdState& state, const ModelGradients& grad, double lr, double momentum, double weight_decay) {
  auto update = [&](std::vector<double>& w, std::vector<double>& v, const std::vector<double>& g,
                    const std::vector<std::uint8_t>* mask) {
    for (std::size_t n = 0; n < w.size(); ++n) {
      if (mask && (*mask)[n] == 0) {
        w[n] = 0.0;
        v[n] = 0.0;
        continue;
      }
      v[n] = momentum * v[n] + (g[n] + weight_decay * w[n]);
      w[n] -= lr * v[n];
    }
  };
  for (std::size_t i = 0; i < model.convs.size(); ++i) {
    update(model.convs[i].weights, state.velocity.convs[i], grad.convs[i], nullptr);
  }
  for (std::size_t i = 0; i < model.dense.size(); ++i) {
    DenseLayer& d = model.dense[i];
    update(d.weights, state.velocity.dense[i], grad.dense[i], d.has_mask() ? &d.mask : nullptr);
  }
}

Tensor flip_horizontal(const Tensor& image) {
  Tensor out(image.shape());
  const std::size_t cols = image.dim(2);
  for (std::size_t c = 0; c < image.dim(0); ++c) {
    for (std::size_t i = 0; i < image.dim(1); ++i) {
      const double* src = image.row(c, i);
      double* dst = out.row(c, i);
      for (std::size_t j = 0; j < cols; ++j) dst[j] = src[cols - 1 - j];
    }
  }
  return out;
}

double batch_gradient(const Model& model, const LabeledDataset& dataset, std::span<const std::size_t> indices,
                      std::span<const std::uint8_t> flips, std::size_t threads, ModelGradients& out) {
  if (indices.empty()) throw ConfigError("empty batch");
  const std::size_t chunks = (indices.size() + kChunk - 1) / kChunk;
  std::vector<ModelGradients> partial(chunks);
  std::vector<double> losses(indices.size(), 0.0);
  parallel_for(chunks, resolve_threads(threads), [&](std::size_t k) {
    partial[k] = ModelGradients::zeros_like(model);
    const std::size_t end = std::min(indices.size(), (k + 1) * kChunk);
    for (std::size_t b = k * kChunk; b < end; ++b) {
      const std::size_t n = indices[b];
      const bool flip = !flips.empty() && flips[b] != 0;
      const ForwardTrace trace = forward(model, flip ? flip_horizontal(dataset.images[n]) : dataset.images[n]);
      const LossAndGradient lg = cross_entropy_with_softmax(trace.logits(), dataset.labels[n]);
      losses[b] = lg.loss;
      partial[k].accumulate(grad_params(trace, model, lg.gradient));
    }
  });
  out = std::move(partial.front());
  for (std::size_t k = 1; k < chunks; ++k) out.accumulate(partial[k]);
  const double inv = 1.0 / static_cast<double>(indices.size());
  out.scale(inv);
  double loss = 0.0;
  for (double l : losses) loss += l;
  return loss * inv;
}

TrainLog train(Model& model, const LabeledDataset& dataset, const TrainConfig& config, const LabeledDataset& validation,
               const EpochCallback& on_epoch) {
  config.validate();
  if (dataset.empty()) throw ConfigError("training dataset is empty");
  dataset.validate();
  const Extents in = model.spec.input;
  if (dataset.images.front().shape() != in.shape()) {
    throw DimensionError("dataset images are " + shape_string(dataset.images.front().shape()) + " but the model expects " +
                         shape_string(in.shape()));
  }
  for (std::size_t l : dataset.labels) {
    if (l >= model.spec.classes()) throw DimensionError("label " + std::to_string(l) + " exceeds the model's class count");
  }
  const LabeledDataset& held_out = validation.empty() ? dataset : validation;
  const std::size_t threads = resolve_threads(config.threads);

  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  TrainLog log;
  SgdState state = SgdState::zeros_like(model);
  std::vector<std::size_t> order(dataset.size());
  std::vector<std::uint8_t> flips(dataset.size(), 0);
  ModelGradients grad;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    Rng rng(config.seed, epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (auto& f : flips) f = config.hflip && rng.coin() ? 1 : 0;

    const double lr = config.lr_at(epoch);
    double loss_sum = 0.0;
    for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, order.size() - first);
      const std::span<const std::size_t> batch(order.data() + first, count);
      const std::span<const std::uint8_t> batch_flips(flips.data() + first, count);
      const double loss = batch_gradient(model, dataset, batch, batch_flips, threads, grad);
      if (!std::isfinite(loss)) {
        throw NumericError("training diverged: non-finite loss in epoch " + std::to_string(epoch + 1));
      }
      loss_sum += loss * static_cast<double>(count);
      sgd_step(model, state, grad, lr, config.momentum, config.weight_decay);
    }
    log.loss.push_back(loss_sum / static_cast<double>(dataset.size()));
    log.accuracy.push_back(evaluate(model, held_out, threads));
    log.seconds.push_back(std::chrono::duration<double>(Clock::now() - epoch_start).count());
    if (on_epoch) on_epoch(epoch + 1, log.loss.back(), log.accuracy.back());
  }
  log.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return log;
}

}  // namespace camaudit
