#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "camaudit/data.hpp"
#include "camaudit/network.hpp"

namespace camaudit {

/// Step decay: lr · factor^(epoch / interval).
struct LrSchedule {
  double factor = 0.1;
  std::size_t interval = 10;
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  LrSchedule schedule;
  bool hflip = true;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0 = default_thread_count()

  /// Throws ConfigError on lr < 0, momentum outside [0, 1), etc.
  void validate() const;
  double lr_at(std::size_t epoch) const;
};

struct TrainLog {
  std::vector<double> loss;      // mean train loss per epoch
  std::vector<double> accuracy;  // validation top-1 per epoch
  std::vector<double> seconds;   // wall-clock per epoch
  double wall_seconds = 0.0;

  std::size_t epochs() const { return loss.size(); }
  /// "epoch,loss,acc" rows; wall-clock is left out so reruns compare equal.
  std::string to_csv() const;
};

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;  // softmax - one_hot
};

LossAndGradient cross_entropy_with_softmax(std::span<const double> logits, std::size_t label);

/// Top-1 accuracy with first-index tie-break. Throws on an empty dataset.
double evaluate(const Model& model, const LabeledDataset& dataset, std::size_t threads = 0);

/// Optimiser state, laid out like ModelGradients.
struct SgdState {
  ModelGradients velocity;
  static SgdState zeros_like(const Model& model) { return {ModelGradients::zeros_like(model)}; }
};

/// v = momentum·v + (g + wd·w); w -= lr·v. Masked weights and their
/// velocity are held at exactly 0.
void sgd_step(Model& model, SgdState& state, const ModelGradients& grad, double lr, double momentum, double weight_decay);

/// Mean loss and its parameter gradient over `indices`, summed in fixed
/// chunks so the result does not depend on the thread count.
double batch_gradient(const Model& model, const LabeledDataset& dataset, std::span<const std::size_t> indices,
                      std::span<const std::uint8_t> flips, std::size_t threads, ModelGradients& out);

Tensor flip_horizontal(const Tensor& image);

using EpochCallback = std::function<void(std::size_t epoch, double loss, double accuracy)>;

/// Minibatch SGD with momentum. Validation accuracy is measured on
/// `validation`, or on `dataset` when it is empty. Throws NumericError
/// naming the epoch when the loss stops being finite.
TrainLog train(Model& model, const LabeledDataset& dataset, const TrainConfig& config,
               const LabeledDataset& validation = {}, const EpochCallback& on_epoch = {});

}  // namespace camaudit
