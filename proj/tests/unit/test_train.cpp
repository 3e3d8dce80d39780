#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include <camaudit/errors.hpp>
#include <camaudit/model.hpp>
#include <camaudit/train.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace camaudit;

namespace {

LabeledDataset random_dataset(std::size_t n, std::size_t classes, std::uint64_t seed, std::size_t size = 16) {
  LabeledDataset ds;
  for (std::size_t k = 0; k < n; ++k) {
    ds.images.push_back(oracle::random_image({1, size, size}, seed * 1000 + k));
    ds.labels.push_back(k % classes);
  }
  for (std::size_t c = 0; c < classes; ++c) ds.class_names.push_back(std::to_string(c));
  return ds;
}

double mean_loss(const Model& m, const LabeledDataset& ds) {
  double acc = 0.0;
  for (std::size_t k = 0; k < ds.size(); ++k) acc += cross_entropy_with_softmax(predict(m, ds.images[k]), ds.labels[k]).loss;
  return acc / ds.size();
}

TrainConfig quiet(std::size_t epochs, std::size_t batch, double lr) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = batch;
  c.lr = lr;
  c.hflip = false;
  c.threads = 1;
  c.seed = 3;
  return c;
}

}  // namespace

TEST(CrossEntropy, EqualLogitsGiveLogC) {
  const std::vector<double> z(10, 0.7);
  const auto r = cross_entropy_with_softmax(z, 4);
  EXPECT_NEAR(r.loss, std::log(10.0), 1e-15);
  for (std::size_t c = 0; c < 10; ++c) EXPECT_NEAR(r.gradient[c], 0.1 - (c == 4), 1e-15);
}

TEST(CrossEntropy, GradientMatchesCentralDifferences) {
  std::vector<double> z{0.3, -1.2, 2.5, 0.0, 0.9};
  const auto r = cross_entropy_with_softmax(z, 2);
  for (std::size_t c = 0; c < z.size(); ++c) {
    std::vector<double> w = z;
    const double fd = oracle::central_difference(
        [&](double v) {
          w[c] = v;
          return cross_entropy_with_softmax(w, 2).loss;
        },
        z[c], 1e-6);
    EXPECT_NEAR(r.gradient[c], fd, 1e-8);
  }
  EXPECT_NEAR(std::accumulate(r.gradient.begin(), r.gradient.end(), 0.0), 0.0, 1e-15);
}

TEST(CrossEntropy, LargeLogitsStayFinite) {
  const auto r = cross_entropy_with_softmax(std::vector<double>{1000.0, -1000.0, 999.0}, 1);
  EXPECT_NEAR(r.loss, 2000.0 + std::log1p(std::exp(-1.0)), 1e-9);
  EXPECT_THROW(cross_entropy_with_softmax(std::vector<double>{0.0, 1.0}, 2), DimensionError);
}

TEST(Sgd, WeightDecayShrinksByFactor) {
  Model m = fixture::tiny_vgg(1, 2);
  const Model before = m;
  SgdState state = SgdState::zeros_like(m);
  const double lr = 0.1, wd = 0.01;
  sgd_step(m, state, ModelGradients::zeros_like(m), lr, 0.9, wd);
  const auto a = before.flat_parameters(), b = m.flat_parameters();
  for (std::size_t n = 0; n < a.size(); ++n) EXPECT_NEAR(b[n], a[n] * (1.0 - lr * wd), 1e-15);
}

TEST(Sgd, MomentumRecursionByHand) {
  Model m = fixture::tiny_vgg(0, 3);
  const auto w0 = m.flat_parameters();
  SgdState state = SgdState::zeros_like(m);
  ModelGradients g = ModelGradients::zeros_like(m);
  for (auto& layer : g.dense) std::fill(layer.begin(), layer.end(), 0.5);
  for (auto& bank : g.convs) std::fill(bank.begin(), bank.end(), -0.25);
  const double lr = 0.2, mu = 0.9;
  sgd_step(m, state, g, lr, mu, 0.0);
  sgd_step(m, state, g, lr, mu, 0.0);
  const auto gf = g.flat(), w2 = m.flat_parameters();
  for (std::size_t n = 0; n < w0.size(); ++n) EXPECT_NEAR(w2[n], w0[n] - lr * (2.0 + mu) * gf[n], 1e-15);
}

TEST(Sgd, MaskedWeightsAndVelocityStayZero) {
  Model m = fixture::tiny_vgg(2, 4);
  SgdState state = SgdState::zeros_like(m);
  ModelGradients g = ModelGradients::zeros_like(m);
  for (auto& layer : g.dense) std::fill(layer.begin(), layer.end(), 1.0);
  for (int k = 0; k < 5; ++k) sgd_step(m, state, g, 0.1, 0.9, 1e-3);
  const DenseLayer& first = m.dense.front();
  ASSERT_TRUE(first.has_mask());
  std::size_t masked = 0;
  for (std::size_t n = 0; n < first.weights.size(); ++n) {
    if (first.mask[n]) continue;
    ++masked;
    EXPECT_EQ(first.weights[n], 0.0);
    EXPECT_EQ(state.velocity.dense.front()[n], 0.0);
  }
  EXPECT_EQ(masked, 5u * 4u * 2u * 4u);  // hidden × channels × band rows × cols
}

TEST(Train, ZeroLearningRateLeavesParametersBitIdentical) {
  Model m = fixture::tiny_vgg(1, 5, InitScheme::he);
  const auto before = m.flat_parameters();
  TrainConfig c = quiet(2, 8, 0.0);
  c.hflip = true;
  train(m, random_dataset(24, 3, 1), c);
  EXPECT_TRUE(bit_identical(before, m.flat_parameters()));
}

TEST(Train, TwoHundredStepsLowerTheLoss) {
  Model m = fixture::tiny_vgg(1, 6, InitScheme::he);
  const LabeledDataset ds = random_dataset(64, 3, 2);
  const double start = mean_loss(m, ds);
  const TrainLog log = train(m, ds, quiet(25, 8, 0.02));
  EXPECT_EQ(log.epochs(), 25u);
  EXPECT_LT(mean_loss(m, ds), start);
  EXPECT_LT(log.loss.back(), log.loss.front());
}

TEST(Train, OverfitsTenSamples) {
  Model m = fixture::tiny_vgg(1, 7, InitScheme::he);
  const LabeledDataset ds = random_dataset(10, 3, 3);
  TrainConfig c = quiet(300, 10, 0.05);
  c.weight_decay = 0.0;
  c.schedule.interval = 1000;
  train(m, ds, c);
  EXPECT_EQ(evaluate(m, ds), 1.0);
}

TEST(Train, ReproducibleAcrossThreadCounts) {
  const LabeledDataset ds = random_dataset(40, 3, 4);
  TrainConfig c = quiet(3, 16, 0.02);
  c.hflip = true;
  Model a = fixture::tiny_vgg(1, 8, InitScheme::he), b = a;
  const TrainLog la = train(a, ds, c);
  c.threads = 3;
  const TrainLog lb = train(b, ds, c);
  EXPECT_EQ(la.to_csv(), lb.to_csv());
  EXPECT_TRUE(bit_identical(a.flat_parameters(), b.flat_parameters()));
  EXPECT_EQ(la.to_csv().substr(0, 15), "epoch,loss,acc\n");
}

TEST(Train, DivergenceNamesTheEpoch) {
  Model m = fixture::tiny_vgg(1, 9, InitScheme::he);
  TrainConfig c = quiet(5, 8, 1e150);
  c.momentum = 0.0;
  try {
    train(m, random_dataset(16, 3, 5), c);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos) << e.what();
  }
}

TEST(Train, ConfigValidation) {
  TrainConfig c;
  c.lr = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  EXPECT_NEAR(c.lr_at(9), 0.05, 1e-15);
  EXPECT_NEAR(c.lr_at(10), 0.005, 1e-15);
  EXPECT_NEAR(c.lr_at(25), 0.0005, 1e-15);
}

TEST(Evaluate, ConstantLogitsPickFirstClass) {
  Model m = fixture::tiny_vgg(1, 10);
  for (auto& layer : m.dense) std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
  LabeledDataset ds = random_dataset(10, 2, 6);
  EXPECT_EQ(evaluate(m, ds), 0.5);
  EXPECT_THROW(evaluate(m, LabeledDataset{}), ConfigError);
}

TEST(BatchGradient, MatchesPerSampleOracle) {
  const Model m = fixture::tiny_vgg(1, 11, InitScheme::he);
  const LabeledDataset ds = random_dataset(20, 3, 7);
  const std::vector<std::size_t> idx{3, 17, 0, 9, 12, 5, 6, 1, 19, 2, 8};
  std::vector<std::uint8_t> flips(idx.size());
  for (std::size_t k = 0; k < flips.size(); ++k) flips[k] = k % 3 == 0;
  ModelGradients out = ModelGradients::zeros_like(m);
  const double loss = batch_gradient(m, ds, idx, flips, 2, out);

  ModelGradients ref = ModelGradients::zeros_like(m);
  double ref_loss = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const Tensor x = flips[k] ? flip_horizontal(ds.images[idx[k]]) : ds.images[idx[k]];
    const ForwardTrace t = forward(m, x);
    const auto ce = cross_entropy_with_softmax(t.logits(), ds.labels[idx[k]]);
    ref_loss += ce.loss;
    ref.accumulate(grad_params(t, m, ce.gradient));
  }
  ref.scale(1.0 / idx.size());
  EXPECT_NEAR(loss, ref_loss / idx.size(), 1e-12);
  const auto a = out.flat(), b = ref.flat();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t n = 0; n < a.size(); ++n) EXPECT_NEAR(a[n], b[n], 1e-12);
}

TEST(Flip, MirrorsColumns) {
  const Tensor x = oracle::random_image({1, 5, 7}, 1);
  const Tensor f = flip_horizontal(x);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 7; ++j) EXPECT_EQ(f.at(0, i, j), x.at(0, i, 6 - j));
  }
  EXPECT_EQ(flip_horizontal(f), x);
}
