#include <gtest/gtest.h>

#include <cmath>

#include <camaudit/errors.hpp>
#include <camaudit/layers.hpp>
#include <camaudit/network.hpp>
#include <camaudit/rng.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace camaudit;

namespace {

ConvFilterBank random_bank(std::size_t V, std::size_t C, std::size_t k, std::size_t pad, std::uint64_t seed) {
  ConvFilterBank bank(V, C, k, pad);
  Rng rng(seed);
  bank.init_gaussian(rng, 1.0);
  return bank;
}

}  // namespace

TEST(Tensor, RejectsMismatchedDataAndRank) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), DimensionError);
  EXPECT_THROW(Tensor(std::vector<std::size_t>{1, 1, 1, 1, 1}), DimensionError);
  Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_THROW((void)t.reshaped({4}), DimensionError);
  EXPECT_EQ(t.reshaped({3, 2}).shape(), (std::vector<std::size_t>{3, 2}));
}

TEST(Conv2d, ZeroImageGivesZeroOutput) {
  const Tensor A = conv2d(Tensor({1, 8, 8}), random_bank(3, 1, 3, 0, 1));
  EXPECT_EQ(A.shape(), (std::vector<std::size_t>{3, 6, 6}));
  for (double v : A.values()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2d, UnitKernelIsIdentity) {
  ConvFilterBank bank(1, 1, 1, 0);
  bank.weights = {1.0};
  const Tensor x = oracle::random_image({1, 5, 7}, 3);
  EXPECT_EQ(conv2d(x, bank), x);
}

TEST(Conv2d, MatchesLoopOracleExactly) {
  const Tensor x = oracle::random_image({1, 4, 4}, 11);
  const ConvFilterBank bank = random_bank(1, 1, 2, 0, 12);
  const Tensor A = conv2d(x, bank);
  const Tensor ref = oracle::conv(x, bank);
  ASSERT_EQ(A.shape(), (std::vector<std::size_t>{1, 3, 3}));
  for (std::size_t n = 0; n < A.size(); ++n) EXPECT_EQ(A[n], ref[n]) << n;
}

TEST(Conv2d, PaddedMultiChannelMatchesOracle) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Tensor x = oracle::random_image({3, 7, 6}, 100 + s);
    const ConvFilterBank bank = random_bank(4, 3, 3, 1 + s % 2, 200 + s);
    const Tensor A = conv2d(x, bank);
    const Tensor ref = oracle::conv(x, bank);
    ASSERT_EQ(A.shape(), ref.shape());
    for (std::size_t n = 0; n < A.size(); ++n) EXPECT_NEAR(A[n], ref[n], 1e-12);
  }
}

TEST(Conv2d, ShapeMismatchNamesBothShapes) {
  const ConvFilterBank bank = random_bank(2, 3, 3, 0, 1);
  try {
    (void)conv2d(Tensor({1, 8, 8}), bank);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("1x8x8"), std::string::npos) << msg;
    EXPECT_NE(msg.find("3"), std::string::npos) << msg;
  }
  EXPECT_THROW((void)conv2d(Tensor({1, 2, 2}), random_bank(1, 1, 5, 0, 1)), DimensionError);
}

TEST(Conv2d, IsLinear) {
  const ConvFilterBank bank = random_bank(2, 1, 3, 1, 5);
  const Tensor x1 = oracle::random_image({1, 9, 9}, 6), x2 = oracle::random_image({1, 9, 9}, 7);
  const double a = 0.7, b = -1.3;
  Tensor mix(x1.shape());
  for (std::size_t n = 0; n < mix.size(); ++n) mix[n] = a * x1[n] + b * x2[n];
  const Tensor lhs = conv2d(mix, bank), A1 = conv2d(x1, bank), A2 = conv2d(x2, bank);
  for (std::size_t n = 0; n < lhs.size(); ++n) EXPECT_NEAR(lhs[n], a * A1[n] + b * A2[n], 1e-12);
}

TEST(Relu, Examples) {
  const std::vector<double> x{-1.0, 0.0, 2.0};
  EXPECT_EQ(relu(x), (std::vector<double>{0.0, 0.0, 2.0}));
  Tensor t = oracle::random_image({2, 3, 3}, 1);
  for (double& v : t.values()) v -= 0.5;
  EXPECT_EQ(relu(relu(t)), relu(t));
  const Tensor pos = oracle::random_image({4, 4}, 2);
  EXPECT_EQ(relu(pos), pos);
}

TEST(MaxPool, ConstantMapRoutesToFirstCell) {
  const PoolResult r = maxpool(Tensor({2, 4, 6}, 0.25), 2);
  for (double v : r.pooled.values()) EXPECT_EQ(v, 0.25);
  for (auto a : r.routing.argmax) EXPECT_EQ(a, 0u);
}

TEST(MaxPool, UnitWindowIsIdentity) {
  const Tensor x = oracle::random_image({3, 5, 5}, 9);
  EXPECT_EQ(maxpool(x, 1).pooled, x);
}

TEST(MaxPool, MatchesPatchScanOracle) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Tensor x = oracle::random_image({2, 6, 6}, s);
    // Inject ties so the tie-break is exercised.
    x.at(0, 0, 1) = x.at(0, 0, 0);
    const PoolResult r = maxpool(x, 2);
    const oracle::Pooled ref = oracle::maxpool(x, 2);
    EXPECT_EQ(r.pooled, ref.values);
    EXPECT_EQ(r.routing.argmax, ref.argmax);
  }
}

TEST(MaxPool, NonDividingWindowIsConfigError) { EXPECT_THROW((void)maxpool(Tensor({1, 5, 4}), 2), ConfigError); }

TEST(MaxPool, RoutingPartitionAndScatterRoundTrip) {
  const Tensor x = oracle::random_image({3, 8, 6}, 4);
  const PoolResult r = maxpool(x, 2);
  // Scatter C onto the routed cells, then pool again: C is reproduced and every window has one routed cell.
  const Tensor scattered = maxpool_backward(r.routing, r.pooled, x.shape());
  std::size_t nonzero = 0;
  for (double v : scattered.values()) nonzero += v != 0.0;
  EXPECT_EQ(nonzero, r.pooled.size());
  EXPECT_EQ(maxpool(scattered, 2).pooled, r.pooled);
  for (std::size_t v = 0; v < 3; ++v) {
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(x[r.routing.source_index(v, i, j)], r.pooled.at(v, i, j));
    }
  }
}

TEST(Dense, IdentityAndMaskAndLoopOracle) {
  DenseLayer id(4, 4);
  for (std::size_t i = 0; i < 4; ++i) id.weight(i, i) = 1.0;
  const std::vector<double> x{0.5, -2.0, 3.0, 0.0};
  EXPECT_EQ(dense_forward(x, id, false), x);

  DenseLayer masked(3, 4);
  Rng rng(3);
  masked.mask.assign(12, 0);
  masked.init_gaussian(rng, 1.0);
  for (double v : dense_forward(x, masked, false)) EXPECT_EQ(v, 0.0);

  DenseLayer w(5, 7);
  w.init_gaussian(rng, 1.0);
  const std::vector<double> x7{0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7};
  const auto y = dense_forward(x7, w, false);
  const auto ref = oracle::dense(x7, w, false);
  for (std::size_t r = 0; r < 5; ++r) EXPECT_NEAR(y[r], ref[r], 1e-14);
  EXPECT_THROW((void)dense_forward(x, w, false), DimensionError);
}

TEST(Forward, TraceInvariantsAndOracleLogits) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Model m = fixture::tiny_vgg(2, s);
    const Tensor x = oracle::random_image({1, 16, 16}, 50 + s);
    const ForwardTrace t = forward(m, x);
    for (const auto& st : t.stages) {
      for (std::size_t n = 0; n < st.A.size(); ++n) EXPECT_EQ(st.B[n], std::max(st.A[n], 0.0));
    }
    EXPECT_EQ(t.flat, t.stages.back().C.values());
    const auto ref = oracle::logits(m, x);
    for (std::size_t c = 0; c < ref.size(); ++c) EXPECT_NEAR(t.logits()[c], ref[c], 1e-12);
    EXPECT_EQ(predict(m, x), t.logits());
  }
}

TEST(GradWrtB, MatchesCentralDifferences) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Model m = fixture::model_m(1 + s % 3, 4, s, 2);
    const Tensor x = oracle::random_image({1, 12, 12}, 70 + s);
    const ForwardTrace t = forward(m, x);
    const Tensor g = grad_output_wrt_B(t, m, 1);
    Rng rng(s);
    for (std::size_t trial = 0; trial < 50; ++trial) {
      const std::size_t n = rng.index(g.size());
      Tensor B = t.B();
      const double scale = std::max(std::abs(B[n]), 1.0);
      const double h = 1e-4 * scale;
      // Cells on a pooling tie are not differentiable; skip them.
      const std::size_t rows = B.dim(1), cols = B.dim(2), c = n / (rows * cols), i = n / cols % rows, j = n % cols;
      bool tie = false;
      for (std::size_t a = i / 2 * 2; a < i / 2 * 2 + 2; ++a) {
        for (std::size_t b = j / 2 * 2; b < j / 2 * 2 + 2; ++b) {
          if ((a != i || b != j) && std::abs(B.at(c, a, b) - B[n]) <= 2.0 * h) tie = true;
        }
      }
      if (tie) continue;
      const double fd = oracle::central_difference(
          [&](double v) {
            B[n] = v;
            return oracle::logits_from_B(m, B)[1];
          },
          t.B()[n], h);
      if (std::abs(g[n] - fd) > 1e-5 * std::max({std::abs(g[n]), std::abs(fd), 1e-3})) {
        ADD_FAILURE() << "seed " << s << " cell " << n << " grad " << g[n] << " fd " << fd;
      }
    }
  }
}

TEST(GradWrtB, MaskedRowsAreExactlyZero) {
  const Model m = fixture::model_m(1, 3, 4, 1, 12, 3, 2, 2);  // pooled 5 rows, bottom 2 masked
  const ForwardTrace t = forward(m, oracle::random_image({1, 12, 12}, 1));
  const Tensor g = grad_output_wrt_B(t, m, 0);
  for (std::size_t v = 0; v < 3; ++v) {
    for (std::size_t i = 6; i < 10; ++i) {
      for (std::size_t j = 0; j < 10; ++j) EXPECT_EQ(g.at(v, i, j), 0.0);
    }
  }
}

TEST(GradWrtB, LinearCaseEqualsReshapedWeights) {
  ModelMConfig c;
  c.height = 6;
  c.width = 6;
  c.kernel = 3;
  c.filters = 2;
  c.pool = 1;
  c.dense_widths = {1};
  c.seed = 8;
  const Model m = build_model_m(c);
  const ForwardTrace t = forward(m, oracle::random_image({1, 6, 6}, 2));
  const Tensor g = grad_output_wrt_B(t, m, 0);
  ASSERT_EQ(g.size(), m.dense[0].weights.size());
  for (std::size_t n = 0; n < g.size(); ++n) EXPECT_EQ(g[n], m.dense[0].weights[n]);
}

TEST(GradParams, ZeroLossGradientGivesZero) {
  const Model m = fixture::tiny_vgg(2, 1);
  const ForwardTrace t = forward(m, oracle::random_image({1, 16, 16}, 1));
  for (double v : grad_params(t, m, std::vector<double>(3, 0.0)).flat()) EXPECT_EQ(v, 0.0);
}

TEST(GradParams, MatchesCentralDifferencesAndRespectsMask) {
  for (std::uint64_t s = 0; s < 4; ++s) {
    const Model m = fixture::tiny_vgg(2, s);
    const Tensor x = oracle::random_image({1, 16, 16}, 30 + s);
    const ForwardTrace t = forward(m, x);
    const std::vector<double> lg{0.3, -1.0, 0.7};
    const ModelGradients g = grad_params(t, m, lg, true);
    const std::vector<double> flat = g.flat();
    const std::vector<double> params = m.flat_parameters();
    const DenseLayer& first = m.dense.front();
    std::size_t offset = 0;
    for (const auto& c : m.convs) offset += c.weights.size();
    for (std::size_t n = 0; n < first.weights.size(); ++n) {
      if (!first.trainable(n / first.cols, n % first.cols)) EXPECT_EQ(flat[offset + n], 0.0);
    }
    auto objective = [&](const Model& mm) {
      const auto y = oracle::logits(mm, x);
      double acc = 0.0;
      for (std::size_t c = 0; c < 3; ++c) acc += lg[c] * y[c];
      return acc;
    };
    Rng rng(s + 99);
    std::size_t checked = 0;
    while (checked < 50) {
      const std::size_t n = rng.index(params.size());
      if (n >= offset && n - offset < first.weights.size() &&
          !first.trainable((n - offset) / first.cols, (n - offset) % first.cols)) {
        continue;
      }
      Model probe = m;
      std::vector<double> p = params;
      const double h = 1e-5 * std::max(std::abs(params[n]), 1.0);
      const double fd = oracle::central_difference(
          [&](double v) {
            p[n] = v;
            probe.set_flat_parameters(p);
            return objective(probe);
          },
          params[n], h);
      EXPECT_LE(oracle::rel_err(flat[n], fd, 1e-4), 1e-5) << "param " << n << " grad " << flat[n] << " fd " << fd;
      ++checked;
    }
    // Input gradient against differences on a few pixels.
    ASSERT_TRUE(g.input.has_value());
    for (std::size_t trial = 0; trial < 10; ++trial) {
      const std::size_t n = rng.index(x.size());
      Tensor xx = x;
      const double fd = oracle::central_difference(
          [&](double v) {
            xx[n] = v;
            const auto y = oracle::logits(m, xx);
            return lg[0] * y[0] + lg[1] * y[1] + lg[2] * y[2];
          },
          x[n], 1e-5);
      EXPECT_LE(oracle::rel_err((*g.input)[n], fd, 1e-4), 1e-5);
    }
  }
}

TEST(GradParams, TraceFromAnotherModelIsRejected) {
  const Model a = fixture::tiny_vgg(2, 1);
  const Model b = fixture::model_m(1, 2, 1);
  const ForwardTrace t = forward(b, oracle::random_image({1, 12, 12}, 1));
  EXPECT_THROW((void)grad_output_wrt_B(t, a, 0), DimensionError);
}
