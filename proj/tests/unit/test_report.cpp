#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>

#include <camaudit/errors.hpp>
#include <camaudit/image_io.hpp>
#include <camaudit/report.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace camaudit;
namespace fs = std::filesystem;

namespace {

DeadZone zone(std::size_t first, std::size_t height) {
  return DeadZone{first, height, static_cast<double>(height - first) / static_cast<double>(height)};
}

LabeledDataset random_dataset(std::size_t n, std::uint64_t seed) {
  LabeledDataset ds;
  for (std::size_t k = 0; k < n; ++k) {
    ds.images.push_back(oracle::random_image({1, 16, 16}, seed + k));
    ds.labels.push_back(k % 3);
  }
  ds.class_names = {"0", "1", "2"};
  return ds;
}

// First row r such that upsampling a map that is 1 on unmasked grid rows and 0 on masked ones is zero from r down.
std::size_t oracle_overzero_row(const ModelSpec& spec) {
  const Extents grid = spec.feature_grid();
  Tensor m({grid.rows, grid.cols});
  for (std::size_t i = 0; i + spec.band_rows() < grid.rows; ++i) {
    for (std::size_t j = 0; j < grid.cols; ++j) m.at(i, j) = 1.0;
  }
  const std::size_t H = spec.input.rows, W = spec.input.cols;
  std::size_t r = H;
  while (r > 0 && oracle::bilinear_at(m, H, W, r - 1, W / 2) == 0.0) --r;
  return r;
}

// Piecewise-linear jet channel from its (x, y) breakpoints.
double segment(const std::vector<std::pair<double, double>>& pts, double x) {
  for (std::size_t k = 1; k < pts.size(); ++k) {
    if (x <= pts[k].first) {
      const auto [x0, y0] = pts[k - 1];
      const auto [x1, y1] = pts[k];
      return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
    }
  }
  return pts.back().second;
}

}  // namespace

TEST(Mu, HandValues) {
  const Tensor m({4, 1}, {3.0, 0.0, 0.0, 4.0});
  EXPECT_NEAR(mu(m, zone(2, 4)), 0.8, 1e-15);
  EXPECT_EQ(mu(Tensor({4, 1}), zone(2, 4)), 0.0);
  EXPECT_EQ(mu(Tensor({4, 1}, {1.0, 2.0, 0.0, 0.0}), zone(2, 4)), 0.0);
  EXPECT_EQ(mu(Tensor({4, 1}, {0.0, 0.0, 0.0, 2.0}), zone(2, 4)), 1.0);
}

TEST(Mu, ScaleInvariantAndMonotone) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Tensor m = oracle::random_image({10, 6}, s);
    const double base = mu(m, zone(6, 10));
    Tensor scaled = m;
    for (double& v : scaled.values()) v *= 7.5;
    EXPECT_NEAR(mu(scaled, zone(6, 10)), base, 1e-14);
    EXPECT_GE(base, 0.0);
    EXPECT_LE(base, 1.0);
    m.at(8, 3) += 1.0;
    EXPECT_GT(mu(m, zone(6, 10)), base);
    EXPECT_GE(mu(m, zone(5, 10)), mu(m, zone(6, 10)));
  }
}

TEST(Audit, HiResCamHasNoDeadZoneMass) {
  const Model m = fixture::tiny_vgg(2, 1);
  const DeadZone z = *compute_dead_zone(m.spec);
  ASSERT_LE(hirescam_overzero_region(m.spec).first_zero_row, z.first_dead_row);
  const std::vector<CamMethod> methods{CamMethod::hirescam, CamMethod::gradcam};
  const AuditReport r = run_audit(m, random_dataset(8, 3), methods, {.dataset = "rand", .threads = 2});
  ASSERT_EQ(r.rows.size(), 16u);
  for (const auto& row : r.rows) {
    if (row.method == CamMethod::hirescam) EXPECT_EQ(row.mu, 0.0);
  }
  EXPECT_EQ(r.methods[0].mean_x100, 0.0);
  EXPECT_EQ(r.methods[0].positive_fraction, 0.0);
}

TEST(Audit, RowsExplainPredictionAndMatchDirectScore) {
  const Model m = fixture::tiny_vgg(2, 5);
  const LabeledDataset ds = random_dataset(5, 10);
  const std::vector<CamMethod> methods{CamMethod::gradcam, CamMethod::eigencam};
  const AuditReport r = run_audit(m, ds, methods);
  const DeadZone z = *compute_dead_zone(m.spec);
  for (const auto& row : r.rows) {
    const ForwardTrace t = forward(m, ds.images[row.image]);
    EXPECT_EQ(row.target, argmax(t.logits()));
    EXPECT_EQ(row.mu, mu(explain(row.method, t, m).upsampled, z));
  }
}

TEST(Audit, SummaryClosesOverRows) {
  const Model m = fixture::tiny_vgg(2, 6);
  const AuditReport r = run_audit(m, random_dataset(12, 20), all_methods(), {.dataset = "rand"});
  ASSERT_EQ(r.methods.size(), 8u);
  for (const auto& s : r.methods) {
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0, failures = 0, positive = 0;
    for (const auto& row : r.rows) {
      if (row.method != s.method) continue;
      if (!row.ok) {
        ++failures;
        continue;
      }
      ++n;
      sum += 100.0 * row.mu;
      sq += 1e4 * row.mu * row.mu;
      positive += row.mu > 0.0;
    }
    ASSERT_EQ(s.count, n);
    EXPECT_EQ(s.failures, failures);
    if (n == 0) continue;
    const double mean = sum / n;
    EXPECT_NEAR(s.mean_x100, mean, 1e-12);
    EXPECT_NEAR(s.std_x100, std::sqrt(std::max(0.0, sq / n - mean * mean)), 1e-9);
    EXPECT_NEAR(s.positive_fraction, static_cast<double>(positive) / n, 1e-15);
  }
  const std::string csv = r.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "method,dataset,n,failures,mean_x100,std_x100,positive_fraction");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 9);
  const auto json = r.to_json();
  EXPECT_EQ(json["rows"].size(), 96u);
  EXPECT_EQ(json.begin().key(), "dataset");
  EXPECT_EQ(json.dump(), run_audit(m, random_dataset(12, 20), all_methods(), {.dataset = "rand", .threads = 3}).to_json().dump());
}

TEST(Audit, EdgeCases) {
  const Model m = fixture::tiny_vgg(2, 7);
  const AuditReport empty = run_audit(m, random_dataset(3, 0), std::vector<CamMethod>{});
  EXPECT_TRUE(empty.rows.empty());
  EXPECT_TRUE(empty.methods.empty());
  const Model open = fixture::tiny_vgg(0, 7);
  EXPECT_THROW(run_audit(open, random_dataset(3, 0), all_methods()), ConfigError);
}

TEST(Overzero, FullScaleGeometry) {
  const OverzeroRegion r = hirescam_overzero_region(vgg16_masked_spec());
  EXPECT_EQ(r.first_zero_row, 88u);
  EXPECT_EQ(r.height, 224u);
  EXPECT_NEAR(r.fraction, 0.607, 5e-4);
  EXPECT_EQ(r.first_zero_row, oracle_overzero_row(vgg16_masked_spec()));
}

TEST(Overzero, MatchesOracleAcrossBands) {
  for (std::size_t band = 1; band < 14; ++band) {
    const ModelSpec spec = mini_masked_vgg_spec({.band_rows = band});
    EXPECT_EQ(hirescam_overzero_region(spec).first_zero_row, oracle_overzero_row(spec)) << band;
  }
  EXPECT_EQ(hirescam_overzero_fraction(mini_masked_vgg_spec({.band_rows = 0})), 0.0);
  EXPECT_THROW(hirescam_overzero_region(build_model_m({}).spec), ConfigError);
}

TEST(Overzero, EmpiricalScan) {
  const Model m = fixture::tiny_vgg(2, 9);
  const std::size_t first = hirescam_overzero_region(m.spec).first_zero_row;
  bool above_seen = false;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const SaliencyMap map = hirescam(forward(m, oracle::random_image({1, 16, 16}, s)), m);
    for (std::size_t i = first; i < 16; ++i) {
      for (std::size_t j = 0; j < 16; ++j) ASSERT_EQ(map.upsampled.at(i, j), 0.0);
    }
    for (std::size_t j = 0; j < 16; ++j) above_seen |= map.upsampled.at(first - 1, j) > 0.0;
  }
  EXPECT_TRUE(above_seen);
}

TEST(Colormap, EndpointsAndSegments) {
  const auto& jet = jet_colormap();
  EXPECT_EQ(jet[0], (std::array<std::uint8_t, 3>{0, 0, 128}));
  EXPECT_EQ(jet[128], (std::array<std::uint8_t, 3>{125, 255, 122}));
  EXPECT_EQ(jet[255], (std::array<std::uint8_t, 3>{128, 0, 0}));
  const std::vector<std::pair<double, double>> r{{0, 0}, {0.35, 0}, {0.66, 1}, {0.89, 1}, {1, 0.5}};
  const std::vector<std::pair<double, double>> g{{0, 0}, {0.125, 0}, {0.375, 1}, {0.64, 1}, {0.91, 0}, {1, 0}};
  const std::vector<std::pair<double, double>> b{{0, 0.5}, {0.11, 1}, {0.34, 1}, {0.65, 0}, {1, 0}};
  for (std::size_t k = 0; k < 256; ++k) {
    const double x = k / 255.0;
    EXPECT_NEAR(jet[k][0], segment(r, x) * 255.0, 0.5 + 1e-9) << k;
    EXPECT_NEAR(jet[k][1], segment(g, x) * 255.0, 0.5 + 1e-9) << k;
    EXPECT_NEAR(jet[k][2], segment(b, x) * 255.0, 0.5 + 1e-9) << k;
  }
}

TEST(Overlay, HandPixelsAndOutline) {
  Tensor img({1, 8, 8});
  Tensor map({8, 8});
  img.at(0, 2, 3) = 1.0;
  map.at(2, 3) = 1.0;
  const RgbImage o = overlay_image(img, map, zone(6, 8));
  EXPECT_EQ(o.at(0, 1)[0], 0);  // zero image, zero map: half of jet[0]
  EXPECT_EQ(o.at(0, 1)[1], 0);
  EXPECT_EQ(o.at(0, 1)[2], 64);
  EXPECT_EQ(o.at(2, 3)[0], 192);
  EXPECT_EQ(o.at(2, 3)[1], 128);
  EXPECT_EQ(o.at(2, 3)[2], 128);
  for (std::size_t j = 0; j < 8; ++j) {
    for (std::size_t row : {6, 7}) EXPECT_EQ(o.at(row, j)[0], 255);
  }
  EXPECT_EQ(o.at(5, 0)[2], 64);   // outline starts at the first dead row
  EXPECT_EQ(o.at(6, 0)[2], 0);
  EXPECT_EQ(o.at(7, 7)[1], 0);
  EXPECT_THROW(overlay_image(img, Tensor({4, 4}), std::nullopt), DimensionError);
}

TEST(Overlay, GoldenFixture) {
  Tensor img({1, 8, 8});
  Tensor map({8, 8});
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < 8; ++j) {
      img.at(0, i, j) = i / 7.0;
      map.at(i, j) = j / 7.0;
    }
  }
  const RgbImage o = overlay_image(img, map, zone(5, 8));
  const fs::path golden = fs::path(CAMAUDIT_TEST_DATA) / "overlay_8x8.ppm";
  if (std::getenv("CAMAUDIT_WRITE_GOLDEN")) write_ppm(golden, o);
  EXPECT_EQ(read_ppm(golden), o);
  // row 3, col 7: base round(3/7·255) = 109, heat jet[255] = {128, 0, 0}
  EXPECT_EQ(o.at(3, 7)[0], (109 + 128 + 1) / 2);
  EXPECT_EQ(o.at(3, 7)[1], (109 + 0 + 1) / 2);
  const fs::path out = fs::temp_directory_path() / "camaudit_overlay" / "o.ppm";
  render_overlay(img, map, zone(5, 8), out);
  EXPECT_EQ(read_ppm(out), o);
}
