#include "camaudit/report.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "camaudit/errors.hpp"
#include "camaudit/parallel.hpp"
#include "camaudit/resample.hpp"

namespace camaudit {

namespace {

constexpr std::array<std::array<std::uint8_t, 3>, 256> kJet = {{
    {0, 0, 128}, {0, 0, 132}, {0, 0, 137}, {0, 0, 141}, {0, 0, 146}, {0, 0, 150},
    {0, 0, 155}, {0, 0, 159}, {0, 0, 164}, {0, 0, 168}, {0, 0, 173}, {0, 0, 178},
    {0, 0, 182}, {0, 0, 187}, {0, 0, 191}, {0, 0, 196}, {0, 0, 200}, {0, 0, 205},
    {0, 0, 209}, {0, 0, 214}, {0, 0, 218}, {0, 0, 223}, {0, 0, 228}, {0, 0, 232},
    {0, 0, 237}, {0, 0, 241}, {0, 0, 246}, {0, 0, 250}, {0, 0, 255}, {0, 0, 255},
    {0, 0, 255}, {0, 0, 255}, {0, 0, 255}, {0, 5, 255}, {0, 8, 255}, {0, 13, 255},
    {0, 16, 255}, {0, 21, 255}, {0, 24, 255}, {0, 29, 255}, {0, 33, 255}, {0, 37, 255},
    {0, 41, 255}, {0, 45, 255}, {0, 49, 255}, {0, 53, 255}, {0, 57, 255}, {0, 61, 255},
    {0, 65, 255}, {0, 69, 255}, {0, 73, 255}, {0, 77, 255}, {0, 81, 255}, {0, 85, 255},
    {0, 89, 255}, {0, 93, 255}, {0, 97, 255}, {0, 101, 255}, {0, 105, 255}, {0, 109, 255},
    {0, 113, 255}, {0, 117, 255}, {0, 121, 255}, {0, 125, 255}, {0, 129, 255}, {0, 132, 255},
    {0, 137, 255}, {0, 141, 255}, {0, 145, 255}, {0, 148, 255}, {0, 153, 255}, {0, 157, 255},
    {0, 161, 255}, {0, 164, 255}, {0, 169, 255}, {0, 173, 255}, {0, 177, 255}, {0, 180, 255},
    {0, 185, 255}, {0, 189, 255}, {0, 193, 255}, {0, 196, 255}, {0, 201, 255}, {0, 205, 255},
    {0, 209, 255}, {0, 212, 255}, {0, 217, 255}, {0, 221, 254}, {0, 225, 251}, {0, 228, 248},
    {2, 233, 244}, {6, 237, 241}, {9, 241, 238}, {12, 244, 235}, {15, 249, 231}, {19, 253, 228},
    {22, 255, 225}, {25, 255, 222}, {28, 255, 219}, {31, 255, 215}, {35, 255, 212}, {38, 255, 209},
    {41, 255, 206}, {44, 255, 202}, {48, 255, 199}, {51, 255, 196}, {54, 255, 193}, {57, 255, 190},
    {60, 255, 186}, {64, 255, 183}, {67, 255, 180}, {70, 255, 177}, {73, 255, 173}, {77, 255, 170},
    {80, 255, 167}, {83, 255, 164}, {86, 255, 160}, {90, 255, 157}, {93, 255, 154}, {96, 255, 151},
    {99, 255, 148}, {102, 255, 144}, {106, 255, 141}, {109, 255, 138}, {112, 255, 135}, {115, 255, 131},
    {119, 255, 128}, {122, 255, 125}, {125, 255, 122}, {128, 255, 119}, {131, 255, 115}, {135, 255, 112},
    {138, 255, 109}, {141, 255, 106}, {144, 255, 102}, {148, 255, 99}, {151, 255, 96}, {154, 255, 93},
    {157, 255, 90}, {160, 255, 86}, {164, 255, 83}, {167, 255, 80}, {170, 255, 77}, {173, 255, 73},
    {177, 255, 70}, {180, 255, 67}, {183, 255, 64}, {186, 255, 60}, {190, 255, 57}, {193, 255, 54},
    {196, 255, 51}, {199, 255, 48}, {202, 255, 44}, {206, 255, 41}, {209, 255, 38}, {212, 255, 35},
    {215, 255, 31}, {219, 255, 28}, {222, 255, 25}, {225, 255, 22}, {228, 255, 19}, {231, 255, 15},
    {235, 255, 12}, {238, 255, 9}, {241, 252, 6}, {244, 248, 2}, {248, 245, 0}, {251, 241, 0},
    {254, 237, 0}, {255, 234, 0}, {255, 230, 0}, {255, 226, 0}, {255, 222, 0}, {255, 219, 0},
    {255, 215, 0}, {255, 211, 0}, {255, 208, 0}, {255, 204, 0}, {255, 200, 0}, {255, 196, 0},
    {255, 193, 0}, {255, 189, 0}, {255, 185, 0}, {255, 182, 0}, {255, 178, 0}, {255, 174, 0},
    {255, 171, 0}, {255, 167, 0}, {255, 163, 0}, {255, 159, 0}, {255, 156, 0}, {255, 152, 0},
    {255, 148, 0}, {255, 145, 0}, {255, 141, 0}, {255, 137, 0}, {255, 134, 0}, {255, 130, 0},
    {255, 126, 0}, {255, 122, 0}, {255, 119, 0}, {255, 115, 0}, {255, 111, 0}, {255, 108, 0},
    {255, 104, 0}, {255, 100, 0}, {255, 96, 0}, {255, 93, 0}, {255, 89, 0}, {255, 85, 0},
    {255, 82, 0}, {255, 78, 0}, {255, 74, 0}, {255, 71, 0}, {255, 67, 0}, {255, 63, 0},
    {255, 59, 0}, {255, 56, 0}, {255, 52, 0}, {255, 48, 0}, {255, 45, 0}, {255, 41, 0},
    {255, 37, 0}, {255, 34, 0}, {255, 30, 0}, {255, 26, 0}, {255, 22, 0}, {255, 19, 0},
    {250, 15, 0}, {246, 11, 0}, {241, 8, 0}, {237, 4, 0}, {232, 0, 0}, {228, 0, 0},
    {223, 0, 0}, {218, 0, 0}, {214, 0, 0}, {209, 0, 0}, {205, 0, 0}, {200, 0, 0},
    {196, 0, 0}, {191, 0, 0}, {187, 0, 0}, {182, 0, 0}, {177, 0, 0}, {173, 0, 0},
    {168, 0, 0}, {164, 0, 0}, {159, 0, 0}, {155, 0, 0}, {150, 0, 0}, {146, 0, 0},
    {141, 0, 0}, {137, 0, 0}, {132, 0, 0}, {128, 0, 0},}};

}  // namespace

const std::array<std::array<std::uint8_t, 3>, 256>& jet_colormap() { return kJet; }

double mu(const Tensor& map, const DeadZone& dead_zone) {
  if (map.rank() != 2) throw DimensionError("mu expects an H×W map, got " + shape_string(map.shape()));
  if (map.dim(0) != dead_zone.height) {
    throw DimensionError("map height " + std::to_string(map.dim(0)) + " differs from dead-zone height " +
                         std::to_string(dead_zone.height));
  }
  double dead = 0.0, total = 0.0;
  for (std::size_t i = 0; i < map.dim(0); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < map.dim(1); ++j) row += map.at(i, j) * map.at(i, j);
    total += row;
    if (i >= dead_zone.first_dead_row) dead += row;
  }
  return total > 0.0 ? std::sqrt(dead) / std::sqrt(total) : 0.0;
}

MethodSummary summarize(std::span<const LeakageScore> rows, CamMethod method) {
  MethodSummary s;
  s.method = method;
  double sum = 0.0;
  std::size_t positive = 0;
  for (const auto& r : rows) {
    if (r.method != method) continue;
    if (!r.ok) {
      ++s.failures;
      continue;
    }
    ++s.count;
    sum += r.mu;
    if (r.mu > 0.0) ++positive;
  }
  if (s.count == 0) return s;
  const double mean = sum / static_cast<double>(s.count);
  double sq = 0.0;
  for (const auto& r : rows) {
    if (r.method == method && r.ok) sq += (r.mu - mean) * (r.mu - mean);
  }
  s.mean_x100 = 100.0 * mean;
  s.std_x100 = 100.0 * std::sqrt(sq / static_cast<double>(s.count));
  s.positive_fraction = static_cast<double>(positive) / static_cast<double>(s.count);
  return s;
}

nlohmann::json AuditReport::to_json() const {
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& m : methods) {
    summary.push_back({{"method", std::string(method_name(m.method))},
                       {"count", m.count},
                       {"failures", m.failures},
                       {"mean_x100", m.mean_x100},
                       {"std_x100", m.std_x100},
                       {"positive_fraction", m.positive_fraction}});
  }
  nlohmann::json per_image = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row = {{"method", std::string(method_name(r.method))},
                          {"image", r.image},
                          {"target", r.target},
                          {"mu", r.mu},
                          {"ok", r.ok}};
    if (!r.ok) row["error"] = r.error;
    per_image.push_back(std::move(row));
  }
  return {{"dataset", dataset},
          {"images", images},
          {"dead_zone",
           {{"first_dead_row", dead_zone.first_dead_row},
            {"height", dead_zone.height},
            {"fraction", dead_zone.fraction}}},
          {"methods", summary},
          {"rows", per_image}};
}

std::string AuditReport::to_csv() const {
  std::ostringstream out;
  out << "method,dataset,n,failures,mean_x100,std_x100,positive_fraction\n";
  char buf[160];
  for (const auto& m : methods) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.6f,%.6f,%.6f", m.count, m.failures, m.mean_x100, m.std_x100,
                  m.positive_fraction);
    out << method_name(m.method) << ',' << dataset << ',' << buf << '\n';
  }
  return out.str();
}

AuditReport run_audit(const Model& model, const LabeledDataset& dataset, std::span<const CamMethod> methods,
                      const AuditOptions& options) {
  const std::optional<DeadZone> zone = compute_dead_zone(model.spec);
  if (!zone) throw ConfigError("the audit needs a masked model");
  AuditReport report;
  report.dataset = options.dataset;
  report.dead_zone = *zone;
  report.images = dataset.size();
  if (methods.empty()) return report;
  if (dataset.empty()) throw ConfigError("cannot audit an empty dataset");

  const std::size_t m_count = methods.size();
  report.rows.resize(dataset.size() * m_count);
  const std::size_t threads = options.threads == 0 ? default_thread_count() : options.threads;
  parallel_for(dataset.size(), threads, [&](std::size_t n) {
    const ForwardTrace trace = forward(model, dataset.images[n]);
    CamOptions cam = options.cam;
    cam.target = argmax(trace.logits());
    for (std::size_t k = 0; k < m_count; ++k) {
      LeakageScore& row = report.rows[n * m_count + k];
      row.method = methods[k];
      row.image = n;
      row.target = *cam.target;
      try {
        const SaliencyMap map = explain(methods[k], trace, model, cam);
        row.mu = mu(map.upsampled, *zone);
      } catch (const Error& e) {
        row.ok = false;
        row.error = e.what();
      }
    }
  });
  for (CamMethod m : methods) report.methods.push_back(summarize(report.rows, m));
  return report;
}

OverzeroRegion hirescam_overzero_region(const ModelSpec& spec) {
  if (!spec.mask) throw ConfigError("HiResCAM over-zeroing is only defined for a masked model");
  OverzeroRegion out;
  out.height = spec.input.rows;
  out.first_zero_row = out.height;
  const std::size_t band = spec.mask->band_rows;
  if (band == 0) return out;
  // Rows of B that feed only masked pooled rows carry zero gradient.
  const std::size_t last = spec.convs.size() - 1;
  const std::size_t zero_from = (spec.feature_grid().rows - band) * spec.convs[last].pool;
  const std::vector<LinearTap> taps = linear_taps(spec.conv_output(last).rows, out.height);
  for (std::size_t r = out.height; r-- > 0;) {
    const LinearTap& t = taps[r];
    const bool lo_zero = t.w_lo == 0.0 || t.lo >= zero_from;
    const bool hi_zero = t.w_hi == 0.0 || t.hi >= zero_from;
    if (!(lo_zero && hi_zero)) break;
    out.first_zero_row = r;
  }
  out.fraction = static_cast<double>(out.height - out.first_zero_row) / static_cast<double>(out.height);
  return out;
}

double hirescam_overzero_fraction(const ModelSpec& spec) { return hirescam_overzero_region(spec).fraction; }

RgbImage overlay_image(const Tensor& image, const Tensor& map_normalized, const std::optional<DeadZone>& dead_zone) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
    throw DimensionError("overlay expects a 1×H×W or 3×H×W image, got " + shape_string(image.shape()));
  }
  const std::size_t rows = image.dim(1), cols = image.dim(2);
  if (map_normalized.rank() != 2 || map_normalized.dim(0) != rows || map_normalized.dim(1) != cols) {
    throw DimensionError("overlay map " + shape_string(map_normalized.shape()) + " does not match image " +
                         shape_string(image.shape()));
  }
  RgbImage out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const auto& heat = kJet[quantize(map_normalized.at(i, j))];
      std::uint8_t* px = out.at(i, j);
      for (std::size_t c = 0; c < 3; ++c) {
        const std::uint8_t base = quantize(image.at(image.dim(0) == 1 ? 0 : c, i, j));
        px[c] = static_cast<std::uint8_t>((base + heat[c] + 1) / 2);
      }
    }
  }
  if (dead_zone && !dead_zone->empty()) {
    if (dead_zone->height != rows) throw DimensionError("dead zone height does not match the overlay");
    auto paint = [&](std::size_t i, std::size_t j) {
      std::uint8_t* px = out.at(i, j);
      px[0] = 255;
      px[1] = 0;
      px[2] = 0;
    };
    for (std::size_t j = 0; j < cols; ++j) {
      paint(dead_zone->first_dead_row, j);
      paint(rows - 1, j);
    }
    for (std::size_t i = dead_zone->first_dead_row; i < rows; ++i) {
      paint(i, 0);
      paint(i, cols - 1);
    }
  }
  return out;
}

void render_overlay(const Tensor& image, const Tensor& map_normalized, const std::optional<DeadZone>& dead_zone,
                    const std::filesystem::path& path) {
  write_ppm(path, overlay_image(image, map_normalized, dead_zone));
}

}  // namespace camaudit
