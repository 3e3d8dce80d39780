#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "camaudit/cam.hpp"
#include "camaudit/data.hpp"
#include "camaudit/image_io.hpp"
#include "camaudit/model.hpp"

namespace camaudit {

/// ||S[dead rows]||_2 / ||S||_2 on an H×W map; 0 for an all-zero map.
double mu(const Tensor& map, const DeadZone& dead_zone);

struct LeakageScore {
  CamMethod method = CamMethod::gradcam;
  std::size_t image = 0;
  std::size_t target = 0;
  double mu = 0.0;
  bool ok = true;
  std::string error;  // set when the method failed on this image
};

struct MethodSummary {
  CamMethod method = CamMethod::gradcam;
  std::size_t count = 0;     // successful rows
  std::size_t failures = 0;
  double mean_x100 = 0.0;
  double std_x100 = 0.0;     // population standard deviation
  double positive_fraction = 0.0;  // share of rows with mu > 0
};

struct AuditReport {
  std::string dataset;
  DeadZone dead_zone;
  std::size_t images = 0;
  std::vector<MethodSummary> methods;
  std::vector<LeakageScore> rows;  // image-major, methods in request order

  /// Canonical JSON (sorted keys).
  nlohmann::json to_json() const;
  /// One row per method: method,dataset,n,failures,mean_x100,std_x100,positive_fraction.
  std::string to_csv() const;
};

/// Mean and population std (×100) recomputed from the successful rows of `method`.
MethodSummary summarize(std::span<const LeakageScore> rows, CamMethod method);

struct AuditOptions {
  std::string dataset = "dataset";
  CamOptions cam;  // target is ignored: the predicted class is explained
  std::size_t threads = 0;
};

/// Explains the predicted class of every image with every method and
/// scores the leakage into the model's dead zone.
AuditReport run_audit(const Model& model, const LabeledDataset& dataset, std::span<const CamMethod> methods,
                      const AuditOptions& options = {});

/// First input row from which every upsampled HiResCAM value is zero by
/// construction, expressed as a fraction of the input height.
struct OverzeroRegion {
  std::size_t first_zero_row = 0;
  std::size_t height = 0;
  double fraction = 0.0;
};

OverzeroRegion hirescam_overzero_region(const ModelSpec& spec);
double hirescam_overzero_fraction(const ModelSpec& spec);

/// 256-entry jet colour table.
const std::array<std::array<std::uint8_t, 3>, 256>& jet_colormap();

/// Jet heatmap blended 50/50 with the grayscale image (1×H×W or 3×H×W),
/// with a one-pixel red outline around the dead zone.
RgbImage overlay_image(const Tensor& image, const Tensor& map_normalized, const std::optional<DeadZone>& dead_zone);

void render_overlay(const Tensor& image, const Tensor& map_normalized, const std::optional<DeadZone>& dead_zone,
                    const std::filesystem::path& path);

}  // namespace camaudit
