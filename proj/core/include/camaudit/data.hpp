#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "camaudit/tensor.hpp"

namespace camaudit {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Images (1×H×W, values in [0, 1]) with class indices.
struct LabeledDataset {
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
  std::vector<std::string> class_names;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
  std::size_t class_count() const;
  /// Throws when lengths differ, shapes differ or a pixel is outside [0, 1].
  void validate() const;
  LabeledDataset subset(std::span<const std::size_t> indices) const;
};

/// Decoded IDX payload (unsigned-byte element type).
struct IdxArray {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;
};

/// Big-endian IDX decoding. Accepts the image (0x803) and label (0x801)
/// magics; MagicMismatchError, TruncationError and DimensionOverflowError
/// report the three failure modes.
IdxArray parse_idx(std::span<const std::uint8_t> bytes);
IdxArray parse_idx(const std::filesystem::path& path);

/// Images as 1×rows×cols tensors scaled by 1/255.
std::vector<Tensor> idx_images(const IdxArray& array);
std::vector<std::size_t> idx_labels(const IdxArray& array);

std::string encode_idx_images(const std::vector<Tensor>& images);
std::string encode_idx_labels(const std::vector<std::size_t>& labels);

LabeledDataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Top slice [0, split_row) from the first image, bottom slice from the second.
struct StackSpec {
  std::size_t split_row = 28;
  std::size_t rows = 56;
  std::size_t cols = 56;
};

/// A pair of same-class source indices used by one composite.
struct CompositePair {
  std::size_t top = 0;
  std::size_t bottom = 0;
  std::size_t label = 0;
};

/// Same-class pairs, drawn without replacement within each class pool;
/// the pool is reshuffled when exhausted. Classes ascend; `per_class`
/// pairs each. Throws ConfigError when a class has fewer than 2 images.
std::vector<CompositePair> sample_pairs(const LabeledDataset& ds, std::size_t per_class, std::uint64_t seed);

/// Row-stacked composites of same-class pairs from an already canvas-sized dataset.
LabeledDataset compose_stack_mix(const LabeledDataset& ds, const StackSpec& spec, std::size_t per_class, std::uint64_t seed,
                                 std::vector<CompositePair>* pairs = nullptr);

/// Places 28×28 digits on a canvas: the first digit in the top 28 rows,
/// the second in the bottom 28 rows, both horizontally centred; rows
/// below split_row come from the second digit.
LabeledDataset stack_mnist(const LabeledDataset& digits, std::size_t canvas, std::size_t split_row, std::size_t per_class,
                           std::uint64_t seed, std::vector<CompositePair>* pairs = nullptr);

/// Writes images as PGM files under dir/images and a manifest.json of
/// {"class_names": [...], "items": [{"path", "label"}]}.
void save_manifest(const LabeledDataset& ds, const std::filesystem::path& dir);
LabeledDataset load_manifest(const std::filesystem::path& manifest);

/// IDX pair (images, labels) or a manifest.json, chosen by extension.
LabeledDataset load_dataset(const std::filesystem::path& path, const std::filesystem::path& labels = {});

}  // namespace camaudit
