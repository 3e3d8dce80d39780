#include "camaudit/data.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "camaudit/errors.hpp"
#include "camaudit/image_io.hpp"
#include "camaudit/rng.hpp"

namespace camaudit {

std::size_t LabeledDataset::class_count() const {
  if (!class_names.empty()) return class_names.size();
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

void LabeledDataset::validate() const {
  if (images.size() != labels.size()) {
    throw DimensionError("dataset has " + std::to_string(images.size()) + " images but " + std::to_string(labels.size()) +
                         " labels");
  }
  for (std::size_t n = 0; n < images.size(); ++n) {
    if (images[n].shape() != images.front().shape()) throw DimensionError("dataset images have differing shapes");
    for (double v : images[n].values()) {
      if (!(v >= 0.0 && v <= 1.0)) throw FormatError("image " + std::to_string(n) + " has a pixel outside [0, 1]");
    }
    if (!class_names.empty() && labels[n] >= class_names.size()) {
      throw FormatError("label " + std::to_string(labels[n]) + " has no class name");
    }
  }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.class_names = class_names;
  for (std::size_t i : indices) {
    out.images.push_back(images.at(i));
    out.labels.push_back(labels.at(i));
  }
  return out;
}

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::string& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xFF));
}

std::vector<std::string> digit_names(std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back(std::to_string(i));
  return names;
}

}  // namespace

IdxArray parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) {
    throw TruncationError("IDX header truncated: expected at least 4 bytes, got " + std::to_string(bytes.size()));
  }
  IdxArray out;
  out.magic = read_be32(bytes, 0);
  if (out.magic != kIdxImageMagic && out.magic != kIdxLabelMagic) {
    char buf[11];
    std::snprintf(buf, sizeof buf, "0x%08X", out.magic);
    throw MagicMismatchError(std::string("IDX magic ") + buf + " is neither 0x00000803 (images) nor 0x00000801 (labels)");
  }
  const std::size_t ndims = out.magic & 0xFF;
  const std::size_t header = 4 + 4 * ndims;
  if (bytes.size() < header) {
    throw TruncationError("IDX header truncated: expected " + std::to_string(header) + " bytes, got " +
                          std::to_string(bytes.size()));
  }
  std::uint64_t count = 1;
  constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 40;
  for (std::size_t d = 0; d < ndims; ++d) {
    const std::uint32_t extent = read_be32(bytes, 4 + 4 * d);
    out.dims.push_back(extent);
    if (extent != 0 && count > kMaxElements / extent) {
      throw DimensionOverflowError("IDX dimensions overflow the addressable element count");
    }
    count *= extent;
  }
  const std::uint64_t available = bytes.size() - header;
  if (available < count) {
    throw TruncationError("IDX payload truncated: expected " + std::to_string(count) + " bytes, got " +
                          std::to_string(available));
  }
  out.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header),
                  bytes.begin() + static_cast<std::ptrdiff_t>(header + count));
  return out;
}

IdxArray parse_idx(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  return parse_idx(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

std::vector<Tensor> idx_images(const IdxArray& array) {
  if (array.magic != kIdxImageMagic) throw MagicMismatchError("IDX array is not an image file (magic 0x00000803)");
  const std::size_t n = array.dims[0], rows = array.dims[1], cols = array.dims[2];
  std::vector<Tensor> images;
  images.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    Tensor img({1, rows, cols});
    for (std::size_t p = 0; p < rows * cols; ++p) img[p] = array.data[k * rows * cols + p] / 255.0;
    images.push_back(std::move(img));
  }
  return images;
}

std::vector<std::size_t> idx_labels(const IdxArray& array) {
  if (array.magic != kIdxLabelMagic) throw MagicMismatchError("IDX array is not a label file (magic 0x00000801)");
  return std::vector<std::size_t>(array.data.begin(), array.data.end());
}

std::string encode_idx_images(const std::vector<Tensor>& images) {
  std::string out;
  put_be32(out, kIdxImageMagic);
  const std::size_t rows = images.empty() ? 0 : images.front().dim(1);
  const std::size_t cols = images.empty() ? 0 : images.front().dim(2);
  put_be32(out, static_cast<std::uint32_t>(images.size()));
  put_be32(out, static_cast<std::uint32_t>(rows));
  put_be32(out, static_cast<std::uint32_t>(cols));
  for (const auto& img : images) {
    if (img.rank() != 3 || img.dim(0) != 1 || img.dim(1) != rows || img.dim(2) != cols) {
      throw DimensionError("encode_idx_images: images must all be 1×" + std::to_string(rows) + "×" + std::to_string(cols));
    }
    for (double v : img.values()) out.push_back(static_cast<char>(quantize(v)));
  }
  return out;
}

std::string encode_idx_labels(const std::vector<std::size_t>& labels) {
  std::string out;
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (std::size_t l : labels) {
    if (l > 255) throw ConfigError("IDX labels must fit in one byte");
    out.push_back(static_cast<char>(l));
  }
  return out;
}

LabeledDataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels) {
  LabeledDataset ds;
  ds.images = idx_images(parse_idx(images));
  ds.labels = idx_labels(parse_idx(labels));
  if (ds.images.size() != ds.labels.size()) {
    throw FormatError(images.string() + " holds " + std::to_string(ds.images.size()) + " images but " + labels.string() +
                      " holds " + std::to_string(ds.labels.size()) + " labels");
  }
  ds.class_names = digit_names(ds.class_count());
  return ds;
}

std::vector<CompositePair> sample_pairs(const LabeledDataset& ds, std::size_t per_class, std::uint64_t seed) {
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t n = 0; n < ds.size(); ++n) by_class[ds.labels[n]].push_back(n);
  std::vector<CompositePair> pairs;
  for (const auto& [label, members] : by_class) {
    if (members.size() < 2) {
      throw ConfigError("class " + std::to_string(label) + " has " + std::to_string(members.size()) +
                        " image(s); composition needs at least 2");
    }
    Rng rng(seed, label);
    std::vector<std::size_t> pool;
    auto refill = [&] {
      pool = members;
      std::shuffle(pool.begin(), pool.end(), rng.engine());
    };
    refill();
    std::size_t cursor = 0;
    for (std::size_t k = 0; k < per_class; ++k) {
      CompositePair pair{0, 0, label};
      if (pool.size() - cursor >= 2) {
        pair.top = pool[cursor++];
        pair.bottom = pool[cursor++];
      } else {
        if (pool.size() - cursor == 1) {
          // Odd leftover: pair it with a uniformly drawn distinct partner.
          pair.top = pool[cursor];
          do {
            pair.bottom = members[rng.index(members.size())];
          } while (pair.bottom == pair.top);
          refill();
          cursor = 0;
        } else {
          refill();
          cursor = 0;
          pair.top = pool[cursor++];
          pair.bottom = pool[cursor++];
        }
      }
      pairs.push_back(pair);
    }
  }
  return pairs;
}

namespace {

Tensor stack_rows(const Tensor& top, const Tensor& bottom, std::size_t split_row) {
  Tensor out = top;
  const std::size_t cols = top.dim(2);
  for (std::size_t c = 0; c < top.dim(0); ++c) {
    for (std::size_t i = split_row; i < top.dim(1); ++i) {
      std::copy_n(bottom.row(c, i), cols, out.row(c, i));
    }
  }
  return out;
}

}  // namespace

LabeledDataset compose_stack_mix(const LabeledDataset& ds, const StackSpec& spec, std::size_t per_class, std::uint64_t seed,
                                 std::vector<CompositePair>* pairs_out) {
  if (spec.split_row == 0 || spec.split_row >= spec.rows) {
    throw ConfigError("split row " + std::to_string(spec.split_row) + " must lie strictly inside the " +
                      std::to_string(spec.rows) + "-row canvas");
  }
  for (const auto& img : ds.images) {
    if (img.rank() != 3 || img.dim(1) != spec.rows || img.dim(2) != spec.cols) {
      throw DimensionError("compose_stack_mix: image " + shape_string(img.shape()) + " does not match the " +
                           std::to_string(spec.rows) + "x" + std::to_string(spec.cols) + " canvas");
    }
  }
  const std::vector<CompositePair> pairs = sample_pairs(ds, per_class, seed);
  LabeledDataset out;
  out.class_names = ds.class_names;
  for (const auto& p : pairs) {
    out.images.push_back(stack_rows(ds.images[p.top], ds.images[p.bottom], spec.split_row));
    out.labels.push_back(p.label);
  }
  if (pairs_out) *pairs_out = pairs;
  return out;
}

LabeledDataset stack_mnist(const LabeledDataset& digits, std::size_t canvas, std::size_t split_row, std::size_t per_class,
                           std::uint64_t seed, std::vector<CompositePair>* pairs_out) {
  constexpr std::size_t kDigit = 28;
  if (canvas < 2 * kDigit) throw ConfigError("stack_mnist: canvas must be at least 56 pixels");
  for (const auto& img : digits.images) {
    if (img.rank() != 3 || img.dim(0) != 1 || img.dim(1) != kDigit || img.dim(2) != kDigit) {
      throw DimensionError("stack_mnist: expected 1×28×28 digits, got " + shape_string(img.shape()));
    }
  }
  const std::size_t left = (canvas - kDigit) / 2;
  auto place = [&](const Tensor& digit, std::size_t top_row) {
    Tensor out({1, canvas, canvas});
    for (std::size_t i = 0; i < kDigit; ++i) std::copy_n(digit.row(0, i), kDigit, out.row(0, top_row + i) + left);
    return out;
  };
  const StackSpec spec{split_row, canvas, canvas};
  if (spec.split_row == 0 || spec.split_row >= spec.rows) throw ConfigError("stack_mnist: split row outside the canvas");
  const std::vector<CompositePair> pairs = sample_pairs(digits, per_class, seed);
  LabeledDataset out;
  out.class_names = digits.class_names;
  for (const auto& p : pairs) {
    out.images.push_back(stack_rows(place(digits.images[p.top], 0), place(digits.images[p.bottom], canvas - kDigit), split_row));
    out.labels.push_back(p.label);
  }
  if (pairs_out) *pairs_out = pairs;
  return out;
}

void save_manifest(const LabeledDataset& ds, const std::filesystem::path& dir) {
  ds.validate();
  nlohmann::json items = nlohmann::json::array();
  for (std::size_t n = 0; n < ds.size(); ++n) {
    char name[32];
    std::snprintf(name, sizeof name, "images/%05zu.pgm", n);
    write_pgm(dir / name, ds.images[n]);
    items.push_back({{"path", name}, {"label", ds.labels[n]}});
  }
  const nlohmann::json manifest = {{"class_names", ds.class_names}, {"items", items}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

LabeledDataset load_manifest(const std::filesystem::path& manifest) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(manifest));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  LabeledDataset ds;
  try {
    ds.class_names = j.at("class_names").get<std::vector<std::string>>();
    for (const auto& item : j.at("items")) {
      ds.images.push_back(read_pgm(manifest.parent_path() / item.at("path").get<std::string>()));
      ds.labels.push_back(item.at("label").get<std::size_t>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  ds.validate();
  return ds;
}

LabeledDataset load_dataset(const std::filesystem::path& path, const std::filesystem::path& labels) {
  if (path.extension() == ".json") return load_manifest(path);
  if (labels.empty()) throw ConfigError("IDX datasets need both an image file and a label file");
  return load_idx_dataset(path, labels);
}

}  // namespace camaudit
