#include "camaudit/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "camaudit/errors.hpp"

namespace camaudit {

using nlohmann::json;

json spec_to_json(const ModelSpec& spec) {
  json convs = json::array();
  for (const auto& c : spec.convs) {
    convs.push_back({{"filters", c.filters}, {"kernel", c.kernel}, {"padding", c.padding}, {"pool", c.pool}});
  }
  json j = {{"name", spec.name},
            {"input", {spec.input.channels, spec.input.rows, spec.input.cols}},
            {"convs", convs},
            {"dense_widths", spec.dense_widths},
            {"tau", spec.tau},
            {"mask_band_rows", spec.band_rows()}};
  if (!spec.mask) j["mask_band_rows"] = nullptr;
  return j;
}

ModelSpec spec_from_json(const json& j) {
  try {
    ModelSpec spec;
    spec.name = j.at("name").get<std::string>();
    const auto in = j.at("input").get<std::vector<std::size_t>>();
    if (in.size() != 3) throw FormatError("checkpoint spec: input must have 3 extents");
    spec.input = {in[0], in[1], in[2]};
    for (const auto& c : j.at("convs")) {
      spec.convs.push_back(ConvLayerSpec{c.at("filters").get<std::size_t>(), c.at("kernel").get<std::size_t>(),
                                         c.at("padding").get<std::size_t>(), c.at("pool").get<std::size_t>()});
    }
    spec.dense_widths = j.at("dense_widths").get<std::vector<std::size_t>>();
    spec.tau = j.at("tau").get<double>();
    spec.validate();
    if (!j.at("mask_band_rows").is_null()) {
      spec.mask = MaskSpec{j.at("mask_band_rows").get<std::size_t>(), spec.feature_grid()};
      spec.validate();
    }
    return spec;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint spec: ") + e.what());
  }
}

std::string serialize_checkpoint(const Model& model) {
  std::string out(kCheckpointMagic);
  out += spec_to_json(model.spec).dump();
  out += '\n';
  for (double v : model.flat_parameters()) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
  }
  return out;
}

Model deserialize_checkpoint(std::string_view bytes) {
  if (!bytes.starts_with(kCheckpointMagic)) throw MagicMismatchError("not a camaudit checkpoint (bad magic)");
  bytes.remove_prefix(kCheckpointMagic.size());
  const std::size_t newline = bytes.find('\n');
  if (newline == std::string_view::npos) throw TruncationError("checkpoint: missing spec line");
  json j;
  try {
    j = json::parse(bytes.substr(0, newline));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: spec is not JSON: ") + e.what());
  }
  bytes.remove_prefix(newline + 1);
  const ModelSpec spec = spec_from_json(j);
  Model model = Model::allocate(spec);
  const std::size_t expected = model.parameter_count() * 8;
  if (bytes.size() != expected) {
    throw TruncationError("checkpoint: expected " + std::to_string(expected) + " parameter bytes, found " +
                          std::to_string(bytes.size()));
  }
  std::vector<double> values(model.parameter_count());
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= std::uint64_t{static_cast<unsigned char>(bytes[8 * i + b])} << (8 * b);
    values[i] = std::bit_cast<double>(bits);
  }
  model.set_flat_parameters(values);
  for (const auto& layer : model.dense) {
    for (std::size_t i = 0; i < layer.mask.size(); ++i) {
      if (!layer.mask[i] && layer.weights[i] != 0.0) throw FormatError("checkpoint: masked weight is non-zero");
    }
  }
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::string bytes = serialize_checkpoint(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace camaudit
