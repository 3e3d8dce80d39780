#include "commands.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <camaudit/cam.hpp>
#include <camaudit/checkpoint.hpp>
#include <camaudit/data.hpp>
#include <camaudit/errors.hpp>
#include <camaudit/image_io.hpp>
#include <camaudit/model.hpp>
#include <camaudit/report.hpp>
#include <camaudit/resample.hpp>
#include <camaudit/rng.hpp>
#include <camaudit/theory.hpp>
#include <camaudit/train.hpp>

namespace camaudit::cli {

namespace {

namespace fs = std::filesystem;

const std::string kDataDir = CAMAUDIT_DATA_DIR;

struct Common {
  std::uint64_t seed = 0;
  std::string out;
  std::string config;
  std::size_t threads = 0;
};

void add_common(CLI::App* sub, Common& c, const std::string& out_default, const std::string& out_help) {
  c.out = out_default;
  sub->add_option("--seed", c.seed, "Base random seed")->capture_default_str();
  sub->add_option("--out", c.out, out_help)->capture_default_str();
  sub->add_option("--config", c.config, "Flat key = value file; command-line flags take precedence");
  sub->add_option("--threads", c.threads, "Worker threads (0 = available cores)")->capture_default_str();
}

/// Fills options that were not given on the command line from a flat
/// key = value file. Unknown keys and [sections] are rejected.
void apply_config(CLI::App* sub, const std::string& path) {
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::ParseError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  for (const auto& item : items) {
    if (!item.parents.empty() || item.name == "++" || item.name == "--") {
      throw ConfigError(path + ": sections are not supported (flat key = value only)");
    }
    if (item.name == "config" || item.name == "help") throw ConfigError(path + ": key '" + item.name + "' is not allowed");
    CLI::Option* opt = sub->get_option_no_throw("--" + item.name);
    if (opt == nullptr) throw ConfigError(path + ": unknown key '" + item.name + "'");
    if (opt->count() > 0) continue;
    try {
      for (const auto& v : item.inputs) opt->add_result(v);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw ConfigError(path + ": bad value for '" + item.name + "': " + e.what());
    }
  }
}

/// One image from a PGM file, a manifest or an IDX image file.
Tensor load_image_at(const std::string& path, std::size_t index) {
  const fs::path p(path);
  if (p.extension() == ".pgm") return read_pgm(p);
  std::vector<Tensor> images = p.extension() == ".json" ? load_manifest(p).images : idx_images(parse_idx(p));
  if (index >= images.size()) {
    throw ConfigError("--index " + std::to_string(index) + " out of range: " + path + " holds " +
                      std::to_string(images.size()) + " images");
  }
  return images[index];
}

struct DataArgs {
  std::string data;
  std::string labels;
  std::string mnist_images = kDataDir + "/mnist-subset-images.idx3-ubyte";
  std::string mnist_labels = kDataDir + "/mnist-subset-labels.idx1-ubyte";
  std::size_t per_class = 10;
  std::size_t split_row = 28;
};

void add_data_options(CLI::App* sub, DataArgs& d, std::size_t per_class_default) {
  d.per_class = per_class_default;
  sub->add_option("--data", d.data, "Dataset: manifest.json or IDX image file (default: compose STACK-MNIST)");
  sub->add_option("--labels", d.labels, "IDX label file accompanying an IDX --data");
  sub->add_option("--mnist-images", d.mnist_images, "MNIST IDX images used when composing")->capture_default_str();
  sub->add_option("--mnist-labels", d.mnist_labels, "MNIST IDX labels used when composing")->capture_default_str();
  sub->add_option("--per-class", d.per_class, "Composites per class when composing")->capture_default_str();
  sub->add_option("--split-row", d.split_row, "First row taken from the bottom digit")->capture_default_str();
}

LabeledDataset load_or_compose(const DataArgs& d, std::uint64_t seed) {
  if (!d.data.empty()) return load_dataset(d.data, d.labels);
  return stack_mnist(load_idx_dataset(d.mnist_images, d.mnist_labels), 56, d.split_row, d.per_class, seed);
}

std::vector<CamMethod> parse_methods(const std::string& list) {
  if (list == "all") return all_methods();
  std::vector<CamMethod> out;
  std::stringstream ss(list);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name.empty()) continue;
    const auto m = parse_method(name);
    if (!m) throw ConfigError("unknown CAM method '" + name + "'");
    out.push_back(*m);
  }
  return out;
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_file(path, j.dump(2) + "\n"); }

// ---- verify-theory ----

struct VerifyArgs {
  Common common;
  std::string image = kDataDir + "/mnist-subset-images.idx3-ubyte";
  std::size_t index = 0;
  GradcamMcConfig mc;
  std::string overlay;
  std::size_t moment_samples = 0;
};

nlohmann::json moment_entry(const std::string& name, const McEstimate& e, double expected) {
  return {{"name", name},
          {"estimate", e.mean},
          {"std_err", e.std_err},
          {"expected", expected},
          {"pass", e.within(expected)}};
}

int verify_theory(const VerifyArgs& a, std::ostream& out) {
  const Tensor image = load_image_at(a.image, a.index);
  GradcamMcConfig mc = a.mc;
  mc.base_seed = a.common.seed;
  mc.threads = a.common.threads;
  const GradcamMcResult result = mc_expected_gradcam(image, mc);
  nlohmann::json report = theory_report_json(result);
  report["image"] = {{"path", a.image}, {"index", a.index}};
  bool ok = result.all_pass();

  if (a.moment_samples > 0) {
    nlohmann::json moments = nlohmann::json::array();
    const std::size_t k = mc.kernel;
    const std::size_t top = (image.dim(1) - k) / 2, left = (image.dim(2) - k) / 2;
    std::vector<double> patch;
    for (std::size_t p = 0; p < k; ++p) {
      for (std::size_t q = 0; q < k; ++q) patch.push_back(image.at(0, top + p, left + q));
    }
    double norm2 = 0.0;
    for (double v : patch) norm2 += v * v;
    const auto [conv_mean, conv_var] = conv_gaussian_law_check(patch, mc.tau, a.moment_samples, derive_seed(a.common.seed, 11));
    moments.push_back(moment_entry("conv_mean", conv_mean, 0.0));
    moments.push_back(moment_entry("conv_variance", conv_var, mc.tau * mc.tau * norm2));
    const RectifiedGaussianMoments m0 = rectified_gaussian_moments(0.0, mc.tau);
    const auto [sq_mean, sq_var] = squared_rectified_moment_check(mc.tau, a.moment_samples, derive_seed(a.common.seed, 12));
    moments.push_back(moment_entry("squared_rectified_mean", sq_mean, m0.msq_plus));
    moments.push_back(moment_entry("squared_rectified_variance", sq_var, m0.var_sq_plus));
    const double shift = 0.5 * mc.tau;
    moments.push_back(moment_entry("rectified_mean",
                                 rectified_mean_check(shift, mc.tau, a.moment_samples, derive_seed(a.common.seed, 13)),
                                 rectified_gaussian_mean(shift, mc.tau)));
    for (const auto& l : moments) ok = ok && l["pass"].get<bool>();
    report["moment_checks"] = moments;
  }
  report["pass"] = ok;
  write_json(a.common.out, report);

  if (!a.overlay.empty()) {
    const Tensor up = upsample_bilinear(result.mean_map, image.dim(1), image.dim(2));
    DeadZone zone = result.dead_zone;
    render_overlay(image, minmax_normalize(up), zone, a.overlay);
  }
  std::size_t judged = 0, failed = 0;
  for (const auto& p : result.pixels) {
    if (mc.filters > 20 && p.patch_norm > 0.0) ++judged;
    if (!p.pass) ++failed;
  }
  out << "verify-theory: V=" << mc.filters << " seeds=" << mc.seeds << " judged=" << judged << " failed=" << failed
      << " dead-zone-mass-seeds=" << result.seeds_with_dead_zone_mass << "/" << mc.seeds << " -> "
      << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? kOk : kFailed;
}

// ---- train ----

struct TrainArgs {
  Common common;
  DataArgs data;
  std::string validation;
  MiniVggConfig model;
  std::string init = "he";
  TrainConfig train;
  bool hflip = true;
};

int train_cmd(const TrainArgs& a, std::ostream& out) {
  MiniVggConfig mc = a.model;
  if (a.init == "he") {
    mc.init = InitScheme::he;
  } else if (a.init == "gaussian") {
    mc.init = InitScheme::gaussian;
  } else {
    throw ConfigError("--init must be 'he' or 'gaussian'");
  }
  mc.seed = derive_seed(a.common.seed, 1);
  TrainConfig tc = a.train;
  tc.seed = derive_seed(a.common.seed, 2);
  tc.threads = a.common.threads;
  tc.hflip = a.hflip;

  const LabeledDataset ds = load_or_compose(a.data, a.common.seed);
  mc.classes = std::max<std::size_t>(mc.classes, ds.class_count());
  const LabeledDataset validation = a.validation.empty() ? LabeledDataset{} : load_manifest(a.validation);
  Model model = build_mini_masked_vgg(mc);
  const TrainLog log = train(model, ds, tc, validation, [&](std::size_t e, double loss, double acc) {
    out << "epoch " << e << " loss " << loss << " acc " << acc << "\n" << std::flush;
  });
  const double train_acc = evaluate(model, ds, a.common.threads);

  const fs::path dir(a.common.out);
  save_checkpoint(model, dir / "model.ckpt");
  write_file(dir / "train_log.csv", log.to_csv());
  const std::optional<DeadZone> zone = compute_dead_zone(model.spec);
  nlohmann::json summary = {{"images", ds.size()},
                            {"epochs", log.epochs()},
                            {"final_loss", log.loss.empty() ? 0.0 : log.loss.back()},
                            {"train_accuracy", train_acc},
                            {"band_rows", mc.band_rows},
                            {"first_dead_row", zone ? zone->first_dead_row : model.spec.input.rows}};
  write_json(dir / "train.json", summary);
  out << "train: " << ds.size() << " images, train accuracy " << train_acc << ", checkpoint " << (dir / "model.ckpt").string()
      << "\n";
  return kOk;
}

// ---- explain ----

struct ExplainArgs {
  Common common;
  std::string checkpoint;
  std::string image;
  std::size_t index = 0;
  std::string methods = "gradcam";
  std::optional<std::size_t> target;
  CamOptions cam;
};

int explain_cmd(const ExplainArgs& a, std::ostream& out) {
  if (a.checkpoint.empty() || a.image.empty()) throw ConfigError("explain needs --checkpoint and --image");
  const Model model = load_checkpoint(a.checkpoint);
  const Tensor image = load_image_at(a.image, a.index);
  if (image.shape() != model.spec.input.shape()) {
    throw DimensionError("image " + shape_string(image.shape()) + " does not match the model input " +
                         shape_string(model.spec.input.shape()));
  }
  const ForwardTrace trace = forward(model, image);
  CamOptions cam = a.cam;
  cam.target = a.target ? *a.target : argmax(trace.logits());
  if (*cam.target >= model.spec.classes()) throw ConfigError("--target exceeds the class count");
  const std::optional<DeadZone> zone = compute_dead_zone(model.spec);

  const fs::path dir(a.common.out);
  nlohmann::json report = {{"predicted", argmax(trace.logits())}, {"target", *cam.target}, {"logits", trace.logits()}};
  nlohmann::json per_method = nlohmann::json::object();
  for (CamMethod m : parse_methods(a.methods)) {
    const SaliencyMap map = explain(m, trace, model, cam);
    const std::string name(method_name(m));
    render_overlay(image, map.normalized, zone, dir / (name + "_overlay.ppm"));
    write_pgm(dir / (name + "_map.pgm"), map.normalized);
    nlohmann::json entry = {{"raw_max", *std::max_element(map.raw.values().begin(), map.raw.values().end())}};
    if (zone) entry["mu"] = mu(map.upsampled, *zone);
    per_method[name] = entry;
    out << "explain: " << name << " target " << *cam.target;
    if (zone) out << " mu " << entry["mu"].get<double>();
    out << "\n";
  }
  report["methods"] = per_method;
  if (zone) report["dead_zone"] = {{"first_dead_row", zone->first_dead_row}, {"height", zone->height}};
  write_json(dir / "explain.json", report);
  return kOk;
}

// ---- audit ----

struct AuditArgs {
  Common common;
  std::string checkpoint;
  DataArgs data;
  std::string methods = "all";
  std::string dataset_name = "stack-mnist";
  std::size_t overlays = 0;
  CamOptions cam;
};

int audit_cmd(const AuditArgs& a, std::ostream& out) {
  if (a.checkpoint.empty()) throw ConfigError("audit needs --checkpoint");
  const Model model = load_checkpoint(a.checkpoint);
  const LabeledDataset ds = load_or_compose(a.data, a.common.seed);
  const std::vector<CamMethod> methods = parse_methods(a.methods);
  AuditOptions opts;
  opts.dataset = a.dataset_name;
  opts.cam = a.cam;
  opts.threads = a.common.threads;
  const AuditReport report = run_audit(model, ds, methods, opts);

  const fs::path dir(a.common.out);
  write_json(dir / "audit.json", report.to_json());
  write_file(dir / "audit.csv", report.to_csv());
  const std::size_t shown = std::min(a.overlays, ds.size());
  for (std::size_t n = 0; n < shown; ++n) {
    const ForwardTrace trace = forward(model, ds.images[n]);
    CamOptions cam = a.cam;
    cam.target = argmax(trace.logits());
    for (CamMethod m : methods) {
      try {
        const SaliencyMap map = explain(m, trace, model, cam);
        char name[64];
        std::snprintf(name, sizeof name, "overlays/%04zu_%s.ppm", n, std::string(method_name(m)).c_str());
        render_overlay(ds.images[n], map.normalized, report.dead_zone, dir / name);
      } catch (const NumericError&) {
        // already recorded as a failed row
      }
    }
  }
  for (const auto& s : report.methods) {
    out << "audit: " << method_name(s.method) << " mu x100 = " << s.mean_x100 << " +- " << s.std_x100
        << " (mu > 0 on " << s.positive_fraction * 100.0 << "% of " << s.count << ", failures " << s.failures << ")\n";
  }
  return kOk;
}

// ---- compose ----

struct ComposeArgs {
  Common common;
  DataArgs data;
  std::string mode = "stack-mnist";
  std::size_t canvas = 56;
};

int compose_cmd(const ComposeArgs& a, std::ostream& out) {
  LabeledDataset ds;
  if (a.mode == "stack-mnist") {
    ds = stack_mnist(load_idx_dataset(a.data.mnist_images, a.data.mnist_labels), a.canvas, a.data.split_row,
                     a.data.per_class, a.common.seed);
  } else if (a.mode == "stack-mix") {
    if (a.data.data.empty()) throw ConfigError("--mode stack-mix needs --data with canvas-sized images");
    const LabeledDataset source = load_dataset(a.data.data, a.data.labels);
    if (source.empty()) throw ConfigError("source dataset is empty");
    const StackSpec spec{a.data.split_row, source.images.front().dim(1), source.images.front().dim(2)};
    ds = compose_stack_mix(source, spec, a.data.per_class, a.common.seed);
  } else {
    throw ConfigError("--mode must be 'stack-mnist' or 'stack-mix'");
  }
  save_manifest(ds, a.common.out);
  out << "compose: " << ds.size() << " composites over " << ds.class_count() << " classes -> "
      << (fs::path(a.common.out) / "manifest.json").string() << "\n";
  return kOk;
}

void add_cam_options(CLI::App* sub, CamOptions& cam) {
  sub->add_option("--opticam-steps", cam.opticam_steps, "Opti-CAM gradient steps")->capture_default_str();
  sub->add_option("--opticam-lr", cam.opticam_lr, "Opti-CAM step size")->capture_default_str();
}

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DimensionError& e) {
    err << "shape error: " << e.what() << "\n";
    return kConfig;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kIo;
  } catch (const CLI::Error& e) {
    err << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailed;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Saliency-map reliability audits on dead-zone-masked CNNs", "camaudit");
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  VerifyArgs verify;
  CLI::App* v = app.add_subcommand("verify-theory", "Monte-Carlo check of the expected-GradCAM lower bound");
  add_common(v, verify.common, "theory_report.json", "JSON report path");
  v->add_option("--image", verify.image, "Image: .pgm, manifest.json or IDX file")->capture_default_str();
  v->add_option("--index", verify.index, "Image index inside a manifest or IDX file")->capture_default_str();
  v->add_option("--V,--filters", verify.mc.filters, "Number of conv filters")->capture_default_str();
  v->add_option("--kernel", verify.mc.kernel, "Conv kernel size")->capture_default_str();
  v->add_option("--pool", verify.mc.pool, "Max-pool size")->capture_default_str();
  v->add_option("--tau", verify.mc.tau, "Weight standard deviation")->capture_default_str();
  v->add_option("--seeds", verify.mc.seeds, "Number of random models")->capture_default_str();
  v->add_option("--overlay", verify.overlay, "Optional PPM overlay of the mean map");
  v->add_option("--moment-samples", verify.moment_samples, "Samples per Gaussian moment check (0 = skip)")
      ->capture_default_str();

  TrainArgs tr;
  CLI::App* t = app.add_subcommand("train", "Train the mini masked VGG");
  add_common(t, tr.common, "run", "Output directory (model.ckpt, train_log.csv, train.json)");
  add_data_options(t, tr.data, 100);
  t->add_option("--validation", tr.validation, "Validation manifest.json");
  t->add_option("--band-rows", tr.model.band_rows, "Masked rows of the 14-row feature grid")->capture_default_str();
  t->add_option("--hidden", tr.model.hidden, "Hidden units of the masked dense layer")->capture_default_str();
  t->add_option("--classes", tr.model.classes, "Output classes")->capture_default_str();
  t->add_option("--init", tr.init, "Initialisation: he or gaussian")->capture_default_str();
  t->add_option("--tau", tr.model.tau, "Standard deviation for gaussian init")->capture_default_str();
  t->add_option("--epochs", tr.train.epochs, "Epochs")->capture_default_str();
  t->add_option("--batch-size", tr.train.batch_size, "Minibatch size")->capture_default_str();
  t->add_option("--lr", tr.train.lr, "Learning rate")->capture_default_str();
  t->add_option("--momentum", tr.train.momentum, "Momentum")->capture_default_str();
  t->add_option("--weight-decay", tr.train.weight_decay, "Weight decay")->capture_default_str();
  t->add_option("--lr-factor", tr.train.schedule.factor, "Step schedule factor")->capture_default_str();
  t->add_option("--lr-interval", tr.train.schedule.interval, "Epochs between lr steps")->capture_default_str();
  t->add_flag("--hflip,!--no-hflip", tr.hflip, "Random horizontal flips")->capture_default_str();

  ExplainArgs ex;
  CLI::App* e = app.add_subcommand("explain", "Saliency maps and overlays for one image");
  add_common(e, ex.common, "explain", "Output directory");
  e->add_option("--checkpoint", ex.checkpoint, "Model checkpoint (required)");
  e->add_option("--image", ex.image, "Image: .pgm, manifest.json or IDX file (required)");
  e->add_option("--index", ex.index, "Image index inside a manifest or IDX file")->capture_default_str();
  e->add_option("--method", ex.methods, "Comma-separated CAM methods or 'all'")->capture_default_str();
  e->add_option("--target", ex.target, "Class to explain (default: predicted)");
  add_cam_options(e, ex.cam);

  AuditArgs au;
  CLI::App* u = app.add_subcommand("audit", "Dead-zone leakage of every CAM method over a dataset");
  add_common(u, au.common, "audit", "Output directory (audit.json, audit.csv)");
  u->add_option("--checkpoint", au.checkpoint, "Model checkpoint (required)");
  add_data_options(u, au.data, 10);
  u->add_option("--methods", au.methods, "Comma-separated CAM methods or 'all'")->capture_default_str();
  u->add_option("--dataset-name", au.dataset_name, "Dataset label in the report")->capture_default_str();
  u->add_option("--overlays", au.overlays, "Render overlays for the first N images")->capture_default_str();
  add_cam_options(u, au.cam);

  ComposeArgs co;
  CLI::App* c = app.add_subcommand("compose", "Build a STACK-MNIST or STACK-MIX composite dataset");
  add_common(c, co.common, "stack-mnist", "Output directory (manifest.json, images/)");
  add_data_options(c, co.data, 10);
  c->add_option("--mode", co.mode, "stack-mnist or stack-mix")->capture_default_str();
  c->add_option("--canvas", co.canvas, "Canvas size for stack-mnist")->capture_default_str();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kOk : kConfig;
  }

  return guarded(err, [&] {
    if (v->parsed()) {
      apply_config(v, verify.common.config);
      return verify_theory(verify, out);
    }
    if (t->parsed()) {
      apply_config(t, tr.common.config);
      return train_cmd(tr, out);
    }
    if (e->parsed()) {
      apply_config(e, ex.common.config);
      return explain_cmd(ex, out);
    }
    if (u->parsed()) {
      apply_config(u, au.common.config);
      return audit_cmd(au, out);
    }
    apply_config(c, co.common.config);
    return compose_cmd(co, out);
  });
}

}  // namespace camaudit::cli
