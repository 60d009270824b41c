#include "swintr/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>

#include "CLI11.hpp"
#include "swintr/autograd.hpp"
#include "swintr/config.hpp"
#include "swintr/errors.hpp"
#include "swintr/selftest.hpp"

namespace fs = std::filesystem;

namespace swintr {

namespace {

void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) {
      throw ConfigError("output path " + dir.string() + " exists and is not a directory");
    }
    if (!fs::is_empty(dir) && !force) {
      throw ConfigError("output directory " + dir.string() + " is not empty (pass --force to overwrite)");
    }
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f || !(f << text)) {
    throw DataError("cannot write " + path.string());
  }
}

struct Loaded {
  RunConfig cfg;
  std::unique_ptr<SwinTRModel> model;
};

Loaded load_trained(const fs::path& checkpoint, const std::string& config_override) {
  const Checkpoint ckpt = checkpoint_load(checkpoint);
  Loaded l;
  l.cfg = config_override.empty() ? parse_run_config(ckpt.config, checkpoint.string() + " (embedded config)")
                                  : load_run_config(config_override);
  l.model = build_model(l.cfg.model, l.cfg.train.seed);
  load_model_state(*l.model, ckpt);
  l.model->train(false);
  return l;
}

int cmd_train(const std::string& config_path, const std::string& out_override, bool force, std::ostream& out) {
  RunConfig cfg = load_run_config(config_path);
  if (!out_override.empty()) {
    cfg.output_dir = out_override;
  }
  if (cfg.manifest.empty()) {
    throw ConfigError(config_path + ": data.manifest is required for training");
  }
  if (!fs::is_regular_file(cfg.manifest)) {
    throw ConfigError("manifest " + cfg.manifest.string() + " does not exist");
  }
  auto records = read_manifest(cfg.manifest);
  if (filter_split(records, Split::val).empty()) {
    records = split_dataset(records, cfg.val_fraction, cfg.split_seed);
  }
  const auto train_records = filter_split(records, Split::train);
  const auto val_records = filter_split(records, Split::val);
  if (train_records.empty() || val_records.empty()) {
    throw ConfigError("manifest " + cfg.manifest.string() + " yields an empty train or val split");
  }
  prepare_output_dir(cfg.output_dir, force);
  const std::string effective = format_run_config(cfg);
  write_text(cfg.output_dir / "config.txt", effective);

  auto model = build_model(cfg.model, cfg.train.seed);
  const int size = model->external_resolution();
  out << "model " << variant_name(cfg.model.variant) << " at " << size << "x" << size << ", "
      << model->parameter_count() << " parameters\n";
  const auto train = load_samples(train_records, cfg.model.classes, size);
  const auto val = load_samples(val_records, cfg.model.classes, size);
  out << "train " << train.size() << ", val " << val.size() << " samples\n" << std::flush;

  TrainConfig tc = cfg.train;
  tc.config_text = effective;
  std::ofstream log(cfg.output_dir / "train_log.tsv", std::ios::binary | std::ios::trunc);
  if (!log) {
    throw DataError("cannot write training log in " + cfg.output_dir.string());
  }
  const TrainResult result = train_loop(*model, train, val, tc, &log);
  checkpoint_save(result.best, cfg.output_dir / "best.ckpt");
  if (result.best.epoch >= 0) {
    load_model_state(*model, result.best);
    const MetricsReport report = make_report(evaluate_samples(*model, val, tc.eval_batch_size), cfg.class_names);
    write_text(cfg.output_dir / "best_metrics.txt",
               "best epoch " + std::to_string(result.best.epoch) + " (validation)\n" + format_report(report));
    out << "best epoch " << result.best.epoch << ", val IoU " << result.best.val_iou << "\n";
  }
  if (result.halted) {
    out << "training halted: " << result.halt_reason << "\n";
    return kExitFailed;
  }
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& manifest, const std::string& split,
             const std::string& report_path, const std::string& config_override, int batch, std::ostream& out) {
  Loaded l = load_trained(checkpoint, config_override);
  const auto records = filter_split(read_manifest(manifest), parse_split(split));
  const MetricsReport report = evaluate_dataset(*l.model, records, l.cfg.class_names, batch);
  const std::string text = format_report(report);
  if (!report_path.empty()) {
    write_text(report_path, text);
  }
  out << text;
  return kExitOk;
}

int cmd_infer(const std::string& checkpoint, const std::string& image, const fs::path& dir, bool force,
              std::ostream& out) {
  Loaded l = load_trained(checkpoint, "");
  const Tensor x = load_image(image, l.model->external_resolution());
  prepare_output_dir(dir, force);
  NoGradGuard no_grad;
  const LabelMap labels = argmax_labels(l.model->forward(x));
  write_label_map(dir / "mask.png", labels);
  write_label_colors(dir / "overlay.png", labels, x);
  out << "wrote " << (dir / "mask.png").string() << " and " << (dir / "overlay.png").string() << "\n";
  return kExitOk;
}

int cmd_resize_compare(const std::string& checkpoint, const std::string& image, const fs::path& dir, bool force,
                       std::ostream& out) {
  Loaded l = load_trained(checkpoint, "");
  SwinTRModel& m = *l.model;
  if (!m.downsampler().trainable()) {
    throw ConfigError("resize-compare needs a trainable-resizer checkpoint, got variant " +
                      std::string(variant_name(m.variant())));
  }
  const Tensor x = load_image(image, m.external_resolution());
  prepare_output_dir(dir, force);
  NoGradGuard no_grad;
  const int s = m.internal().image_size();
  const int full = m.external_resolution();
  const Tensor down_learned = m.downsampler().forward(x);
  const Tensor down_bilinear = bilinear_resize(x, s, s);
  const Tensor scores = m.internal().forward(down_learned);
  write_image(dir / "input.png", x);
  write_image(dir / "down_bilinear.png", down_bilinear);
  write_image(dir / "down_lapdcn.png", down_learned);
  write_label_colors(dir / "mask_internal.png", argmax_labels(scores));
  write_label_colors(dir / "mask_up_bilinear.png", argmax_labels(bilinear_resize(scores, full, full)));
  write_label_colors(dir / "mask_up_lapscn.png", argmax_labels(m.upsampler().forward(scores)));
  out << "wrote 6 comparison images to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_selftest(double perturb, std::ostream& out) {
  testing::set_conv_backward_perturbation(perturb);
  const auto results = run_selftest(out);
  testing::set_conv_backward_perturbation(0.0);
  const auto failed = std::count_if(results.begin(), results.end(), [](const SelfCheck& c) { return !c.passed; });
  out << results.size() - static_cast<std::size_t>(failed) << "/" << results.size() << " checks passed\n";
  return failed == 0 ? kExitOk : kExitFailed;
}

int cmd_synth(const fs::path& dir, const SynthConfig& cfg, bool force, std::ostream& out) {
  prepare_output_dir(dir, force);
  const SynthSummary s = synth_dataset_generate(dir, cfg);
  out << "wrote " << s.records.size() << " samples, manifest " << s.manifest.string() << "\n";
  for (std::size_t c = 0; c < s.class_fraction.size(); ++c) {
    out << "  class " << c << ": " << 100 * s.class_fraction[c] << "% of pixels\n";
  }
  return kExitOk;
}

int cmd_config(std::ostream& out) {
  for (const auto& k : run_config_keys()) {
    out << "# " << k.help << "\n" << k.key << "=" << k.default_value << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Laplacian-pyramid resizers around a windowed-transformer segmenter"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint, manifest, split = "test", report, image;
  bool force = false;
  int batch = 8;
  double perturb = 0.0;
  SynthConfig synth;
  std::string style = "shapes";

  auto* train = app.add_subcommand("train", "train a model from a run config");
  train->add_option("--config", config_path, "run config (key=value lines)")->required();
  train->add_option("--out", out_dir, "output directory (overrides output.dir)");
  train->add_flag("--force", force, "allow a non-empty output directory");

  auto* eval = app.add_subcommand("eval", "score a checkpoint on a manifest split");
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--manifest", manifest)->required();
  eval->add_option("--split", split, "train, val or test")->capture_default_str();
  eval->add_option("--out", report, "also write the report to this file");
  eval->add_option("--config", config_path, "architecture config overriding the embedded one");
  eval->add_option("--batch", batch)->capture_default_str();

  auto* infer = app.add_subcommand("infer", "predict a mask for one image");
  infer->add_option("--checkpoint", checkpoint)->required();
  infer->add_option("--image", image)->required();
  infer->add_option("--out", out_dir, "directory receiving mask.png and overlay.png")->required();
  infer->add_flag("--force", force);

  auto* compare = app.add_subcommand("resize-compare", "learned vs bilinear resizing of one image");
  compare->add_option("--checkpoint", checkpoint)->required();
  compare->add_option("--image", image)->required();
  compare->add_option("--out-dir", out_dir)->required();
  compare->add_flag("--force", force);

  auto* self = app.add_subcommand("selftest", "run the built-in invariant checks");
  self->add_option("--perturb-conv-backward", perturb, "test hook: corrupt conv weight gradients")
      ->group("");

  auto* gen = app.add_subcommand("synth-data", "generate a synthetic segmentation dataset");
  gen->add_option("--out", out_dir)->required();
  gen->add_option("--train", synth.train)->capture_default_str();
  gen->add_option("--val", synth.val)->capture_default_str();
  gen->add_option("--test", synth.test)->capture_default_str();
  gen->add_option("--size", synth.size)->capture_default_str();
  gen->add_option("--classes", synth.classes)->capture_default_str();
  gen->add_option("--seed", synth.seed)->capture_default_str();
  gen->add_option("--style", style, "shapes or thin_bars")->capture_default_str();
  gen->add_flag("--force", force);

  auto* config = app.add_subcommand("config", "print every run config key with its default");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (train->parsed()) return cmd_train(config_path, out_dir, force, out);
    if (eval->parsed()) return cmd_eval(checkpoint, manifest, split, report, config_path, batch, out);
    if (infer->parsed()) return cmd_infer(checkpoint, image, out_dir, force, out);
    if (compare->parsed()) return cmd_resize_compare(checkpoint, image, out_dir, force, out);
    if (self->parsed()) return cmd_selftest(perturb, out);
    if (gen->parsed()) {
      synth.style = parse_synth_style(style);
      return cmd_synth(out_dir, synth, force, out);
    }
    if (config->parsed()) return cmd_config(out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const DimensionError& e) {
    err << "dimension error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitFailed;
  }
  return kExitInvalid;
}

}  // namespace swintr
