#include "dcpt/cli.hpp"

#include <glob.h>

#include <cstdlib>
#include <sstream>

#include <CLI11.hpp>

#include "dcpt/checkpoint.hpp"
#include "dcpt/gradcam.hpp"
#include "dcpt/image.hpp"
#include "dcpt/keyframe.hpp"
#include "dcpt/manifest.hpp"
#include "dcpt/train.hpp"

namespace dcpt {

namespace {

std::vector<std::string> expand_glob(const std::string& pattern) {
  glob_t g{};
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
  std::vector<std::string> out;
  if (rc == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  }
  globfree(&g);
  if (out.empty()) throw DataError("no keyframe reports match '" + pattern + "'");
  return out;
}

std::array<std::size_t, 3> parse_triple(const std::string& text, const char* what) {
  std::array<std::size_t, 3> out{};
  std::stringstream ss(text);
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i == 3) throw ConfigError(std::string(what) + " takes exactly three comma-separated values");
    std::size_t used = 0;
    long v = 0;
    try {
      v = std::stol(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || v <= 0) throw ConfigError(std::string(what) + ": '" + item + "' is not a positive integer");
    out[i++] = static_cast<std::size_t>(v);
  }
  if (i != 3) throw ConfigError(std::string(what) + " takes exactly three comma-separated values");
  return out;
}

std::uint64_t effective_seed(std::uint64_t flag, std::ostream& err) {
  if (const char* env = std::getenv("DCPT_SEED"); env && *env) {
    char* end = nullptr;
    const auto v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw ConfigError(std::string("DCPT_SEED is not an integer: ") + env);
    err << "using DCPT_SEED=" << v << "\n";
    return v;
  }
  return flag;
}

std::filesystem::path with_suffix(const std::filesystem::path& p, const std::string& ext) {
  auto q = p;
  q.replace_extension(ext);
  return q;
}

struct KeyframesArgs {
  std::string input, format = "auto", out;
};

int cmd_keyframes(const KeyframesArgs& a, std::ostream& err) {
  VideoFormat fmt = VideoFormat::automatic;
  if (a.format == "mp4") fmt = VideoFormat::mp4;
  if (a.format == "annexb") fmt = VideoFormat::annexb;
  const auto report = classify_frames(a.input, fmt);
  write_text_file(a.out, report_to_jsonl(report));
  err << a.input << ": " << report.total_frames << " frames, " << report.keyframe_indices().size() << " keyframes\n";
  return 0;
}

struct ManifestArgs {
  std::string frames, labels, keyframes, regime = "K", out;
  std::size_t ratio = 3, normal_per_video = 1;
  std::uint64_t seed = 0;
};

int cmd_manifest(const ManifestArgs& a, std::ostream& err) {
  ManifestOptions opt;
  opt.regime = *parse_regime(a.regime);
  opt.real_normal_multiplier = a.ratio;
  opt.normal_per_video = a.normal_per_video;
  const auto labels = read_labels(a.labels);
  std::vector<FrameIndexReport> reports;
  for (const auto& path : expand_glob(a.keyframes)) reports.push_back(report_from_jsonl(read_text_file(path)));
  const auto m = build_manifest(a.frames, labels, reports, opt, RandomSource(effective_seed(a.seed, err)));
  write_text_file(a.out, manifest_to_jsonl(m));
  std::size_t fake = 0;
  for (const auto& e : m) fake += e.label == 1;
  err << "manifest: " << m.size() << " entries (" << m.size() - fake << " real, " << fake << " fake)\n";
  return 0;
}

struct TrainArgs {
  std::string manifest, config, ablation, depths, out, log;
  std::uint64_t seed = 0;
  std::size_t epochs = 10, batch = 32;
  double lr = 1e-4, wd = 1e-4;
};

template <typename T>
int train_typed(const TrainArgs& a, const ModelConfig& cfg, const Manifest& train_set, std::uint64_t seed,
                std::ostream& err) {
  Model<T> model(cfg, seed);
  err << "model: " << parameter_count<T>(model) << " parameters, " << train_set.size() << " training frames\n";
  TrainOptions opt;
  opt.adam.lr = a.lr;
  opt.adam.weight_decay = a.wd;
  opt.batch = a.batch;
  opt.epochs = a.epochs;
  opt.seed = seed;
  const auto log_path = a.log.empty() ? with_suffix(a.out, ".loss.jsonl") : std::filesystem::path(a.log);
  std::string log_text;
  const auto labels = manifest_labels(train_set);
  train_model<T>(model, train_set.size(), manifest_loader<T>(train_set, cfg.extractor.input_size, true), labels, opt,
                 [&](const EpochLog& e) {
                   log_text += e.to_json() + "\n";
                   write_text_file(log_path, log_text);
                   err << "epoch " << e.epoch << " loss " << e.mean_loss << " acc " << e.train_acc << "\n";
                 });
  save_checkpoint(model, a.out);
  err << "wrote " << a.out << "\n";
  return 0;
}

int cmd_train(const TrainArgs& a, std::ostream& err) {
  ModelConfig cfg = ModelConfig::desk_scale();
  if (!a.config.empty()) cfg = ModelConfig::from_json(read_text_file(a.config), cfg);
  if (!a.ablation.empty()) {
    auto ab = parse_ablation(a.ablation);
    if (!ab) throw ConfigError("unknown ablation '" + a.ablation + "'");
    cfg.transformer.ablation = *ab;
  }
  if (!a.depths.empty()) cfg.transformer.phase_depths = parse_triple(a.depths, "--depths");
  cfg.validate();
  const auto train_set = filter_split(read_manifest(a.manifest), Split::train);
  if (train_set.empty()) throw DataError("manifest " + a.manifest + " has no train entries");
  const auto seed = effective_seed(a.seed, err);
  return cfg.precision == Precision::f32 ? train_typed<float>(a, cfg, train_set, seed, err)
                                         : train_typed<double>(a, cfg, train_set, seed, err);
}

struct EvalArgs {
  std::string manifest, model, report, split = "test";
  std::size_t batch = 32;
};

template <typename T>
int eval_typed(const EvalArgs& a, const Manifest& set, std::ostream& err) {
  auto model = load_checkpoint<T>(a.model);
  const auto labels = manifest_labels(set);
  const auto report = evaluate_model<T>(
      model, set.size(), manifest_loader<T>(set, model.config().extractor.input_size, false), labels, a.batch);
  write_text_file(a.report, report.to_json());
  err << "ACC " << report.acc << " AUC " << report.auc << " on " << set.size() << " frames\n";
  return 0;
}

int cmd_eval(const EvalArgs& a, std::ostream& err) {
  auto split = parse_split(a.split);
  if (!split) throw ConfigError("unknown split '" + a.split + "'");
  const auto set = filter_split(read_manifest(a.manifest), *split);
  if (set.empty()) throw DataError("manifest " + a.manifest + " has no " + a.split + " entries to evaluate");
  const auto precision = read_checkpoint(a.model).config.precision;
  return precision == Precision::f32 ? eval_typed<float>(a, set, err) : eval_typed<double>(a, set, err);
}

struct GradcamArgs {
  std::string model, image, out;
  std::size_t layer = 4;
  int target_class = 1;
};

template <typename T>
int gradcam_typed(const GradcamArgs& a, std::ostream& err) {
  auto model = load_checkpoint<T>(a.model);
  const auto image = load_image<T>(a.image, model.config().extractor.input_size);
  const auto map = gradcam_heatmap(model, image, a.layer, a.target_class);
  const auto raster = map.to_image();
  write_png(a.out, raster);
  write_pgm(with_suffix(a.out, ".pgm"), raster);
  err << "wrote " << a.out << "\n";
  return 0;
}

int cmd_gradcam(const GradcamArgs& a, std::ostream& err) {
  const auto precision = read_checkpoint(a.model).config.precision;
  return precision == Precision::f32 ? gradcam_typed<float>(a, err) : gradcam_typed<double>(a, err);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& err) {
  CLI::App app{"Keyframe-based deepfake detection: keyframes, manifests, training, evaluation, Grad-CAM", "dcpt"};
  app.require_subcommand(1);

  KeyframesArgs kf;
  auto* keyframes = app.add_subcommand("keyframes", "Classify frames of a video as I / nonI");
  keyframes->add_option("--input", kf.input, "MP4 file or H.264 Annex B stream")->required();
  keyframes->add_option("--format", kf.format)->check(CLI::IsMember({"auto", "mp4", "annexb"}));
  keyframes->add_option("--out", kf.out, "Report (JSON Lines)")->required();

  ManifestArgs mf;
  auto* manifest = app.add_subcommand("manifest", "Build a training manifest from extracted frames");
  manifest->add_option("--frames", mf.frames, "Directory holding videos/<id>/<frame>.png")->required();
  manifest->add_option("--labels", mf.labels, "CSV: video_id,label[,split]")->required();
  manifest->add_option("--keyframes", mf.keyframes, "Glob of keyframe reports")->required();
  manifest->add_option("--regime", mf.regime)->check(CLI::IsMember({"K", "K_aug", "N", "K_plus_N"}));
  manifest->add_option("--ratio", mf.ratio, "Normal frames per real video for each per fake video")
      ->check(CLI::PositiveNumber);
  manifest->add_option("--normal-per-video", mf.normal_per_video)->check(CLI::PositiveNumber);
  manifest->add_option("--seed", mf.seed);
  manifest->add_option("--out", mf.out)->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a model on the train split of a manifest");
  train->add_option("--manifest", tr.manifest)->required();
  train->add_option("--config", tr.config, "Model config JSON (defaults to the 64 px desk-scale model)");
  train->add_option("--ablation", tr.ablation)
      ->check(CLI::IsMember({"vanilla", "pooling", "convproj", "reattention"}));
  train->add_option("--depths", tr.depths, "Blocks per phase, e.g. 8,8,8");
  train->add_option("--seed", tr.seed);
  train->add_option("--epochs", tr.epochs)->check(CLI::NonNegativeNumber);
  train->add_option("--batch", tr.batch)->check(CLI::PositiveNumber);
  train->add_option("--lr", tr.lr)->check(CLI::PositiveNumber);
  train->add_option("--wd", tr.wd)->check(CLI::NonNegativeNumber);
  train->add_option("--log", tr.log, "Loss log (JSON Lines); default <out>.loss.jsonl");
  train->add_option("--out", tr.out, "Checkpoint path")->required();

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Frame-level ACC / AUC on one manifest split");
  eval->add_option("--manifest", ev.manifest)->required();
  eval->add_option("--model", ev.model)->required();
  eval->add_option("--report", ev.report)->required();
  eval->add_option("--split", ev.split)->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--batch", ev.batch)->check(CLI::PositiveNumber);

  GradcamArgs gc;
  auto* gradcam = app.add_subcommand("gradcam", "Grad-CAM heatmap for one image");
  gradcam->add_option("--model", gc.model)->required();
  gradcam->add_option("--image", gc.image)->required();
  gradcam->add_option("--layer", gc.layer, "Extractor group 0-4");
  gradcam->add_option("--class", gc.target_class);
  gradcam->add_option("--out", gc.out, "Heatmap PNG (a .pgm is written next to it)")->required();

  std::vector<std::string> argv_store{"dcpt"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    err << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*keyframes) return cmd_keyframes(kf, err);
    if (*manifest) return cmd_manifest(mf, err);
    if (*train) return cmd_train(tr, err);
    if (*eval) return cmd_eval(ev, err);
    if (*gradcam) return cmd_gradcam(gc, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace dcpt
