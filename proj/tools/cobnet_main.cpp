// cobnet: train, evaluate, ablate, gradient-check and render.
//
// Exit codes: 0 success, 1 check failure, 2 config error, 3 missing artifact.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cobnet/config.hpp"
#include "cobnet/error.hpp"
#include "cobnet/gradcheck.hpp"
#include "cobnet/image_io.hpp"
#include "cobnet/metrics.hpp"
#include "cobnet/model.hpp"
#include "cobnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace cobnet;

namespace {

enum Exit { kOk = 0, kCheckFailed = 1, kConfigError = 2, kMissingArtifact = 3 };

struct Flags {
  std::string config;
  std::string checkpoint;
  std::optional<int> fold;
  std::optional<std::size_t> k;
  bool weak = false;
  std::optional<std::size_t> episodes;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string out;
  std::vector<std::string> settings;
  std::string corrupt;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "key=value configuration file");
  cmd->add_option("--fold", f.fold, "single fold 0..3 (default: all)");
  cmd->add_option("--threads", f.threads, "worker threads for evaluation");
  cmd->add_option("--out", f.out, "output root (overrides COBNET_DATA_DIR and out_dir)");
  cmd->add_option("--set", f.settings, "extra key=value override, repeatable");
}

void add_eval_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--k", f.k, "support shots");
  cmd->add_flag("--weak", f.weak, "no support annotation: global pooling and all-ones masks");
  cmd->add_option("--episodes", f.episodes, "episodes per fold");
  cmd->add_option("--checkpoint", f.checkpoint, "directory holding fold<i> checkpoints (default: output root)");
}

RunConfig resolve(const Flags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_config(f.config);
  for (const auto& s : f.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    apply_setting(c, s.substr(0, eq), s.substr(eq + 1));
  }
  if (f.fold) apply_setting(c, "fold", std::to_string(*f.fold));
  if (f.k) c.shots = *f.k;
  if (f.weak) c.weak = true;
  if (f.episodes) c.episodes = *f.episodes;
  if (f.threads) c.threads = std::max<std::size_t>(1, *f.threads);
  if (!f.out.empty()) {
    c.out_dir = f.out;
  } else if (const char* env = std::getenv("COBNET_DATA_DIR"); env && *env) {
    c.out_dir = env;
  }
  if (c.shots == 0) throw ConfigError("k must be at least 1");
  return c;
}

std::vector<std::size_t> selected_folds(const RunConfig& c) {
  if (c.fold >= 0) return {static_cast<std::size_t>(c.fold)};
  return {0, 1, 2, 3};
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

fs::path fold_dir(const fs::path& root, std::size_t fold) { return root / ("fold" + std::to_string(fold)); }

// Trains one fold into `dir`, writing the checkpoint and its loss log.
void train_into(const fs::path& dir, const RunConfig& config, std::size_t fold) {
  const Backbone backbone(config.backbone);
  fs::create_directories(dir);
  std::ofstream log(dir / "loss.log", std::ios::trunc);
  if (!log) throw FormatError("cannot write " + (dir / "loss.log").string());
  auto observer = [&](const IterationLog& entry) {
    char line[96];
    std::snprintf(line, sizeof line, "%zu %.10g %.10g\n", entry.iteration, entry.lr, entry.loss);
    log << line;
  };
  SamplerConfig sampler = config.sampler();
  TrainResult result = train_fold(FoldSplit::standard(), fold, backbone, config.train, sampler, observer);
  save_checkpoint(dir, config, fold, result.model);
  std::cout << "fold " << fold << ": trained " << result.log.size() << " iterations, final loss "
            << (result.log.empty() ? 0.0 : result.log.back().loss) << ", checkpoint " << dir.string()
            << " digest=" << model_digest(result.model) << '\n';
}

int cmd_train(const Flags& f) {
  RunConfig config = resolve(f);
  if (f.seed) config.train.seed = *f.seed;
  const fs::path root = config.out_dir;
  write_text(root / "config.txt", to_text(config));
  for (std::size_t fold : selected_folds(config)) train_into(fold_dir(root, fold), config, fold);
  return kOk;
}

struct LoadedFold {
  Checkpoint checkpoint;
  Backbone backbone;
};

std::vector<LoadedFold> load_folds(const fs::path& root, const std::vector<std::size_t>& folds) {
  std::vector<LoadedFold> out;
  for (std::size_t fold : folds) {
    Checkpoint ck = load_checkpoint(fold_dir(root, fold));
    if (ck.fold != fold) throw FormatError(fold_dir(root, fold).string() + " holds fold " + std::to_string(ck.fold));
    Backbone bb(ck.config.backbone);
    out.push_back({std::move(ck), std::move(bb)});
  }
  return out;
}

EvalProtocol protocol_for(const RunConfig& config, const std::vector<std::size_t>& folds) {
  EvalProtocol p;
  p.episodes_per_fold = config.episodes;
  p.shots = config.shots;
  p.weak = config.weak;
  p.seed = config.eval_seed;
  p.threads = config.threads;
  p.folds = folds;
  p.sampler = config.sampler();
  return p;
}

CrossValidationReport evaluate_loaded(const std::vector<LoadedFold>& loaded, const EvalProtocol& protocol) {
  std::vector<Segmenter> segmenters;
  for (const auto& l : loaded) segmenters.push_back({&l.backbone, &l.checkpoint.model});
  PredictorFactory factory = [&](std::size_t fold) -> std::function<Mask(const Episode&)> {
    for (std::size_t i = 0; i < loaded.size(); ++i) {
      if (loaded[i].checkpoint.fold == fold) {
        const Segmenter* s = &segmenters[i];
        return [s](const Episode& e) { return s->predict(e); };
      }
    }
    return {};
  };
  return cross_validate(factory, FoldSplit::standard(), protocol);
}

CrossValidationReport evaluate_background(const EvalProtocol& protocol) {
  PredictorFactory factory = [](std::size_t) -> std::function<Mask(const Episode&)> {
    return [](const Episode& e) { return Mask(e.query_mask.height, e.query_mask.width, 0); };
  };
  return cross_validate(factory, FoldSplit::standard(), protocol);
}

int cmd_eval(const Flags& f) {
  RunConfig config = resolve(f);
  if (f.seed) config.eval_seed = *f.seed;
  const fs::path root = config.out_dir;
  const fs::path ckpt_root = f.checkpoint.empty() ? root : fs::path(f.checkpoint);
  const auto folds = selected_folds(config);
  const auto loaded = load_folds(ckpt_root, folds);
  // The image pipeline must match the one the checkpoint was trained with.
  config.backbone = loaded.front().checkpoint.config.backbone;
  config.image_side = loaded.front().checkpoint.config.image_side;
  const EvalProtocol protocol = protocol_for(config, folds);

  const std::string label = "k" + std::to_string(config.shots) + (config.weak ? "_weak" : "");
  const auto report = evaluate_loaded(loaded, protocol);
  const auto baseline = evaluate_background(protocol);

  std::ostringstream records;
  for (const auto& l : loaded) {
    records << "record=checkpoint fold=" << l.checkpoint.fold << " digest=" << model_digest(l.checkpoint.model) << '\n';
  }
  records << format_report_records(report, label) << format_report_records(baseline, "background");
  std::cout << format_report_table(report, "CobNet " + std::to_string(config.shots) + "-shot" +
                                               (config.weak ? " (weak)" : ""));
  std::cout << records.str();
  write_text(root / ("eval_" + label + ".txt"), records.str());
  write_text(root / ("eval_" + label + ".config.txt"), to_text(config));
  return kOk;
}

// Returns the fold models of one ablation row, training any that are missing.
std::vector<LoadedFold> ensure_variant(const fs::path& dir, const RunConfig& config,
                                       const std::vector<std::size_t>& folds) {
  for (std::size_t fold : folds) {
    if (!fs::exists(fold_dir(dir, fold) / "manifest.txt")) train_into(fold_dir(dir, fold), config, fold);
  }
  return load_folds(dir, folds);
}

int cmd_ablate(const Flags& f) {
  RunConfig config = resolve(f);
  if (f.seed) config.eval_seed = *f.seed;
  const fs::path root = config.out_dir;
  const fs::path ckpt_root = f.checkpoint.empty() ? root : fs::path(f.checkpoint);
  const auto folds = selected_folds(config);
  const auto full = load_folds(ckpt_root, folds);
  RunConfig base = full.front().checkpoint.config;
  base.fold = config.fold;
  config.backbone = base.backbone;
  config.image_side = base.image_side;
  const EvalProtocol protocol = protocol_for(config, folds);

  std::ostringstream out;
  char line[160];
  out << "seeds: train_seed=" << base.train.seed << " backbone_seed=" << base.backbone.seed
      << " eval_seed=" << config.eval_seed << " (shared by every row)\n";
  for (const auto& l : full) {
    out << "full checkpoint fold=" << l.checkpoint.fold << " digest=" << model_digest(l.checkpoint.model) << '\n';
  }
  auto row = [&](const std::string& kind, const std::string& name, const CrossValidationReport& r) {
    std::snprintf(line, sizeof line, "record=%s name=%s miou=%.6f fb_iou=%.6f\n", kind.c_str(), name.c_str(),
                  r.mean_miou, r.mean_fb_iou);
    out << line;
    std::cout << line << std::flush;
  };

  const fs::path ablation_root = root / "ablation";
  const CrossValidationReport full_report = evaluate_loaded(full, protocol);
  for (Ablation mode : {Ablation::mbm_o, Ablation::mbm_s, Ablation::mbm_only, Ablation::full}) {
    if (mode == base.train.model.ablation) {
      row("variant", ablation_name(mode), full_report);
      continue;
    }
    RunConfig v = base;
    v.train.model.ablation = mode;
    row("variant", ablation_name(mode), evaluate_loaded(ensure_variant(ablation_root / ablation_name(mode), v, folds), protocol));
  }
  for (std::size_t j : {1, 2, 4, 8}) {
    const std::string name = "j=" + std::to_string(j);
    if (j == base.train.model.grid && base.train.model.ablation == Ablation::full) {
      row("grid", name, full_report);
      continue;
    }
    RunConfig v = base;
    v.train.model.ablation = Ablation::full;
    v.train.model.grid = j;
    row("grid", name, evaluate_loaded(ensure_variant(ablation_root / ("grid" + std::to_string(j)), v, folds), protocol));
  }
  std::cout << out.str().substr(0, out.str().find("record="));
  write_text(root / "ablation.txt", out.str());
  write_text(root / "ablation.config.txt", to_text(config));
  return kOk;
}

int cmd_gradcheck(const Flags& f) {
  GradcheckOptions options;
  if (f.seed) options.seed = *f.seed;
  options.corrupt_parameter = f.corrupt;
  const GradcheckReport report = run_gradcheck(options);
  std::cout << report.format();
  return report.passed() ? kOk : kCheckFailed;
}

Raster tile_horizontal(const std::vector<Raster>& parts) {
  Raster out{0, parts.front().height, parts.front().channels, {}};
  for (const auto& p : parts) out.width += p.width;
  out.pixels.resize(out.width * out.height * out.channels);
  std::size_t x0 = 0;
  for (const auto& p : parts) {
    for (std::size_t y = 0; y < p.height; ++y) {
      std::copy_n(&p.pixels[y * p.width * p.channels], p.width * p.channels,
                  &out.pixels[(y * out.width + x0) * out.channels]);
    }
    x0 += p.width;
  }
  return out;
}

int cmd_render(const Flags& f) {
  RunConfig config = resolve(f);
  const std::uint64_t episode_seed = f.seed.value_or(config.eval_seed);
  const std::size_t fold = config.fold >= 0 ? static_cast<std::size_t>(config.fold) : 0;
  const fs::path root = config.out_dir;
  const fs::path ckpt_root = f.checkpoint.empty() ? root : fs::path(f.checkpoint);
  const auto loaded = load_folds(ckpt_root, {fold});
  const auto& l = loaded.front();
  config.backbone = l.checkpoint.config.backbone;
  config.image_side = l.checkpoint.config.image_side;

  Episode ep = sample_indexed_episode(FoldSplit::standard(), fold, EpisodeRole::test, config.shots, episode_seed, 0,
                                      config.sampler());
  if (config.weak) ep = make_weak(std::move(ep));
  ForwardResult result;
  {
    Graph::NoGrad no_grad;
    result = l.checkpoint.model.forward(prepare_input(l.backbone, ep));
  }
  const Mask prediction = cam::predict_mask(result.logits);

  const fs::path dir = root / "render" / ("fold" + std::to_string(fold) + "_seed" + std::to_string(episode_seed));
  fs::create_directories(dir);
  std::vector<Raster> overlays;
  for (const auto& s : ep.support) overlays.push_back(overlay_raster(s.image, s.mask));
  write_netpbm(dir / "support_overlay.ppm", tile_horizontal(overlays));
  write_netpbm(dir / "query.ppm", image_raster(ep.query_image));
  write_netpbm(dir / "truth.pgm", mask_raster(ep.query_mask));
  write_netpbm(dir / "prediction.pgm", mask_raster(prediction));
  write_netpbm(dir / "align.pgm", heat_raster(result.align.values));
  const Tensor attention = result.attention.defined()
                               ? result.attention
                               : Tensor::zeros({1, result.align.values.dim(1), result.align.values.dim(2)});
  write_netpbm(dir / "attention.pgm", heat_raster(attention));
  write_text(dir / "episode.txt", manifest_line(ep) + '\n');
  write_text(dir / "config.txt", to_text(config));
  const EpisodeCounts counts = episode_counts(prediction, ep.query_mask);
  std::cout << "rendered " << dir.string() << " class=" << class_name(ep.class_id) << " iou="
            << (counts.union_ ? static_cast<double>(counts.intersection) / counts.union_ : 1.0) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot segmentation with object and background prototypes"};
  app.require_subcommand(1);
  Flags flags;

  auto* train = app.add_subcommand("train", "meta-train one fold or all folds");
  add_common(train, flags);
  train->add_option("--seed", flags.seed, "training seed");

  auto* eval = app.add_subcommand("eval", "cross-validated mIoU and FB-IoU");
  add_common(eval, flags);
  add_eval_flags(eval, flags);
  eval->add_option("--seed", flags.seed, "evaluation episode seed");

  auto* ablate = app.add_subcommand("ablate", "variant comparison and background grid sweep");
  add_common(ablate, flags);
  add_eval_flags(ablate, flags);
  ablate->add_option("--seed", flags.seed, "evaluation episode seed");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every trainable parameter");
  gradcheck->add_option("--seed", flags.seed, "initialisation seed");
  gradcheck->add_option("--corrupt", flags.corrupt, "perturb this parameter's analytic gradient (test hook)")
      ->group("");

  auto* render = app.add_subcommand("render", "write one episode and its prediction as PGM/PPM files");
  add_common(render, flags);
  add_eval_flags(render, flags);
  render->add_option("--seed", flags.seed, "episode seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train) return cmd_train(flags);
    if (*eval) return cmd_eval(flags);
    if (*ablate) return cmd_ablate(flags);
    if (*gradcheck) return cmd_gradcheck(flags);
    if (*render) return cmd_render(flags);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kConfigError;
  } catch (const MissingArtifactError& e) {
    std::cerr << "missing artifact: " << e.what() << '\n';
    return kMissingArtifact;
  } catch (const FormatError& e) {
    std::cerr << "bad artifact: " << e.what() << '\n';
    return kMissingArtifact;
  } catch (const TrainingError& e) {
    std::cerr << "training failed: " << e.what() << "\nepisode: " << e.manifest() << '\n';
    return kCheckFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCheckFailed;
  }
  return kConfigError;
}
