#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cobnet/episodes.hpp"
#include "cobnet/mask.hpp"

namespace cobnet {

struct EpisodeCounts {
  std::uint64_t intersection = 0;
  std::uint64_t union_ = 0;
  std::uint64_t bg_intersection = 0;
  std::uint64_t bg_union = 0;
};

EpisodeCounts episode_counts(const Mask& prediction, const Mask& truth);

/// Intersection/union totals accumulated per class, plus class-agnostic
/// foreground and background totals for FB-IoU.
class ClassTally {
 public:
  void add(std::size_t class_id, const EpisodeCounts& counts);
  void merge(const ClassTally& other);

  struct Totals {
    std::uint64_t intersection = 0;
    std::uint64_t union_ = 0;
  };
  const std::map<std::size_t, Totals>& per_class() const { return per_class_; }
  Totals foreground() const { return foreground_; }
  Totals background() const { return background_; }
  std::size_t episodes() const { return episodes_; }

 private:
  std::map<std::size_t, Totals> per_class_;
  Totals foreground_;
  Totals background_;
  std::size_t episodes_ = 0;
};

/// Mean over classes of Σ intersection / Σ union. Classes with zero union are
/// excluded and their ids appended to `skipped` when given.
double miou(const ClassTally& tally, std::vector<std::size_t>* skipped = nullptr);

/// (foreground IoU + background IoU) / 2 over all episodes, ignoring class.
double fb_iou(const ClassTally& tally);

struct FoldReport {
  std::size_t fold = 0;
  double miou = 0.0;
  double fb_iou = 0.0;
  std::size_t episodes = 0;
};

struct CrossValidationReport {
  std::vector<FoldReport> folds;
  double mean_miou = 0.0;
  double mean_fb_iou = 0.0;
};

struct EvalProtocol {
  std::size_t episodes_per_fold = 1000;
  std::size_t shots = 1;
  bool weak = false;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::vector<std::size_t> folds{0, 1, 2, 3};
  SamplerConfig sampler;
};

/// Returns the predictor for one fold, or an empty function when that fold
/// has no trained weights.
using PredictorFactory = std::function<std::function<Mask(const Episode&)>(std::size_t fold)>;

/// Evaluates each requested fold on its held-out classes; episodes are
/// identical for every predictor given the same protocol.
CrossValidationReport cross_validate(const PredictorFactory& factory, const FoldSplit& split,
                                     const EvalProtocol& protocol);

/// Tally of one fold; episode i is sample_indexed_episode(..., seed, i).
ClassTally evaluate_fold(const std::function<Mask(const Episode&)>& predictor, const FoldSplit& split,
                         std::size_t fold, const EvalProtocol& protocol);

std::string format_report_table(const CrossValidationReport& report, const std::string& title);
std::string format_report_records(const CrossValidationReport& report, const std::string& label);

}  // namespace cobnet
