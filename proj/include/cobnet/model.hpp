#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cobnet/backbone.hpp"
#include "cobnet/cam.hpp"
#include "cobnet/episodes.hpp"
#include "cobnet/mbm.hpp"

namespace cobnet {

/// Model variants of the ablation study.
///   full    : MBM with query background prototypes, cross attention, classifier
///   mbm_only: MBM, no attention: classifier(F_o, F_b)
///   mbm_s   : background prototypes from the support complement, no attention
///   mbm_o   : object branch only: classifier(F_o, F_o)
enum class Ablation { full, mbm_only, mbm_s, mbm_o };

std::string ablation_name(Ablation mode);
Ablation parse_ablation(const std::string& name);

struct ModelConfig {
  std::size_t channels = 64;
  std::vector<std::size_t> pyramid{16, 12, 10, 8};
  std::size_t grid = 4;
  Ablation ablation = Ablation::full;
};

/// Features of one episode, ready for the segmentation head.
struct EpisodeInput {
  std::vector<SupportShot> shots;  // masks at feature resolution
  FeatureMap query;
  std::size_t out_height = 0;  // ground-truth resolution
  std::size_t out_width = 0;
  bool weak = false;
};

struct ForwardResult {
  Tensor logits;                      // 2×H×W, at ground-truth resolution
  std::vector<Tensor> intermediate;   // 2×k_i×k_i per pyramid scale
  AlignMask align;                    // 1×h×w
  Tensor attention;                   // 1×h×w; undefined without attention
  Tensor object_features;             // F_o, c×h×w
  Tensor background_features;         // F_b, c×h×w; undefined for mbm_o
};

/// Trainable segmentation head on top of frozen features.
class CobNet {
 public:
  CobNet(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ForwardResult forward(const EpisodeInput& input) const;

  /// Stable-ordered list of every trainable tensor of this variant.
  ParameterList parameters() const;

  const std::vector<ScaleParams>& scales() const { return scales_; }
  const AttentionParams& attention_params() const { return attention_; }
  const ClassifierParams& classifier_params() const { return classifier_; }

  void save(const std::filesystem::path& dir) const;
  /// Overwrites parameter values from CBT1 files written by save().
  void load(const std::filesystem::path& dir);

 private:
  ModelConfig config_;
  std::vector<ScaleParams> scales_;
  AttentionParams attention_;
  ClassifierParams classifier_;
};

EpisodeInput prepare_input(const Backbone& backbone, const Episode& episode);

/// Backbone plus head: the full inference pipeline of one trained model.
struct Segmenter {
  const Backbone* backbone = nullptr;
  const CobNet* model = nullptr;

  Mask predict(const Episode& episode) const;
};

}  // namespace cobnet
