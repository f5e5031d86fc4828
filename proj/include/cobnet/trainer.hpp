#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cobnet/backbone.hpp"
#include "cobnet/episodes.hpp"
#include "cobnet/model.hpp"

namespace cobnet {

struct TrainConfig {
  double base_lr = 0.05;
  double momentum = 0.9;
  double poly_power = 0.9;
  std::size_t epochs = 40;
  std::size_t iterations_per_epoch = 25;
  std::size_t batch_size = 4;
  std::uint64_t seed = 1;
  std::size_t shots = 1;
  bool weak = false;
  bool augment = true;
  ModelConfig model;

  std::size_t max_iterations() const { return epochs * iterations_per_epoch; }
};

/// base_lr · (1 − iter/max_iter)^power
double poly_lr(std::size_t iter, std::size_t max_iter, const TrainConfig& config);

/// v ← momentum·v + g;  p ← p − lr·v
void sgd_step(std::span<double> param, std::span<const double> grad, std::span<double> velocity, double lr,
              double momentum);

/// SGD with momentum over a fixed parameter registry.
class SgdMomentum {
 public:
  SgdMomentum(ParameterList params, double momentum);

  void step(double lr);
  void zero_grad();
  const ParameterList& parameters() const { return params_; }
  const std::vector<std::vector<double>>& velocity() const { return velocity_; }

 private:
  ParameterList params_;
  std::vector<std::vector<double>> velocity_;
  double momentum_;
};

struct IterationLog {
  std::size_t iteration = 0;
  double lr = 0.0;
  double loss = 0.0;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::string manifest)
      : std::runtime_error(what), manifest_(std::move(manifest)) {}
  const std::string& manifest() const { return manifest_; }

 private:
  std::string manifest_;
};

struct TrainResult {
  CobNet model;
  std::vector<IterationLog> log;
};

using IterationObserver = std::function<void(const IterationLog&)>;

/// Meta-trains a model on episodes drawn from every fold except `fold`.
/// The loss of a batch is the mean of the per-episode total losses.
TrainResult train_fold(const FoldSplit& split, std::size_t fold, const Backbone& backbone, const TrainConfig& config,
                       const SamplerConfig& sampler, const IterationObserver& observer = {});

/// Per-episode total loss on a recorded graph (used by training and gradient checks).
Tensor episode_loss(const CobNet& model, const EpisodeInput& input, const Mask& truth);

}  // namespace cobnet
