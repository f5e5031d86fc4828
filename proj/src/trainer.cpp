#include "cobnet/trainer.hpp"

#include <cmath>

#include "cobnet/error.hpp"
#include "cobnet/ops.hpp"

namespace cobnet {

double poly_lr(std::size_t iter, std::size_t max_iter, const TrainConfig& config) {
  if (max_iter == 0 || iter > max_iter) throw ConfigError("poly schedule needs 0 <= iter <= max_iter, max_iter > 0");
  const double progress = static_cast<double>(iter) / static_cast<double>(max_iter);
  return config.base_lr * std::pow(1.0 - progress, config.poly_power);
}

void sgd_step(std::span<double> param, std::span<const double> grad, std::span<double> velocity, double lr,
              double momentum) {
  if (param.size() != grad.size() || param.size() != velocity.size()) {
    throw DimensionError("sgd_step: parameter, gradient and velocity sizes differ");
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grad[i];
    param[i] -= lr * velocity[i];
  }
}

SgdMomentum::SgdMomentum(ParameterList params, double momentum) : params_(std::move(params)), momentum_(momentum) {
  for (const auto& p : params_) {
    if (!p.tensor.requires_grad()) throw UsageError("optimizer parameter " + p.name + " does not require grad");
    velocity_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void SgdMomentum::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = params_[i].tensor;
    const std::vector<double> zeros(t.has_grad() ? 0 : t.numel(), 0.0);
    const std::span<const double> g = t.has_grad() ? t.grad() : std::span<const double>(zeros);
    sgd_step(t.mutable_data(), g, velocity_[i], lr, momentum_);
  }
}

void SgdMomentum::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

Tensor episode_loss(const CobNet& model, const EpisodeInput& input, const Mask& truth) {
  const ForwardResult out = model.forward(input);
  return cam::total_loss(out.logits, out.intermediate, truth);
}

TrainResult train_fold(const FoldSplit& split, std::size_t fold, const Backbone& backbone, const TrainConfig& config,
                       const SamplerConfig& sampler, const IterationObserver& observer) {
  if (fold >= kNumFolds) throw ConfigError("fold out of range: " + std::to_string(fold));
  if (config.batch_size == 0) throw ConfigError("batch size must be positive");
  if (config.base_lr <= 0.0) throw ConfigError("learning rate must be positive");
  if (config.model.channels != backbone.config().channels) {
    throw ConfigError("model channels do not match backbone channels");
  }
  TrainResult result{CobNet(config.model, mix_seed(config.seed, fold)), {}};
  SgdMomentum optimizer(result.model.parameters(), config.momentum);
  SamplerConfig train_sampler = sampler;
  train_sampler.augment = config.augment;

  const std::size_t max_iter = config.max_iterations();
  if (max_iter == 0) throw ConfigError("training needs at least one iteration");
  const double share = 1.0 / static_cast<double>(config.batch_size);
  for (std::size_t it = 0; it < max_iter; ++it) {
    const double lr = poly_lr(it, max_iter, config);
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      Episode ep = sample_indexed_episode(split, fold, EpisodeRole::train, config.shots, config.seed,
                                          it * config.batch_size + b, train_sampler);
      if (config.weak) ep = make_weak(std::move(ep));
      const EpisodeInput input = prepare_input(backbone, ep);
      Graph graph;
      Graph::Scope scope(graph);
      const Tensor loss = episode_loss(result.model, input, ep.query_mask);
      if (!std::isfinite(loss.item())) {
        throw TrainingError("non-finite loss at iteration " + std::to_string(it), manifest_line(ep));
      }
      graph.backward(scale(loss, share));
      batch_loss += share * loss.item();
    }
    optimizer.step(lr);
    optimizer.zero_grad();
    const IterationLog entry{it, lr, batch_loss};
    result.log.push_back(entry);
    if (observer) observer(entry);
  }
  return result;
}

}  // namespace cobnet
