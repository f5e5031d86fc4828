#include "cobnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "cobnet/error.hpp"
#include "cobnet/trainer.hpp"

namespace cobnet {

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

std::vector<double> numeric_gradient(const std::function<double()>& loss, Tensor& x, double step) {
  std::vector<double> grad(x.numel());
  auto data = x.mutable_data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double saved = data[i];
    data[i] = saved + step;
    const double up = loss();
    data[i] = saved - step;
    const double down = loss();
    data[i] = saved;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

std::string parameter_module(const std::string& name) {
  std::vector<std::string> parts;
  std::istringstream is(name);
  std::string part;
  while (std::getline(is, part, '.')) parts.push_back(part);
  if (parts.size() >= 3 && parts[0] == "mbm") return "mbm." + parts[2];
  if (parts.size() >= 2) return parts[0] + "." + parts[1];
  return name;
}

bool GradcheckReport::passed() const { return offenders().empty(); }

std::vector<std::string> GradcheckReport::offenders() const {
  std::vector<std::string> out;
  for (const auto& p : parameters) {
    if (!(p.max_error < threshold)) out.push_back(p.name);
  }
  return out;
}

std::string GradcheckReport::format() const {
  std::ostringstream os;
  char buf[256];
  for (const auto& p : parameters) {
    std::snprintf(buf, sizeof buf, "param %-40s elements=%-5zu max_rel_err=%.3e\n", p.name.c_str(), p.elements,
                  p.max_error);
    os << buf;
  }
  for (const auto& [module, err] : module_max) {
    std::snprintf(buf, sizeof buf, "module %-20s max_rel_err=%.3e %s\n", module.c_str(), err,
                  err < threshold ? "ok" : "FAIL");
    os << buf;
  }
  const auto bad = offenders();
  if (bad.empty()) {
    std::snprintf(buf, sizeof buf, "gradcheck passed: %zu parameters, threshold %.0e\n", parameters.size(), threshold);
    os << buf;
  } else {
    os << "gradcheck FAILED for:";
    for (const auto& name : bad) os << ' ' << name;
    os << '\n';
  }
  return os.str();
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  ModelConfig config;
  config.channels = 4;
  config.pyramid = {4, 2};
  config.grid = 2;
  config.ablation = Ablation::full;
  const CobNet model(config, options.seed);

  Rng rng(mix_seed(options.seed, 0x6AD));
  EpisodeInput input;
  input.query = normal_tensor({4, 8, 8}, 1.0, rng, false);
  Mask support_mask(8, 8, 0);
  Mask truth(16, 16, 0);
  std::bernoulli_distribution coin(0.4);
  for (auto& v : support_mask.values) v = coin(rng) ? 1 : 0;
  support_mask.at(3, 3) = 1;
  for (auto& v : truth.values) v = coin(rng) ? 1 : 0;
  input.shots.push_back({normal_tensor({4, 8, 8}, 1.0, rng, false), support_mask});
  input.out_height = truth.height;
  input.out_width = truth.width;

  const ParameterList params = model.parameters();
  {
    Graph graph;
    Graph::Scope scope(graph);
    const Tensor loss = episode_loss(model, input, truth);
    for (auto p : params) p.tensor.zero_grad();
    graph.backward(loss);
  }
  auto evaluate = [&] {
    Graph::NoGrad no_grad;
    return episode_loss(model, input, truth).item();
  };

  GradcheckReport report;
  report.threshold = options.threshold;
  bool corrupted = options.corrupt_parameter.empty();
  for (auto p : params) {
    std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    if (p.name == options.corrupt_parameter) {
      for (auto& g : analytic) g = g * 1.5 + 1e-3;
      corrupted = true;
    }
    const auto numeric = numeric_gradient(evaluate, p.tensor, options.step);
    ParameterCheck check{p.name, parameter_module(p.name), analytic.size(), 0.0};
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      check.max_error = std::max(check.max_error, relative_error(analytic[i], numeric[i]));
    }
    auto& module_err = report.module_max[check.module];
    module_err = std::max(module_err, check.max_error);
    report.parameters.push_back(std::move(check));
  }
  if (!corrupted) throw ConfigError("unknown parameter '" + options.corrupt_parameter + "' for corruption");
  return report;
}

}  // namespace cobnet
