#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cobnet/tensor.hpp"

namespace cobnet {

/// |a − n| / max(|a|, |n|, 1e−6)
double relative_error(double analytic, double numeric);

/// Central differences of `loss` with respect to every element of `x`,
/// perturbing x in place and restoring it afterwards.
std::vector<double> numeric_gradient(const std::function<double()>& loss, Tensor& x, double step = 1e-5);

struct GradcheckOptions {
  std::uint64_t seed = 0;
  double step = 1e-5;
  double threshold = 1e-4;
  // Test hook: scales the analytic gradient of this parameter by 1.5.
  std::string corrupt_parameter;
};

struct ParameterCheck {
  std::string name;
  std::string module;
  std::size_t elements = 0;
  double max_error = 0.0;
};

struct GradcheckReport {
  std::vector<ParameterCheck> parameters;
  std::map<std::string, double> module_max;
  double threshold = 1e-4;

  bool passed() const;
  std::vector<std::string> offenders() const;
  std::string format() const;
};

/// The whole head on a tiny configuration (c=4, 8×8 features, pyramid {4, 2},
/// grid 2) against central differences for every trainable parameter.
GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

/// "mbm.scale1.head.conv1.weight" → "mbm.head"
std::string parameter_module(const std::string& name);

}  // namespace cobnet
