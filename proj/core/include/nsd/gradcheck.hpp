#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nsd/autodiff.hpp"
#include "nsd/model.hpp"

namespace nsd::gradcheck {

inline constexpr double kStep = 1e-5;
inline constexpr double kPrimitiveTolerance = 1e-4;
inline constexpr double kModelTolerance = 1e-3;
/// Denominator floor of the relative error.
inline constexpr double kRelativeFloor = 1e-7;

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = kRelativeFloor);

struct CheckResult {
  std::string name;
  std::size_t checked = 0;
  double max_rel_err = 0;
  double tolerance = 0;
  bool passed() const { return checked > 0 && max_rel_err < tolerance; }
};

/// Builds a scalar loss from the given leaves; called repeatedly with the
/// same leaves while their values are perturbed in place.
using LossFn = std::function<ad::Var<double>(const std::vector<ad::Var<double>>&)>;

/// Central differences on every scalar of every leaf (or `max_per_leaf`
/// seeded picks when nonzero).
CheckResult check(const std::string& name, std::vector<ad::Var<double>> leaves, const LossFn& loss,
                  double tolerance = kPrimitiveTolerance, std::size_t max_per_leaf = 0,
                  std::uint64_t seed = 0);

/// One check per differentiable primitive.
std::vector<CheckResult> primitive_suite(std::uint64_t seed = 0);

struct ModelCheckOptions {
  std::size_t batch = 2;
  std::size_t per_tensor = 2;  // scalars sampled from every parameter tensor
  std::uint64_t seed = 0;
};

/// Focal loss of the full model in train mode (batch statistics without
/// running-stat updates, dropout masks fixed per evaluation).
CheckResult model_check(const model::ModelConfig& config, const ModelCheckOptions& options = {});

std::string to_json(const std::vector<CheckResult>& results);

}  // namespace nsd::gradcheck
