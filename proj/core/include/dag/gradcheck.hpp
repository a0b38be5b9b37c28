#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "dag/autodiff.hpp"
#include "dag/image.hpp"

namespace dag {

struct CoordinateError {
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::vector<CoordinateError> per_coordinate_errors;
  double step_size = 0.0;
};

// Builds a scalar energy of `x` on `tape`.
using EnergyBuilder = std::function<ad::Var(ad::Tape& tape, ad::Var x)>;

struct GradCheckOptions {
  std::size_t samples = 16;
  double step = 1e-4;
  std::uint64_t seed = 0;
  // Denominator floor: rel = |a - n| / max(|a|, |n|, abs_floor). Exact zeros
  // on both sides count as zero error.
  double abs_floor = 1e-6;
};

// Compares reverse-mode adjoints against central differences at `samples`
// distinct random coordinates of `point` (all coordinates when samples >= size).
// Each perturbed evaluation rebuilds the graph on a fresh tape.
GradCheckReport finite_diff_check(const EnergyBuilder& energy, const Image& point,
                                  const GradCheckOptions& options = {});

// Adjoint of `energy` at `point` in one forward/backward pass.
Image gradient(const EnergyBuilder& energy, const Image& point, double* value = nullptr);

double relative_error(double analytic, double numeric, double abs_floor);

}  // namespace dag
