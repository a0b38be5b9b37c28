#include "dag/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dag/error.hpp"

namespace dag {

double relative_error(double analytic, double numeric, double abs_floor) {
  const double diff = std::abs(analytic - numeric);
  if (diff == 0.0) return 0.0;
  return diff / std::max({std::abs(analytic), std::abs(numeric), abs_floor});
}

Image gradient(const EnergyBuilder& energy, const Image& point, double* value) {
  ad::Tape tape;
  ad::Var x = tape.leaf(point);
  ad::Var root = energy(tape, x);
  const double v = tape.forward_eval(root);
  tape.backward(root);
  if (value != nullptr) *value = v;
  return tape.adjoint(x);
}

namespace {

double evaluate(const EnergyBuilder& energy, const Image& point) {
  ad::Tape tape;
  ad::Var x = tape.leaf(point);
  return tape.forward_eval(energy(tape, x));
}

}  // namespace

GradCheckReport finite_diff_check(const EnergyBuilder& energy, const Image& point,
                                  const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw ContractError("finite_diff_check: step must be positive");

  const Image analytic = gradient(energy, point);

  std::vector<std::size_t> coords(point.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (options.samples < coords.size()) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.samples);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckReport report;
  report.step_size = options.step;
  Image probe = point;
  for (std::size_t i : coords) {
    const double x0 = point[i];
    probe[i] = x0 + options.step;
    const double up = evaluate(energy, probe);
    probe[i] = x0 - options.step;
    const double down = evaluate(energy, probe);
    probe[i] = x0;

    CoordinateError e;
    e.index = i;
    e.analytic = analytic[i];
    e.numeric = (up - down) / (2.0 * options.step);
    e.relative_error = relative_error(e.analytic, e.numeric, options.abs_floor);
    report.max_relative_error = std::max(report.max_relative_error, e.relative_error);
    report.per_coordinate_errors.push_back(e);
  }
  return report;
}

}  // namespace dag
