#pragma once

// Guided DDIM sampling: energies are evaluated on the clean-image estimate,
// their gradients are carried back to x_t and added to the predicted noise.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dag/align_dca.hpp"
#include "dag/align_dga.hpp"
#include "dag/align_dma.hpp"
#include "dag/autodiff.hpp"
#include "dag/conditions.hpp"
#include "dag/diffusion.hpp"
#include "dag/report.hpp"

namespace dag {

enum class Module { kDca, kDga, kDma };

inline constexpr std::array<Module, 3> kModules = {Module::kDca, Module::kDga, Module::kDma};

std::string_view name(Module m);
// Accepts "dca", "dga", "dma"; throws ConfigError otherwise.
Module parse_module(std::string_view s);
double module_weight(Module m, const ModuleWeights& weights);

struct StepContext {
  int iteration = 0;
  int t = 0;
  double alpha_bar = 1.0;
  const ConditionSet* conditions = nullptr;
  // Previous iteration's clean-image estimate; null at the first iteration.
  const Image* reference = nullptr;
  // Drag signals prepared on `reference`.
  const std::vector<DragSignal>* signals = nullptr;
};

class Energy {
 public:
  virtual ~Energy() = default;

  virtual std::string name() const = 0;
  virtual double weight(const ModuleWeights& weights) const = 0;
  // Scalar energy of x0 on its tape, or an invalid Var when the energy has
  // nothing to act on at this step.
  virtual ad::Var build(ad::Var x0, const StepContext& context, ModuleReport& report) = 0;
};

class DcaEnergy final : public Energy {
 public:
  explicit DcaEnergy(const ConditionSet& conditions);
  std::string name() const override { return "dca"; }
  double weight(const ModuleWeights& w) const override { return w.dca; }
  ad::Var build(ad::Var x0, const StepContext& context, ModuleReport& report) override;

 private:
  TextConcepts text_;
};

class DgaEnergy final : public Energy {
 public:
  explicit DgaEnergy(const ConditionSet& conditions);
  std::string name() const override { return "dga"; }
  double weight(const ModuleWeights& w) const override { return w.dga; }
  ad::Var build(ad::Var x0, const StepContext& context, ModuleReport& report) override;

 private:
  LayoutTarget target_;
};

class DmaEnergy final : public Energy {
 public:
  std::string name() const override { return "dma"; }
  double weight(const ModuleWeights& w) const override { return w.dma; }
  // Skipped while there is no reference or no drag signal.
  ad::Var build(ad::Var x0, const StepContext& context, ModuleReport& report) override;
};

// E(x) = <direction, x> with a fixed weight.
class LinearEnergy final : public Energy {
 public:
  LinearEnergy(Image direction, double weight) : direction_(std::move(direction)), weight_(weight) {}
  std::string name() const override { return "linear"; }
  double weight(const ModuleWeights&) const override { return weight_; }
  ad::Var build(ad::Var x0, const StepContext& context, ModuleReport& report) override;

 private:
  Image direction_;
  double weight_;
};

// Throws ConfigError when the conditions lack the unit the module needs.
std::unique_ptr<Energy> make_energy(Module module, const ConditionSet& conditions);

struct StepRecord {
  int iteration = 0;
  int t = 0;
  double alpha_bar = 0.0;
  bool guided = false;
  Image x_t;
  Image x0_hat;
  Image eps_hat;
  Image eps_tilde;
  EnergyReport report;
  // Drag origins tracked into this step's x0_hat.
  std::vector<Point> tracked;
};

struct SampleTrace {
  std::vector<StepRecord> steps;
  Image initial;
  Image final_image;
  std::vector<Point> final_points;
};

struct SampleOptions {
  // Drop per-step images, keeping only energies and tracked points.
  bool keep_images = true;
};

SampleTrace sample_loop(const Schedule& schedule, const MixtureModel& mix,
                        const ConditionSet& conditions,
                        const std::vector<std::unique_ptr<Energy>>& energies, std::uint64_t seed,
                        const SampleOptions& options = {});
SampleTrace sample_loop_from(const Schedule& schedule, const MixtureModel& mix,
                             const ConditionSet& conditions,
                             const std::vector<std::unique_ptr<Energy>>& energies, Image x_T,
                             const SampleOptions& options = {});

}  // namespace dag
