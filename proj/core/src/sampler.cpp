#include "dag/sampler.hpp"

#include <cmath>
#include <string>

#include "dag/error.hpp"
#include "dag/perception.hpp"

namespace dag {

using ad::Var;

std::string_view name(Module m) {
  switch (m) {
    case Module::kDca: return "dca";
    case Module::kDga: return "dga";
    case Module::kDma: return "dma";
  }
  return "?";
}

Module parse_module(std::string_view s) {
  for (Module m : kModules)
    if (name(m) == s) return m;
  throw ConfigError("unknown module '" + std::string(s) + "'; expected one of: dca dga dma");
}

double module_weight(Module m, const ModuleWeights& w) {
  switch (m) {
    case Module::kDca: return w.dca;
    case Module::kDga: return w.dga;
    case Module::kDma: return w.dma;
  }
  return 0.0;
}

DcaEnergy::DcaEnergy(const ConditionSet& conditions) : text_(build_text_concepts(conditions)) {}

Var DcaEnergy::build(Var x0, const StepContext& ctx, ModuleReport& report) {
  const VisualConcepts visual = build_visual_concepts(x0, text_, *ctx.conditions);
  const DcaTerms terms = dca_energy(text_, visual);
  describe(terms, visual, report);
  return terms.energy;
}

DgaEnergy::DgaEnergy(const ConditionSet& conditions) : target_(make_layout_target(conditions.layout)) {
  if (target_.size() == 0) throw ConfigError("layout guidance needs at least one layout object");
}

Var DgaEnergy::build(Var x0, const StepContext&, ModuleReport& report) {
  const DgaTerms terms = dga_energy(predict_layout(x0, target_), target_);
  describe(terms, report);
  return terms.energy;
}

Var DmaEnergy::build(Var x0, const StepContext& ctx, ModuleReport& report) {
  if (ctx.reference == nullptr || ctx.signals == nullptr || ctx.signals->empty()) return Var{};
  const MotionPair pair = make_motion_pair(*ctx.reference, x0);
  const DmaTerms terms = dma_energy(pair, *ctx.signals);
  describe(terms, *ctx.signals, report);
  return terms.energy;
}

Var LinearEnergy::build(Var x0, const StepContext&, ModuleReport&) {
  return ad::dot(x0.tape().constant(direction_), x0);
}

std::unique_ptr<Energy> make_energy(Module module, const ConditionSet& conditions) {
  switch (module) {
    case Module::kDca:
      if (!conditions.has_text()) throw ConfigError("module dca needs the text condition unit");
      return std::make_unique<DcaEnergy>(conditions);
    case Module::kDga:
      if (!conditions.has_layout()) throw ConfigError("module dga needs the layout condition unit");
      return std::make_unique<DgaEnergy>(conditions);
    case Module::kDma:
      if (!conditions.has_drag()) throw ConfigError("module dma needs the drag condition unit");
      return std::make_unique<DmaEnergy>();
  }
  throw ConfigError("unknown module");
}

namespace {

// Weighted sum of energy gradients w.r.t. x_t; fills the step report.
Image guidance_gradient(const std::vector<std::unique_ptr<Energy>>& energies, const Image& x0_hat,
                        const StepContext& ctx, const ModuleWeights& weights, EnergyReport& report) {
  Image total(x0_hat.shape());
  const double chain = 1.0 / std::sqrt(ctx.alpha_bar);
  for (const auto& energy : energies) {
    ad::Tape tape;
    Var x0 = tape.leaf(x0_hat);
    ModuleReport r;
    r.module = energy->name();
    r.weight = energy->weight(weights);
    Var e = energy->build(x0, ctx, r);
    if (!e.valid()) continue;
    r.energy = tape.forward_eval(e);
    tape.backward(e);
    const Image grad = scaled(tape.adjoint(x0), chain);
    r.gradient_norm = l2_norm(grad);
    if (!std::isfinite(r.energy) || !std::isfinite(r.gradient_norm)) {
      throw std::runtime_error("energy " + r.module + " is not finite at iteration " +
                               std::to_string(ctx.iteration));
    }
    if (r.weight != 0.0) total = axpy(total, r.weight, grad);
    report.modules.push_back(std::move(r));
  }
  return total;
}

Image blend(const Image& region, const Image& inside, const Image& outside) {
  Image out(inside.shape());
  const int c = inside.channels();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double m = region[i / c];
    out[i] = m * inside[i] + (1.0 - m) * outside[i];
  }
  return out;
}

}  // namespace

SampleTrace sample_loop(const Schedule& schedule, const MixtureModel& mix, const ConditionSet& conditions,
                        const std::vector<std::unique_ptr<Energy>>& energies, std::uint64_t seed,
                        const SampleOptions& options) {
  mix.validate();
  return sample_loop_from(schedule, mix, conditions, energies, initial_noise(mix.shape(), seed), options);
}

SampleTrace sample_loop_from(const Schedule& schedule, const MixtureModel& mix,
                             const ConditionSet& conditions,
                             const std::vector<std::unique_ptr<Energy>>& energies, Image x_T,
                             const SampleOptions& options) {
  mix.validate();
  if (x_T.shape() != mix.shape()) throw ContractError("sample_loop: x_T shape differs from the mixture");
  if (conditions.editable_region) {
    const Shape& r = conditions.editable_region->shape();
    if (r.height != x_T.height() || r.width != x_T.width() || r.channels != 1) {
      throw ContractError("sample_loop: editable region must be HxWx1");
    }
  }

  SampleTrace trace;
  trace.initial = x_T;

  std::vector<DragSignal> signals;
  if (conditions.has_drag()) {
    const Image source = render_scene(conditions.scene);
    for (const DragPoint& d : conditions.drags) signals.push_back(make_drag_signal(d, source));
  }

  Image x = std::move(x_T);
  std::optional<Image> reference;
  Image reference_features;
  for (int i = 0; i < schedule.steps(); ++i) {
    const int t = schedule.timestep(i);
    StepRecord rec;
    rec.iteration = i;
    rec.t = t;
    rec.alpha_bar = schedule.alpha(t);
    rec.guided = schedule.in_guidance_window(i) && !energies.empty();

    const Image eps_hat = exact_epsilon(x, t, mix, schedule);
    const Image x0_hat = predict_x0(x, eps_hat, t, schedule);

    Image eps_tilde = eps_hat;
    if (rec.guided) {
      StepContext ctx{i, t, rec.alpha_bar, &conditions, reference ? &*reference : nullptr, &signals};
      const Image grad = guidance_gradient(energies, x0_hat, ctx, schedule.weights, rec.report);
      eps_tilde = apply_guidance(eps_hat, grad, i, schedule);
    }

    if (!signals.empty()) {
      const Image features = semantic_field(x0_hat);
      if (reference) update_drag_points(signals, reference_features, features);
      for (DragSignal& s : signals) {
        prepare_signal(s, x0_hat);
        rec.tracked.push_back(s.current_origin);
      }
      reference_features = features;
    }

    Image next = ddim_step(x, eps_tilde, t, schedule);
    if (conditions.editable_region && rec.guided) {
      next = blend(*conditions.editable_region, next, ddim_step(x, eps_hat, t, schedule));
    }

    if (options.keep_images) {
      rec.x_t = x;
      rec.x0_hat = x0_hat;
      rec.eps_hat = eps_hat;
      rec.eps_tilde = std::move(eps_tilde);
    }
    reference = x0_hat;
    trace.steps.push_back(std::move(rec));
    x = std::move(next);
  }

  if (!signals.empty()) {
    update_drag_points(signals, reference_features, semantic_field(x));
    for (const DragSignal& s : signals) trace.final_points.push_back(s.current_origin);
  }
  trace.final_image = std::move(x);
  return trace;
}

}  // namespace dag
