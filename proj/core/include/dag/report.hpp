#pragma once

// Per-step diagnostics of the active alignment energies.

#include <map>
#include <string>
#include <vector>

namespace dag {

struct ModuleReport {
  std::string module;
  double energy = 0.0;
  // Guidance weight applied at this step.
  double weight = 0.0;
  // Norm of the unweighted energy gradient w.r.t. x_t.
  double gradient_norm = 0.0;
  // Named sub-terms, e.g. "coverage" or "scene".
  std::map<std::string, double> terms;
  // Named per-concept or per-signal series, e.g. cosines and found flags.
  std::map<std::string, std::vector<double>> series;
};

struct EnergyReport {
  std::vector<ModuleReport> modules;

  const ModuleReport* find(const std::string& module) const {
    for (const ModuleReport& m : modules)
      if (m.module == module) return &m;
    return nullptr;
  }
};

}  // namespace dag
