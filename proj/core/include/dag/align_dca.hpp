#pragma once

// Concept alignment: scene-, attribute- and relation-level cosine agreement
// between condition concepts and regions of the predicted clean image.

#include <string>
#include <vector>

#include "dag/autodiff.hpp"
#include "dag/conditions.hpp"
#include "dag/perception.hpp"
#include "dag/report.hpp"

namespace dag {

inline constexpr double kDcaGamma = 0.3;
// Class-mask mass (px) below which a concept counts as not found. Softmax
// tails leave ~0.25 px of mass on a blank 32x32 canvas.
inline constexpr double kDetectionMass = 4.0;

struct TextConcepts {
  Embedding scene;
  std::vector<Embedding> attributes;
  std::vector<Embedding> relations;
  std::vector<std::string> attribute_tokens;
  std::vector<std::string> relation_tokens;
};

struct VisualConcepts {
  ad::Var scene;  // 1x1x16
  std::vector<ad::Var> attributes;
  std::vector<ad::Var> relations;
  std::vector<bool> attribute_found;
  std::vector<bool> relation_found;
};

// Prototype embeddings for every concept in the conditions.
TextConcepts build_text_concepts(const ConditionSet& conditions);

// Embedding of the (color, category) pair: mean of the color swatch and the
// neutral-gray shape embeddings, renormalized.
Embedding attribute_embedding(Color color, Category category, int height, int width);
Embedding relation_embedding(const RelationTriple& triple, int height, int width);

VisualConcepts build_visual_concepts(ad::Var x0_hat, const TextConcepts& text,
                                     const ConditionSet& conditions,
                                     double detection_mass = kDetectionMass);

struct DcaTerms {
  ad::Var energy;
  ad::Var scene;
  ad::Var attribute;
  ad::Var relation;
  std::vector<ad::Var> attribute_cosines;
  std::vector<ad::Var> relation_cosines;
};

// E = -[(1 - gamma) L_scene + gamma (L_attr + L_rel)]. Missing concepts score
// cosine 0; empty concept lists contribute 0.
DcaTerms dca_energy(const TextConcepts& text, const VisualConcepts& visual,
                    double gamma = kDcaGamma);

void describe(const DcaTerms& terms, const VisualConcepts& visual, ModuleReport& report);

}  // namespace dag
