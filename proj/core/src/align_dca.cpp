#include "dag/align_dca.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dag/error.hpp"

namespace dag {

using ad::Var;

namespace {

Embedding average(const Embedding& a, const Embedding& b) {
  Embedding out;
  double n2 = 0.0;
  for (int i = 0; i < kEmbeddingDim; ++i) {
    out.vector[i] = 0.5 * (a.vector[i] + b.vector[i]);
    n2 += out.vector[i] * out.vector[i];
  }
  const double n = std::max(std::sqrt(n2), ad::kGuardEps);
  for (double& v : out.vector) v /= n;
  return out;
}

// Box-interior weight of a hard or soft mask, evaluated without gradients.
Image box_weight_of(const Image& mask) {
  ad::Tape tape;
  auto box = soft_bbox(tape.constant(mask));
  if (!box) throw ContractError("prototype render has an empty mask");
  return box_weight(*box, mask.height(), mask.width()).value();
}

Embedding prototype_embedding(const SceneSpec& scene, const Image& render) {
  const GroundTruth gt = ground_truth(scene);
  Image mask(Shape{scene.height, scene.width, 1});
  for (const Image& m : gt.masks)
    for (std::size_t i = 0; i < m.size(); ++i) mask[i] = std::max(mask[i], m[i]);
  return region_embed(render, box_weight_of(mask));
}

std::string token(const AttributeConcept& a) {
  return std::string(name(a.color)) + " " + std::string(name(a.category));
}

std::string token(const RelationTriple& t) {
  return std::string(name(t.subject_color)) + " " + std::string(name(t.subject_category)) + " " +
         std::string(name(t.predicate)) + " " + std::string(name(t.object_color)) + " " +
         std::string(name(t.object_category));
}

}  // namespace

Embedding attribute_embedding(Color color, Category category, int height, int width) {
  const SceneSpec swatch = prototype_scene(Category::kSquare, color, height, width);
  const SceneSpec shape = prototype_scene(category, std::nullopt, height, width);
  const Embedding a = prototype_embedding(swatch, prototype_image(Category::kSquare, color, height, width));
  const Embedding c = prototype_embedding(shape, prototype_image(category, std::nullopt, height, width));
  return average(a, c);
}

Embedding relation_embedding(const RelationTriple& triple, int height, int width) {
  const SceneSpec scene = relation_scene(triple, height, width);
  return prototype_embedding(scene, render_scene(scene));
}

TextConcepts build_text_concepts(const ConditionSet& c) {
  TextConcepts text;
  const Image ideal = render_scene(c.scene);
  text.scene = region_embed(ideal, Image(Shape{c.height, c.width, 1}, 1.0));
  for (const AttributeConcept& a : c.attributes) {
    text.attributes.push_back(attribute_embedding(a.color, a.category, c.height, c.width));
    text.attribute_tokens.push_back(token(a));
  }
  for (const RelationConcept& r : c.relations) {
    text.relations.push_back(relation_embedding(r.triple, c.height, c.width));
    text.relation_tokens.push_back(token(r.triple));
  }
  return text;
}

VisualConcepts build_visual_concepts(Var x0, const TextConcepts& text, const ConditionSet& c,
                                     double detection_mass) {
  if (text.attributes.size() != c.attributes.size() || text.relations.size() != c.relations.size()) {
    throw ContractError("build_visual_concepts: text concepts do not match the conditions");
  }
  ad::Tape& tape = x0.tape();
  const int h = x0.shape().height, w = x0.shape().width;
  const RegionFeatures features = prepare_region_features(x0);

  VisualConcepts v;
  v.scene = region_embed(features, tape.constant(Image(Shape{h, w, 1}, 1.0)));

  const std::size_t n = c.attributes.size();
  std::vector<std::optional<SoftBox>> boxes(n);
  if (n > 0) {
    // One segmentation class per distinct color; same-color concepts split the
    // canvas around their condition centers.
    std::vector<Color> vocabulary;
    std::vector<Color> colors;
    std::vector<Point> anchors;
    for (const AttributeConcept& a : c.attributes) {
      if (std::find(vocabulary.begin(), vocabulary.end(), a.color) == vocabulary.end()) {
        vocabulary.push_back(a.color);
      }
      colors.push_back(a.color);
      const bool indexed = a.object_index >= 0 &&
                           a.object_index < static_cast<int>(c.scene.objects.size());
      anchors.push_back(indexed ? c.scene.objects[a.object_index].center
                                : Point{(w - 1) / 2.0, (h - 1) / 2.0});
    }
    const SoftMaskSet seg = soft_segment(x0, vocabulary);
    const std::vector<Image> parts = color_partition(h, w, colors, anchors);
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = std::find(vocabulary.begin(), vocabulary.end(), colors[i]) - vocabulary.begin();
      Var mask = seg.masks[k];
      if (sum(parts[i]) < static_cast<double>(parts[i].size())) {
        mask = ad::mul(mask, tape.constant(parts[i]));
      }
      boxes[i] = soft_bbox(mask, kBoxSigmaScale, detection_mass);
      v.attribute_found.push_back(boxes[i].has_value());
      v.attributes.push_back(boxes[i] ? region_embed(features, box_weight(*boxes[i], h, w)) : Var{});
    }
  }

  auto attribute_of = [&](int object) -> int {
    for (std::size_t i = 0; i < n; ++i)
      if (c.attributes[i].object_index == object) return static_cast<int>(i);
    return -1;
  };
  for (const RelationConcept& r : c.relations) {
    const int s = attribute_of(r.subject), o = attribute_of(r.object);
    const bool found = s >= 0 && o >= 0 && boxes[s] && boxes[o];
    v.relation_found.push_back(found);
    v.relations.push_back(found ? region_embed(features, box_weight(box_union(*boxes[s], *boxes[o]), h, w))
                                : Var{});
  }
  return v;
}

DcaTerms dca_energy(const TextConcepts& text, const VisualConcepts& visual, double gamma) {
  if (visual.attributes.size() != text.attributes.size() ||
      visual.relations.size() != text.relations.size()) {
    throw ContractError("dca_energy: text and visual concepts are not index-aligned");
  }
  ad::Tape& tape = visual.scene.tape();
  auto embedding_var = [&](const Embedding& e) {
    return tape.constant(Image(Shape{1, 1, kEmbeddingDim}, std::vector<double>(e.vector.begin(), e.vector.end())));
  };
  auto mean_cosine = [&](const std::vector<Embedding>& words, const std::vector<Var>& regions,
                         const std::vector<bool>& found, std::vector<Var>& cosines) {
    if (words.empty()) return tape.constant(0.0);
    Var total = tape.constant(0.0);
    for (std::size_t i = 0; i < words.size(); ++i) {
      Var cosv = found[i] ? ad::cosine_similarity(embedding_var(words[i]), regions[i]) : tape.constant(0.0);
      cosines.push_back(cosv);
      total = ad::add(total, cosv);
    }
    return ad::scale(total, 1.0 / static_cast<double>(words.size()));
  };

  DcaTerms t;
  t.scene = ad::cosine_similarity(embedding_var(text.scene), visual.scene);
  t.attribute = mean_cosine(text.attributes, visual.attributes, visual.attribute_found, t.attribute_cosines);
  t.relation = mean_cosine(text.relations, visual.relations, visual.relation_found, t.relation_cosines);
  Var fine = ad::scale(ad::add(t.attribute, t.relation), gamma);
  t.energy = ad::neg(ad::add(ad::scale(t.scene, 1.0 - gamma), fine));
  return t;
}

void describe(const DcaTerms& t, const VisualConcepts& v, ModuleReport& r) {
  r.terms["scene"] = t.scene.item();
  r.terms["attribute"] = t.attribute.item();
  r.terms["relation"] = t.relation.item();
  auto values = [](const std::vector<Var>& vars) {
    std::vector<double> out;
    for (const Var& x : vars) out.push_back(x.item());
    return out;
  };
  auto flags = [](const std::vector<bool>& f) { return std::vector<double>(f.begin(), f.end()); };
  r.series["attribute_cosines"] = values(t.attribute_cosines);
  r.series["relation_cosines"] = values(t.relation_cosines);
  r.series["attribute_found"] = flags(v.attribute_found);
  r.series["relation_found"] = flags(v.relation_found);
}

}  // namespace dag
