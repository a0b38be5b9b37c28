#include "dag/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include "dag/error.hpp"
#include "dag/io.hpp"
#include "json.hpp"

namespace dag {

namespace {

using json = nlohmann::json;

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; }))
      throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
T get(const json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": wrong type");
  }
}

double get_number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(where + ": not finite");
  return v;
}

Point get_point(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(where + ": expected [x, y]");
  return {get_number(j[0], where + "[0]"), get_number(j[1], where + "[1]")};
}

template <typename F>
auto vocabulary(F parse, const json& j, const std::string& where) {
  if (!j.is_string()) throw ConfigError(where + ": expected a string");
  try {
    return parse(j.get<std::string>());
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

SceneSpec parse_scene(const json& j, const std::string& where) {
  check_keys(j, where, {"height", "width", "objects", "relations"});
  SceneSpec s;
  if (j.contains("height")) s.height = get<int>(j["height"], where + ".height");
  if (j.contains("width")) s.width = get<int>(j["width"], where + ".width");
  if (j.contains("objects")) {
    const json& objs = j["objects"];
    if (!objs.is_array()) throw ConfigError(where + ".objects: expected an array");
    for (std::size_t i = 0; i < objs.size(); ++i) {
      const std::string w = where + ".objects[" + std::to_string(i) + "]";
      check_keys(objs[i], w, {"category", "color", "center", "size"});
      ObjectSpec o;
      if (!objs[i].contains("category") || !objs[i].contains("color") || !objs[i].contains("center"))
        throw ConfigError(w + ": needs category, color and center");
      o.category = vocabulary(parse_category, objs[i]["category"], w + ".category");
      o.color = vocabulary(parse_color, objs[i]["color"], w + ".color");
      o.center = get_point(objs[i]["center"], w + ".center");
      if (objs[i].contains("size")) o.size = get_number(objs[i]["size"], w + ".size");
      s.objects.push_back(o);
    }
  }
  if (j.contains("relations")) {
    const json& rels = j["relations"];
    if (!rels.is_array()) throw ConfigError(where + ".relations: expected an array");
    for (std::size_t i = 0; i < rels.size(); ++i) {
      const std::string w = where + ".relations[" + std::to_string(i) + "]";
      check_keys(rels[i], w, {"subject", "object", "predicate"});
      if (!rels[i].contains("subject") || !rels[i].contains("object") || !rels[i].contains("predicate"))
        throw ConfigError(w + ": needs subject, object and predicate");
      RelationSpec r;
      r.subject = get<int>(rels[i]["subject"], w + ".subject");
      r.object = get<int>(rels[i]["object"], w + ".object");
      r.predicate = vocabulary(parse_predicate, rels[i]["predicate"], w + ".predicate");
      s.relations.push_back(r);
    }
  }
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return s;
}

json scene_json(const SceneSpec& s) {
  json objs = json::array();
  for (const ObjectSpec& o : s.objects)
    objs.push_back({{"category", name(o.category)},
                    {"color", name(o.color)},
                    {"center", {o.center.x, o.center.y}},
                    {"size", o.size}});
  json rels = json::array();
  for (const RelationSpec& r : s.relations)
    rels.push_back({{"subject", r.subject}, {"object", r.object}, {"predicate", name(r.predicate)}});
  return {{"height", s.height}, {"width", s.width}, {"objects", objs}, {"relations", rels}};
}

SceneSpec translated(SceneSpec s, Point offset) {
  for (ObjectSpec& o : s.objects) {
    o.center.x += offset.x;
    o.center.y += offset.y;
  }
  return s;
}

std::uint64_t parse_u64(std::string_view text, std::string_view what) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    throw ConfigError("bad " + std::string(what) + " '" + std::string(text) + "'");
  return v;
}

}  // namespace

std::string_view name(Metric m) {
  switch (m) {
    case Metric::kIou: return "iou";
    case Metric::kSoaProxy: return "soa_proxy";
    case Metric::kMeanDistance: return "mean_distance";
    case Metric::kIfProxy: return "if_proxy";
  }
  return "?";
}

Metric parse_metric(std::string_view s) {
  for (Metric m : kMetrics)
    if (name(m) == s) return m;
  throw ConfigError("unknown metric '" + std::string(s) + "'; expected one of: iou soa_proxy mean_distance if_proxy");
}

std::vector<std::uint64_t> parse_seed_range(std::string_view text) {
  const std::size_t dots = text.find("..");
  if (dots == std::string_view::npos) return {parse_u64(text, "seed")};
  const std::uint64_t lo = parse_u64(text.substr(0, dots), "seed range start");
  const std::uint64_t hi = parse_u64(text.substr(dots + 2), "seed range end");
  if (hi < lo) throw ConfigError("seed range end precedes its start");
  if (hi - lo >= 100000) throw ConfigError("seed range too long");
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
  return seeds;
}

void ExperimentConfig::validate() const {
  make_schedule(steps, beta_min, beta_max);
  if (!(guidance_window >= 0.0 && guidance_window <= 1.0))
    throw ConfigError("schedule.guidance_window must be within [0, 1]");
  for (double w : {weights.dca, weights.dga, weights.dma})
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("schedule.weights must be finite and nonnegative");
  scene.validate();
  for (const SceneSpec& m : mixture.modes) {
    m.validate();
    if (m.height != scene.height || m.width != scene.width)
      throw ConfigError("mixture modes must share the condition scene canvas");
  }
  if (!mixture.weights.empty()) {
    if (mixture.weights.size() != mixture.modes.size())
      throw ConfigError("mixture.weights needs one entry per mode");
    double total = 0.0;
    for (double w : mixture.weights) {
      if (!(w >= 0.0)) throw ConfigError("mixture.weights must be nonnegative");
      total += w;
    }
    if (!(total > 0.0)) throw ConfigError("mixture.weights must not all be zero");
  }
  if (!(mixture.mode_stddev >= 0.0)) throw ConfigError("mixture.mode_stddev must be nonnegative");
  for (const DragPoint& d : drags)
    for (Point p : {d.origin, d.destination})
      if (p.x < 0 || p.y < 0 || p.x > scene.width - 1 || p.y > scene.height - 1)
        throw ConfigError("drag point outside the canvas");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (workers < 0) throw ConfigError("workers must be nonnegative");
  if (modules) {
    std::set<Module> seen(modules->begin(), modules->end());
    if (seen.size() != modules->size()) throw ConfigError("modules listed twice");
  }
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "config", {"schedule", "mixture", "conditions", "modules", "metrics", "seeds", "output_dir", "workers"});
  ExperimentConfig c;

  if (j.contains("schedule")) {
    const json& s = j["schedule"];
    check_keys(s, "schedule", {"steps", "beta_min", "beta_max", "guidance_window", "weights"});
    if (s.contains("steps")) c.steps = get<int>(s["steps"], "schedule.steps");
    if (s.contains("beta_min")) c.beta_min = get_number(s["beta_min"], "schedule.beta_min");
    if (s.contains("beta_max")) c.beta_max = get_number(s["beta_max"], "schedule.beta_max");
    if (s.contains("guidance_window")) c.guidance_window = get_number(s["guidance_window"], "schedule.guidance_window");
    if (s.contains("weights")) {
      const json& w = s["weights"];
      check_keys(w, "schedule.weights", {"dca", "dga", "dma"});
      if (w.contains("dca")) c.weights.dca = get_number(w["dca"], "schedule.weights.dca");
      if (w.contains("dga")) c.weights.dga = get_number(w["dga"], "schedule.weights.dga");
      if (w.contains("dma")) c.weights.dma = get_number(w["dma"], "schedule.weights.dma");
    }
  }

  if (!j.contains("conditions")) throw ConfigError("config: missing 'conditions'");
  const json& cond = j["conditions"];
  check_keys(cond, "conditions", {"scene", "use_text", "use_layout", "drags", "editable_box"});
  if (!cond.contains("scene")) throw ConfigError("conditions: missing 'scene'");
  c.scene = parse_scene(cond["scene"], "conditions.scene");
  if (cond.contains("use_text")) c.use_text = get<bool>(cond["use_text"], "conditions.use_text");
  if (cond.contains("use_layout")) c.use_layout = get<bool>(cond["use_layout"], "conditions.use_layout");
  if (cond.contains("drags")) {
    if (!cond["drags"].is_array()) throw ConfigError("conditions.drags: expected an array");
    for (std::size_t i = 0; i < cond["drags"].size(); ++i) {
      const std::string w = "conditions.drags[" + std::to_string(i) + "]";
      const json& d = cond["drags"][i];
      check_keys(d, w, {"origin", "destination"});
      if (!d.contains("origin") || !d.contains("destination")) throw ConfigError(w + ": needs origin and destination");
      c.drags.push_back({get_point(d["origin"], w + ".origin"), get_point(d["destination"], w + ".destination")});
    }
  }
  if (cond.contains("editable_box")) {
    const json& b = cond["editable_box"];
    if (!b.is_array() || b.size() != 4) throw ConfigError("conditions.editable_box: expected [x_min, y_min, x_max, y_max]");
    c.editable_box = Box{get_number(b[0], "conditions.editable_box"), get_number(b[1], "conditions.editable_box"),
                         get_number(b[2], "conditions.editable_box"), get_number(b[3], "conditions.editable_box")};
  }

  if (j.contains("mixture")) {
    const json& m = j["mixture"];
    check_keys(m, "mixture", {"modes", "weights", "mode_stddev"});
    if (m.contains("mode_stddev")) c.mixture.mode_stddev = get_number(m["mode_stddev"], "mixture.mode_stddev");
    if (m.contains("weights")) {
      if (!m["weights"].is_array()) throw ConfigError("mixture.weights: expected an array");
      for (std::size_t i = 0; i < m["weights"].size(); ++i)
        c.mixture.weights.push_back(get_number(m["weights"][i], "mixture.weights[" + std::to_string(i) + "]"));
    }
    if (m.contains("modes")) {
      if (!m["modes"].is_array() || m["modes"].empty()) throw ConfigError("mixture.modes: expected a nonempty array");
      for (std::size_t i = 0; i < m["modes"].size(); ++i) {
        const std::string w = "mixture.modes[" + std::to_string(i) + "]";
        const json& mode = m["modes"][i];
        check_keys(mode, w, {"scene", "offset"});
        const SceneSpec base = mode.contains("scene") ? parse_scene(mode["scene"], w + ".scene") : c.scene;
        const Point offset = mode.contains("offset") ? get_point(mode["offset"], w + ".offset") : Point{};
        c.mixture.modes.push_back(translated(base, offset));
      }
    }
  }
  if (c.mixture.modes.empty()) c.mixture.modes.push_back(c.scene);

  if (j.contains("modules")) {
    if (!j["modules"].is_array()) throw ConfigError("modules: expected an array");
    std::vector<Module> mods;
    for (const json& m : j["modules"]) mods.push_back(vocabulary(parse_module, m, "modules"));
    c.modules = mods;
  }
  if (j.contains("metrics")) {
    if (!j["metrics"].is_array()) throw ConfigError("metrics: expected an array");
    std::vector<Metric> ms;
    for (const json& m : j["metrics"]) ms.push_back(vocabulary(parse_metric, m, "metrics"));
    c.metrics = ms;
  }
  if (j.contains("seeds")) {
    const json& s = j["seeds"];
    if (s.is_string()) {
      c.seeds = parse_seed_range(s.get<std::string>());
    } else if (s.is_array()) {
      c.seeds.clear();
      for (const json& v : s) {
        if (!v.is_number_unsigned()) throw ConfigError("seeds: expected nonnegative integers");
        c.seeds.push_back(v.get<std::uint64_t>());
      }
    } else {
      throw ConfigError("seeds: expected an array or \"N..M\"");
    }
  }
  if (j.contains("output_dir")) c.output_dir = get<std::string>(j["output_dir"], "output_dir");
  if (j.contains("workers")) c.workers = get<int>(j["workers"], "workers");
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  try {
    return parse_config(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string to_json(const ExperimentConfig& c) {
  json modes = json::array();
  for (const SceneSpec& m : c.mixture.modes) modes.push_back({{"scene", scene_json(m)}});
  json drags = json::array();
  for (const DragPoint& d : c.drags)
    drags.push_back({{"origin", {d.origin.x, d.origin.y}}, {"destination", {d.destination.x, d.destination.y}}});
  json cond = {{"scene", scene_json(c.scene)}, {"use_text", c.use_text}, {"use_layout", c.use_layout}, {"drags", drags}};
  if (c.editable_box)
    cond["editable_box"] = {c.editable_box->x_min, c.editable_box->y_min, c.editable_box->x_max, c.editable_box->y_max};
  json j = {{"schedule",
             {{"steps", c.steps},
              {"beta_min", c.beta_min},
              {"beta_max", c.beta_max},
              {"guidance_window", c.guidance_window},
              {"weights", {{"dca", c.weights.dca}, {"dga", c.weights.dga}, {"dma", c.weights.dma}}}}},
            {"mixture", {{"modes", modes}, {"weights", c.mixture.weights}, {"mode_stddev", c.mixture.mode_stddev}}},
            {"conditions", cond},
            {"seeds", c.seeds},
            {"output_dir", c.output_dir},
            {"workers", c.workers}};
  if (c.modules) {
    json mods = json::array();
    for (Module m : *c.modules) mods.push_back(name(m));
    j["modules"] = mods;
  }
  if (c.metrics) {
    json ms = json::array();
    for (Metric m : *c.metrics) ms.push_back(name(m));
    j["metrics"] = ms;
  }
  return j.dump(2) + "\n";
}

Schedule make_schedule(const ExperimentConfig& config) {
  Schedule s = make_schedule(config.steps, config.beta_min, config.beta_max);
  s.guidance_window_fraction = config.guidance_window;
  s.weights = config.weights;
  return s;
}

MixtureModel make_mixture(const ExperimentConfig& config) {
  MixtureModel mix;
  for (const SceneSpec& m : config.mixture.modes) mix.modes.push_back(render_scene(m));
  if (config.mixture.weights.empty()) {
    mix.weights.assign(mix.modes.size(), 1.0 / static_cast<double>(mix.modes.size()));
  } else {
    double total = 0.0;
    for (double w : config.mixture.weights) total += w;
    for (double w : config.mixture.weights) mix.weights.push_back(w / total);
  }
  mix.mode_stddev = config.mixture.mode_stddev;
  mix.validate();
  return mix;
}

ConditionSet make_conditions(const ExperimentConfig& config) {
  ConditionSet c = scene_to_conditions(config.scene, config.drags);
  c.use_text = config.use_text;
  c.use_layout = config.use_layout;
  if (config.editable_box) c.editable_region = box_mask(c.height, c.width, *config.editable_box);
  return c;
}

std::vector<Module> active_modules(const ExperimentConfig& config, const ConditionSet& conditions) {
  if (config.modules) return *config.modules;
  std::vector<Module> out;
  if (conditions.has_text() && !conditions.scene.objects.empty()) out.push_back(Module::kDca);
  if (conditions.has_layout()) out.push_back(Module::kDga);
  if (conditions.has_drag()) out.push_back(Module::kDma);
  return out;
}

}  // namespace dag
