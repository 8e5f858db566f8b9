#pragma once

// Run configuration: JSON document validated against the shipped schema,
// then mapped onto library types with presets and defaults applied.

#include <rapidjson/document.h>
#include <rapidjson/error/en.h>
#include <rapidjson/reader.h>
#include <rapidjson/schema.h>
#include <rapidjson/stringbuffer.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cpgrating/core_physics.hpp"
#include "cpgrating/cp_potential.hpp"
#include "cpgrating/errors.hpp"
#include "cpgrating/run_config_schema.hpp"

namespace cpgrating {

inline constexpr int kConfigSchemaVersion = 1;

enum class RunMode { full, small_period, large_period, compare };

inline const char* to_string(RunMode m) {
  switch (m) {
    case RunMode::full:
      return "full";
    case RunMode::small_period:
      return "small";
    case RunMode::large_period:
      return "large";
    case RunMode::compare:
      return "compare";
  }
  return "?";
}

inline RunMode parse_run_mode(std::string_view s) {
  if (s == "full") return RunMode::full;
  if (s == "small") return RunMode::small_period;
  if (s == "large") return RunMode::large_period;
  if (s == "compare") return RunMode::compare;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected full, small, large or compare)");
}

enum class SweepKind { point, normal, lateral };

inline const char* to_string(SweepKind k) {
  switch (k) {
    case SweepKind::point:
      return "point";
    case SweepKind::normal:
      return "normal";
    case SweepKind::lateral:
      return "lateral";
  }
  return "?";
}

/// Normal: xs = {x}, ys varies. Lateral: ys = {y}, xs varies. Point: one of each.
struct Sweep {
  SweepKind kind = SweepKind::point;
  std::vector<double> xs;
  std::vector<double> ys;

  std::size_t size() const { return xs.size() * ys.size(); }
};

/// Thresholds of the N -> N + step and node-doubling checks.
struct ProbeSettings {
  int truncation_step = 4;
  double truncation_tolerance = 5e-3;
  double node_tolerance = 1e-3;
};

struct RunConfig {
  std::string preset;
  GratingSpec grating{std::numeric_limits<double>::quiet_NaN(),
                      std::numeric_limits<double>::quiet_NaN(),
                      std::numeric_limits<double>::quiet_NaN(), 0.0, presets::gold_drude()};
  PolarizabilityTensor atom;
  bool atom_set = false;
  CpQuadrature quad;
  double tolerance = 0.0;
  double imag_tolerance = 1e-8;
  bool error_estimate = true;
  ProbeSettings probe;
  Sweep sweep;
  bool sweep_set = false;
  RunMode mode = RunMode::full;
  int threads = 0;
  std::string output_path;
  int precision = 15;
  std::string log_path;

  CpOptions cp_options() const {
    CpOptions o;
    o.threads = threads;
    o.error_estimate = error_estimate;
    o.imag_tolerance = imag_tolerance;
    o.tolerance = tolerance;
    return o;
  }

  /// Physical validity beyond what the schema can express.
  void validate() const {
    auto need = [](double v, const char* key) {
      if (std::isnan(v)) throw ConfigError(std::string("missing ") + key + " (no preset provides it)");
    };
    need(grating.d, "grating.period");
    need(grating.h, "grating.height");
    need(grating.w, "grating.width");
    if (!(grating.d > 0.0)) throw ConfigError("grating.period must be positive");
    if (grating.w > grating.d) {
      std::ostringstream os;
      os << "grating.width " << grating.w << " m exceeds grating.period " << grating.d
         << " m (bars cannot be wider than the period)";
      throw ConfigError(os.str());
    }
    grating.validate();
    if (const auto* t = std::get_if<TabulatedPermittivity>(&grating.material)) {
      for (std::size_t i = 0; i < t->samples.size(); ++i) {
        if (!(t->samples[i].first > 0.0))
          throw ConfigError("grating.material.samples: xi values must be positive");
        if (i > 0 && !(t->samples[i].first > t->samples[i - 1].first))
          throw ConfigError("grating.material.samples: xi values must be strictly increasing");
      }
    }
    if (!atom_set) throw ConfigError("missing atom (no preset provides it)");
    if (!sweep_set) throw ConfigError("missing sweep (no preset provides it)");
    auto increasing = [](const std::vector<double>& v, const char* key) {
      if (v.empty()) throw ConfigError(std::string("sweep.") + key + " is empty");
      for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] > v[i - 1]))
          throw ConfigError(std::string("sweep.") + key + " must be strictly increasing");
    };
    increasing(sweep.xs, "x");
    increasing(sweep.ys, "y");
    for (double y : sweep.ys)
      if (!(y > 0.0)) throw ConfigError("sweep heights y must be positive");
    quad.validate();
    if (precision < 12 || precision > 17)
      throw ConfigError("output.precision must lie in [12, 17]");
  }
};

// --- presets -----------------------------------------------------------------

namespace presets {

/// Au lamellar grating of the reference scenario: d = 4 um, bars 2 um wide and 20 nm high.
inline GratingSpec reference_grating() { return {4e-6, 20e-9, 2e-6, 0.0, gold_drude()}; }

inline RunConfig run_preset(std::string_view name) {
  RunConfig c;
  c.preset = std::string(name);
  c.grating = reference_grating();
  c.atom = rubidium();
  c.atom_set = true;
  c.sweep_set = true;
  if (name == "paper-fig2") {
    c.sweep.kind = SweepKind::normal;
    c.sweep.xs = {0.0};
    for (int i = 0; i < 14; ++i) c.sweep.ys.push_back(200e-9 + 100e-9 * i);
    c.mode = RunMode::full;
  } else if (name == "paper-fig3") {
    c.sweep.kind = SweepKind::lateral;
    c.sweep.ys = {700e-9};
    for (int i = 0; i <= 16; ++i) c.sweep.xs.push_back(c.grating.d * i / 16.0);
    c.mode = RunMode::compare;
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "'");
  }
  return c;
}

}  // namespace presets

// --- parsing -----------------------------------------------------------------

namespace detail {

/// Byte offset of every value, keyed by JSON pointer ("/a/0/b").
class LocationIndex : public rapidjson::BaseReaderHandler<rapidjson::UTF8<>, LocationIndex> {
 public:
  explicit LocationIndex(const rapidjson::StringStream& s) : stream_(s) {}

  bool Default() {
    enter();
    return true;
  }
  bool StartObject() {
    stack_.push_back({true, enter(), {}, 0});
    return true;
  }
  bool StartArray() {
    stack_.push_back({false, enter(), {}, 0});
    return true;
  }
  bool EndObject(rapidjson::SizeType) {
    stack_.pop_back();
    return true;
  }
  bool EndArray(rapidjson::SizeType) {
    stack_.pop_back();
    return true;
  }
  bool Key(const char* str, rapidjson::SizeType len, bool) {
    auto& f = stack_.back();
    f.key.clear();
    for (rapidjson::SizeType i = 0; i < len; ++i) {
      if (str[i] == '~')
        f.key += "~0";
      else if (str[i] == '/')
        f.key += "~1";
      else
        f.key += str[i];
    }
    offsets_.emplace(f.base + "/" + f.key, stream_.Tell());
    return true;
  }

  std::size_t offset(const std::string& pointer) const {
    const auto it = offsets_.find(pointer);
    return it == offsets_.end() ? std::string::npos : it->second;
  }

 private:
  struct Frame {
    bool object;
    std::string base;
    std::string key;
    int index;
  };

  std::string enter() {
    if (stack_.empty()) {
      offsets_.emplace("", stream_.Tell());
      return "";
    }
    auto& f = stack_.back();
    if (f.object) return f.base + "/" + f.key;
    std::string p = f.base + "/" + std::to_string(f.index++);
    offsets_.emplace(p, stream_.Tell());
    return p;
  }

  const rapidjson::StringStream& stream_;
  std::vector<Frame> stack_;
  std::map<std::string, std::size_t> offsets_;
};

inline std::string line_column(std::string_view text, std::size_t offset) {
  if (offset == std::string::npos) return "";
  offset = std::min(offset, text.size());
  int line = 1;
  std::size_t start = 0;
  for (std::size_t i = 0; i < offset; ++i)
    if (text[i] == '\n') {
      ++line;
      start = i + 1;
    }
  return "line " + std::to_string(line) + ", column " + std::to_string(offset - start + 1);
}

inline const rapidjson::SchemaDocument& run_config_schema() {
  static const rapidjson::SchemaDocument schema = [] {
    rapidjson::Document d;
    d.Parse(kRunConfigSchema.data(), kRunConfigSchema.size());
    if (d.HasParseError()) throw Error("embedded run configuration schema is not valid JSON");
    return rapidjson::SchemaDocument(d);
  }();
  return schema;
}

using Value = rapidjson::Value;

inline const Value* member(const Value& obj, const char* key) {
  const auto it = obj.FindMember(key);
  return it == obj.MemberEnd() ? nullptr : &it->value;
}

inline std::vector<double> read_grid(const Value& parent, const char* list_key,
                                     const char* range_key, const std::string& where) {
  const Value* list = member(parent, list_key);
  const Value* range = member(parent, range_key);
  if (list && range)
    throw ConfigError(where + ": give either '" + list_key + "' or '" + range_key + "', not both");
  std::vector<double> out;
  if (list) {
    for (const auto& v : list->GetArray()) out.push_back(v.GetDouble());
  } else if (range) {
    const double a = (*range)["start"].GetDouble();
    const double b = (*range)["stop"].GetDouble();
    const int n = (*range)["count"].GetInt();
    if (n == 1) {
      out.push_back(a);
    } else {
      for (int i = 0; i < n; ++i) out.push_back(a + (b - a) * i / (n - 1));
    }
  } else {
    throw ConfigError(where + ": missing '" + list_key + "' or '" + range_key + "'");
  }
  return out;
}

inline MaterialModel read_material(const Value& m) {
  const std::string model = m["model"].GetString();
  if (model == "constant") {
    const Value* im = member(m, "eps_imag");
    return ConstantPermittivity{{m["eps"].GetDouble(), im ? im->GetDouble() : 0.0}};
  }
  if (model == "drude") return DrudeModel{m["plasma_frequency"].GetDouble(), m["damping"].GetDouble()};
  if (model == "gold-drude") return presets::gold_drude();
  TabulatedPermittivity t;
  if (const Value* r = member(m, "interpolation"))
    t.rule = std::string(r->GetString()) == "log-linear" ? InterpolationRule::log_linear
                                                         : InterpolationRule::linear;
  for (const auto& s : m["samples"].GetArray()) t.samples.emplace_back(s[0].GetDouble(), s[1].GetDouble());
  return t;
}

inline PolarizabilityTensor read_atom(const Value& a) {
  PolarizabilityTensor t;
  if (const Value* p = member(a, "preset")) {
    (void)p;  // only "rubidium" passes the schema
    const Oscillator osc = presets::rubidium_oscillator();
    if (const Value* axes = member(a, "axes")) {
      for (const auto& ax : axes->GetArray()) t.axes[ax.GetString()[0] - 'x'] = {osc};
    } else {
      t = PolarizabilityTensor::isotropic({osc});
    }
    return t;
  }
  const Value& osc = a["oscillators"];
  for (int i = 0; i < 3; ++i) {
    const char key[2] = {static_cast<char>('x' + i), '\0'};
    if (const Value* list = member(osc, key))
      for (const auto& o : list->GetArray())
        t.axes[i].push_back({o["strength"].GetDouble(), o["omega"].GetDouble()});
  }
  return t;
}

inline Sweep read_sweep(const Value& s) {
  Sweep out;
  const std::string type = s["type"].GetString();
  if (type == "normal") {
    out.kind = SweepKind::normal;
    out.xs = {s["x"].GetDouble()};
    out.ys = read_grid(s, "y", "y_range", "sweep");
  } else if (type == "lateral") {
    out.kind = SweepKind::lateral;
    out.ys = {s["y"].GetDouble()};
    out.xs = read_grid(s, "x", "x_range", "sweep");
  } else {
    out.kind = SweepKind::point;
    out.xs = {s["x"].GetDouble()};
    out.ys = {s["y"].GetDouble()};
  }
  return out;
}

}  // namespace detail

/// Parses and validates a run configuration. Schema violations report the offending key
/// path and its line; physical violations (w > d, unsorted sweeps) get explicit messages.
inline RunConfig parse_config(std::string_view text) {
  rapidjson::Document doc;
  doc.Parse(text.data(), text.size());
  if (doc.HasParseError()) {
    throw ConfigError("config is not valid JSON (" + detail::line_column(text, doc.GetErrorOffset()) +
                      "): " + rapidjson::GetParseError_En(doc.GetParseError()));
  }
  rapidjson::SchemaValidator validator(detail::run_config_schema());
  if (!doc.Accept(validator)) {
    rapidjson::StringBuffer where;
    validator.GetInvalidDocumentPointer().Stringify(where);
    rapidjson::StringBuffer rule;
    validator.GetInvalidSchemaPointer().StringifyUriFragment(rule);
    const std::string pointer = where.GetString();
    const std::string text_copy(text);
    rapidjson::StringStream ss(text_copy.c_str());
    detail::LocationIndex index(ss);
    rapidjson::Reader reader;
    reader.Parse(ss, index);
    const std::string loc = detail::line_column(text, index.offset(pointer));
    const std::string keyword = validator.GetInvalidSchemaKeyword();
    std::ostringstream os;
    os << "config schema violation at '" << (pointer.empty() ? "/" : pointer) << "'";
    if (!loc.empty()) os << " (" << loc << ")";
    os << ": fails '" << keyword << "' of schema rule " << rule.GetString();
    if (keyword == "additionalProperties") os << " (unknown key)";
    if (keyword == "oneOf") os << " (value matches none of the allowed forms)";
    if (keyword == "required") os << " (a required key is missing)";
    throw ConfigError(os.str());
  }

  using detail::member;
  RunConfig c;
  if (const auto* p = member(doc, "preset")) c = presets::run_preset(p->GetString());

  if (const auto* g = member(doc, "grating")) {
    if (const auto* v = member(*g, "period")) c.grating.d = v->GetDouble();
    if (const auto* v = member(*g, "height")) c.grating.h = v->GetDouble();
    if (const auto* v = member(*g, "width")) c.grating.w = v->GetDouble();
    if (const auto* v = member(*g, "offset")) c.grating.x0 = v->GetDouble();
    if (const auto* v = member(*g, "material")) c.grating.material = detail::read_material(*v);
  }
  if (const auto* a = member(doc, "atom")) {
    c.atom = detail::read_atom(*a);
    c.atom_set = true;
  }
  if (const auto* n = member(doc, "numerics")) {
    if (const auto* v = member(*n, "truncation")) c.quad.green.trunc.N = v->GetInt();
    if (const auto* v = member(*n, "xi_nodes")) c.quad.xi.nodes = v->GetInt();
    if (const auto* v = member(*n, "kx_nodes")) c.quad.green.kx_nodes = v->GetInt();
    if (const auto* v = member(*n, "kz_nodes")) c.quad.green.kz_nodes = v->GetInt();
    if (const auto* v = member(*n, "tolerance")) c.tolerance = v->GetDouble();
    if (const auto* v = member(*n, "imag_tolerance")) c.imag_tolerance = v->GetDouble();
    if (const auto* v = member(*n, "error_estimate")) c.error_estimate = v->GetBool();
    if (const auto* p = member(*n, "probe")) {
      if (const auto* v = member(*p, "truncation_step")) c.probe.truncation_step = v->GetInt();
      if (const auto* v = member(*p, "truncation_tolerance"))
        c.probe.truncation_tolerance = v->GetDouble();
      if (const auto* v = member(*p, "node_tolerance")) c.probe.node_tolerance = v->GetDouble();
    }
  }
  if (const auto* s = member(doc, "sweep")) {
    c.sweep = detail::read_sweep(*s);
    c.sweep_set = true;
  }
  if (const auto* m = member(doc, "mode")) c.mode = parse_run_mode(m->GetString());
  if (const auto* t = member(doc, "threads")) c.threads = t->GetInt();
  if (const auto* o = member(doc, "output")) {
    if (const auto* v = member(*o, "path")) c.output_path = v->GetString();
    if (const auto* v = member(*o, "precision")) c.precision = v->GetInt();
    if (const auto* v = member(*o, "log")) c.log_path = v->GetString();
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace cpgrating
