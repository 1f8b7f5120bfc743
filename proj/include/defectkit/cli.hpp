#ifndef DEFECTKIT_CLI_HPP
#define DEFECTKIT_CLI_HPP

#include "defectkit/defects.hpp"
#include "defectkit/homogenize.hpp"

#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace defectkit::cli {

using Json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "0.1.0";

struct ConfigIssue {
  std::string pointer;
  std::string message;
};

/// Schema violations found while parsing a config; what() lists them one per line.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<ConfigIssue> issues)
      : Error(ErrorCode::validation, summarize(issues)), issues_(std::move(issues)) {}
  const std::vector<ConfigIssue>& issues() const noexcept { return issues_; }

 private:
  static std::string summarize(const std::vector<ConfigIssue>& issues) {
    std::string out = std::to_string(issues.size()) + " config violation(s)";
    for (const auto& i : issues) out += "\n  " + (i.pointer.empty() ? std::string("/") : i.pointer) + ": " + i.message;
    return out;
  }
  std::vector<ConfigIssue> issues_;
};

struct ArchetypeSpec {
  std::string kind = "isotropic-distance";
  int n = 0;

  Archetype build() const {
    if (kind == "isotropic-neo-hookean") return Archetype::neo_hookean();
    if (kind == "isotropic-distance") return Archetype::distance();
    return Archetype::n_fold(n);
  }

  Json to_json() const {
    Json j{{"kind", kind}};
    if (kind == "n-fold-discrete") j["n"] = n;
    return j;
  }
};

struct BodySpec {
  std::string kind;
  double alpha = 0.0, r0 = 0.0, r1 = 1.0, eps = 0.0;
  Rectangle rectangle{0.0, 1.0, 0.0, 1.0};
  ArchetypeSpec archetype;

  Body build(const Tolerances& tol) const {
    if (kind == "disclination") return build_disclination_body(r0, r1, alpha, archetype.build(), tol);
    if (kind == "dislocation") return build_dislocation_body(eps, r1, archetype.build());
    return build_trivial_body(rectangle, archetype.build());
  }

  Json to_json() const {
    Json j{{"body", kind}};
    if (kind == "disclination") {
      j["alpha"] = alpha;
      j["r0"] = r0;
      j["r1"] = r1;
    } else if (kind == "dislocation") {
      j["eps"] = eps;
      j["r1"] = r1;
    } else {
      j["rectangle"] = {rectangle.x_min, rectangle.x_max, rectangle.y_min, rectangle.y_max};
    }
    j["archetype"] = archetype.to_json();
    return j;
  }
};

struct LoopSpec {
  std::string kind = "core";  // core | circle | polygon
  Vec2 center = Vec2::Zero();
  double radius = 0.0;
  int segments = 256;
  std::vector<Vec2> vertices;
};

struct MetricSpec {
  std::string kind = "sphere-cap";  // flat | sphere-cap | custom-conformal
  double amplitude = 0.0;
  double width = 1.0;

  HomogenizationSetup build() const {
    if (kind == "flat") return flat_setup();
    if (kind == "sphere-cap") return sphere_cap_setup();
    return custom_conformal_setup(amplitude, width);
  }

  Json to_json() const {
    if (kind != "custom-conformal") return kind;
    return Json{{"kind", kind}, {"amplitude", amplitude}, {"width", width}};
  }
};

struct BoundarySpec {
  std::string kind = "free";  // free | identity | affine
  Mat2 matrix = Mat2::Identity();
};

struct RunConfig {
  std::string cmd;
  std::optional<BodySpec> body;
  std::optional<ArchetypeSpec> archetype;
  LoopSpec loop;
  MetricSpec metric;
  std::vector<int> ns{8, 16, 32};
  int resolution = 8;
  BoundarySpec boundary;
  MinimizeOptions minimize;
  bool allow_disclination = false;
  std::string method = "both";  // chart | ode | both
  int scan_resolution = 720;
  int samples = 64;
  std::uint64_t seed = kDefaultSampleSeed;
  Tolerances tol;
  std::optional<std::string> out;
};

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> names{"holonomy", "burgers", "symmetry", "minimize", "homogenize", "validate"};
  return names;
}

namespace detail {

inline std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

inline std::string escape_pointer(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

/// Collects violations while reading a JSON document.
class Reader {
 public:
  std::vector<ConfigIssue> issues;

  void fail(const std::string& ptr, const std::string& msg) { issues.push_back({ptr, msg}); }

  static std::string child(const std::string& ptr, const std::string& key) { return ptr + "/" + escape_pointer(key); }
  static std::string child(const std::string& ptr, std::size_t i) { return ptr + "/" + std::to_string(i); }

  bool object(const Json& j, const std::string& ptr) {
    if (j.is_object()) return true;
    fail(ptr, "must be an object");
    return false;
  }

  void only(const Json& j, const std::string& ptr, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) return;
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items()) {
      if (!ok.contains(k)) fail(child(ptr, k), "unknown key");
    }
  }

  std::optional<double> number(const Json& j, const std::string& ptr, const char* key, bool required,
                               std::optional<double> min = {}, bool min_exclusive = false,
                               std::optional<double> max = {}, bool max_exclusive = false) {
    const std::string p = child(ptr, key);
    if (!j.contains(key)) {
      if (required) fail(p, "is required");
      return std::nullopt;
    }
    const Json& v = j.at(key);
    if (!v.is_number()) {
      fail(p, "must be a number");
      return std::nullopt;
    }
    const double x = v.get<double>();
    if (!std::isfinite(x)) {
      fail(p, "must be finite");
      return std::nullopt;
    }
    if (min && (min_exclusive ? !(x > *min) : !(x >= *min))) {
      fail(p, std::string("must be ") + (min_exclusive ? "> " : ">= ") + format(*min));
      return std::nullopt;
    }
    if (max && (max_exclusive ? !(x < *max) : !(x <= *max))) {
      fail(p, std::string("must be ") + (max_exclusive ? "< " : "<= ") + format(*max));
      return std::nullopt;
    }
    return x;
  }

  std::optional<int> integer(const Json& v, const std::string& p, int min) {
    if (!v.is_number_integer()) {
      fail(p, "must be an integer");
      return std::nullopt;
    }
    const auto x = v.get<long long>();
    if (x < min || x > 1'000'000'000) {
      fail(p, "must be an integer >= " + std::to_string(min));
      return std::nullopt;
    }
    return static_cast<int>(x);
  }

  std::optional<int> integer(const Json& j, const std::string& ptr, const char* key, bool required, int min) {
    if (!j.contains(key)) {
      if (required) fail(child(ptr, key), "is required");
      return std::nullopt;
    }
    return integer(j.at(key), child(ptr, key), min);
  }

  std::optional<std::string> one_of(const Json& j, const std::string& ptr, const char* key, bool required,
                                    std::initializer_list<const char*> choices) {
    const std::string p = child(ptr, key);
    if (!j.contains(key)) {
      if (required) fail(p, "is required");
      return std::nullopt;
    }
    return one_of(j.at(key), p, choices);
  }

  std::optional<std::string> one_of(const Json& v, const std::string& p, std::initializer_list<const char*> choices) {
    std::string list;
    for (const char* c : choices) list += std::string(list.empty() ? "" : ", ") + c;
    if (!v.is_string()) {
      fail(p, "must be one of: " + list);
      return std::nullopt;
    }
    const auto s = v.get<std::string>();
    for (const char* c : choices) {
      if (s == c) return s;
    }
    fail(p, "'" + s + "' is not one of: " + list);
    return std::nullopt;
  }

  std::optional<Vec2> point(const Json& v, const std::string& p) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      fail(p, "must be a point [x, y]");
      return std::nullopt;
    }
    return Vec2(v[0].get<double>(), v[1].get<double>());
  }

  static std::string format(double x) {
    std::ostringstream s;
    s << x;
    return s.str();
  }
};

inline std::optional<ArchetypeSpec> read_archetype(Reader& r, const Json& j, const std::string& ptr) {
  if (!r.object(j, ptr)) return std::nullopt;
  r.only(j, ptr, {"kind", "n"});
  ArchetypeSpec a;
  const auto kind = r.one_of(j, ptr, "kind", true, {"isotropic-neo-hookean", "isotropic-distance", "n-fold-discrete"});
  if (!kind) return std::nullopt;
  a.kind = *kind;
  if (a.kind == "n-fold-discrete") {
    const auto n = r.integer(j, ptr, "n", true, 1);
    if (!n) return std::nullopt;
    a.n = *n;
  } else if (j.contains("n")) {
    r.fail(Reader::child(ptr, "n"), "only allowed for n-fold-discrete");
  }
  return a;
}

inline std::optional<BodySpec> read_body(Reader& r, const Json& j, const std::string& ptr) {
  if (!r.object(j, ptr)) return std::nullopt;
  const auto kind = r.one_of(j, ptr, "body", true, {"disclination", "dislocation", "trivial"});
  if (!kind) return std::nullopt;
  BodySpec b;
  b.kind = *kind;
  const std::size_t before = r.issues.size();
  if (b.kind == "disclination") {
    r.only(j, ptr, {"body", "alpha", "r0", "r1", "archetype"});
    const auto alpha = r.number(j, ptr, "alpha", true, 0.0, false, 1.0, true);
    const auto r0 = r.number(j, ptr, "r0", true, 0.0);
    const auto r1 = r.number(j, ptr, "r1", true, 0.0, true);
    if (alpha) b.alpha = *alpha;
    if (r0) b.r0 = *r0;
    if (r1) b.r1 = *r1;
    if (r0 && r1 && !(*r1 > *r0)) r.fail(Reader::child(ptr, "r1"), "must be > r0");
  } else if (b.kind == "dislocation") {
    r.only(j, ptr, {"body", "eps", "r1", "archetype"});
    const auto eps = r.number(j, ptr, "eps", true, 0.0);
    const auto r1 = r.number(j, ptr, "r1", true, 0.0, true);
    if (eps) b.eps = *eps;
    if (r1) b.r1 = *r1;
    if (eps && r1 && !(*r1 > *eps)) r.fail(Reader::child(ptr, "r1"), "must be > eps");
  } else {
    r.only(j, ptr, {"body", "rectangle", "archetype"});
    if (j.contains("rectangle")) {
      const Json& v = j.at("rectangle");
      const std::string p = Reader::child(ptr, "rectangle");
      bool ok = v.is_array() && v.size() == 4;
      for (std::size_t i = 0; ok && i < 4; ++i) ok = v[i].is_number();
      if (!ok) {
        r.fail(p, "must be [x_min, x_max, y_min, y_max]");
      } else {
        b.rectangle = {v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>()};
        if (!(b.rectangle.x_max > b.rectangle.x_min && b.rectangle.y_max > b.rectangle.y_min)) {
          r.fail(p, "must have x_max > x_min and y_max > y_min");
        }
      }
    }
  }
  if (j.contains("archetype")) {
    if (auto a = read_archetype(r, j.at("archetype"), Reader::child(ptr, "archetype"))) b.archetype = *a;
  }
  if (r.issues.size() != before) return std::nullopt;
  return b;
}

inline void read_loop(Reader& r, const Json& j, const std::string& ptr, LoopSpec& loop) {
  if (j.is_string()) {
    if (j.get<std::string>() != "core") r.fail(ptr, "must be \"core\" or a loop object");
    return;
  }
  if (!r.object(j, ptr)) return;
  const auto kind = r.one_of(j, ptr, "kind", true, {"circle", "polygon"});
  if (!kind) return;
  loop.kind = *kind;
  if (loop.kind == "circle") {
    r.only(j, ptr, {"kind", "center", "radius", "segments"});
    if (j.contains("center")) {
      if (auto c = r.point(j.at("center"), Reader::child(ptr, "center"))) loop.center = *c;
    }
    if (auto rad = r.number(j, ptr, "radius", true, 0.0, true)) loop.radius = *rad;
    if (auto seg = r.integer(j, ptr, "segments", false, 3)) loop.segments = *seg;
  } else {
    r.only(j, ptr, {"kind", "vertices"});
    const std::string p = Reader::child(ptr, "vertices");
    if (!j.contains("vertices")) {
      r.fail(p, "is required");
      return;
    }
    const Json& v = j.at("vertices");
    if (!v.is_array() || v.size() < 3) {
      r.fail(p, "must be an array of at least 3 points");
      return;
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (auto q = r.point(v[i], Reader::child(p, i))) loop.vertices.push_back(*q);
    }
  }
}

inline void read_metric(Reader& r, const Json& j, const std::string& ptr, MetricSpec& m) {
  if (j.is_string()) {
    if (auto k = r.one_of(j, ptr, {"flat", "sphere-cap"})) m.kind = *k;
    return;
  }
  if (!r.object(j, ptr)) return;
  r.only(j, ptr, {"kind", "amplitude", "width"});
  const auto kind = r.one_of(j, ptr, "kind", true, {"flat", "sphere-cap", "custom-conformal"});
  if (!kind) return;
  m.kind = *kind;
  if (m.kind == "custom-conformal") {
    if (auto a = r.number(j, ptr, "amplitude", true, -2.0, false, 2.0, false)) m.amplitude = *a;
    if (auto w = r.number(j, ptr, "width", true, 0.0, true)) m.width = *w;
  }
}

inline const std::vector<std::string>& tolerance_names() {
  static const std::vector<std::string> names{"volume",         "isometry_chart", "isometry_ode",    "group",
                                              "identity",       "symmetry",       "closed",          "christoffel_step",
                                              "closed_step",    "gradient_step",  "curvature_step",  "transport_steps",
                                              "theta_min"};
  return names;
}

}  // namespace detail

/// Sets one named tolerance; throws validation for unknown names or non-positive values.
inline void set_tolerance(Tolerances& tol, const std::string& name, double value) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw Error(ErrorCode::validation, "tolerance '" + name + "' must be strictly positive");
  }
  if (name == "volume") tol.volume = value;
  else if (name == "isometry_chart") tol.isometry_chart = value;
  else if (name == "isometry_ode") tol.isometry_ode = value;
  else if (name == "group") tol.group = value;
  else if (name == "identity") tol.identity = value;
  else if (name == "symmetry") tol.symmetry = value;
  else if (name == "closed") tol.closed = value;
  else if (name == "christoffel_step") tol.christoffel_step = value;
  else if (name == "closed_step") tol.closed_step = value;
  else if (name == "gradient_step") tol.gradient_step = value;
  else if (name == "curvature_step") tol.curvature_step = value;
  else if (name == "transport_steps") tol.transport_steps = std::max(1, static_cast<int>(std::lround(value)));
  else if (name == "theta_min") tol.theta_min = value;
  else throw Error(ErrorCode::validation, "unknown tolerance '" + name + "'");
}

/// Parses "name=value" as given to --tol.
inline void apply_tolerance_override(Tolerances& tol, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw Error(ErrorCode::validation, "--tol expects name=value, got '" + assignment + "'");
  double value = 0.0;
  try {
    std::size_t used = 0;
    value = std::stod(assignment.substr(eq + 1), &used);
    if (used != assignment.size() - eq - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw Error(ErrorCode::validation, "--tol value in '" + assignment + "' is not a number");
  }
  set_tolerance(tol, assignment.substr(0, eq), value);
}

inline RunConfig parse_config(const Json& j) {
  detail::Reader r;
  RunConfig cfg;
  if (!r.object(j, "")) throw ConfigError(r.issues);
  const auto cmd = r.one_of(j, "", "cmd", true,
                            {"holonomy", "burgers", "symmetry", "minimize", "homogenize", "validate"});
  if (!cmd) throw ConfigError(r.issues);
  cfg.cmd = *cmd;

  if (j.contains("tolerances")) {
    const Json& t = j.at("tolerances");
    if (r.object(t, "/tolerances")) {
      for (const auto& [k, v] : t.items()) {
        const std::string p = "/tolerances/" + detail::escape_pointer(k);
        const auto& names = detail::tolerance_names();
        if (std::find(names.begin(), names.end(), k) == names.end()) {
          r.fail(p, "unknown tolerance");
        } else if (!v.is_number() || !(v.get<double>() > 0.0)) {
          r.fail(p, "must be a number > 0");
        } else {
          set_tolerance(cfg.tol, k, v.get<double>());
        }
      }
    }
  }
  if (j.contains("seed")) {
    const Json& s = j.at("seed");
    if (!s.is_number_unsigned()) r.fail("/seed", "must be a non-negative integer");
    else cfg.seed = s.get<std::uint64_t>();
  }

  auto need_body = [&] {
    if (!j.contains("body")) {
      r.fail("/body", "is required");
      return;
    }
    cfg.body = detail::read_body(r, j.at("body"), "/body");
  };

  if (cfg.cmd == "holonomy" || cfg.cmd == "burgers") {
    if (cfg.cmd == "holonomy") {
      r.only(j, "", {"cmd", "body", "loop", "method", "tolerances", "seed", "out"});
      if (auto m = r.one_of(j, "", "method", false, {"chart", "ode", "both"})) cfg.method = *m;
    } else {
      r.only(j, "", {"cmd", "body", "loop", "allow_disclination", "tolerances", "seed", "out"});
      if (j.contains("allow_disclination")) {
        if (!j.at("allow_disclination").is_boolean()) r.fail("/allow_disclination", "must be a boolean");
        else cfg.allow_disclination = j.at("allow_disclination").get<bool>();
      }
    }
    need_body();
    if (j.contains("loop")) detail::read_loop(r, j.at("loop"), "/loop", cfg.loop);
  } else if (cfg.cmd == "validate") {
    r.only(j, "", {"cmd", "body", "tolerances", "seed", "out"});
    need_body();
  } else if (cfg.cmd == "symmetry") {
    r.only(j, "", {"cmd", "archetype", "resolution", "samples", "tolerances", "seed", "out"});
    if (!j.contains("archetype")) r.fail("/archetype", "is required");
    else cfg.archetype = detail::read_archetype(r, j.at("archetype"), "/archetype");
    if (auto res = r.integer(j, "", "resolution", false, 360)) cfg.scan_resolution = *res;
    if (auto s = r.integer(j, "", "samples", false, 1)) cfg.samples = *s;
  } else if (cfg.cmd == "minimize") {
    r.only(j, "", {"cmd", "body", "resolution", "boundary", "gtol", "max_iter", "tolerances", "seed", "out"});
    need_body();
    if (auto res = r.integer(j, "", "resolution", false, 2)) cfg.resolution = *res;
    if (auto g = r.number(j, "", "gtol", false, 0.0, true)) cfg.minimize.gtol = *g;
    if (auto m = r.integer(j, "", "max_iter", false, 1)) cfg.minimize.max_iter = *m;
    if (j.contains("boundary")) {
      const Json& b = j.at("boundary");
      if (b.is_string()) {
        if (auto k = r.one_of(b, "/boundary", {"free", "identity"})) cfg.boundary.kind = *k;
      } else if (r.object(b, "/boundary")) {
        r.only(b, "/boundary", {"kind", "matrix"});
        if (auto k = r.one_of(b, "/boundary", "kind", true, {"free", "identity", "affine"})) cfg.boundary.kind = *k;
        if (cfg.boundary.kind == "affine") {
          const Json* m = b.contains("matrix") ? &b.at("matrix") : nullptr;
          bool ok = m && m->is_array() && m->size() == 2;
          for (std::size_t i = 0; ok && i < 2; ++i) {
            ok = (*m)[i].is_array() && (*m)[i].size() == 2 && (*m)[i][0].is_number() && (*m)[i][1].is_number();
          }
          if (!ok) {
            r.fail("/boundary/matrix", "must be a 2x2 array [[a, b], [c, d]]");
          } else {
            cfg.boundary.matrix << (*m)[0][0].get<double>(), (*m)[0][1].get<double>(), (*m)[1][0].get<double>(),
                (*m)[1][1].get<double>();
          }
        }
      }
    }
  } else {  // homogenize
    r.only(j, "", {"cmd", "metric", "n", "archetype", "loop", "tolerances", "seed", "out"});
    if (j.contains("metric")) detail::read_metric(r, j.at("metric"), "/metric", cfg.metric);
    if (j.contains("archetype")) cfg.archetype = detail::read_archetype(r, j.at("archetype"), "/archetype");
    else cfg.archetype = ArchetypeSpec{"isotropic-neo-hookean", 0};
    if (j.contains("n")) {
      const Json& n = j.at("n");
      if (!n.is_array() || n.empty()) {
        r.fail("/n", "must be a non-empty array of integers >= 2");
      } else {
        cfg.ns.clear();
        for (std::size_t i = 0; i < n.size(); ++i) {
          if (auto v = r.integer(n[i], "/n/" + std::to_string(i), 2)) cfg.ns.push_back(*v);
        }
      }
    }
    if (j.contains("loop")) detail::read_loop(r, j.at("loop"), "/loop", cfg.loop);
  }
  if (j.contains("out")) {
    if (!j.at("out").is_string() || j.at("out").get<std::string>().empty()) r.fail("/out", "must be a non-empty string");
    else cfg.out = j.at("out").get<std::string>();
  }
  if (!r.issues.empty()) throw ConfigError(r.issues);
  return cfg;
}

/// Parses a JSON document; malformed JSON raises a parse error with line and column.
inline RunConfig parse_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    const auto [line, col] = detail::line_column(text, e.byte);
    std::string what = e.what();
    const auto pos = what.find("syntax error");
    throw Error(ErrorCode::parse, "line " + std::to_string(line) + ", column " + std::to_string(col) + ": " +
                                      (pos == std::string::npos ? what : what.substr(pos)));
  }
  return parse_config(j);
}

inline RunConfig parse_config(const char* text) { return parse_config(std::string(text)); }

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::incompatible_disclination:
    case ErrorCode::disclination_present:
    case ErrorCode::obstruction: return 3;
    case ErrorCode::stalled_descent:
    case ErrorCode::metric_degeneracy:
    case ErrorCode::infeasible_point:
    case ErrorCode::anisotropy:
    case ErrorCode::inconsistent_group: return 4;
    default: return 2;
  }
}

struct RunOutcome {
  int exit_code = 0;
  Json report;
  std::optional<std::string> csv;  // convergence table, homogenize only
};

namespace detail {

inline Json matrix(const Mat2& m) { return Json::array({{m(0, 0), m(0, 1)}, {m(1, 0), m(1, 1)}}); }
inline Json vec(const Vec2& v) { return Json::array({v.x(), v.y()}); }

inline Json group_json(const SymmetryGroup& g) {
  Json j{{"kind", g.discrete() ? "discrete-cyclic" : "continuous-SO2"}};
  if (g.discrete()) {
    j["order"] = g.order;
    j["angles"] = g.angles();
  }
  return j;
}

inline Curve make_loop(const RunConfig& cfg) {
  const LoopSpec& l = cfg.loop;
  if (l.kind == "circle") return Curve::circle(l.center, l.radius, l.segments);
  if (l.kind == "polygon") {
    Curve c{l.vertices, {}};
    if ((c.vertices.front() - c.vertices.back()).norm() > 1e-12) c.vertices.push_back(c.vertices.front());
    return c;
  }
  if (l.kind == "core" && cfg.body) {
    const BodySpec& b = *cfg.body;
    if (b.kind == "disclination") return core_loop(0.5 * (b.r0 + b.r1));
    if (b.kind == "dislocation") return core_loop(0.5 * (b.eps + b.r1));
    const Rectangle& r = b.rectangle;
    const Vec2 c(0.5 * (r.x_min + r.x_max), 0.5 * (r.y_min + r.y_max));
    return Curve::circle(c, 0.25 * std::min(r.x_max - r.x_min, r.y_max - r.y_min), 64);
  }
  return default_homogenization_loop();
}

inline Json loop_json(const Curve& c, const std::string& kind) {
  return Json{{"kind", kind}, {"base_point", vec(c.vertices.front())}, {"segments", c.segment_count()},
              {"length", c.length()}};
}

inline Json content_json(const DisclinationContent& c, const SymmetryGroup& group, const Tolerances& tol) {
  const NearestElement ne = nearest_element(group, c.conjugated);
  return Json{{"matrix", matrix(c.matrix)},
              {"conjugated", matrix(c.conjugated)},
              {"angle", c.angle},
              {"nearest_element", matrix(ne.element)},
              {"nearest_angle", ne.angle},
              {"distance", ne.distance},
              {"distance_from_identity", c.distance_from_identity},
              {"pass", ne.distance < tol.group}};
}

inline Json report_json(const ConvergenceReport& r) {
  Json records = Json::array();
  for (const auto& rec : r.records) {
    Json d = Json::object();
    for (const auto& [k, v] : rec.details) d[k] = v;
    records.push_back({{"n", rec.n}, {"error", rec.error}, {"details", d}});
  }
  return Json{{"quantity", r.quantity},
              {"compared", r.compared},
              {"records", records},
              {"observed_order", r.observed_order ? Json(*r.observed_order) : Json(nullptr)}};
}

inline std::string format_number(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void append_csv(std::string& csv, const ConvergenceReport& r) {
  for (const auto& rec : r.records) {
    csv += std::to_string(rec.n) + "," + r.quantity + "," + format_number(rec.error) + "," +
           (r.observed_order ? format_number(*r.observed_order) : std::string()) + "\n";
  }
}

inline Json holonomy(const RunConfig& cfg) {
  const Body body = cfg.body->build(cfg.tol);
  const Curve loop = make_loop(cfg);
  Json out{{"body", cfg.body->to_json()}, {"loop", loop_json(loop, cfg.loop.kind)}, {"group", group_json(body.group())}};
  if (cfg.method != "ode") out["chart"] = content_json(disclination_content(body, loop), body.group(), cfg.tol);
  if (cfg.method != "chart") {
    const auto c = disclination_content_ode(body, loop, cfg.tol);
    Json j = content_json(c, body.group(), cfg.tol);
    const MetricField g = induced_metric(body);
    j["isometry_defect"] = isometry_defect(c.matrix, g(loop.vertices.front()), g(loop.vertices.back()));
    out["ode"] = j;
  }
  return out;
}

inline Json burgers(const RunConfig& cfg) {
  const Body body = cfg.body->build(cfg.tol);
  const Curve loop = make_loop(cfg);
  const BurgersVector b = burgers_vector(body, loop, cfg.tol, cfg.allow_disclination);
  return Json{{"body", cfg.body->to_json()},
              {"loop", loop_json(loop, cfg.loop.kind)},
              {"vector", vec(b.vector)},
              {"content", content_json(b.content, body.group(), cfg.tol)},
              {"circuit_dependent", b.circuit_dependent}};
}

inline Json symmetry(const RunConfig& cfg) {
  const Archetype a = cfg.archetype->build();
  const auto samples = default_symmetry_samples(cfg.seed, cfg.samples);
  const SymmetryGroup g = detect_group(a, cfg.scan_resolution, cfg.tol.symmetry, samples);
  Json distances = Json::array();
  for (double angle : {kPi / 6, kPi / 4, kPi / 3, kPi / 2, kPi}) {
    distances.push_back({{"angle", angle}, {"distance", symmetry_distance(a, rotation(angle), samples)}});
  }
  return Json{{"archetype", cfg.archetype->to_json()},
              {"group", group_json(g)},
              {"resolution", cfg.scan_resolution},
              {"tolerance", cfg.tol.symmetry},
              {"seed", cfg.seed},
              {"samples", cfg.samples},
              {"probe_distances", distances}};
}

inline Json validate(const RunConfig& cfg) {
  const Body body = cfg.body->build(cfg.tol);
  const BodyReport rep = validate_body(body, cfg.tol);
  return Json{{"body", cfg.body->to_json()},
              {"charts", body.charts().size()},
              {"group", group_json(body.group())},
              {"closed", {{"pass", rep.closed.pass}, {"max_residual", rep.closed.max_residual}}},
              {"compatible",
               {{"pass", rep.compatibility.pass},
                {"max_distance", rep.compatibility.max_distance},
                {"max_variation", rep.compatibility.max_variation},
                {"overlapping_pairs", rep.overlapping_pairs}}},
              {"cover_fraction", rep.cover_fraction},
              {"min_det", rep.min_det},
              {"pass", rep.pass}};
}

inline Json minimize_run(const RunConfig& cfg) {
  const Body body = cfg.body->build(cfg.tol);
  const TriMesh mesh = build_mesh(body.region(), cfg.resolution);
  BoundaryCondition bc;
  if (cfg.boundary.kind == "identity") bc = BoundaryCondition::affine_on_boundary(mesh, Mat2::Identity());
  if (cfg.boundary.kind == "affine") bc = BoundaryCondition::affine_on_boundary(mesh, cfg.boundary.matrix);
  const EnergyModel model = make_energy_model(body, mesh);
  const Configuration start = identity_configuration(mesh);
  MinimizeOptions opts = cfg.minimize;
  const MinimizeResult res = minimize(model, bc, start, opts);
  Json vertices = Json::array(), triangles = Json::array(), positions = Json::array();
  for (const Vec2& v : mesh.vertices) vertices.push_back(vec(v));
  for (const auto& t : mesh.triangles) triangles.push_back({t[0], t[1], t[2]});
  for (const Vec2& p : res.positions) positions.push_back(vec(p));
  return Json{{"body", cfg.body->to_json()},
              {"resolution", cfg.resolution},
              {"boundary", cfg.boundary.kind},
              {"mesh", {{"vertices", vertices}, {"triangles", triangles}}},
              {"positions", positions},
              {"initial_energy", res.energy_history.front()},
              {"energy", res.energy},
              {"iterations", res.iterations},
              {"gradient_norm", res.gradient_norm},
              {"converged", res.converged}};
}

inline Json homogenize(const RunConfig& cfg, std::string& csv, std::optional<IncompatibleDisclination>& rejected) {
  const HomogenizationSetup setup = cfg.metric.build();
  const Archetype arch = cfg.archetype->build();
  const Curve loop = make_loop(cfg);
  Json out{{"metric", cfg.metric.to_json()},
           {"archetype", cfg.archetype->to_json()},
           {"domain", {setup.domain.x_min, setup.domain.x_max, setup.domain.y_min, setup.domain.y_max}},
           {"n", cfg.ns},
           {"loop", loop_json(loop, cfg.loop.kind == "core" ? "circle" : cfg.loop.kind)}};

  ConvergenceReport dvc{"deficit-curvature", "max relative |deficit - integral of K over the barycentric cell|", {}, {}};
  ConvergenceReport gb{"gauss-bonnet", "|sum of angle defects - (integral of K dA + boundary integral of k_g)|", {}, {}};
  Json implants = Json::array();
  for (int n : cfg.ns) {
    const ConeManifold c = flatten(triangulate_metric(setup.metric, setup.domain, n, cfg.tol.theta_min));
    Json entry{{"n", n}, {"max_edge", c.max_edge}, {"max_abs_deficit", c.max_abs_deficit()}};
    try {
      implant_cone_body(c, arch, cfg.tol);
      entry["accepted"] = true;
    } catch (const IncompatibleDisclination& e) {
      entry["accepted"] = false;
      entry["group_distance"] = e.distance();
      if (!rejected) rejected = e;
    }
    implants.push_back(entry);
    const DeficitCurvature d = deficit_vs_curvature(c, setup.metric, cfg.tol);
    dvc.records.push_back({n, d.compared > 0 ? d.max_relative_error : d.max_absolute_error,
                           {{"max_absolute_error", d.max_absolute_error}, {"compared", d.compared}}});
    const GaussBonnet g = gauss_bonnet(c, setup.metric, cfg.tol);
    gb.records.push_back({n, g.residual(),
                          {{"discrete", g.discrete()},
                           {"smooth", g.smooth()},
                           {"interior_deficits", g.interior_deficits},
                           {"boundary_defects", g.boundary_defects},
                           {"curvature_integral", g.curvature_integral},
                           {"boundary_curvature", g.boundary_curvature}}});
  }
  dvc.observed_order = observed_order(dvc.records);
  gb.observed_order = observed_order(gb.records);
  out["implant"] = implants;
  if (rejected) {
    out["obstruction"] = {{"rejected", true}, {"message", rejected->what()}};
    return out;
  }
  out["obstruction"] = {{"rejected", false}};

  const ConvergenceReport tr = transport_convergence(setup, loop, cfg.ns, cfg.tol);
  const ConvergenceReport mc = metric_convergence(setup, cfg.ns, cfg.tol);
  const EnergyConvergence ec = energy_convergence(setup, arch, TestMap::identity(), cfg.ns, cfg.tol);
  out["transport"] = report_json(tr);
  out["metric_gap"] = report_json(mc);
  out["energy"] = {{"test_map", "identity"},
                   {"oracle", ec.oracle},
                   {"cone", report_json(ec.cone)},
                   {"smooth", report_json(ec.smooth)},
                   {"torsion", report_json(ec.torsion)}};
  out["deficit_curvature"] = report_json(dvc);
  out["gauss_bonnet"] = report_json(gb);

  csv = "n,quantity,error,observed_order\n";
  for (const ConvergenceReport* r :
       std::initializer_list<const ConvergenceReport*>{&tr, &mc, &ec.cone, &ec.smooth, &ec.torsion, &dvc, &gb}) {
    append_csv(csv, *r);
  }
  return out;
}

}  // namespace detail

/// Runs a validated config. Errors are folded into the outcome: exit 2 for invalid input,
/// 3 for a mathematical obstruction, 4 for a numerical failure.
inline RunOutcome run(const RunConfig& cfg) {
  RunOutcome out;
  out.report = Json{{"cmd", cfg.cmd}, {"version", kVersion}, {"status", "ok"}, {"exit_code", 0}};
  auto fail = [&](ErrorCode code, const std::string& msg, std::optional<double> distance) {
    out.exit_code = exit_code_for(code);
    out.report["status"] = out.exit_code == 3 ? "obstruction" : "error";
    out.report["exit_code"] = out.exit_code;
    Json e{{"code", to_string(code)}, {"message", msg}};
    if (distance) e["distance"] = *distance;
    out.report["error"] = e;
  };
  try {
    Json result;
    if (cfg.cmd == "holonomy") result = detail::holonomy(cfg);
    else if (cfg.cmd == "burgers") result = detail::burgers(cfg);
    else if (cfg.cmd == "symmetry") result = detail::symmetry(cfg);
    else if (cfg.cmd == "validate") result = detail::validate(cfg);
    else if (cfg.cmd == "minimize") result = detail::minimize_run(cfg);
    else if (cfg.cmd == "homogenize") {
      std::string csv;
      std::optional<IncompatibleDisclination> rejected;
      result = detail::homogenize(cfg, csv, rejected);
      if (rejected) {
        out.report["result"] = result;
        const Error e(ErrorCode::obstruction,
                      "a discrete symmetry group cannot carry the curvature of this metric; " +
                          std::string(rejected->what()));
        fail(e.code(), e.what(), rejected->distance());
        return out;
      }
      out.csv = csv;
    } else {
      throw Error(ErrorCode::validation, "unknown command '" + cfg.cmd + "'");
    }
    out.report["result"] = result;
  } catch (const IncompatibleDisclination& e) {
    fail(e.code(), e.what(), e.distance());
  } catch (const StalledDescent& e) {
    fail(e.code(), e.what(), std::nullopt);
    out.report["result"] = Json{{"energy", e.last().energy}, {"iterations", e.last().iterations},
                                {"gradient_norm", e.last().gradient_norm}};
  } catch (const Error& e) {
    fail(e.code(), e.what(), std::nullopt);
  }
  return out;
}

/// Writes report.json, convergence.csv (when present) and the meta.json sidecar into dir.
inline std::vector<std::string> write_outputs(const RunOutcome& outcome, const std::filesystem::path& dir,
                                              const Json& meta) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> files{"report.json"};
  {
    std::ofstream f(dir / "report.json");
    f << outcome.report.dump(2) << "\n";
  }
  if (outcome.csv) {
    std::ofstream f(dir / "convergence.csv");
    f << *outcome.csv;
    files.push_back("convergence.csv");
  }
  Json m = meta;
  m["files"] = files;
  std::ofstream f(dir / "meta.json");
  f << m.dump(2) << "\n";
  return files;
}

}  // namespace defectkit::cli

#endif  // DEFECTKIT_CLI_HPP
