#ifndef DEFECTKIT_HOMOGENIZE_HPP
#define DEFECTKIT_HOMOGENIZE_HPP

#include "defectkit/elasticity.hpp"

#include <map>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

namespace defectkit {

// ---------------------------------------------------------------------------
// Metric triangulation
// ---------------------------------------------------------------------------

namespace detail {

/// Whether the closed rectangle r lies in the closure of the field's domain.
inline bool covers(const Domain& field, const Rectangle& r) {
  if (const auto* f = std::get_if<Rectangle>(&field)) {
    return r.x_min >= f->x_min && r.x_max <= f->x_max && r.y_min >= f->y_min && r.y_max <= f->y_max;
  }
  const Vec2 inset(1e-12, 1e-12);
  return contains(field, Vec2(r.x_min, r.y_min) + inset) && contains(field, Vec2(r.x_max, r.y_max) - inset) &&
         contains(field, Vec2(r.x_min + 1e-12, r.y_max - 1e-12)) &&
         contains(field, Vec2(r.x_max - 1e-12, r.y_min + 1e-12));
}

inline Mat2 metric_unchecked(const MetricField& g, const Vec2& p) {
  const Mat2 m = g.evaluator(p);
  if (!is_metric(m)) throw Error(ErrorCode::metric_degeneracy, "metric is not symmetric positive-definite");
  return m;
}

/// Angle at the corner opposite side a, from side lengths.
inline double corner_angle(double a, double b, double c) {
  return std::acos(std::clamp((b * b + c * c - a * a) / (2.0 * b * c), -1.0, 1.0));
}

}  // namespace detail

/// Length of the straight chart segment [a, b] in the metric, by composite 5-node Gauss-Legendre.
inline double metric_length(const MetricField& g, const Vec2& a, const Vec2& b, int panels = 1) {
  const Vec2 d = b - a;
  return integrate_unit([&](double t) { return std::sqrt(d.dot(detail::metric_unchecked(g, a + t * d) * d)); },
                        panels);
}

/// Structured chart triangulation with metric edge lengths; lengths[t][k] is the side opposite
/// local vertex k.
struct MetricTriangulation {
  TriMesh mesh;
  Rectangle domain;
  int n = 0;
  std::vector<std::array<double, 3>> lengths;
  double max_edge = 0.0;
  double min_angle = kPi;
  double max_angle = 0.0;
};

inline MetricTriangulation triangulate_metric(const MetricField& g, const Rectangle& domain, int n,
                                              double theta_min = 0.2) {
  if (n < 2) throw Error(ErrorCode::validation, "triangulation needs n >= 2");
  if (!detail::covers(g.domain, domain)) {
    throw Error(ErrorCode::domain, "triangulation domain is not inside the metric's domain");
  }
  MetricTriangulation out{build_mesh(domain, n), domain, n, {}, 0.0, kPi, 0.0};
  std::map<std::pair<int, int>, double> cache;
  auto edge = [&](int a, int b) {
    const auto key = std::minmax(a, b);
    auto it = cache.find(key);
    if (it == cache.end()) {
      it = cache.emplace(key, metric_length(g, out.mesh.vertices[key.first], out.mesh.vertices[key.second])).first;
    }
    return it->second;
  };
  for (const auto& tri : out.mesh.triangles) {
    std::array<double, 3> l{};
    for (int k = 0; k < 3; ++k) l[k] = edge(tri[(k + 1) % 3], tri[(k + 2) % 3]);
    out.lengths.push_back(l);
    for (int k = 0; k < 3; ++k) {
      out.max_edge = std::max(out.max_edge, l[k]);
      if (l[k] >= l[(k + 1) % 3] + l[(k + 2) % 3]) continue;  // reported by flatten
      const double angle = detail::corner_angle(l[k], l[(k + 1) % 3], l[(k + 2) % 3]);
      out.min_angle = std::min(out.min_angle, angle);
      out.max_angle = std::max(out.max_angle, angle);
    }
  }
  if (out.min_angle < theta_min || out.max_angle > kPi - theta_min) {
    throw Error(ErrorCode::anisotropy, "triangle angles leave [theta_min, pi - theta_min] (min " +
                                           std::to_string(out.min_angle) + ", max " + std::to_string(out.max_angle) +
                                           "); refine n or change chart");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cone manifold
// ---------------------------------------------------------------------------

struct ConeManifold {
  TriMesh mesh;  // combinatorics; chart positions are kept for routing curves
  std::vector<std::array<double, 3>> lengths;
  std::vector<std::array<double, 3>> angles;  // corner angle at local vertex k
  std::vector<double> angle_sum;
  std::vector<double> deficit;  // 2 pi - angle_sum at interior vertices, 0 on the boundary
  double max_edge = 0.0;

  std::vector<int> interior_vertices() const {
    std::vector<int> out;
    for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
      if (!mesh.boundary[v]) out.push_back(static_cast<int>(v));
    }
    return out;
  }

  double max_abs_deficit() const {
    double m = 0.0;
    for (int v : interior_vertices()) m = std::max(m, std::abs(deficit[v]));
    return m;
  }

  /// The flat triangle with the same side lengths: local vertex 0 at the origin, 1 on the +x axis.
  std::array<Vec2, 3> canonical(std::size_t t) const {
    const auto& l = lengths[t];
    const double ab = l[2], ca = l[1], bc = l[0];
    const double x = (ab * ab + ca * ca - bc * bc) / (2.0 * ab);
    return {Vec2::Zero(), Vec2(ab, 0.0), Vec2(x, std::sqrt(std::max(0.0, ca * ca - x * x)))};
  }

  /// A_T: chart coordinates of triangle t to its flat placement.
  Mat2 chart_to_flat(std::size_t t) const {
    const auto c = canonical(t);
    Mat2 y;
    y.col(0) = c[1] - c[0];
    y.col(1) = c[2] - c[0];
    return y * mesh.edge_matrix(t).inverse();
  }
};

/// Replaces every triangle by the Euclidean triangle with the same side lengths.
inline ConeManifold flatten(TriMesh mesh, std::vector<std::array<double, 3>> lengths) {
  if (lengths.size() != mesh.triangle_count()) throw Error(ErrorCode::validation, "one length triple per triangle");
  if (mesh.neighbors.size() != mesh.triangle_count()) mesh.build_topology();
  ConeManifold c;
  c.angle_sum.assign(mesh.vertex_count(), 0.0);
  for (std::size_t t = 0; t < lengths.size(); ++t) {
    const auto& l = lengths[t];
    std::array<double, 3> a{};
    for (int k = 0; k < 3; ++k) {
      const double lk = l[k], l1 = l[(k + 1) % 3], l2 = l[(k + 2) % 3];
      if (!(lk > 0.0) || !(lk < l1 + l2)) {
        throw Error(ErrorCode::metric_degeneracy, "triangle " + std::to_string(t) + " violates the triangle inequality");
      }
      a[k] = detail::corner_angle(lk, l1, l2);
      c.max_edge = std::max(c.max_edge, lk);
    }
    for (int k = 0; k < 3; ++k) c.angle_sum[mesh.triangles[t][k]] += a[k];
    c.angles.push_back(a);
  }
  c.deficit.assign(mesh.vertex_count(), 0.0);
  for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
    if (!mesh.boundary[v]) c.deficit[v] = kTwoPi - c.angle_sum[v];
  }
  c.mesh = std::move(mesh);
  c.lengths = std::move(lengths);
  return c;
}

inline ConeManifold flatten(const MetricTriangulation& t) { return flatten(t.mesh, t.lengths); }

// ---------------------------------------------------------------------------
// Transport through triangle strips
// ---------------------------------------------------------------------------

namespace detail {

/// The two vertices shared by triangles s and t, or nullopt when they are not edge-adjacent.
inline std::optional<std::pair<int, int>> shared_edge(const TriMesh& m, int s, int t) {
  std::vector<int> shared;
  for (int v : m.triangles[s]) {
    if (m.local_index(t, v) >= 0) shared.push_back(v);
  }
  if (shared.size() != 2) return std::nullopt;
  return std::pair<int, int>(shared[0], shared[1]);
}

/// Rotation angle placing triangle `to` next to `from` (placed at angle theta) across their edge.
inline double develop(const ConeManifold& c, int from, double theta, int to) {
  const auto e = shared_edge(c.mesh, from, to);
  if (!e) throw Error(ErrorCode::strip, "triangles " + std::to_string(from) + " and " + std::to_string(to) +
                                            " do not share an edge");
  const auto cf = c.canonical(from), ct = c.canonical(to);
  const Vec2 df = cf[c.mesh.local_index(from, e->second)] - cf[c.mesh.local_index(from, e->first)];
  const Vec2 dt = ct[c.mesh.local_index(to, e->second)] - ct[c.mesh.local_index(to, e->first)];
  return theta + std::atan2(df.y(), df.x()) - std::atan2(dt.y(), dt.x());
}

}  // namespace detail

struct ConeTransport {
  Mat2 chart = Mat2::Identity();  // chart coordinates of the first triangle -> last triangle
  Mat2 flat = Mat2::Identity();   // in the flat frames of the first and last triangle
  double angle = 0.0;             // rotation angle of `flat`
};

/// Unfolds the strip into the plane triangle by triangle; transport is the inverse rotation of the
/// last placement.
inline ConeTransport cone_transport(const ConeManifold& c, const std::vector<int>& strip) {
  if (strip.empty()) throw Error(ErrorCode::strip, "empty strip");
  for (int t : strip) {
    if (t < 0 || t >= static_cast<int>(c.mesh.triangle_count())) throw Error(ErrorCode::strip, "triangle out of range");
  }
  double theta = 0.0;
  for (std::size_t i = 1; i < strip.size(); ++i) {
    if (strip[i] == strip[i - 1]) continue;
    theta = detail::develop(c, strip[i - 1], theta, strip[i]);
  }
  ConeTransport out;
  out.flat = rotation(-theta);
  out.angle = rotation_angle(out.flat);
  out.chart = c.chart_to_flat(strip.back()).inverse() * out.flat * c.chart_to_flat(strip.front());
  return out;
}

/// Closed strip once counter-clockwise around vertex v (first triangle repeated at the end).
inline std::vector<int> vertex_link_strip(const ConeManifold& c, int v) {
  if (c.mesh.boundary.at(v)) throw Error(ErrorCode::strip, "boundary vertices have no closed link");
  auto fan = c.mesh.fan(v, c.mesh.incident_triangles());
  fan.push_back(fan.front());
  return fan;
}

namespace detail {

struct RouteTie {};

inline int locate_triangle(const TriMesh& m, const Vec2& p, double eps) {
  for (std::size_t t = 0; t < m.triangle_count(); ++t) {
    const auto& tri = m.triangles[t];
    bool inside = true;
    for (int k = 0; k < 3 && inside; ++k) {
      const Vec2 a = m.vertices[tri[(k + 1) % 3]], b = m.vertices[tri[(k + 2) % 3]];
      inside = cross(b - a, p - a) >= -eps * (b - a).norm();
    }
    if (inside) return static_cast<int>(t);
  }
  return -1;
}

inline std::vector<int> walk(const TriMesh& m, const Curve& curve, double h) {
  const double eps = 1e-9 * h;
  int t = locate_triangle(m, curve.vertices.front(), eps);
  if (t < 0) throw Error(ErrorCode::routing, "loop starts outside the triangulation");
  for (int v : m.triangles[t]) {
    if ((m.vertices[v] - curve.vertices.front()).norm() < eps) throw RouteTie{};
  }
  std::vector<int> strip{t};
  const std::size_t guard = 64 * m.triangle_count() + 64;
  for (std::size_t s = 0; s + 1 < curve.vertices.size(); ++s) {
    const Vec2 p = curve.vertices[s], q = curve.vertices[s + 1];
    for (;;) {
      if (strip.size() > guard) throw Error(ErrorCode::routing, "routing did not terminate");
      // clip the segment against triangle t: d_k(s) >= 0 is the inside of edge k
      const auto& tri = m.triangles[t];
      double exit = std::numeric_limits<double>::infinity();
      int exit_edge = -1;
      std::array<double, 3> dp{}, dq{};
      for (int k = 0; k < 3; ++k) {
        const Vec2 a = m.vertices[tri[(k + 1) % 3]], b = m.vertices[tri[(k + 2) % 3]];
        const double len = (b - a).norm();
        dp[k] = cross(b - a, p - a) / len;
        dq[k] = cross(b - a, q - a) / len;
        if (dq[k] < dp[k] && dq[k] < 0.0) {
          const double root = dp[k] / (dp[k] - dq[k]);
          if (root < exit) {
            exit = root;
            exit_edge = k;
          }
        }
      }
      if (exit_edge < 0 || exit >= 1.0) break;  // q is inside t
      for (int k = 0; k < 3; ++k) {
        if (k == exit_edge) continue;
        if (std::abs(dp[k] + exit * (dq[k] - dp[k])) < eps) throw RouteTie{};
      }
      const int next = m.neighbors[t][exit_edge];
      if (next < 0) throw Error(ErrorCode::routing, "loop leaves the triangulated domain");
      t = next;
      strip.push_back(t);
    }
  }
  return strip;
}

}  // namespace detail

/// Triangle strip followed by a curve. A curve through a mesh vertex is shifted toward its
/// centroid by 1e-6 h (up to three times) before giving up.
inline std::vector<int> route_loop(const ConeManifold& c, const Curve& curve) {
  if (curve.vertices.size() < 2) throw Error(ErrorCode::routing, "curve needs at least two vertices");
  const double h = c.mesh.max_edge_length();
  Vec2 centroid = Vec2::Zero();
  for (const Vec2& v : curve.vertices) centroid += v;
  centroid /= static_cast<double>(curve.vertices.size());
  for (int attempt = 0; attempt < 4; ++attempt) {
    Curve shifted = curve;
    for (Vec2& v : shifted.vertices) {
      const Vec2 d = centroid - v;
      if (d.norm() > 0) v += attempt * 1e-6 * h * d.normalized();
    }
    try {
      return detail::walk(c.mesh, shifted, h);
    } catch (const detail::RouteTie&) {
    }
  }
  throw Error(ErrorCode::routing, "loop passes through a cone vertex");
}

// ---------------------------------------------------------------------------
// Implanting: a body whose charts are developed vertex stars
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> developing_angles(const ConeManifold& c) {
  const std::size_t nt = c.mesh.triangle_count();
  std::vector<double> theta(nt, 0.0);
  std::vector<bool> seen(nt, false);
  for (std::size_t root = 0; root < nt; ++root) {
    if (seen[root]) continue;
    seen[root] = true;
    std::queue<int> q;
    q.push(static_cast<int>(root));
    while (!q.empty()) {
      const int t = q.front();
      q.pop();
      for (int nb : c.mesh.neighbors[t]) {
        if (nb < 0 || seen[nb]) continue;
        seen[nb] = true;
        theta[nb] = develop(c, t, theta[t], nb);
        q.push(nb);
      }
    }
  }
  return theta;
}

inline ReferenceChart fan_chart(const ConeManifold& c, int v, const std::vector<int>& order, double theta0, bool cut,
                                const std::string& name) {
  TriangleFan fan;
  fan.center = c.mesh.vertices[v];
  double theta = theta0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const int t = order[i];
    if (i > 0) theta = develop(c, order[i - 1], theta, t);
    const auto& tri = c.mesh.triangles[t];
    fan.triangles.push_back({c.mesh.vertices[tri[0]], c.mesh.vertices[tri[1]], c.mesh.vertices[tri[2]]});
    fan.triangle_ids.push_back(t);
    fan.frames.push_back(rotation(theta) * c.chart_to_flat(t));
    if (i > 0) {
      const auto e = *shared_edge(c.mesh, order[i - 1], t);
      fan.glued.push_back({static_cast<int>(i - 1), static_cast<int>(i)});
      fan.glued_edges.push_back({c.mesh.vertices[e.first], c.mesh.vertices[e.second]});
    }
  }
  if (cut) {
    const auto e = *shared_edge(c.mesh, order.back(), order.front());
    const int other = e.first == v ? e.second : e.first;
    fan.cut = std::array<Vec2, 2>{c.mesh.vertices[v], c.mesh.vertices[other]};
  }
  fan.update_box();
  auto cells = std::make_shared<const TriangleFan>(fan);
  return ReferenceChart{std::move(fan),
                        [cells](const Vec2& p) {
                          const int i = cells->locate(p, 1e-9);
                          if (i < 0) throw Error(ErrorCode::domain, "point outside fan chart");
                          return cells->frames[i];
                        },
                        name,
                        {}};
}

}  // namespace detail

/// Body over the cone manifold minus its vertices: each vertex star is developed into the plane
/// (interior stars get two charts cut along different edges). Discrete archetypes are rejected
/// unless every deficit is a rotation in the symmetry group.
inline Body implant_cone_body(const ConeManifold& c, const Archetype& arch, const Tolerances& tol = {},
                              bool validate = true) {
  const SymmetryGroup group = symmetry_group(arch);
  if (group.discrete()) {
    double worst = 0.0;
    int worst_vertex = -1;
    for (int v : c.interior_vertices()) {
      const double d = nearest_element(group, rotation(c.deficit[v])).distance;
      if (d > worst) {
        worst = d;
        worst_vertex = v;
      }
    }
    if (worst >= tol.group) {
      throw IncompatibleDisclination("deficit " + std::to_string(c.deficit[worst_vertex]) + " at vertex " +
                                         std::to_string(worst_vertex) +
                                         " is not a rotation in the archetype's symmetry group; group distance " +
                                         std::to_string(worst),
                                     worst);
    }
  }
  const auto theta = detail::developing_angles(c);
  const auto incident = c.mesh.incident_triangles();
  std::vector<ReferenceChart> charts;
  for (std::size_t v = 0; v < c.mesh.vertex_count(); ++v) {
    const auto fan = c.mesh.fan(static_cast<int>(v), incident);
    if (fan.empty()) continue;
    const std::string base = "star" + std::to_string(v);
    if (c.mesh.boundary[v]) {
      charts.push_back(detail::fan_chart(c, static_cast<int>(v), fan, theta[fan.front()], false, base));
      continue;
    }
    charts.push_back(detail::fan_chart(c, static_cast<int>(v), fan, theta[fan.front()], true, base + "a"));
    const std::size_t m = fan.size() / 2;
    std::vector<int> rotated(fan.begin() + static_cast<std::ptrdiff_t>(m), fan.end());
    rotated.insert(rotated.end(), fan.begin(), fan.begin() + static_cast<std::ptrdiff_t>(m));
    charts.push_back(detail::fan_chart(c, static_cast<int>(v), rotated, theta[rotated.front()], true, base + "b"));
  }
  Vec2 box_min = Vec2::Constant(std::numeric_limits<double>::infinity());
  Vec2 box_max = -box_min;
  for (const Vec2& p : c.mesh.vertices) {
    box_min = box_min.cwiseMin(p);
    box_max = box_max.cwiseMax(p);
  }
  Body body(std::move(charts), arch, Rectangle{box_min.x(), box_max.x(), box_min.y(), box_max.y()}, "cone");
  if (validate) {
    const BodyReport rep = validate_body(body, tol);
    if (!rep.compatibility.pass) {
      throw IncompatibleDisclination("implanted charts are incompatible; group distance " +
                                         std::to_string(rep.compatibility.max_distance),
                                     rep.compatibility.max_distance);
    }
    if (!rep.closed.pass) throw Error(ErrorCode::validation, "implanted charts are not closed");
  }
  return body;
}

// ---------------------------------------------------------------------------
// Convergence experiments
// ---------------------------------------------------------------------------

struct ConvergenceRecord {
  int n = 0;
  double error = 0.0;
  std::vector<std::pair<std::string, double>> details;
};

struct ConvergenceReport {
  std::string quantity;
  std::string compared;  // what the error measures
  std::vector<ConvergenceRecord> records;
  std::optional<double> observed_order;
};

/// Least-squares slope of log(error) against log(1/n). Nullopt with fewer than two records or
/// when every error is at round-off level.
inline std::optional<double> observed_order(const std::vector<ConvergenceRecord>& records) {
  if (records.size() < 2) return std::nullopt;
  double max_err = 0.0;
  for (const auto& r : records) {
    if (!(r.error > 0.0)) return std::nullopt;
    max_err = std::max(max_err, r.error);
  }
  if (max_err < 1e-12) return std::nullopt;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = static_cast<double>(records.size());
  for (const auto& r : records) {
    const double x = -std::log(static_cast<double>(r.n)), y = std::log(r.error);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

/// A metric together with the rectangle that gets triangulated.
struct HomogenizationSetup {
  MetricField metric;
  Rectangle domain;
};

inline HomogenizationSetup flat_setup() {
  return {flat_metric(Rectangle{-1, 1, -1, 1}), Rectangle{-0.9, 0.9, -0.9, 0.9}};
}

inline HomogenizationSetup sphere_cap_setup() {
  return {sphere_cap_metric(Rectangle{-1, 1, -1, 1}), Rectangle{-0.9, 0.9, -0.9, 0.9}};
}

/// exp(2u) Id with u = amplitude exp(-|x|^2 / width^2).
inline HomogenizationSetup custom_conformal_setup(double amplitude, double width) {
  if (!(width > 0.0)) throw Error(ErrorCode::validation, "conformal bump width must be positive");
  return {conformal_metric([amplitude, width](const Vec2& p) { return amplitude * std::exp(-p.squaredNorm() / (width * width)); },
                           Rectangle{-1, 1, -1, 1}, "custom-conformal"),
          Rectangle{-0.9, 0.9, -0.9, 0.9}};
}

inline Curve default_homogenization_loop() { return Curve::circle(Vec2::Zero(), 0.8, 256); }

/// Frobenius distance between the strip transport of the routed loop and the ODE transport of G.
inline ConvergenceReport transport_convergence(const HomogenizationSetup& setup, const Curve& loop,
                                               const std::vector<int>& ns, const Tolerances& tol = {}) {
  ConvergenceReport rep{"transport", "||strip transport - RK4 Levi-Civita transport||_F along the loop", {}, {}};
  const Mat2 smooth = transport_ode(setup.metric, loop, loop.length() / tol.transport_steps, tol.christoffel_step);
  for (int n : ns) {
    const ConeManifold c = flatten(triangulate_metric(setup.metric, setup.domain, n, tol.theta_min));
    const auto strip = route_loop(c, loop);
    const ConeTransport ct = cone_transport(c, strip);
    rep.records.push_back({n,
                           (ct.chart - smooth).norm(),
                           {{"cone_angle", rotation_angle(ct.chart)},
                            {"smooth_angle", rotation_angle(smooth)},
                            {"strip_length", static_cast<double>(strip.size())}}});
  }
  rep.observed_order = observed_order(rep.records);
  return rep;
}

namespace detail {

/// Length of the two-segment polyline a-m-b, with m on the perpendicular bisector of [a, b] chosen
/// by Newton's method. Sliding m along the chord changes the length only at higher order.
inline double two_segment_length(const MetricField& g, const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  const Vec2 w = rot90(d.normalized());
  const double step = 1e-4 * d.norm();
  auto f = [&](double s) {
    const Vec2 m = 0.5 * (a + b) + s * w;
    return metric_length(g, a, m) + metric_length(g, m, b);
  };
  double s = 0.0;
  for (int it = 0; it < 6; ++it) {
    const double f0 = f(s), fp = f(s + step), fm = f(s - step);
    const double second = (fp - 2 * f0 + fm) / (step * step);
    if (!(second > 0.0)) break;
    const double ds = (fp - fm) / (2 * step) / second;
    s -= ds;
    if (std::abs(ds) < 1e-12 * d.norm()) break;
  }
  return f(s);
}

}  // namespace detail

/// Straight-segment edge length against a geodesic estimate: the optimal two-segment polyline L2,
/// extrapolated as (4 L2 - L1) / 3. Error per n is the max relative gap over edges.
inline ConvergenceReport metric_convergence(const HomogenizationSetup& setup, const std::vector<int>& ns,
                                            const Tolerances& tol = {}) {
  ConvergenceReport rep{"metric", "max over edges of (L_segment - L_geodesic_estimate) / L_segment", {}, {}};
  for (int n : ns) {
    const MetricTriangulation tri = triangulate_metric(setup.metric, setup.domain, n, tol.theta_min);
    std::map<std::pair<int, int>, double> edges;
    for (std::size_t t = 0; t < tri.mesh.triangle_count(); ++t) {
      for (int k = 0; k < 3; ++k) {
        edges.emplace(std::minmax(tri.mesh.triangles[t][(k + 1) % 3], tri.mesh.triangles[t][(k + 2) % 3]),
                      tri.lengths[t][k]);
      }
    }
    double worst = 0.0;
    for (const auto& [e, l1] : edges) {
      const double l2 = detail::two_segment_length(setup.metric, tri.mesh.vertices[e.first], tri.mesh.vertices[e.second]);
      worst = std::max(worst, (4.0 / 3.0) * (l1 - l2) / l1);
    }
    rep.records.push_back({n, std::max(worst, 0.0), {{"max_edge", tri.max_edge}, {"edges", static_cast<double>(edges.size())}}});
  }
  rep.observed_order = observed_order(rep.records);
  return rep;
}

namespace detail {

/// Integral of f over the bilinear quad p0 p1 p2 p3 (counter-clockwise) with a 5x5 Gauss rule.
template <class F>
double integrate_quad(const Vec2& p0, const Vec2& p1, const Vec2& p2, const Vec2& p3, F&& f) {
  double sum = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      const double s = GaussLegendre5::nodes[i], t = GaussLegendre5::nodes[j];
      const Vec2 x = (1 - s) * (1 - t) * p0 + s * (1 - t) * p1 + s * t * p2 + (1 - s) * t * p3;
      Mat2 jac;
      jac.col(0) = (1 - t) * (p1 - p0) + t * (p2 - p3);
      jac.col(1) = (1 - s) * (p3 - p0) + s * (p2 - p1);
      sum += GaussLegendre5::weights[i] * GaussLegendre5::weights[j] * std::abs(jac.determinant()) * f(x);
    }
  }
  return sum;
}

}  // namespace detail

/// Integral of K dA over the barycentric dual cell of every vertex.
inline std::vector<double> dual_cell_curvature(const ConeManifold& c, const MetricField& g, const Tolerances& tol = {}) {
  std::vector<double> out(c.mesh.vertex_count(), 0.0);
  auto density = [&](const Vec2& x) {
    return gaussian_curvature(g, x, tol.curvature_step, tol.christoffel_step) * std::sqrt(g(x).determinant());
  };
  for (std::size_t t = 0; t < c.mesh.triangle_count(); ++t) {
    const auto& tri = c.mesh.triangles[t];
    const Vec2 centroid = c.mesh.barycenter(t);
    for (int k = 0; k < 3; ++k) {
      const Vec2 v = c.mesh.vertices[tri[k]];
      const Vec2 m1 = 0.5 * (v + c.mesh.vertices[tri[(k + 1) % 3]]);
      const Vec2 m2 = 0.5 * (v + c.mesh.vertices[tri[(k + 2) % 3]]);
      out[tri[k]] += detail::integrate_quad(v, m1, centroid, m2, density);
    }
  }
  return out;
}

struct DeficitCurvature {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  int compared = 0;  // interior vertices with non-negligible cell curvature
};

/// Interior deficits against the curvature integral over their barycentric dual cells.
inline DeficitCurvature deficit_vs_curvature(const ConeManifold& c, const MetricField& g, const Tolerances& tol = {}) {
  const auto cells = dual_cell_curvature(c, g, tol);
  DeficitCurvature out;
  for (int v : c.interior_vertices()) {
    const double err = std::abs(c.deficit[v] - cells[v]);
    out.max_absolute_error = std::max(out.max_absolute_error, err);
    if (std::abs(cells[v]) > 1e-12) {
      out.max_relative_error = std::max(out.max_relative_error, err / std::abs(cells[v]));
      ++out.compared;
    }
  }
  return out;
}

struct GaussBonnet {
  double interior_deficits = 0.0;
  double boundary_defects = 0.0;    // sum of (G-angle - flat angle) at boundary vertices
  double curvature_integral = 0.0;  // integral of K dA
  double boundary_curvature = 0.0;  // integral of k_g ds along the chart boundary
  double discrete() const { return interior_deficits + boundary_defects; }
  double smooth() const { return curvature_integral + boundary_curvature; }
  double residual() const { return std::abs(discrete() - smooth()); }
};

/// Discrete Gauss-Bonnet balance. Straight chart edges are not G-geodesics, so the smooth side
/// carries the geodesic curvature of the boundary.
inline GaussBonnet gauss_bonnet(const ConeManifold& c, const MetricField& g, const Tolerances& tol = {}) {
  GaussBonnet out;
  for (int v : c.interior_vertices()) out.interior_deficits += c.deficit[v];
  std::vector<double> g_angle(c.mesh.vertex_count(), 0.0);
  for (std::size_t t = 0; t < c.mesh.triangle_count(); ++t) {
    const auto& tri = c.mesh.triangles[t];
    for (int k = 0; k < 3; ++k) {
      if (!c.mesh.boundary[tri[k]]) continue;
      const Vec2 v = c.mesh.vertices[tri[k]];
      const Vec2 a = c.mesh.vertices[tri[(k + 1) % 3]] - v, b = c.mesh.vertices[tri[(k + 2) % 3]] - v;
      const Mat2 gv = detail::metric_unchecked(g, v);
      g_angle[tri[k]] += std::acos(std::clamp(a.dot(gv * b) / std::sqrt(a.dot(gv * a) * b.dot(gv * b)), -1.0, 1.0));
    }
  }
  for (std::size_t v = 0; v < c.mesh.vertex_count(); ++v) {
    if (c.mesh.boundary[v]) out.boundary_defects += g_angle[v] - c.angle_sum[v];
  }
  for (double k : dual_cell_curvature(c, g, tol)) out.curvature_integral += k;
  for (std::size_t t = 0; t < c.mesh.triangle_count(); ++t) {
    for (int k = 0; k < 3; ++k) {
      if (c.mesh.neighbors[t][k] >= 0) continue;
      const Vec2 a = c.mesh.vertices[c.mesh.triangles[t][(k + 1) % 3]];
      const Vec2 d = c.mesh.vertices[c.mesh.triangles[t][(k + 2) % 3]] - a;
      const Vec2 w = rot90(d);  // covector annihilating d; G^{-1} w is the inward normal direction
      out.boundary_curvature += integrate_unit(
          [&](double s) {
            const Vec2 x = a + s * d;
            const Mat2 gx = detail::metric_unchecked(g, x);
            const Vec2 accel = christoffel(g, x, tol.christoffel_step).contract(d, d);
            return accel.dot(w) / (std::sqrt(w.dot(gx.inverse() * w)) * std::sqrt(d.dot(gx * d)));
          },
          2);
    }
  }
  return out;
}

/// A smooth test configuration with its Jacobian.
struct TestMap {
  std::string name;
  std::function<Vec2(const Vec2&)> map;
  std::function<Mat2(const Vec2&)> jacobian;

  static TestMap identity() {
    return {"identity", [](const Vec2& x) { return x; }, [](const Vec2&) { return Mat2::Identity().eval(); }};
  }
};

struct EnergyConvergence {
  double oracle = 0.0;         // integral of W(Df sqrt(G)^{-1}) sqrt(det G) by tensor Gauss quadrature
  ConvergenceReport cone;      // implanted cone body
  ConvergenceReport smooth;    // P = sqrt(G) at barycenters
  ConvergenceReport torsion;   // P = R(x y / 2) sqrt(G): same metric, dP != 0
};

/// Torsion-carrying frame with the same induced metric as sqrt(G).
inline Mat2 torsion_frame(const MetricField& g, const Vec2& p) { return rotation(0.5 * p.x() * p.y()) * metric_sqrt(g(p)); }

inline EnergyConvergence energy_convergence(const HomogenizationSetup& setup, const Archetype& arch,
                                            const TestMap& f, const std::vector<int>& ns, const Tolerances& tol = {},
                                            int oracle_panels = 48) {
  if (symmetry_group(arch).discrete()) {
    throw Error(ErrorCode::obstruction,
                "a discrete symmetry group cannot realize a non-flat limit connection; energy convergence needs an "
                "isotropic archetype");
  }
  const MetricField& g = setup.metric;
  const Rectangle& dom = setup.domain;
  EnergyConvergence out;
  {
    const double wx = (dom.x_max - dom.x_min) / oracle_panels, wy = (dom.y_max - dom.y_min) / oracle_panels;
    double sum = 0.0;
    for (int i = 0; i < oracle_panels; ++i) {
      for (int j = 0; j < oracle_panels; ++j) {
        for (std::size_t a = 0; a < 5; ++a) {
          for (std::size_t b = 0; b < 5; ++b) {
            const Vec2 x(dom.x_min + (i + GaussLegendre5::nodes[a]) * wx, dom.y_min + (j + GaussLegendre5::nodes[b]) * wy);
            const Mat2 p = metric_sqrt(detail::metric_unchecked(g, x));
            sum += GaussLegendre5::weights[a] * GaussLegendre5::weights[b] * wx * wy * arch(f.jacobian(x) * p.inverse()) *
                   p.determinant();
          }
        }
      }
    }
    out.oracle = sum;
  }
  const bool relative = std::abs(out.oracle) > 1e-14;
  const std::string measure = relative ? "|E_n - E| / E" : "|E_n - E|";
  out.cone = {"energy-cone", measure + " for the implanted cone body", {}, {}};
  out.smooth = {"energy-smooth", measure + " for P = sqrt(G)", {}, {}};
  out.torsion = {"energy-torsion", measure + " for P = R(xy/2) sqrt(G)", {}, {}};
  auto error = [&](double e) { return relative ? std::abs(e - out.oracle) / std::abs(out.oracle) : std::abs(e - out.oracle); };
  for (int n : ns) {
    const ConeManifold c = flatten(triangulate_metric(g, dom, n, tol.theta_min));
    const Body body = implant_cone_body(c, arch, tol);
    Configuration x;
    for (const Vec2& v : c.mesh.vertices) x.push_back(f.map(v));
    const double e_cone = assemble_energy(make_energy_model(body, c.mesh), x);
    std::vector<Mat2> smooth_frames, torsion_frames;
    for (std::size_t t = 0; t < c.mesh.triangle_count(); ++t) {
      const Vec2 b = c.mesh.barycenter(t);
      smooth_frames.push_back(metric_sqrt(g(b)));
      torsion_frames.push_back(torsion_frame(g, b));
    }
    const double e_smooth = assemble_energy(make_energy_model(c.mesh, arch, smooth_frames), x);
    const double e_torsion = assemble_energy(make_energy_model(c.mesh, arch, torsion_frames), x);
    out.cone.records.push_back({n, error(e_cone), {{"energy", e_cone}, {"oracle", out.oracle}}});
    out.smooth.records.push_back({n, error(e_smooth), {{"energy", e_smooth}, {"oracle", out.oracle}}});
    out.torsion.records.push_back({n, error(e_torsion), {{"energy", e_torsion}, {"oracle", out.oracle}}});
  }
  out.cone.observed_order = observed_order(out.cone.records);
  out.smooth.observed_order = observed_order(out.smooth.records);
  out.torsion.observed_order = observed_order(out.torsion.records);
  return out;
}

}  // namespace defectkit

#endif  // DEFECTKIT_HOMOGENIZE_HPP
