#ifndef DEFECTKIT_BODY_HPP
#define DEFECTKIT_BODY_HPP

#include "defectkit/archetype.hpp"
#include "defectkit/geometry.hpp"

#include <algorithm>
#include <memory>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace defectkit {

/// An atlas of reference charts sharing one archetype.
class Body {
 public:
  Body(std::vector<ReferenceChart> charts, Archetype archetype, Domain region, std::string name = "body")
      : charts_(std::move(charts)),
        archetype_(std::move(archetype)),
        region_(std::move(region)),
        name_(std::move(name)),
        group_(symmetry_group(archetype_)) {
    if (charts_.empty()) throw Error(ErrorCode::validation, "a body needs at least one chart");
  }

  const std::vector<ReferenceChart>& charts() const { return charts_; }
  const ReferenceChart& chart(std::size_t i) const { return charts_.at(i); }
  const Archetype& archetype() const { return archetype_; }
  const Domain& region() const { return region_; }
  const std::string& name() const { return name_; }
  const SymmetryGroup& group() const { return group_; }

  /// Lowest index of a chart containing p, or -1.
  int chart_index(const Vec2& p) const {
    for (std::size_t i = 0; i < charts_.size(); ++i) {
      if (charts_[i].contains(p)) return static_cast<int>(i);
    }
    return -1;
  }

  const ReferenceChart& chart_at(const Vec2& p) const {
    const int i = chart_index(p);
    if (i < 0) {
      throw Error(ErrorCode::domain, "point (" + std::to_string(p.x()) + ", " + std::to_string(p.y()) +
                                         ") is not covered by any chart of '" + name_ + "'");
    }
    return charts_[i];
  }

 private:
  std::vector<ReferenceChart> charts_;
  Archetype archetype_;
  Domain region_;
  std::string name_;
  SymmetryGroup group_;
};

// ---------------------------------------------------------------------------
// Closedness
// ---------------------------------------------------------------------------

struct ClosedReport {
  double max_residual = 0.0;
  bool pass = true;
  int samples = 0;
};

namespace detail {

inline bool stencil_fits(const ReferenceChart& c, const Vec2& p, double h) {
  return c.contains(p + Vec2(2 * h, 0)) && c.contains(p - Vec2(2 * h, 0)) && c.contains(p + Vec2(0, 2 * h)) &&
         c.contains(p - Vec2(0, 2 * h));
}

/// Fourth-order central difference of the frame along e.
inline Mat2 frame_derivative(const ReferenceChart& c, const Vec2& p, const Vec2& e) {
  return (8.0 * (c.frame(p + e) - c.frame(p - e)) - (c.frame(p + 2 * e) - c.frame(p - 2 * e))) / (12.0 * e.norm());
}

}  // namespace detail

/// max |d_1 P_i2 - d_2 P_i1| over a sample grid, by central differences with step h.
/// Piecewise-constant fan charts are checked through the jump of the tangential component P e
/// across every glued edge instead.
inline ClosedReport check_closed(const ReferenceChart& c, double h = 1e-4, double tol = 1e-6, int grid = 32) {
  ClosedReport rep;
  if (const auto* fan = std::get_if<TriangleFan>(&c.domain)) {
    for (std::size_t k = 0; k < fan->glued.size(); ++k) {
      const auto [i, j] = fan->glued[k];
      const Vec2 e = fan->glued_edges[k][1] - fan->glued_edges[k][0];
      const double jump = ((fan->frames[i] - fan->frames[j]) * e).norm() / e.norm();
      rep.max_residual = std::max(rep.max_residual, jump);
      ++rep.samples;
    }
    rep.pass = rep.max_residual < tol;
    return rep;
  }
  for (const Vec2& p : sample_grid(c.domain, grid, 3.0 * h)) {
    if (!c.contains(p) || !detail::stencil_fits(c, p, h)) continue;
    const Mat2 dx = detail::frame_derivative(c, p, Vec2(h, 0));
    const Mat2 dy = detail::frame_derivative(c, p, Vec2(0, h));
    for (int i = 0; i < 2; ++i) rep.max_residual = std::max(rep.max_residual, std::abs(dx(i, 1) - dy(i, 0)));
    ++rep.samples;
  }
  rep.pass = rep.max_residual < tol;
  return rep;
}

// ---------------------------------------------------------------------------
// Overlap compatibility
// ---------------------------------------------------------------------------

struct CompatibilityReport {
  double max_distance = 0.0;
  double max_variation = 0.0;  // how far the transition is from locally constant
  Mat2 worst_transition = Mat2::Identity();
  NearestElement worst;
  int samples = 0;
  bool pass = true;
};

namespace detail {

struct OverlapProbe {
  Vec2 point;
  Mat2 transition;
};

struct OverlapSamples {
  std::vector<OverlapProbe> probes;
  double variation = 0.0;
};

inline bool boxes_overlap(const Domain& a, const Domain& b) {
  const auto [amin, amax] = bounding_box(a);
  const auto [bmin, bmax] = bounding_box(b);
  return (amin.array() < bmax.array()).all() && (bmin.array() < amax.array()).all();
}

inline OverlapSamples fan_overlap(const TriangleFan& a, const TriangleFan& b) {
  OverlapSamples out;
  std::unordered_map<int, int> in_b;
  for (std::size_t i = 0; i < b.triangle_ids.size(); ++i) in_b[b.triangle_ids[i]] = static_cast<int>(i);
  std::unordered_map<int, Mat2> by_local_a;
  for (std::size_t i = 0; i < a.triangle_ids.size(); ++i) {
    const auto it = in_b.find(a.triangle_ids[i]);
    if (it == in_b.end()) continue;
    const Mat2 t = a.frames[i] * b.frames[it->second].inverse();
    const auto& tri = a.triangles[i];
    out.probes.push_back({(tri[0] + tri[1] + tri[2]) / 3.0, t});
    by_local_a[static_cast<int>(i)] = t;
  }
  std::set<std::pair<int, int>> glued_b;
  for (const auto& g : b.glued) glued_b.insert({std::min(g[0], g[1]), std::max(g[0], g[1])});
  for (const auto& g : a.glued) {
    const auto ia = by_local_a.find(g[0]), ja = by_local_a.find(g[1]);
    if (ia == by_local_a.end() || ja == by_local_a.end()) continue;
    const int ib = in_b.at(a.triangle_ids[g[0]]), jb = in_b.at(a.triangle_ids[g[1]]);
    if (!glued_b.contains({std::min(ib, jb), std::max(ib, jb)})) continue;
    out.variation = std::max(out.variation, (ia->second - ja->second).norm());
  }
  return out;
}

inline OverlapSamples sampled_overlap(const ReferenceChart& a, const ReferenceChart& b, int grid) {
  OverlapSamples out;
  if (!boxes_overlap(a.domain, b.domain)) return out;
  std::vector<Vec2> candidates = sample_grid(a.domain, grid);
  for (const Vec2& p : sample_grid(b.domain, grid)) candidates.push_back(p);
  const auto [lo, hi] = bounding_box(a.domain);
  const double delta = 1e-4 * (hi - lo).norm();
  auto transition = [&](const Vec2& p) { return (a.frame(p) * b.frame(p).inverse()).eval(); };
  for (const Vec2& p : candidates) {
    if (!a.contains(p) || !b.contains(p)) continue;
    const Mat2 t = transition(p);
    out.probes.push_back({p, t});
    for (const Vec2& q : {Vec2(p + Vec2(delta, 0)), Vec2(p + Vec2(0, delta))}) {
      if (a.contains(q) && b.contains(q)) out.variation = std::max(out.variation, (transition(q) - t).norm());
    }
  }
  return out;
}

inline OverlapSamples overlap_samples(const ReferenceChart& a, const ReferenceChart& b, int grid) {
  const auto* fa = std::get_if<TriangleFan>(&a.domain);
  const auto* fb = std::get_if<TriangleFan>(&b.domain);
  if (fa && fb) return fan_overlap(*fa, *fb);
  return sampled_overlap(a, b, grid);
}

inline CompatibilityReport compatibility_from(const OverlapSamples& s, const SymmetryGroup& group, double tol) {
  CompatibilityReport rep;
  rep.samples = static_cast<int>(s.probes.size());
  rep.max_variation = s.variation;
  rep.max_distance = -1.0;
  for (const auto& probe : s.probes) {
    const NearestElement ne = nearest_element(group, probe.transition);
    if (ne.distance > rep.max_distance) {
      rep.max_distance = ne.distance;
      rep.worst = ne;
      rep.worst_transition = probe.transition;
    }
  }
  rep.max_distance = std::max(rep.max_distance, 0.0);
  rep.pass = rep.max_distance < tol && (!group.discrete() || rep.max_variation < std::sqrt(tol));
  return rep;
}

}  // namespace detail

/// Samples the overlap of two charts (a 2*grid x 2*grid grid over each domain, or the shared
/// cells of two fan charts) and measures how far P_a P_b^{-1} is from the group.
inline CompatibilityReport check_overlap_compatibility(const ReferenceChart& a, const ReferenceChart& b,
                                                       const SymmetryGroup& group, double tol = 1e-8,
                                                       int grid = 16) {
  const auto samples = detail::overlap_samples(a, b, grid);
  if (samples.probes.empty()) {
    throw Error(ErrorCode::disjoint_domains, "charts '" + a.name + "' and '" + b.name + "' do not overlap");
  }
  return detail::compatibility_from(samples, group, tol);
}

inline CompatibilityReport check_overlap_compatibility(const ReferenceChart& a, const ReferenceChart& b,
                                                       const Archetype& arch, double tol = 1e-8, int grid = 16) {
  return check_overlap_compatibility(a, b, symmetry_group(arch), tol, grid);
}

// ---------------------------------------------------------------------------
// Whole-body validation
// ---------------------------------------------------------------------------

struct BodyReport {
  ClosedReport closed;                // worst chart
  CompatibilityReport compatibility;  // worst overlapping pair
  int overlapping_pairs = 0;
  double cover_fraction = 1.0;        // share of region samples covered by some chart
  double min_det = 0.0;
  double volume_residual = 0.0;
  bool pass = true;
};

inline BodyReport validate_body(const Body& body, const Tolerances& tol = {}) {
  BodyReport rep;
  rep.min_det = std::numeric_limits<double>::infinity();
  const auto& charts = body.charts();
  for (const auto& c : charts) {
    const ClosedReport cr = check_closed(c, tol.closed_step, tol.closed);
    rep.closed.max_residual = std::max(rep.closed.max_residual, cr.max_residual);
    rep.closed.samples += cr.samples;
    for (const Vec2& p : sample_grid(c.domain, 8)) {
      if (!c.contains(p)) continue;
      const Mat2 f = c.frame(p);
      rep.min_det = std::min(rep.min_det, f.determinant());
      if (c.volume_density) {
        rep.volume_residual = std::max(rep.volume_residual, std::abs(f.determinant() - c.volume_density(p)));
      }
    }
  }
  rep.closed.pass = rep.closed.max_residual < tol.closed;

  rep.compatibility.max_distance = 0.0;
  for (std::size_t i = 0; i < charts.size(); ++i) {
    for (std::size_t j = i + 1; j < charts.size(); ++j) {
      if (!detail::boxes_overlap(charts[i].domain, charts[j].domain)) continue;
      const auto samples = detail::overlap_samples(charts[i], charts[j], 16);
      if (samples.probes.empty()) continue;
      ++rep.overlapping_pairs;
      const auto cr = detail::compatibility_from(samples, body.group(), tol.group);
      rep.compatibility.samples += cr.samples;
      rep.compatibility.max_variation = std::max(rep.compatibility.max_variation, cr.max_variation);
      if (cr.max_distance >= rep.compatibility.max_distance) {
        const int total = rep.compatibility.samples;
        const double variation = rep.compatibility.max_variation;
        rep.compatibility = cr;
        rep.compatibility.samples = total;
        rep.compatibility.max_variation = variation;
      }
    }
  }
  rep.compatibility.pass = rep.compatibility.max_distance < tol.group &&
                           (!body.group().discrete() || rep.compatibility.max_variation < std::sqrt(tol.group));

  const auto probes = sample_grid(body.region(), 32);
  int covered = 0, inside = 0;
  for (const Vec2& p : probes) {
    if (!contains(body.region(), p)) continue;
    ++inside;
    if (body.chart_index(p) >= 0) ++covered;
  }
  rep.cover_fraction = inside > 0 ? static_cast<double>(covered) / inside : 1.0;
  rep.pass = rep.closed.pass && rep.compatibility.pass && rep.cover_fraction == 1.0 && rep.min_det > 0.0 &&
             rep.volume_residual < tol.volume;
  return rep;
}

// ---------------------------------------------------------------------------
// Derived fields
// ---------------------------------------------------------------------------

/// G = P^T P, evaluated in the lowest-index chart containing the point.
inline MetricField induced_metric(const Body& body) {
  auto shared = std::make_shared<const Body>(body);
  return {[shared](const Vec2& p) { return metric_from_reference(shared->chart_at(p).frame(p)); }, body.region(),
          "induced:" + body.name()};
}

/// W(A P(p)^{-1}), in a given chart or the lowest-index chart containing p.
inline double energy_density_at(const Body& body, const Vec2& p, const Mat2& a, int chart = -1) {
  const ReferenceChart& c = chart < 0 ? body.chart_at(p) : body.chart(static_cast<std::size_t>(chart));
  const Mat2 f = c.frame_at(p);
  require_frame(f);
  return body.archetype()(a * f.inverse());
}

// ---------------------------------------------------------------------------
// Constructors
// ---------------------------------------------------------------------------

/// d(chi^{-1}) for chi^{-1}(r, phi) = r (cos beta phi, sin beta phi), in Cartesian chart coordinates.
inline Mat2 disclination_frame(double beta, double phi) {
  Mat2 d = Mat2::Identity();
  d(1, 1) = beta;
  return rotation(beta * phi) * d * rotation(-phi);
}

inline Mat2 dislocation_frame(double eps, const Vec2& p) {
  const double r2 = p.squaredNorm();
  Mat2 f = Mat2::Identity();
  f(0, 0) -= eps * p.y() / (kTwoPi * r2);
  f(0, 1) += eps * p.x() / (kTwoPi * r2);
  return f;
}

inline Body build_trivial_body(Domain region, Archetype arch) {
  ReferenceChart c{region, [](const Vec2&) { return Mat2::Identity().eval(); }, "U", {}};
  return Body({std::move(c)}, std::move(arch), std::move(region), "trivial");
}

/// Annulus with a 2 pi alpha sector removed and the edges glued: charts on phi in (0, 2 pi) and
/// (-pi, pi), both with frame R(beta phi) diag(1, beta) R(-phi), beta = 1 - alpha.
inline Body build_disclination_body(double r0, double r1, double alpha, Archetype arch, const Tolerances& tol = {}) {
  if (!(r0 >= 0.0 && r1 > r0)) throw Error(ErrorCode::validation, "disclination body needs 0 <= r0 < r1");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw Error(ErrorCode::validation, "disclination body needs alpha in [0, 1)");
  const double beta = 1.0 - alpha;
  auto chart = [&](double begin, std::string name) {
    AnnularSector s{r0, r1, begin, begin + kTwoPi, false};
    return ReferenceChart{s, [beta, begin](const Vec2& p) {
                            return disclination_frame(beta, detail::wrap_from(std::atan2(p.y(), p.x()), begin));
                          },
                          std::move(name), {}};
  };
  std::vector<ReferenceChart> charts{chart(0.0, "U1"), chart(-kPi, "U2")};
  Body body(std::move(charts), std::move(arch), AnnularSector::annulus(r0, r1), "disclination");
  const auto compat = check_overlap_compatibility(body.chart(0), body.chart(1), body.group(), tol.group);
  if (!compat.pass) {
    throw IncompatibleDisclination("rotation by 2 pi alpha (alpha = " + std::to_string(alpha) +
                                       ") is not in the archetype's symmetry group; group distance " +
                                       std::to_string(compat.max_distance),
                                   compat.max_distance);
  }
  return body;
}

/// Single chart on the annulus r in (eps, r1) with P = Id + (eps / 2 pi) e_1 (x) d phi.
inline Body build_dislocation_body(double eps, double r1, Archetype arch) {
  if (!(eps >= 0.0 && r1 > eps)) throw Error(ErrorCode::validation, "dislocation body needs 0 <= eps < r1");
  ReferenceChart c{AnnularSector::annulus(eps, r1), [eps](const Vec2& p) { return dislocation_frame(eps, p); }, "U",
                   {}};
  return Body({std::move(c)}, std::move(arch), AnnularSector::annulus(eps, r1), "dislocation");
}

}  // namespace defectkit

#endif  // DEFECTKIT_BODY_HPP
