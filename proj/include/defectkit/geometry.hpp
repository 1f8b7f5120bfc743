#ifndef DEFECTKIT_GEOMETRY_HPP
#define DEFECTKIT_GEOMETRY_HPP

#include "defectkit/core.hpp"
#include "defectkit/domain.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace defectkit {

// ---------------------------------------------------------------------------
// Frames and metrics
// ---------------------------------------------------------------------------

/// Throws invalid-frame unless P is finite and orientation preserving.
inline void require_frame(const Mat2& p, const char* where = "frame") {
  const double det = p.determinant();
  if (!p.allFinite() || !(det > 0.0)) {
    throw Error(ErrorCode::invalid_frame,
                std::string(where) + " is singular or orientation-reversing (det = " +
                    std::to_string(det) + ")");
  }
}

/// G = P^T P, the metric induced by a reference frame.
inline Mat2 metric_from_reference(const Mat2& p) {
  require_frame(p, "reference frame");
  Mat2 g = p.transpose() * p;
  g(1, 0) = g(0, 1);
  return g;
}

inline bool is_metric(const Mat2& g, double symmetry_tol = 1e-12) {
  if (!g.allFinite()) return false;
  if (std::abs(g(0, 1) - g(1, 0)) > symmetry_tol * std::max(1.0, g.cwiseAbs().maxCoeff())) {
    return false;
  }
  return g(0, 0) > 0.0 && g.determinant() > 0.0;
}

/// Symmetric positive square root of a metric tensor.
inline Mat2 metric_sqrt(const Mat2& g) {
  // For 2x2 SPD matrices: sqrt(G) = (G + sqrt(det G) I) / sqrt(tr G + 2 sqrt(det G)).
  const double s = std::sqrt(g.determinant());
  const double t = std::sqrt(g.trace() + 2.0 * s);
  return (g + s * Mat2::Identity()) / t;
}

/// A smooth metric on a chart domain.
struct MetricField {
  std::function<Mat2(const Vec2&)> evaluator;
  Domain domain;
  std::string name;

  Mat2 operator()(const Vec2& p) const {
    if (!contains(domain, p)) {
      throw Error(ErrorCode::domain, "metric evaluated outside its domain at (" +
                                         std::to_string(p.x()) + ", " + std::to_string(p.y()) + ")");
    }
    Mat2 g = evaluator(p);
    if (!is_metric(g)) {
      throw Error(ErrorCode::metric_degeneracy, "metric is not symmetric positive-definite");
    }
    return g;
  }

  /// Copy with G scaled by c^2.
  MetricField scaled(double c) const {
    auto base = evaluator;
    return {[base, c](const Vec2& p) { return (c * c) * base(p); }, domain, name};
  }
};

/// Euclidean metric on a domain.
inline MetricField flat_metric(Domain domain) {
  return {[](const Vec2&) { return Mat2::Identity().eval(); }, std::move(domain), "flat"};
}

/// Conformal metric exp(2u) Id for a scalar log-factor u.
inline MetricField conformal_metric(std::function<double(const Vec2&)> log_factor, Domain domain,
                                    std::string name = "conformal") {
  return {[u = std::move(log_factor)](const Vec2& p) { return (std::exp(2.0 * u(p)) * Mat2::Identity()).eval(); },
          std::move(domain), std::move(name)};
}

/// Stereographic round-sphere metric 4/(1+|x|^2)^2 Id, Gaussian curvature 1.
inline MetricField sphere_cap_metric(Domain domain) {
  return {[](const Vec2& p) {
            const double f = 2.0 / (1.0 + p.squaredNorm());
            return (f * f * Mat2::Identity()).eval();
          },
          std::move(domain), "sphere-cap"};
}

// ---------------------------------------------------------------------------
// Christoffel symbols and curvature
// ---------------------------------------------------------------------------

/// Gamma^k_{ij} stored as symbols[k](i, j).
struct Christoffel {
  std::array<Mat2, 2> symbols{Mat2::Zero(), Mat2::Zero()};

  double operator()(int k, int i, int j) const { return symbols[k](i, j); }

  /// Gamma^k_{ij} u^i v^j.
  Vec2 contract(const Vec2& u, const Vec2& v) const {
    return {u.dot(symbols[0] * v), u.dot(symbols[1] * v)};
  }

  /// The matrix M with M(k, j) = Gamma^k_{ij} u^i.
  Mat2 along(const Vec2& u) const {
    Mat2 m;
    m.row(0) = u.transpose() * symbols[0];
    m.row(1) = u.transpose() * symbols[1];
    return m;
  }
};

namespace detail {

inline void require_stencil(const MetricField& g, const Vec2& p, double h) {
  for (const Vec2& q : {Vec2(p + Vec2(h, 0)), Vec2(p - Vec2(h, 0)), Vec2(p + Vec2(0, h)), Vec2(p - Vec2(0, h))}) {
    if (!contains(g.domain, q)) {
      throw Error(ErrorCode::domain, "finite-difference stencil leaves the metric's domain");
    }
  }
}

}  // namespace detail

/// Levi-Civita symbols by central differences of the metric with step h.
inline Christoffel christoffel(const MetricField& g, const Vec2& p, double h = 1e-5) {
  detail::require_stencil(g, p, h);
  const Mat2 ginv = g(p).inverse();
  std::array<Mat2, 2> dg;
  for (int l = 0; l < 2; ++l) {
    const Vec2 e = Vec2::Unit(l) * h;
    dg[l] = (g.evaluator(p + e) - g.evaluator(p - e)) / (2.0 * h);
  }
  Christoffel out;
  for (int k = 0; k < 2; ++k) {
    for (int i = 0; i < 2; ++i) {
      for (int j = i; j < 2; ++j) {
        double sum = 0.0;
        for (int l = 0; l < 2; ++l) {
          sum += ginv(k, l) * (dg[i](l, j) + dg[j](l, i) - dg[l](i, j));
        }
        out.symbols[k](i, j) = out.symbols[k](j, i) = 0.5 * sum;
      }
    }
  }
  return out;
}

/// Gaussian curvature R_{1212} / det G, differencing FD Christoffel symbols with step h.
inline double gaussian_curvature(const MetricField& g, const Vec2& p, double h = 1e-4,
                                 double inner_step = 1e-5) {
  detail::require_stencil(g, p, h + inner_step);
  const Christoffel c = christoffel(g, p, inner_step);
  std::array<Christoffel, 2> dc;
  for (int l = 0; l < 2; ++l) {
    const Vec2 e = Vec2::Unit(l) * h;
    const Christoffel plus = christoffel(g, p + e, inner_step);
    const Christoffel minus = christoffel(g, p - e, inner_step);
    for (int k = 0; k < 2; ++k) dc[l].symbols[k] = (plus.symbols[k] - minus.symbols[k]) / (2.0 * h);
  }
  // R^k_{l i j} = d_i Gamma^k_{jl} - d_j Gamma^k_{il} + Gamma^k_{im} Gamma^m_{jl} - Gamma^k_{jm} Gamma^m_{il}
  auto riemann = [&](int k, int l, int i, int j) {
    double r = dc[i](k, j, l) - dc[j](k, i, l);
    for (int m = 0; m < 2; ++m) r += c(k, i, m) * c(m, j, l) - c(k, j, m) * c(m, i, l);
    return r;
  };
  const Mat2 gp = g(p);
  // R_{1212} = G_{1k} R^k_{2 1 2}
  const double r1212 = gp(0, 0) * riemann(0, 1, 0, 1) + gp(0, 1) * riemann(1, 1, 0, 1);
  return r1212 / gp.determinant();
}

/// Order of convergence of central differences of f at p: log2 of successive Richardson gaps.
/// Returns nullopt when the gaps are at round-off level (polynomial of degree <= 2).
inline std::optional<double> smoothness_order(const std::function<Mat2(const Vec2&)>& f, const Vec2& p,
                                              double h = 1e-2) {
  auto diff = [&](double step) {
    Eigen::Matrix<double, 2, 4> d;
    for (int l = 0; l < 2; ++l) {
      const Vec2 e = Vec2::Unit(l) * step;
      const Mat2 m = (f(p + e) - f(p - e)) / (2.0 * step);
      d.block<2, 2>(0, 2 * l) = m;
    }
    return d;
  };
  const auto d1 = diff(h), d2 = diff(h / 2), d3 = diff(h / 4);
  const double e1 = (d1 - d2).norm(), e2 = (d2 - d3).norm();
  if (e1 < 1e-11 || e2 < 1e-12) return std::nullopt;
  return std::log2(e1 / e2);
}

// ---------------------------------------------------------------------------
// Curves
// ---------------------------------------------------------------------------

/// Piecewise-linear path in chart coordinates. `charts` optionally pins a chart per segment
/// (-1 lets the body choose).
struct Curve {
  std::vector<Vec2> vertices;
  std::vector<int> charts;

  std::size_t segment_count() const { return vertices.empty() ? 0 : vertices.size() - 1; }

  bool closed(double tol = 1e-12) const {
    return vertices.size() >= 3 && (vertices.front() - vertices.back()).norm() <= tol;
  }

  double length() const {
    double len = 0.0;
    for (std::size_t i = 0; i + 1 < vertices.size(); ++i) len += (vertices[i + 1] - vertices[i]).norm();
    return len;
  }

  /// Strictly increasing chord-length parameters in [0, 1].
  std::vector<double> parameters() const {
    std::vector<double> t(vertices.size(), 0.0);
    const double total = length();
    for (std::size_t i = 1; i < vertices.size(); ++i) {
      t[i] = t[i - 1] + (vertices[i] - vertices[i - 1]).norm() / total;
    }
    if (!t.empty()) t.back() = 1.0;
    return t;
  }

  Curve reversed() const {
    Curve c{{vertices.rbegin(), vertices.rend()}, {}};
    if (!charts.empty()) c.charts.assign(charts.rbegin(), charts.rend());
    return c;
  }

  /// Closed polygonal circle, counter-clockwise, starting at `start_angle`.
  static Curve circle(const Vec2& center, double radius, int segments, double start_angle = 0.0) {
    Curve c;
    for (int k = 0; k <= segments; ++k) {
      const double a = start_angle + kTwoPi * (k % segments) / segments;
      c.vertices.push_back(center + radius * Vec2(std::cos(a), std::sin(a)));
    }
    return c;
  }

  static Curve segment(const Vec2& a, const Vec2& b) { return {{a, b}, {}}; }
};

// ---------------------------------------------------------------------------
// Parallel transport
// ---------------------------------------------------------------------------

/// Whether Pi^T G(q) Pi = G(p) within tol (Frobenius).
inline double isometry_defect(const Mat2& transport, const Mat2& g_start, const Mat2& g_end) {
  return (transport.transpose() * g_end * transport - g_start).norm();
}

/// Parallel transport along a curve by fixed-step RK4 on v' + Gamma(gamma', v) = 0.
/// `step` is in chart length units; by default the curve length / tolerances.transport_steps.
inline Mat2 transport_ode(const MetricField& g, const Curve& curve, std::optional<double> step = std::nullopt,
                          double christoffel_step = 1e-5) {
  if (curve.vertices.size() < 2) return Mat2::Identity();
  const double len = curve.length();
  const double h = step.value_or(len / 2000.0);
  for (const Vec2& v : curve.vertices) {
    if (!contains(g.domain, v)) throw Error(ErrorCode::domain, "curve leaves the metric's domain");
  }
  Mat2 v = Mat2::Identity();
  for (std::size_t s = 0; s + 1 < curve.vertices.size(); ++s) {
    const Vec2 a = curve.vertices[s];
    const Vec2 d = curve.vertices[s + 1] - a;
    const double seg_len = d.norm();
    if (seg_len == 0.0) continue;
    const int n = std::max(1, static_cast<int>(std::ceil(seg_len / h)));
    const double dt = 1.0 / n;
    auto rhs = [&](double t, const Mat2& m) -> Mat2 {
      return -christoffel(g, a + t * d, christoffel_step).along(d) * m;
    };
    for (int i = 0; i < n; ++i) {
      const double t = i * dt;
      const Mat2 k1 = rhs(t, v);
      const Mat2 k2 = rhs(t + 0.5 * dt, v + 0.5 * dt * k1);
      const Mat2 k3 = rhs(t + 0.5 * dt, v + 0.5 * dt * k2);
      const Mat2 k4 = rhs(t + dt, v + dt * k3);
      v += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  }
  return v;
}

/// A reference chart: a domain together with its frame field P (the reference map).
struct ReferenceChart {
  Domain domain;
  std::function<Mat2(const Vec2&)> frame;
  std::string name;
  /// Optional declared volume density; must equal det P.
  std::function<double(const Vec2&)> volume_density;

  bool contains(const Vec2& p) const { return defectkit::contains(domain, p); }

  Mat2 frame_at(const Vec2& p) const {
    if (!contains(p)) {
      throw Error(ErrorCode::domain, "point (" + std::to_string(p.x()) + ", " + std::to_string(p.y()) +
                                         ") is outside chart '" + name + "'");
    }
    return frame(p);
  }
};

/// Pi = P(q)^{-1} P(p): the flat material transport inside a single chart.
inline Mat2 transport_chart(const ReferenceChart& chart, const Vec2& p, const Vec2& q) {
  const Mat2 pp = chart.frame_at(p);
  const Mat2 pq = chart.frame_at(q);
  require_frame(pp, "frame at start point");
  require_frame(pq, "frame at end point");
  return pq.inverse() * pp;
}

/// Ordered composition; the last part acts last (leftmost).
inline Mat2 transport_concat(std::span<const Mat2> parts) {
  if (parts.empty()) throw Error(ErrorCode::validation, "transport_concat needs at least one part");
  Mat2 out = Mat2::Identity();
  for (const Mat2& part : parts) out = part * out;
  return out;
}

inline Mat2 transport_concat(std::initializer_list<Mat2> parts) {
  return transport_concat(std::span<const Mat2>(parts.begin(), parts.size()));
}

}  // namespace defectkit

#endif  // DEFECTKIT_GEOMETRY_HPP
