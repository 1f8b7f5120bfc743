#ifndef DEFECTKIT_DEFECTS_HPP
#define DEFECTKIT_DEFECTS_HPP

#include "defectkit/body.hpp"

#include <vector>

namespace defectkit {

/// A straight piece of a curve assigned to one chart.
struct CurvePiece {
  Vec2 a, b;
  int chart = -1;
};

namespace detail {

inline void split_into_charts(const Body& body, const Vec2& a, const Vec2& b, int depth, std::vector<CurvePiece>& out) {
  const auto& charts = body.charts();
  for (std::size_t i = 0; i < charts.size(); ++i) {
    if (contains_segment(charts[i].domain, a, b)) {
      out.push_back({a, b, static_cast<int>(i)});
      return;
    }
  }
  if (depth >= 40 || (b - a).norm() < 1e-12) {
    throw Error(ErrorCode::chart_cover, "segment near (" + std::to_string(a.x()) + ", " + std::to_string(a.y()) +
                                            ") is not contained in any chart");
  }
  const Vec2 m = 0.5 * (a + b);
  split_into_charts(body, a, m, depth + 1, out);
  split_into_charts(body, m, b, depth + 1, out);
}

}  // namespace detail

/// Splits every segment into pieces that each lie in one chart. Segments with a pinned chart
/// (curve.charts[s] >= 0) must lie in it; others are bisected until the lowest-index chart
/// containing each piece is found.
inline std::vector<CurvePiece> segment_curve(const Body& body, const Curve& curve) {
  std::vector<CurvePiece> out;
  for (std::size_t s = 0; s + 1 < curve.vertices.size(); ++s) {
    const Vec2& a = curve.vertices[s];
    const Vec2& b = curve.vertices[s + 1];
    if (s < curve.charts.size() && curve.charts[s] >= 0) {
      const int c = curve.charts[s];
      if (c >= static_cast<int>(body.charts().size()) || !contains_segment(body.chart(c).domain, a, b)) {
        throw Error(ErrorCode::chart_cover, "segment " + std::to_string(s) + " is not inside its pinned chart");
      }
      out.push_back({a, b, c});
      continue;
    }
    detail::split_into_charts(body, a, b, 0, out);
  }
  return out;
}

inline Mat2 transport_along(const Body& body, const std::vector<CurvePiece>& pieces) {
  std::vector<Mat2> parts;
  parts.reserve(pieces.size());
  for (const auto& piece : pieces) parts.push_back(transport_chart(body.chart(piece.chart), piece.a, piece.b));
  if (parts.empty()) return Mat2::Identity();
  return transport_concat(parts);
}

struct DisclinationContent {
  Mat2 matrix = Mat2::Identity();      // c_gamma in chart coordinates at the base point
  Vec2 base_point = Vec2::Zero();
  int base_chart = -1;
  Mat2 conjugated = Mat2::Identity();  // P(p) c_gamma P(p)^{-1}
  double angle = 0.0;                  // rotation angle of the conjugated matrix
  double distance_from_identity = 0.0;
};

inline void require_closed(const Curve& curve) {
  if (!curve.closed()) throw Error(ErrorCode::validation, "loop must be closed (first vertex = last vertex)");
}

/// Holonomy of the material connection around a closed loop, composed from chart transports.
/// The conjugated form uses `base_chart` if given, else the chart of the first piece.
inline DisclinationContent disclination_content(const Body& body, const Curve& loop, int base_chart = -1) {
  require_closed(loop);
  const auto pieces = segment_curve(body, loop);
  DisclinationContent out;
  out.base_point = loop.vertices.front();
  out.matrix = transport_along(body, pieces);
  out.base_chart = base_chart >= 0 ? base_chart : pieces.front().chart;
  const Mat2 p = body.chart(out.base_chart).frame_at(out.base_point);
  out.conjugated = p * out.matrix * p.inverse();
  out.angle = rotation_angle(out.conjugated);
  out.distance_from_identity = (out.conjugated - Mat2::Identity()).norm();
  return out;
}

/// The same holonomy obtained by integrating the Levi-Civita transport of the induced metric.
inline DisclinationContent disclination_content_ode(const Body& body, const Curve& loop, const Tolerances& tol = {},
                                                    int base_chart = -1) {
  require_closed(loop);
  const MetricField g = induced_metric(body);
  DisclinationContent out;
  out.base_point = loop.vertices.front();
  out.matrix = transport_ode(g, loop, loop.length() / tol.transport_steps, tol.christoffel_step);
  out.base_chart = base_chart >= 0 ? base_chart : body.chart_index(out.base_point);
  const Mat2 p = body.chart(out.base_chart).frame_at(out.base_point);
  out.conjugated = p * out.matrix * p.inverse();
  out.angle = rotation_angle(out.conjugated);
  out.distance_from_identity = (out.conjugated - Mat2::Identity()).norm();
  return out;
}

struct BurgersVector {
  Vec2 vector = Vec2::Zero();
  Curve loop;
  DisclinationContent content;
  bool circuit_dependent = false;  // set when measured despite non-trivial holonomy
};

/// b = int_0^1 (Pi_{0 -> t})^{-1} gamma'(t) dt, with 5-node Gauss-Legendre on `panels` sub-panels
/// of every chart piece.
inline BurgersVector burgers_vector(const Body& body, const Curve& loop, const Tolerances& tol = {},
                                    bool allow_disclination = false, int panels = 4) {
  BurgersVector out;
  out.loop = loop;
  out.content = disclination_content(body, loop);
  if (out.content.distance_from_identity >= tol.identity) {
    if (!allow_disclination) {
      throw Error(ErrorCode::disclination_present,
                  "loop has non-trivial disclination content (distance from identity " +
                      std::to_string(out.content.distance_from_identity) + "); the Burgers vector is circuit-dependent");
    }
    out.circuit_dependent = true;
  }
  const auto pieces = segment_curve(body, loop);
  Mat2 back = Mat2::Identity();  // (Pi_{0 -> piece start})^{-1}
  for (const auto& piece : pieces) {
    const ReferenceChart& c = body.chart(piece.chart);
    const Mat2 pa_inv = c.frame_at(piece.a).inverse();
    const Vec2 d = piece.b - piece.a;
    const Vec2 integral = integrate_unit([&](double t) -> Vec2 { return c.frame(piece.a + t * d) * d; }, panels);
    out.vector += back * pa_inv * integral;
    back = back * transport_chart(c, piece.a, piece.b).inverse();
  }
  return out;
}

struct GroupMembership {
  NearestElement nearest;
  double distance = 0.0;
  bool pass = false;
  DisclinationContent content;
};

/// Whether the conjugated disclination content lies in the archetype's symmetry group.
inline GroupMembership verify_content_in_group(const Body& body, const Curve& loop, const Tolerances& tol = {},
                                               int base_chart = -1) {
  GroupMembership out;
  out.content = disclination_content(body, loop, base_chart);
  out.nearest = nearest_element(body.group(), out.content.conjugated);
  out.distance = out.nearest.distance;
  out.pass = out.distance < tol.group;
  return out;
}

/// Counter-clockwise circle around the origin, the standard loop around a core or hole.
inline Curve core_loop(double radius, int segments = 256, double start_angle = 0.0) {
  return Curve::circle(Vec2::Zero(), radius, segments, start_angle);
}

}  // namespace defectkit

#endif  // DEFECTKIT_DEFECTS_HPP
