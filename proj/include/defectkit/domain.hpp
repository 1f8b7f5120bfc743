#ifndef DEFECTKIT_DOMAIN_HPP
#define DEFECTKIT_DOMAIN_HPP

#include "defectkit/core.hpp"

#include <algorithm>
#include <limits>
#include <optional>
#include <variant>
#include <vector>

namespace defectkit {

/// Axis-aligned open rectangle in chart coordinates.
struct Rectangle {
  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;
};

/// Open annular sector {r in (r_inner, r_outer), phi in (phi_begin, phi_end)} around the origin.
/// With `full_circle` set there is no cut ray and the angular bounds are ignored.
struct AnnularSector {
  double r_inner = 0.0, r_outer = 1.0;
  double phi_begin = 0.0, phi_end = kTwoPi;
  bool full_circle = false;

  static AnnularSector annulus(double r_inner, double r_outer) {
    return {r_inner, r_outer, 0.0, kTwoPi, true};
  }
};

/// Star of a mesh vertex (minus the vertex), optionally cut open along one edge.
/// Each cell carries the constant reference frame of a piecewise-flat chart.
struct TriangleFan {
  std::vector<std::array<Vec2, 3>> triangles;
  std::vector<int> triangle_ids;
  std::vector<Mat2> frames;
  std::vector<std::array<int, 2>> glued;  // local cell pairs sharing a glued edge
  std::vector<std::array<Vec2, 2>> glued_edges;
  Vec2 center = Vec2::Zero();
  std::optional<std::array<Vec2, 2>> cut;
  Vec2 box_min = Vec2::Zero(), box_max = Vec2::Zero();

  void update_box() {
    box_min = Vec2::Constant(std::numeric_limits<double>::infinity());
    box_max = -box_min;
    for (const auto& t : triangles) {
      for (const auto& v : t) {
        box_min = box_min.cwiseMin(v);
        box_max = box_max.cwiseMax(v);
      }
    }
  }

  /// Local index of a cell containing p (closed triangles), or -1.
  int locate(const Vec2& p, double eps = 1e-12) const {
    if ((p.array() < box_min.array() - eps).any() || (p.array() > box_max.array() + eps).any()) {
      return -1;
    }
    for (std::size_t i = 0; i < triangles.size(); ++i) {
      const auto& t = triangles[i];
      const double area = cross(t[1] - t[0], t[2] - t[0]);
      const double scale = eps * std::abs(area);
      if (cross(t[1] - t[0], p - t[0]) >= -scale && cross(t[2] - t[1], p - t[1]) >= -scale &&
          cross(t[0] - t[2], p - t[2]) >= -scale) {
        return static_cast<int>(i);
      }
    }
    return -1;
  }
};

using Domain = std::variant<Rectangle, AnnularSector, TriangleFan>;

namespace detail {

inline double wrap_from(double angle, double begin) {
  double a = std::fmod(angle - begin, kTwoPi);
  if (a < 0) a += kTwoPi;
  return begin + a;
}

inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  const double len2 = d.squaredNorm();
  const double t = len2 > 0 ? std::clamp((p - a).dot(d) / len2, 0.0, 1.0) : 0.0;
  return (a + t * d - p).norm();
}

inline bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const double d1 = cross(b - a, c - a), d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c), d4 = cross(d - c, b - c);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
    return true;
  }
  const double eps = 1e-14 * std::max({1.0, (b - a).norm(), (d - c).norm()});
  return point_segment_distance(c, a, b) < eps || point_segment_distance(d, a, b) < eps ||
         point_segment_distance(a, c, d) < eps || point_segment_distance(b, c, d) < eps;
}

}  // namespace detail

/// Branch angle of p in the sector's angular range, or nullopt when p is outside the sector.
inline std::optional<double> sector_angle(const AnnularSector& s, const Vec2& p) {
  const double r = p.norm();
  if (!(r > s.r_inner && r < s.r_outer) || r == 0.0) return std::nullopt;
  const double raw = std::atan2(p.y(), p.x());
  if (s.full_circle) return detail::wrap_from(raw, s.phi_begin);
  const double phi = detail::wrap_from(raw, s.phi_begin);
  if (phi > s.phi_begin && phi < s.phi_end) return phi;
  return std::nullopt;
}

inline bool contains(const Rectangle& r, const Vec2& p) {
  return p.x() > r.x_min && p.x() < r.x_max && p.y() > r.y_min && p.y() < r.y_max;
}

inline bool contains(const AnnularSector& s, const Vec2& p) { return sector_angle(s, p).has_value(); }

inline bool contains(const TriangleFan& f, const Vec2& p) {
  if ((p - f.center).norm() <= 1e-12) return false;
  if (f.cut && detail::point_segment_distance(p, (*f.cut)[0], (*f.cut)[1]) <= 1e-13) return false;
  return f.locate(p) >= 0;
}

inline bool contains(const Domain& d, const Vec2& p) {
  return std::visit([&](const auto& x) { return contains(x, p); }, d);
}

/// Whether the whole closed segment [a, b] lies in the domain.
inline bool contains_segment(const Rectangle& r, const Vec2& a, const Vec2& b) {
  return contains(r, a) && contains(r, b);
}

inline bool contains_segment(const AnnularSector& s, const Vec2& a, const Vec2& b) {
  if (!contains(s, a) || !contains(s, b)) return false;
  if (detail::point_segment_distance(Vec2::Zero(), a, b) <= s.r_inner) return false;
  if (s.full_circle) return true;
  const double sweep = std::atan2(cross(a, b), a.dot(b));
  const double start = *sector_angle(s, a);
  const double end = start + sweep;
  return end > s.phi_begin && end < s.phi_end;
}

inline bool contains_segment(const TriangleFan& f, const Vec2& a, const Vec2& b) {
  if (!contains(f, a) || !contains(f, b)) return false;
  if (detail::point_segment_distance(f.center, a, b) <= 1e-12) return false;
  if (f.cut && detail::segments_intersect(a, b, (*f.cut)[0], (*f.cut)[1])) return false;
  constexpr int samples = 64;
  for (int k = 1; k < samples; ++k) {
    if (f.locate(a + (b - a) * (static_cast<double>(k) / samples)) < 0) return false;
  }
  return true;
}

inline bool contains_segment(const Domain& d, const Vec2& a, const Vec2& b) {
  return std::visit([&](const auto& x) { return contains_segment(x, a, b); }, d);
}

inline std::pair<Vec2, Vec2> bounding_box(const Rectangle& r) {
  return {Vec2(r.x_min, r.y_min), Vec2(r.x_max, r.y_max)};
}
inline std::pair<Vec2, Vec2> bounding_box(const AnnularSector& s) {
  return {Vec2::Constant(-s.r_outer), Vec2::Constant(s.r_outer)};
}
inline std::pair<Vec2, Vec2> bounding_box(const TriangleFan& f) { return {f.box_min, f.box_max}; }
inline std::pair<Vec2, Vec2> bounding_box(const Domain& d) {
  return std::visit([](const auto& x) { return bounding_box(x); }, d);
}

/// Cell-centred grid of interior sample points. `inset` keeps samples that far from the boundary
/// (in the rectangle's coordinates, or radially/angularly scaled for sectors).
inline std::vector<Vec2> sample_grid(const Rectangle& r, int count, double inset = 0.0) {
  std::vector<Vec2> out;
  const double x0 = r.x_min + inset, x1 = r.x_max - inset;
  const double y0 = r.y_min + inset, y1 = r.y_max - inset;
  for (int j = 0; j < count; ++j) {
    for (int i = 0; i < count; ++i) {
      out.emplace_back(x0 + (i + 0.5) * (x1 - x0) / count, y0 + (j + 0.5) * (y1 - y0) / count);
    }
  }
  return out;
}

inline std::vector<Vec2> sample_grid(const AnnularSector& s, int count, double inset = 0.0) {
  std::vector<Vec2> out;
  const double r0 = s.r_inner + inset, r1 = s.r_outer - inset;
  const double span = s.full_circle ? kTwoPi : (s.phi_end - s.phi_begin);
  for (int j = 0; j < count; ++j) {
    const double phi = s.phi_begin + (j + 0.5) * span / count;
    for (int i = 0; i < count; ++i) {
      const double r = r0 + (i + 0.5) * (r1 - r0) / count;
      out.emplace_back(r * std::cos(phi), r * std::sin(phi));
    }
  }
  return out;
}

inline std::vector<Vec2> sample_grid(const TriangleFan& f, int count, double /*inset*/ = 0.0) {
  std::vector<Vec2> out;
  const int per_cell = std::max(1, count * count / std::max<int>(1, static_cast<int>(f.triangles.size())));
  for (const auto& t : f.triangles) {
    out.push_back((t[0] + t[1] + t[2]) / 3.0);
    for (int k = 1; k < per_cell; ++k) {
      const double u = (k % 7 + 0.5) / 8.0, v = (k % 5 + 0.5) / 6.0 * (1 - u);
      out.push_back(t[0] + u * (t[1] - t[0]) + v * (t[2] - t[0]));
    }
  }
  return out;
}

inline std::vector<Vec2> sample_grid(const Domain& d, int count, double inset = 0.0) {
  return std::visit([&](const auto& x) { return sample_grid(x, count, inset); }, d);
}

}  // namespace defectkit

#endif  // DEFECTKIT_DOMAIN_HPP
