#ifndef DEFECTKIT_MESH_HPP
#define DEFECTKIT_MESH_HPP

#include "defectkit/domain.hpp"

#include <map>
#include <utility>
#include <vector>

namespace defectkit {

/// Triangle mesh in chart coordinates. Triangles are counter-clockwise.
struct TriMesh {
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<bool> boundary;
  /// neighbors[t][k]: triangle across the edge opposite local vertex k, or -1.
  std::vector<std::array<int, 3>> neighbors;

  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t triangle_count() const { return triangles.size(); }

  Vec2 barycenter(std::size_t t) const {
    const auto& tri = triangles[t];
    return (vertices[tri[0]] + vertices[tri[1]] + vertices[tri[2]]) / 3.0;
  }

  double area(std::size_t t) const {
    const auto& tri = triangles[t];
    return 0.5 * cross(vertices[tri[1]] - vertices[tri[0]], vertices[tri[2]] - vertices[tri[0]]);
  }

  /// Edge matrix X = [x1 - x0, x2 - x0].
  Mat2 edge_matrix(std::size_t t) const {
    const auto& tri = triangles[t];
    Mat2 x;
    x.col(0) = vertices[tri[1]] - vertices[tri[0]];
    x.col(1) = vertices[tri[2]] - vertices[tri[0]];
    return x;
  }

  double max_edge_length() const {
    double h = 0.0;
    for (const auto& tri : triangles) {
      for (int k = 0; k < 3; ++k) h = std::max(h, (vertices[tri[(k + 1) % 3]] - vertices[tri[k]]).norm());
    }
    return h;
  }

  /// Local index of vertex v in triangle t, or -1.
  int local_index(std::size_t t, int v) const {
    for (int k = 0; k < 3; ++k) {
      if (triangles[t][k] == v) return k;
    }
    return -1;
  }

  /// Fills `neighbors` and `boundary` from the triangle list.
  void build_topology() {
    std::map<std::pair<int, int>, std::pair<int, int>> edges;  // sorted edge -> (triangle, local k)
    neighbors.assign(triangles.size(), {-1, -1, -1});
    boundary.assign(vertices.size(), false);
    for (std::size_t t = 0; t < triangles.size(); ++t) {
      for (int k = 0; k < 3; ++k) {
        const int a = triangles[t][(k + 1) % 3], b = triangles[t][(k + 2) % 3];
        const auto key = std::minmax(a, b);
        const auto it = edges.find(key);
        if (it == edges.end()) {
          edges.emplace(key, std::pair<int, int>(static_cast<int>(t), k));
        } else {
          if (it->second.first < 0) throw Error(ErrorCode::mesh, "edge shared by more than two triangles");
          neighbors[t][k] = it->second.first;
          neighbors[it->second.first][it->second.second] = static_cast<int>(t);
          it->second.first = -1;
        }
      }
    }
    for (std::size_t t = 0; t < triangles.size(); ++t) {
      for (int k = 0; k < 3; ++k) {
        if (neighbors[t][k] < 0) {
          boundary[triangles[t][(k + 1) % 3]] = true;
          boundary[triangles[t][(k + 2) % 3]] = true;
        }
      }
    }
  }

  /// Throws mesh unless every triangle is positively oriented with area above 1e-12.
  void validate() const {
    for (std::size_t t = 0; t < triangles.size(); ++t) {
      for (int v : triangles[t]) {
        if (v < 0 || v >= static_cast<int>(vertices.size())) throw Error(ErrorCode::mesh, "vertex index out of range");
      }
      if (!(area(t) > 1e-12)) {
        throw Error(ErrorCode::mesh, "triangle " + std::to_string(t) + " is degenerate or clockwise");
      }
    }
  }

  /// Counter-clockwise triangles around vertex v. For interior vertices the order is cyclic
  /// starting anywhere; for boundary vertices it runs from one boundary edge to the other.
  std::vector<int> fan(int v, const std::vector<std::vector<int>>& incident) const {
    const auto& around = incident[v];
    if (around.empty()) return {};
    // next CCW triangle shares edge (v, c) where c is the third vertex after v in t.
    auto next = [&](int t) {
      const int k = local_index(t, v);
      return neighbors[t][(k + 1) % 3];  // edge opposite vertex k+1 is (v, vertex k+2)
    };
    auto prev = [&](int t) {
      const int k = local_index(t, v);
      return neighbors[t][(k + 2) % 3];
    };
    int start = around.front();
    if (boundary[v]) {
      for (int guard = 0; guard < static_cast<int>(around.size()) && prev(start) >= 0; ++guard) start = prev(start);
    }
    std::vector<int> out{start};
    for (int t = next(start); t >= 0 && t != start; t = next(t)) {
      out.push_back(t);
      if (out.size() > around.size()) throw Error(ErrorCode::mesh, "vertex fan is not a disk or half-disk");
    }
    return out;
  }

  std::vector<std::vector<int>> incident_triangles() const {
    std::vector<std::vector<int>> out(vertices.size());
    for (std::size_t t = 0; t < triangles.size(); ++t) {
      for (int v : triangles[t]) out[v].push_back(static_cast<int>(t));
    }
    return out;
  }
};

/// Structured n x n grid on a rectangle, each cell split along its (lower-left, upper-right) diagonal.
inline TriMesh build_mesh(const Rectangle& r, int n) {
  if (n < 2) throw Error(ErrorCode::mesh, "mesh resolution must be >= 2");
  const double hx = (r.x_max - r.x_min) / n, hy = (r.y_max - r.y_min) / n;
  if (!(hx * hy > 2e-12)) throw Error(ErrorCode::mesh, "rectangle too thin for resolution " + std::to_string(n));
  TriMesh m;
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) m.vertices.emplace_back(r.x_min + i * hx, r.y_min + j * hy);
  }
  auto id = [n](int i, int j) { return j * (n + 1) + i; };
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      m.triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      m.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  m.build_topology();
  m.validate();
  return m;
}

/// n radial x n angular cells on an annulus or annular sector. Vertices lie on the bounding
/// circles, so triangles are inscribed.
inline TriMesh build_mesh(const AnnularSector& s, int n) {
  if (n < 2) throw Error(ErrorCode::mesh, "mesh resolution must be >= 2");
  if (s.full_circle && n < 3) throw Error(ErrorCode::mesh, "a full annulus needs resolution >= 3");
  const double span = s.full_circle ? kTwoPi : s.phi_end - s.phi_begin;
  const int rings = n + 1;
  const int spokes = s.full_circle ? n : n + 1;
  TriMesh m;
  for (int j = 0; j < spokes; ++j) {
    const double phi = s.phi_begin + span * j / n;
    for (int i = 0; i < rings; ++i) {
      const double r = s.r_inner + (s.r_outer - s.r_inner) * i / n;
      m.vertices.emplace_back(r * std::cos(phi), r * std::sin(phi));
    }
  }
  auto id = [&](int i, int j) { return (j % spokes) * rings + i; };
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      m.triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      m.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  m.build_topology();
  try {
    m.validate();
  } catch (const Error&) {
    throw Error(ErrorCode::mesh, "annular domain too thin for resolution " + std::to_string(n));
  }
  return m;
}

inline TriMesh build_mesh(const Domain& d, int n) {
  if (const auto* r = std::get_if<Rectangle>(&d)) return build_mesh(*r, n);
  if (const auto* s = std::get_if<AnnularSector>(&d)) return build_mesh(*s, n);
  throw Error(ErrorCode::mesh, "meshing is only available for rectangles and annular sectors");
}

}  // namespace defectkit

#endif  // DEFECTKIT_MESH_HPP
