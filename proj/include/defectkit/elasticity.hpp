#ifndef DEFECTKIT_ELASTICITY_HPP
#define DEFECTKIT_ELASTICITY_HPP

#include "defectkit/body.hpp"
#include "defectkit/mesh.hpp"

#include <deque>
#include <limits>
#include <optional>
#include <vector>

namespace defectkit {

using Configuration = std::vector<Vec2>;

struct BoundaryCondition {
  std::vector<int> pinned;
  std::vector<Vec2> targets;

  static BoundaryCondition none() { return {}; }

  /// Pins every boundary vertex to map(x).
  template <class F>
  static BoundaryCondition on_boundary(const TriMesh& m, F&& map) {
    BoundaryCondition bc;
    for (std::size_t v = 0; v < m.vertex_count(); ++v) {
      if (!m.boundary[v]) continue;
      bc.pinned.push_back(static_cast<int>(v));
      bc.targets.push_back(map(m.vertices[v]));
    }
    return bc;
  }

  static BoundaryCondition affine_on_boundary(const TriMesh& m, const Mat2& a) {
    return on_boundary(m, [&](const Vec2& x) { return (a * x).eval(); });
  }
};

/// Per-triangle data of the discrete energy sum_T W(D_T X_T^{-1} P_T^{-1}) |det P_T| area_T.
struct EnergyModel {
  struct Element {
    std::array<int, 3> v;
    Mat2 k;  // X^{-1} P^{-1}
    double weight;
  };
  std::vector<Element> elements;
  Archetype archetype;
  std::size_t vertex_count = 0;
};

/// Energy model with an explicit frame per triangle.
inline EnergyModel make_energy_model(const TriMesh& mesh, const Archetype& arch, const std::vector<Mat2>& frames) {
  if (frames.size() != mesh.triangle_count()) throw Error(ErrorCode::validation, "one frame per triangle required");
  EnergyModel model{{}, arch, mesh.vertex_count()};
  model.elements.reserve(mesh.triangle_count());
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    require_frame(frames[t], "triangle frame");
    const Mat2 x = mesh.edge_matrix(t);
    model.elements.push_back(
        {mesh.triangles[t], (x.inverse() * frames[t].inverse()).eval(), std::abs(frames[t].determinant()) * mesh.area(t)});
  }
  return model;
}

/// Energy model of a body on a mesh; P is taken at each barycenter in the assigned chart, or in the
/// lowest-index chart containing the barycenter.
inline EnergyModel make_energy_model(const Body& body, const TriMesh& mesh, const std::vector<int>& charts = {}) {
  std::vector<Mat2> frames;
  frames.reserve(mesh.triangle_count());
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const Vec2 c = mesh.barycenter(t);
    const ReferenceChart& chart = (t < charts.size() && charts[t] >= 0) ? body.chart(charts[t]) : body.chart_at(c);
    frames.push_back(chart.frame_at(c));
  }
  return make_energy_model(mesh, body.archetype(), frames);
}

inline Mat2 element_gradient(const EnergyModel::Element& e, const Configuration& f) {
  Mat2 d;
  d.col(0) = f[e.v[1]] - f[e.v[0]];
  d.col(1) = f[e.v[2]] - f[e.v[0]];
  return d;
}

inline double assemble_energy(const EnergyModel& model, const Configuration& f) {
  if (f.size() != model.vertex_count) throw Error(ErrorCode::validation, "configuration size does not match mesh");
  double sum = 0.0;
  for (const auto& e : model.elements) {
    const double w = model.archetype(element_gradient(e, f) * e.k);
    if (std::isinf(w)) return std::numeric_limits<double>::infinity();
    sum += w * e.weight;
  }
  return sum;
}

inline double assemble_energy(const Body& body, const TriMesh& mesh, const Configuration& f) {
  return assemble_energy(make_energy_model(body, mesh), f);
}

inline std::vector<Vec2> assemble_gradient(const EnergyModel& model, const Configuration& f, double fd_step = 1e-6) {
  if (f.size() != model.vertex_count) throw Error(ErrorCode::validation, "configuration size does not match mesh");
  std::vector<Vec2> g(f.size(), Vec2::Zero());
  for (const auto& e : model.elements) {
    const Mat2 b = element_gradient(e, f) * e.k;
    const Mat2 h = e.weight * grad_archetype(model.archetype, b, fd_step) * e.k.transpose();
    g[e.v[1]] += h.col(0);
    g[e.v[2]] += h.col(1);
    g[e.v[0]] -= h.col(0) + h.col(1);
  }
  return g;
}

inline std::vector<Vec2> assemble_gradient(const Body& body, const TriMesh& mesh, const Configuration& f) {
  return assemble_gradient(make_energy_model(body, mesh), f);
}

inline Configuration identity_configuration(const TriMesh& mesh) { return mesh.vertices; }

struct MinimizeOptions {
  double gtol = 1e-8;
  int max_iter = 5000;
  int memory = 10;
  double armijo = 1e-4;
  int max_backtracks = 60;
};

struct MinimizeResult {
  Configuration positions;
  double energy = 0.0;
  int iterations = 0;
  double gradient_norm = 0.0;
  bool converged = false;
  std::vector<double> energy_history;
};

/// Raised when the line search cannot decrease the energy; carries the last iterate.
class StalledDescent : public Error {
 public:
  StalledDescent(const std::string& what, MinimizeResult last)
      : Error(ErrorCode::stalled_descent, what), last_(std::move(last)) {}
  const MinimizeResult& last() const noexcept { return last_; }

 private:
  MinimizeResult last_;
};

/// L-BFGS over the free vertices with Armijo backtracking.
inline MinimizeResult minimize(const EnergyModel& model, const BoundaryCondition& bc,
                               std::optional<Configuration> start = std::nullopt, const MinimizeOptions& opts = {}) {
  if (!start) throw Error(ErrorCode::validation, "minimize needs a starting configuration");
  if (bc.pinned.size() != bc.targets.size()) throw Error(ErrorCode::validation, "pinned/targets size mismatch");
  Configuration f = *start;
  if (f.size() != model.vertex_count) throw Error(ErrorCode::validation, "configuration size does not match mesh");
  std::vector<bool> fixed(f.size(), false);
  for (std::size_t i = 0; i < bc.pinned.size(); ++i) {
    const int v = bc.pinned[i];
    if (v < 0 || v >= static_cast<int>(f.size())) throw Error(ErrorCode::validation, "pinned vertex out of range");
    fixed[v] = true;
    f[v] = bc.targets[i];
  }
  std::vector<int> free;
  for (std::size_t v = 0; v < f.size(); ++v) {
    if (!fixed[v]) free.push_back(static_cast<int>(v));
  }
  const Eigen::Index n = 2 * static_cast<Eigen::Index>(free.size());

  auto pack_gradient = [&](const std::vector<Vec2>& g) {
    Eigen::VectorXd out(n);
    for (std::size_t i = 0; i < free.size(); ++i) out.segment<2>(2 * i) = g[free[i]];
    return out;
  };
  auto moved = [&](const Configuration& base, const Eigen::VectorXd& step, double t) {
    Configuration out = base;
    for (std::size_t i = 0; i < free.size(); ++i) out[free[i]] += t * step.segment<2>(2 * i);
    return out;
  };

  MinimizeResult res;
  double energy = assemble_energy(model, f);
  if (!std::isfinite(energy)) throw Error(ErrorCode::infeasible_point, "starting configuration has infinite energy");
  Eigen::VectorXd g = pack_gradient(assemble_gradient(model, f));
  res.energy_history.push_back(energy);

  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> memory;  // (s, y)
  int it = 0;
  for (; it < opts.max_iter && n > 0; ++it) {
    if (g.norm() < opts.gtol) break;
    // two-loop recursion
    Eigen::VectorXd q = g;
    std::vector<double> alpha(memory.size());
    for (std::size_t i = memory.size(); i-- > 0;) {
      const auto& [s, y] = memory[i];
      alpha[i] = s.dot(q) / y.dot(s);
      q -= alpha[i] * y;
    }
    if (!memory.empty()) {
      const auto& [s, y] = memory.back();
      q *= s.dot(y) / y.dot(y);
    }
    for (std::size_t i = 0; i < memory.size(); ++i) {
      const auto& [s, y] = memory[i];
      const double beta = y.dot(q) / y.dot(s);
      q += (alpha[i] - beta) * s;
    }
    Eigen::VectorXd dir = -q;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      memory.clear();
      dir = -g;
      slope = -g.squaredNorm();
    }
    double t = 1.0;
    Configuration trial;
    double trial_energy = 0.0;
    Eigen::VectorXd g_new;
    bool accepted = false;
    // below this energy change the Armijo test only sees rounding; fall back to gradient decrease
    const double noise = 1e-14 * std::max(1.0, std::abs(energy));
    for (int k = 0; k < opts.max_backtracks; ++k) {
      trial = moved(f, dir, t);
      trial_energy = assemble_energy(model, trial);
      if (std::isfinite(trial_energy) && trial_energy < energy && trial_energy <= energy + opts.armijo * t * slope) {
        g_new = pack_gradient(assemble_gradient(model, trial));
        accepted = true;
        break;
      }
      if (std::isfinite(trial_energy) && std::abs(trial_energy - energy) <= noise) {
        g_new = pack_gradient(assemble_gradient(model, trial));
        if (g_new.norm() < g.norm()) {
          accepted = true;
          break;
        }
      }
      t *= 0.5;
    }
    if (!accepted) {
      res.positions = f;
      res.energy = energy;
      res.iterations = it;
      res.gradient_norm = g.norm();
      throw StalledDescent("line search failed at iteration " + std::to_string(it) + " (gradient norm " +
                               std::to_string(g.norm()) + ")",
                           res);
    }
    Eigen::VectorXd s = t * dir;
    Eigen::VectorXd y = g_new - g;
    if (s.dot(y) > 1e-14 * s.norm() * y.norm()) {
      memory.emplace_back(std::move(s), std::move(y));
      if (static_cast<int>(memory.size()) > opts.memory) memory.pop_front();
    }
    f = std::move(trial);
    energy = trial_energy;
    g = g_new;
    res.energy_history.push_back(energy);
  }
  res.positions = std::move(f);
  res.energy = energy;
  res.iterations = it;
  res.gradient_norm = n > 0 ? g.norm() : 0.0;
  res.converged = res.gradient_norm < opts.gtol;
  return res;
}

inline MinimizeResult minimize(const Body& body, const TriMesh& mesh, const BoundaryCondition& bc,
                               const MinimizeOptions& opts = {}) {
  return minimize(make_energy_model(body, mesh), bc, identity_configuration(mesh), opts);
}

}  // namespace defectkit

#endif  // DEFECTKIT_ELASTICITY_HPP
