#ifndef DEFECTKIT_ARCHETYPE_HPP
#define DEFECTKIT_ARCHETYPE_HPP

#include "defectkit/core.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace defectkit {

enum class ArchetypeKind { isotropic_neo_hookean, isotropic_distance, n_fold_discrete, custom };

inline const char* to_string(ArchetypeKind kind) {
  switch (kind) {
    case ArchetypeKind::isotropic_neo_hookean: return "isotropic-neo-hookean";
    case ArchetypeKind::isotropic_distance: return "isotropic-distance";
    case ArchetypeKind::n_fold_discrete: return "n-fold-discrete";
    case ArchetypeKind::custom: return "custom";
  }
  return "unknown";
}

/// Rotational symmetry group of an archetype: all of SO(2), or the cyclic group of order m.
struct SymmetryGroup {
  enum class Kind { continuous_so2, discrete_cyclic };
  Kind kind = Kind::continuous_so2;
  int order = 0;

  static SymmetryGroup so2() { return {Kind::continuous_so2, 0}; }
  static SymmetryGroup cyclic(int m) { return {Kind::discrete_cyclic, m}; }

  bool discrete() const { return kind == Kind::discrete_cyclic; }

  std::vector<double> angles() const {
    std::vector<double> out;
    for (int k = 0; k < order; ++k) out.push_back(kTwoPi * k / order);
    return out;
  }

  std::vector<Mat2> elements() const {
    std::vector<Mat2> out;
    for (double a : angles()) out.push_back(rotation(a));
    return out;
  }

  bool operator==(const SymmetryGroup&) const = default;
};

/// Energy density W on 2x2 matrices.
class Archetype {
 public:
  using Density = std::function<double(const Mat2&)>;
  using Gradient = std::function<Mat2(const Mat2&)>;

  /// ||B||^2 + (det B - 1)^2
  static Archetype neo_hookean() { return Archetype(ArchetypeKind::isotropic_neo_hookean, 0); }
  /// dist^2(B, SO(2))
  static Archetype distance() { return Archetype(ArchetypeKind::isotropic_distance, 0); }
  /// sum_k (|B v_k| - 1)^2 + (det B - 1)^2 with v_k = (cos k pi/n, sin k pi/n), k < n.
  static Archetype n_fold(int n) {
    if (n < 1) throw Error(ErrorCode::validation, "n-fold archetype needs n >= 1");
    return Archetype(ArchetypeKind::n_fold_discrete, n);
  }
  /// User density; the gradient falls back to finite differences when omitted.
  static Archetype custom(std::string name, Density density, Gradient gradient = {},
                         std::optional<SymmetryGroup> group = std::nullopt) {
    Archetype a(ArchetypeKind::custom, 0);
    a.name_ = std::move(name);
    a.density_ = std::move(density);
    a.gradient_ = std::move(gradient);
    a.declared_group_ = group;
    return a;
  }

  ArchetypeKind kind() const { return kind_; }
  int n() const { return n_; }
  const std::string& name() const { return name_; }
  bool isotropic() const {
    return kind_ == ArchetypeKind::isotropic_neo_hookean || kind_ == ArchetypeKind::isotropic_distance;
  }
  const std::optional<SymmetryGroup>& declared_group() const { return declared_group_; }

  double operator()(const Mat2& b) const {
    switch (kind_) {
      case ArchetypeKind::isotropic_neo_hookean: {
        const double j = b.determinant() - 1.0;
        return b.squaredNorm() + j * j;
      }
      case ArchetypeKind::isotropic_distance: {
        // max_R tr(R^T B) = |(b00 + b11, b10 - b01)|
        const double u = b(0, 0) + b(1, 1), w = b(1, 0) - b(0, 1);
        return std::max(0.0, b.squaredNorm() + 2.0 - 2.0 * std::hypot(u, w));
      }
      case ArchetypeKind::n_fold_discrete: {
        double sum = 0.0;
        for (int k = 0; k < n_; ++k) {
          const double a = kPi * k / n_;
          const double s = (b * Vec2(std::cos(a), std::sin(a))).norm() - 1.0;
          sum += s * s;
        }
        const double j = b.determinant() - 1.0;
        return sum + j * j;
      }
      case ArchetypeKind::custom: return density_(b);
    }
    return std::numeric_limits<double>::quiet_NaN();
  }

  /// Closed-form gradient for the built-in kinds, or the user's gradient when supplied.
  std::optional<Mat2> analytic_gradient(const Mat2& b) const {
    switch (kind_) {
      case ArchetypeKind::isotropic_neo_hookean:
        return (2.0 * b + 2.0 * (b.determinant() - 1.0) * cofactor(b)).eval();
      case ArchetypeKind::isotropic_distance: {
        const double u = b(0, 0) + b(1, 1), w = b(1, 0) - b(0, 1);
        const double s = std::hypot(u, w);
        if (s == 0.0) return (2.0 * b - 2.0 * Mat2::Identity()).eval();
        Mat2 nearest;
        nearest << u / s, -w / s, w / s, u / s;
        return (2.0 * (b - nearest)).eval();
      }
      case ArchetypeKind::n_fold_discrete: {
        Mat2 g = 2.0 * (b.determinant() - 1.0) * cofactor(b);
        for (int k = 0; k < n_; ++k) {
          const double a = kPi * k / n_;
          const Vec2 v(std::cos(a), std::sin(a));
          const Vec2 bv = b * v;
          const double len = bv.norm();
          if (len == 0.0) continue;
          g += 2.0 * (len - 1.0) / len * bv * v.transpose();
        }
        return g;
      }
      case ArchetypeKind::custom:
        if (gradient_) return gradient_(b);
        return std::nullopt;
    }
    return std::nullopt;
  }

 private:
  Archetype(ArchetypeKind kind, int n) : kind_(kind), n_(n), name_(to_string(kind)) {}

  ArchetypeKind kind_;
  int n_ = 0;
  std::string name_;
  Density density_;
  Gradient gradient_;
  std::optional<SymmetryGroup> declared_group_;
};

inline double eval_archetype(const Archetype& a, const Mat2& b) { return a(b); }

/// Central-difference gradient of W with step h.
inline Mat2 fd_gradient(const Archetype& a, const Mat2& b, double h = 1e-6) {
  Mat2 g;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      Mat2 plus = b, minus = b;
      plus(i, j) += h;
      minus(i, j) -= h;
      const double wp = a(plus), wm = a(minus);
      if (!std::isfinite(wp) || !std::isfinite(wm)) {
        throw Error(ErrorCode::infeasible_point, "archetype is not finite in the difference stencil");
      }
      g(i, j) = (wp - wm) / (2.0 * h);
    }
  }
  return g;
}

inline Mat2 grad_archetype(const Archetype& a, const Mat2& b, double h = 1e-6) {
  if (!std::isfinite(a(b))) throw Error(ErrorCode::infeasible_point, "archetype is infinite at B");
  if (auto g = a.analytic_gradient(b)) return *g;
  return fd_gradient(a, b, h);
}

inline constexpr std::uint64_t kDefaultSampleSeed = 20240229;

/// The fixed probe set Id + 0.3 N (N standard normal entries) used to test symmetries.
inline std::vector<Mat2> default_symmetry_samples(std::uint64_t seed = kDefaultSampleSeed, int count = 64) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Mat2> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    Mat2 n;
    n << normal(rng), normal(rng), normal(rng), normal(rng);
    out.push_back(Mat2::Identity() + 0.3 * n);
  }
  return out;
}

/// max_B |W(B g) - W(B)| over the samples.
inline double symmetry_distance(const Archetype& a, const Mat2& g, std::span<const Mat2> samples) {
  if (samples.empty()) throw Error(ErrorCode::validation, "symmetry_distance needs samples");
  double worst = 0.0;
  for (const Mat2& b : samples) worst = std::max(worst, std::abs(a(b * g) - a(b)));
  return worst;
}

/// Scans R(2 pi j / resolution) and returns SO(2) if every angle is a symmetry, otherwise the
/// cyclic group generated by the passing angles.
inline SymmetryGroup detect_group(const Archetype& a, int resolution = 720, double tol = 1e-8,
                                  std::span<const Mat2> samples = {}) {
  if (resolution < 360) throw Error(ErrorCode::validation, "detect_group needs resolution >= 360");
  std::vector<Mat2> owned;
  if (samples.empty()) {
    owned = default_symmetry_samples();
    samples = owned;
  }
  std::vector<int> passing;
  for (int j = 0; j < resolution; ++j) {
    if (symmetry_distance(a, rotation(kTwoPi * j / resolution), samples) < tol) passing.push_back(j);
  }
  if (static_cast<int>(passing.size()) == resolution) return SymmetryGroup::so2();
  const int m = static_cast<int>(passing.size());
  if (m == 0 || passing.front() != 0) {
    throw Error(ErrorCode::inconsistent_group, "identity failed the symmetry test; tolerance too tight");
  }
  if (resolution % m != 0) {
    throw Error(ErrorCode::inconsistent_group, "passing angles are not a cyclic subgroup of the scan grid");
  }
  const int stride = resolution / m;
  for (int k = 0; k < m; ++k) {
    if (passing[k] != k * stride) {
      throw Error(ErrorCode::inconsistent_group,
                  "passing angles are not closed under composition; tolerance too loose");
    }
  }
  return SymmetryGroup::cyclic(m);
}

/// The group of a built-in archetype in closed form; custom archetypes use their declared group
/// or are scanned.
inline SymmetryGroup symmetry_group(const Archetype& a) {
  switch (a.kind()) {
    case ArchetypeKind::isotropic_neo_hookean:
    case ArchetypeKind::isotropic_distance: return SymmetryGroup::so2();
    case ArchetypeKind::n_fold_discrete: return SymmetryGroup::cyclic(2 * a.n());
    case ArchetypeKind::custom:
      if (a.declared_group()) return *a.declared_group();
      return detect_group(a);
  }
  return SymmetryGroup::so2();
}

struct NearestElement {
  Mat2 element = Mat2::Identity();
  double angle = 0.0;
  double distance = 0.0;
};

/// Closest group element to m in the Frobenius norm.
inline NearestElement nearest_element(const SymmetryGroup& group, const Mat2& m) {
  NearestElement best;
  if (!group.discrete()) {
    best.angle = rotation_angle(m);
    best.element = rotation(best.angle);
    best.distance = (m - best.element).norm();
    return best;
  }
  best.distance = std::numeric_limits<double>::infinity();
  for (double a : group.angles()) {
    const Mat2 r = rotation(a);
    const double d = (m - r).norm();
    if (d < best.distance) best = {r, a > kPi ? a - kTwoPi : a, d};
  }
  return best;
}

}  // namespace defectkit

#endif  // DEFECTKIT_ARCHETYPE_HPP
