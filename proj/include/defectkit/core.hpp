#ifndef DEFECTKIT_CORE_HPP
#define DEFECTKIT_CORE_HPP

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace defectkit {

using Mat2 = Eigen::Matrix2d;
using Vec2 = Eigen::Vector2d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

enum class ErrorCode {
  invalid_frame,
  domain,
  chart_cover,
  disjoint_domains,
  incompatible_disclination,
  disclination_present,
  infeasible_point,
  stalled_descent,
  mesh,
  anisotropy,
  metric_degeneracy,
  strip,
  routing,
  inconsistent_group,
  obstruction,
  validation,
  parse,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_frame: return "invalid-frame";
    case ErrorCode::domain: return "domain";
    case ErrorCode::chart_cover: return "chart-cover";
    case ErrorCode::disjoint_domains: return "disjoint-domains";
    case ErrorCode::incompatible_disclination: return "incompatible-disclination";
    case ErrorCode::disclination_present: return "disclination-present";
    case ErrorCode::infeasible_point: return "infeasible-point";
    case ErrorCode::stalled_descent: return "stalled-descent";
    case ErrorCode::mesh: return "mesh";
    case ErrorCode::anisotropy: return "anisotropy";
    case ErrorCode::metric_degeneracy: return "metric-degeneracy";
    case ErrorCode::strip: return "strip";
    case ErrorCode::routing: return "routing";
    case ErrorCode::inconsistent_group: return "inconsistent-group";
    case ErrorCode::obstruction: return "obstruction";
    case ErrorCode::validation: return "validation";
    case ErrorCode::parse: return "parse";
  }
  return "unknown";
}

/// Base of every error raised by the library; carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised when a rotation that must lie in the archetype's symmetry group does not.
class IncompatibleDisclination : public Error {
 public:
  IncompatibleDisclination(const std::string& what, double distance)
      : Error(ErrorCode::incompatible_disclination, what), distance_(distance) {}
  /// Worst nearest-group-element distance that triggered the rejection.
  double distance() const noexcept { return distance_; }

 private:
  double distance_;
};

/// Every tolerance and step size the library uses, in one record.
struct Tolerances {
  double volume = 1e-8;           // |det P - density| for declared volume forms
  double isometry_chart = 1e-12;  // Pi^T G(q) Pi - G(p), chart formula
  double isometry_ode = 1e-6;     // same, ODE transport
  double group = 1e-8;            // nearest-element membership
  double identity = 1e-6;         // "zero disclination content"
  double symmetry = 1e-8;         // archetype symmetry detection
  double closed = 1e-6;           // dP residual
  double christoffel_step = 1e-5;
  double closed_step = 1e-4;
  double gradient_step = 1e-6;
  double curvature_step = 1e-4;
  int transport_steps = 2000;  // ODE steps per unit curve (total length / steps)
  double theta_min = 0.2;      // triangle angle bound for metric triangulations
};

inline Mat2 rotation(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Mat2 r;
  r << c, -s, s, c;
  return r;
}

/// Angle of the rotation closest to `m` (the polar factor's angle), in (-pi, pi].
inline double rotation_angle(const Mat2& m) {
  return std::atan2(m(1, 0) - m(0, 1), m(0, 0) + m(1, 1));
}

/// ||R(delta) - Id||_F in closed form.
inline double rotation_distance_from_identity(double delta) {
  return 2.0 * std::sqrt(2.0) * std::abs(std::sin(0.5 * delta));
}

inline Mat2 cofactor(const Mat2& b) {
  Mat2 c;
  c << b(1, 1), -b(1, 0), -b(0, 1), b(0, 0);
  return c;
}

inline double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline Vec2 rot90(const Vec2& v) { return {-v.y(), v.x()}; }

/// Five-point Gauss-Legendre rule on [0, 1].
struct GaussLegendre5 {
  static constexpr std::array<double, 5> nodes = {
      0.046910077030668004, 0.23076534494715845, 0.5, 0.76923465505284155, 0.95308992296933200};
  static constexpr std::array<double, 5> weights = {
      0.11846344252809454, 0.23931433524968324, 0.28444444444444444, 0.23931433524968324,
      0.11846344252809454};
};

/// Integrates f over [0, 1] with `panels` composite five-point panels.
template <class F>
auto integrate_unit(F&& f, int panels = 1) {
  using R = decltype(f(0.0));
  R sum = f(0.0) * 0.0;
  const double width = 1.0 / panels;
  for (int p = 0; p < panels; ++p) {
    for (std::size_t k = 0; k < 5; ++k) {
      sum += (GaussLegendre5::weights[k] * width) * f((p + GaussLegendre5::nodes[k]) * width);
    }
  }
  return sum;
}

}  // namespace defectkit

#endif  // DEFECTKIT_CORE_HPP
