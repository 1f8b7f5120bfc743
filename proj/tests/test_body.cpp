#include "defectkit/body.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace defectkit;

namespace {

Mat2 mat(double a, double b, double c, double d) {
  Mat2 m;
  m << a, b, c, d;
  return m;
}

std::vector<Vec2> annulus_points(double r0, double r1, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> r(r0 + 1e-3, r1 - 1e-3), phi(-kPi, kPi);
  std::vector<Vec2> out;
  for (int i = 0; i < count; ++i) {
    const double a = phi(rng), s = r(rng);
    out.emplace_back(s * std::cos(a), s * std::sin(a));
  }
  return out;
}

// Trapezoid rule for the closed loop integral of P(gamma) gamma' around r = r0; spectrally accurate.
Vec2 loop_integral_of_frame(const ReferenceChart& c, double r0, int nodes) {
  Vec2 sum = Vec2::Zero();
  for (int i = 0; i < nodes; ++i) {
    const double t = kTwoPi * (i + 0.5) / nodes;
    const Vec2 p(r0 * std::cos(t), r0 * std::sin(t)), dp(-r0 * std::sin(t), r0 * std::cos(t));
    sum += c.frame_at(p) * dp;
  }
  return sum * (kTwoPi / nodes);
}

}  // namespace

TEST(CheckClosed, ConstantFrameHasZeroResidual) {
  const ReferenceChart c{Rectangle{0, 1, 0, 1}, [](const Vec2&) { return mat(1.5, 0.3, 0.0, 0.8); }, "const", {}};
  const ClosedReport r = check_closed(c);
  EXPECT_EQ(r.max_residual, 0.0);
  EXPECT_TRUE(r.pass);
  EXPECT_GT(r.samples, 0);
}

TEST(CheckClosed, DislocationFrameIsClosed) {
  const Body body = build_dislocation_body(0.1, 1.0, Archetype::distance());
  const ClosedReport r = check_closed(body.chart(0), 1e-4, 1e-6);
  EXPECT_LT(r.max_residual, 1e-6);
  EXPECT_TRUE(r.pass);
}

TEST(CheckClosed, ShearGrowingAlongXHasUnitResidual) {
  // P = Id + x e_1 (x) dy
  const ReferenceChart c{Rectangle{0, 1, 0, 1}, [](const Vec2& p) { return mat(1, p.x(), 0, 1); }, "shear", {}};
  const ClosedReport r = check_closed(c);
  EXPECT_NEAR(r.max_residual, 1.0, 1e-8);
  EXPECT_FALSE(r.pass);
}

TEST(CheckClosed, PreservedUnderRestriction) {
  const Body body = build_disclination_body(0.5, 2.0, 0.3, Archetype::distance());
  ReferenceChart restricted = body.chart(0);
  restricted.domain = AnnularSector{0.8, 1.2, 1.0, 2.0, false};
  EXPECT_TRUE(check_closed(body.chart(0)).pass);
  EXPECT_TRUE(check_closed(restricted).pass);
}

TEST(OverlapCompatibility, ChartWithItself) {
  const Body body = build_disclination_body(0.5, 2.0, 0.25, Archetype::distance());
  const auto r = check_overlap_compatibility(body.chart(0), body.chart(0), Archetype::n_fold(3));
  EXPECT_LE(r.max_distance, 1e-15);
  EXPECT_TRUE(r.pass);
}

TEST(OverlapCompatibility, IsotropicAcceptsEveryAlpha) {
  for (double alpha : {0.05, 0.2, 0.37, 0.5, 0.81, 0.95}) {
    const Body body = build_disclination_body(0.5, 2.0, alpha, Archetype::distance());
    const auto r = check_overlap_compatibility(body.chart(0), body.chart(1), body.archetype());
    EXPECT_TRUE(r.pass) << alpha;
    EXPECT_LT(r.max_distance, 1e-10);
  }
}

TEST(OverlapCompatibility, HexagonalRejectsOneFifth) {
  const Body body = build_disclination_body(0.5, 2.0, 0.2, Archetype::distance());
  const auto r = check_overlap_compatibility(body.chart(0), body.chart(1), Archetype::n_fold(3));
  EXPECT_FALSE(r.pass);
  // on the lower half-plane the transition is R(2 pi alpha) = R(72 deg); nearest element R(60 deg)
  EXPECT_NEAR(r.max_distance, rotation_distance_from_identity(kTwoPi * 0.2 - kPi / 3), 1e-9);
  EXPECT_GT(r.max_distance, 0.1);
}

TEST(OverlapCompatibility, DisjointChartsThrow) {
  const ReferenceChart a{Rectangle{0, 1, 0, 1}, [](const Vec2&) { return Mat2::Identity().eval(); }, "a", {}};
  const ReferenceChart b{Rectangle{2, 3, 0, 1}, [](const Vec2&) { return Mat2::Identity().eval(); }, "b", {}};
  try {
    check_overlap_compatibility(a, b, Archetype::distance());
    FAIL() << "disjoint charts accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::disjoint_domains);
  }
}

TEST(OverlapCompatibility, VaryingTransitionIsFlaggedForDiscreteGroups) {
  // transition R(x): pointwise in SO(2) but never locally constant
  const ReferenceChart a{Rectangle{0, 1, 0, 1}, [](const Vec2& p) { return rotation(p.x()); }, "a", {}};
  const ReferenceChart b{Rectangle{0, 1, 0, 1}, [](const Vec2&) { return Mat2::Identity().eval(); }, "b", {}};
  const auto iso = check_overlap_compatibility(a, b, Archetype::distance());
  EXPECT_TRUE(iso.pass);
  const auto hex = check_overlap_compatibility(a, b, Archetype::n_fold(3));
  EXPECT_FALSE(hex.pass);
}

TEST(BuildDisclination, HexagonalSixthIsValid) {
  const Body body = build_disclination_body(0.5, 2.0, 1.0 / 6.0, Archetype::n_fold(3));
  EXPECT_EQ(body.charts().size(), 2u);
  EXPECT_TRUE(validate_body(body).pass);
}

TEST(BuildDisclination, FrameJustAboveCut) {
  const Body body = build_disclination_body(0.5, 2.0, 1.0 / 6.0, Archetype::n_fold(3));
  const Mat2 p = body.chart(0).frame_at(Vec2(1.0, 1e-12));
  EXPECT_LE((p - mat(1, 0, 0, 5.0 / 6.0)).norm(), 1e-11);
}

TEST(BuildDisclination, ZeroAlphaIsIdentityFrame) {
  const Body body = build_disclination_body(0.5, 2.0, 0.0, Archetype::n_fold(3));
  for (const Vec2& p : annulus_points(0.5, 2.0, 50, 3)) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (body.chart(i).contains(p)) {
        EXPECT_LE((body.chart(i).frame_at(p) - Mat2::Identity()).norm(), 1e-14);
      }
    }
  }
}

TEST(BuildDisclination, IncompatibleCarriesDistance) {
  try {
    build_disclination_body(0.5, 2.0, 0.2, Archetype::n_fold(3));
    FAIL() << "alpha = 0.2 accepted for the hexagonal archetype";
  } catch (const IncompatibleDisclination& e) {
    EXPECT_EQ(e.code(), ErrorCode::incompatible_disclination);
    EXPECT_NEAR(e.distance(), 2.0 * std::sqrt(2.0) * std::sin(kPi * 0.2 - kPi / 6), 1e-9);
  }
}

TEST(BuildDisclination, InvalidParametersThrowValidation) {
  EXPECT_THROW(build_disclination_body(1.0, 0.5, 0.2, Archetype::distance()), Error);
  EXPECT_THROW(build_disclination_body(0.5, 1.0, 1.0, Archetype::distance()), Error);
  EXPECT_THROW(build_disclination_body(0.5, 1.0, -0.1, Archetype::distance()), Error);
}

TEST(BuildDisclination, SuccessIffRotationIsInGroup) {
  // coarse version of the full scan: k/12 for the hexagonal archetype
  const Archetype hex = Archetype::n_fold(3);
  for (int k = 1; k < 12; ++k) {
    const double alpha = k / 12.0;
    const bool in_group = nearest_element(symmetry_group(hex), rotation(kTwoPi * alpha)).distance < 1e-8;
    bool built = true;
    try {
      build_disclination_body(0.5, 2.0, alpha, hex);
    } catch (const IncompatibleDisclination&) {
      built = false;
    }
    EXPECT_EQ(built, in_group) << "alpha " << alpha;
    EXPECT_EQ(built, k % 2 == 0);
  }
}

TEST(BuildDislocation, LoopIntegralOfFrameIsBurgersVector) {
  const double eps = 0.1;
  const Body body = build_dislocation_body(eps, 1.0, Archetype::distance());
  for (double r0 : {0.2, 0.5, 0.9}) {
    const Vec2 b = loop_integral_of_frame(body.chart(0), r0, 64);
    EXPECT_NEAR(b.x(), eps, 1e-13);
    EXPECT_NEAR(b.y(), 0.0, 1e-13);
  }
}

TEST(BuildDislocation, ZeroEpsilonIsDefectFree) {
  const Body body = build_dislocation_body(0.0, 1.0, Archetype::distance());
  for (const Vec2& p : annulus_points(0.0, 1.0, 30, 4)) EXPECT_EQ(body.chart(0).frame_at(p), Mat2::Identity());
}

TEST(BuildDislocation, ValidForAnyArchetype) {
  for (const Archetype& a : {Archetype::distance(), Archetype::neo_hookean(), Archetype::n_fold(3)}) {
    const BodyReport r = validate_body(build_dislocation_body(0.1, 1.0, a));
    EXPECT_TRUE(r.pass) << a.name();
    EXPECT_TRUE(r.closed.pass);
    EXPECT_EQ(r.cover_fraction, 1.0);
  }
}

TEST(InducedMetric, TrivialBodyIsEuclidean) {
  const Body body = build_trivial_body(Rectangle{0, 1, 0, 1}, Archetype::distance());
  EXPECT_EQ(induced_metric(body)(Vec2(0.3, 0.7)), Mat2::Identity());
}

TEST(InducedMetric, DisclinationChartsAgree) {
  const Body body = build_disclination_body(0.5, 2.0, 0.3, Archetype::distance());
  for (const Vec2& p : annulus_points(0.5, 2.0, 100, 5)) {
    if (!body.chart(0).contains(p) || !body.chart(1).contains(p)) continue;
    const Mat2 g1 = metric_from_reference(body.chart(0).frame_at(p));
    const Mat2 g2 = metric_from_reference(body.chart(1).frame_at(p));
    EXPECT_LE((g1 - g2).norm(), 1e-10);
  }
}

TEST(InducedMetric, DislocationDirectEvaluation) {
  const double eps = 0.1, r0 = 0.5;
  const Body body = build_dislocation_body(eps, 1.0, Archetype::distance());
  const Mat2 p = mat(1.0, eps / (kTwoPi * r0), 0.0, 1.0);
  EXPECT_LE((induced_metric(body)(Vec2(r0, 0.0)) - p.transpose() * p).norm(), 1e-15);
}

TEST(InducedMetric, OutsideEveryChartThrows) {
  const Body body = build_dislocation_body(0.1, 1.0, Archetype::distance());
  EXPECT_THROW(induced_metric(body)(Vec2(2.0, 0.0)), Error);
}

TEST(EnergyDensity, TrivialBodyAtIdentity) {
  const Body body = build_trivial_body(Rectangle{0, 1, 0, 1}, Archetype::distance());
  EXPECT_NEAR(energy_density_at(body, Vec2(0.5, 0.5), Mat2::Identity()), 0.0, 1e-15);
}

TEST(EnergyDensity, ChartIndependentOnDisclinationOverlap) {
  for (const Archetype& arch : {Archetype::neo_hookean(), Archetype::distance()}) {
    const Body body = build_disclination_body(0.5, 2.0, 0.27, arch);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    int compared = 0;
    for (const Vec2& p : annulus_points(0.5, 2.0, 150, 6)) {
      if (!body.chart(0).contains(p) || !body.chart(1).contains(p)) continue;
      const Mat2 a = Mat2::Identity() + mat(u(rng), u(rng), u(rng), u(rng));
      EXPECT_NEAR(energy_density_at(body, p, a, 0), energy_density_at(body, p, a, 1), 1e-10);
      ++compared;
    }
    EXPECT_GE(compared, 100);
  }
}

TEST(EnergyDensity, FrameItselfGivesArchetypeAtIdentity) {
  const Body body = build_dislocation_body(0.1, 1.0, Archetype::neo_hookean());
  const Vec2 p(0.3, -0.4);
  EXPECT_NEAR(energy_density_at(body, p, body.chart(0).frame_at(p)), 2.0, 1e-12);
}

TEST(ValidateBody, MismatchedVolumeDeclarationIsRejected) {
  ReferenceChart c{Rectangle{0, 1, 0, 1}, [](const Vec2&) { return mat(2, 0, 0, 1); }, "scaled", {}};
  c.volume_density = [](const Vec2&) { return 1.0; };
  const BodyReport bad = validate_body(Body({c}, Archetype::distance(), Rectangle{0, 1, 0, 1}));
  EXPECT_FALSE(bad.pass);
  EXPECT_NEAR(bad.volume_residual, 1.0, 1e-15);
  c.volume_density = [](const Vec2&) { return 2.0; };
  EXPECT_TRUE(validate_body(Body({c}, Archetype::distance(), Rectangle{0, 1, 0, 1})).pass);
}

TEST(ValidateBody, UncoveredRegionFails) {
  ReferenceChart c{Rectangle{0, 0.5, 0, 1}, [](const Vec2&) { return Mat2::Identity().eval(); }, "half", {}};
  const BodyReport r = validate_body(Body({c}, Archetype::distance(), Rectangle{0, 1, 0, 1}));
  EXPECT_LT(r.cover_fraction, 1.0);
  EXPECT_FALSE(r.pass);
}

TEST(Body, ChartLookupPrefersLowestIndex) {
  const Body body = build_disclination_body(0.5, 2.0, 0.25, Archetype::distance());
  EXPECT_EQ(body.chart_index(Vec2(0.0, 1.0)), 0);
  EXPECT_EQ(body.chart_index(Vec2(1.0, 0.0)), 1);
  EXPECT_EQ(body.chart_index(Vec2(3.0, 0.0)), -1);
  EXPECT_THROW(body.chart_at(Vec2(0.1, 0.0)), Error);
}
