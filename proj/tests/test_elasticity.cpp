#include "defectkit/elasticity.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace defectkit;

namespace {

Mat2 mat(double a, double b, double c, double d) {
  Mat2 m;
  m << a, b, c, d;
  return m;
}

Configuration mapped(const TriMesh& m, const std::function<Vec2(const Vec2&)>& f) {
  Configuration out;
  for (const Vec2& v : m.vertices) out.push_back(f(v));
  return out;
}

Configuration perturbed(const TriMesh& m, double amplitude, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  Configuration out = m.vertices;
  for (Vec2& v : out) v += Vec2(u(rng), u(rng));
  return out;
}

double total_norm(const std::vector<Vec2>& g) {
  double s = 0.0;
  for (const Vec2& v : g) s += v.squaredNorm();
  return std::sqrt(s);
}

}  // namespace

TEST(BuildMesh, UnitSquareResolutionTwo) {
  const TriMesh m = build_mesh(Rectangle{0, 1, 0, 1}, 2);
  EXPECT_EQ(m.triangle_count(), 8u);
  EXPECT_EQ(m.vertex_count(), 9u);
  int boundary = 0;
  for (bool b : m.boundary) boundary += b;
  EXPECT_EQ(boundary, 8);
}

TEST(BuildMesh, AnnulusCountAndOrientation) {
  for (int n : {3, 8, 16}) {
    const TriMesh m = build_mesh(AnnularSector::annulus(1.0, 2.0), n);
    EXPECT_EQ(m.triangle_count(), static_cast<std::size_t>(2 * n * n));
    for (std::size_t t = 0; t < m.triangle_count(); ++t) EXPECT_GT(m.area(t), 1e-12);
  }
}

TEST(BuildMesh, DiameterShrinksLikeOneOverResolution) {
  for (int n : {4, 8, 16, 32}) {
    EXPECT_LE(build_mesh(Rectangle{0, 1, 0, 1}, n).max_edge_length(), std::sqrt(2.0) / n + 1e-12);
    EXPECT_LE(build_mesh(AnnularSector::annulus(1.0, 2.0), n).max_edge_length(), 2.0 * kTwoPi / n);
  }
}

TEST(BuildMesh, RejectsBadResolutionsAndThinDomains) {
  EXPECT_THROW(build_mesh(Rectangle{0, 1, 0, 1}, 1), Error);
  try {
    build_mesh(Rectangle{0, 1, 0, 1e-13}, 4);
    FAIL() << "degenerate rectangle meshed";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::mesh);
  }
  EXPECT_THROW(build_mesh(AnnularSector::annulus(1.0, 2.0), 2), Error);
}

TEST(BuildMesh, NeighborsAreSymmetric) {
  const TriMesh m = build_mesh(AnnularSector::annulus(0.5, 1.0), 6);
  for (std::size_t t = 0; t < m.triangle_count(); ++t) {
    for (int k = 0; k < 3; ++k) {
      const int s = m.neighbors[t][k];
      if (s < 0) continue;
      const auto& back = m.neighbors[s];
      EXPECT_TRUE(std::find(back.begin(), back.end(), static_cast<int>(t)) != back.end());
    }
  }
}

TEST(AssembleEnergy, IdentityOnTrivialBodyIsZero) {
  const Body body = build_trivial_body(Rectangle{0, 1, 0, 1}, Archetype::distance());
  const TriMesh m = build_mesh(Rectangle{0, 1, 0, 1}, 6);
  EXPECT_NEAR(assemble_energy(body, m, identity_configuration(m)), 0.0, 1e-15);
}

TEST(AssembleEnergy, UniformStretchIsExactAtEveryResolution) {
  const Body body = build_trivial_body(Rectangle{0, 1, 0, 1}, Archetype::neo_hookean());
  const double lambda = 1.3;
  const double exact = lambda * lambda + 1.0 + (lambda - 1.0) * (lambda - 1.0);
  for (int n : {2, 5, 13}) {
    const TriMesh m = build_mesh(Rectangle{0, 1, 0, 1}, n);
    const Configuration f = mapped(m, [&](const Vec2& x) { return Vec2(lambda * x.x(), x.y()); });
    EXPECT_NEAR(assemble_energy(body, m, f), exact, 1e-12) << n;
  }
}

TEST(AssembleEnergy, DisclinationIdentityEmbeddingMatchesBruteForce) {
  const Body body = build_disclination_body(0.5, 2.0, 1.0 / 6.0, Archetype::distance());
  const TriMesh m = build_mesh(body.region(), 16);
  const Configuration f = identity_configuration(m);
  const double assembled = assemble_energy(body, m, f);
  double brute = 0.0;
  for (std::size_t t = 0; t < m.triangle_count(); ++t) {
    const Vec2 c = m.barycenter(t);
    const Mat2 p = body.chart_at(c).frame_at(c);
    // f is the identity, so its derivative is the identity on every triangle
    brute += energy_density_at(body, c, Mat2::Identity()) * std::abs(p.determinant()) * m.area(t);
  }
  EXPECT_GT(assembled, 0.01);
  EXPECT_NEAR(assembled, brute, 1e-12 * brute);
}

TEST(AssembleEnergy, InfiniteDensityPropagates) {
  const Archetype barrier = Archetype::custom("barrier", [](const Mat2& b) {
    return b.determinant() <= 0.0 ? std::numeric_limits<double>::infinity() : b.squaredNorm();
  });
  const TriMesh m = build_mesh(Rectangle{0, 1, 0, 1}, 3);
  const Body body = build_trivial_body(Rectangle{0, 1, 0, 1}, barrier);
  const Configuration flipped = mapped(m, [](const Vec2& x) { return Vec2(-x.x(), x.y()); });
  EXPECT_TRUE(std::isinf(assemble_energy(body, m, flipped)));
}

TEST(AssembleEnergy, FrameIndifference) {
  const TriMesh m = build_mesh(AnnularSector::annulus(0.1, 1.0), 10);
  for (const Archetype& arch : {Archetype::neo_hookean(), Archetype::distance(), Archetype::n_fold(3)}) {
    const Body body = build_dislocation_body(0.1, 1.0, arch);
    const Configuration f = perturbed(m, 0.01, 5);
    Configuration rotated = f;
    const Mat2 r = rotation(0.83);
    for (Vec2& v : rotated) v = r * v + Vec2(0.3, -2.0);
    EXPECT_NEAR(assemble_energy(body, m, f), assemble_energy(body, m, rotated), 1e-10) << arch.name();
  }
}

TEST(AssembleEnergy, ChartIndependentAcrossAdmissibleCharts) {
  const Body body = build_disclination_body(0.5, 2.0, 0.3, Archetype::neo_hookean());
  const TriMesh m = build_mesh(body.region(), 12);
  std::vector<int> first, second;
  for (std::size_t t = 0; t < m.triangle_count(); ++t) {
    const auto& tri = m.triangles[t];
    auto inside = [&](int c) {
      return body.chart(c).contains(m.vertices[tri[0]]) && body.chart(c).contains(m.vertices[tri[1]]) &&
             body.chart(c).contains(m.vertices[tri[2]]) && body.chart(c).contains(m.barycenter(t));
    };
    first.push_back(inside(0) ? 0 : 1);
    second.push_back(inside(1) ? 1 : 0);
  }
  const Configuration f = perturbed(m, 0.02, 8);
  const double e1 = assemble_energy(make_energy_model(body, m, first), f);
  const double e2 = assemble_energy(make_energy_model(body, m, second), f);
  EXPECT_NEAR(e1, e2, 1e-10);
}

TEST(AssembleEnergy, RefinementConvergesAtSecondOrder) {
  const Body body = build_trivial_body(Rectangle{0, 1, 0, 1}, Archetype::neo_hookean());
  auto f = [](const Vec2& x) { return Vec2(x.x() + 0.1 * std::sin(kPi * x.y()), x.y() + 0.05 * x.x() * x.x()); };
  auto df = [](const Vec2& x) { return mat(1.0, 0.1 * kPi * std::cos(kPi * x.y()), 0.1 * x.x(), 1.0); };
  // oracle: tensor 5-point Gauss on a 40 x 40 grid
  double exact = 0.0;
  const int panels = 40;
  for (int i = 0; i < panels; ++i) {
    for (int j = 0; j < panels; ++j) {
      for (int a = 0; a < 5; ++a) {
        for (int b = 0; b < 5; ++b) {
          const Vec2 x((i + GaussLegendre5::nodes[a]) / panels, (j + GaussLegendre5::nodes[b]) / panels);
          exact += GaussLegendre5::weights[a] * GaussLegendre5::weights[b] * body.archetype()(df(x)) / (panels * panels);
        }
      }
    }
  }
  std::vector<double> err;
  for (int n : {8, 16, 32}) {
    const TriMesh m = build_mesh(Rectangle{0, 1, 0, 1}, n);
    err.push_back(std::abs(assemble_energy(body, m, mapped(m, f)) - exact));
  }
  EXPECT_GE(std::log2(err[0] / err[1]), 1.8);
  EXPECT_GE(std::log2(err[1] / err[2]), 1.8);
}

TEST(AssembleGradient, MatchesFiniteDifferences) {
  const Body body = build_disclination_body(0.5, 2.0, 0.2, Archetype::neo_hookean());
  const TriMesh m = build_mesh(body.region(), 6);
  const EnergyModel model = make_energy_model(body, m);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Configuration f = perturbed(m, 0.05, seed);
    const auto g = assemble_gradient(model, f);
    std::vector<Vec2> fd(f.size());
    const double h = 1e-6;
    for (std::size_t v = 0; v < f.size(); ++v) {
      for (int k = 0; k < 2; ++k) {
        Configuration plus = f, minus = f;
        plus[v](k) += h;
        minus[v](k) -= h;
        fd[v](k) = (assemble_energy(model, plus) - assemble_energy(model, minus)) / (2 * h);
      }
    }
    double diff = 0.0;
    for (std::size_t v = 0; v < f.size(); ++v) diff += (g[v] - fd[v]).squaredNorm();
    EXPECT_LT(std::sqrt(diff) / total_norm(g), 1e-5);
  }
}

TEST(AssembleGradient, VanishesAtGlobalMinimizer) {
  const Body body = build_trivial_body(Rectangle{0, 1, 0, 1}, Archetype::distance());
  const TriMesh m = build_mesh(Rectangle{0, 1, 0, 1}, 8);
  EXPECT_LT(total_norm(assemble_gradient(body, m, identity_configuration(m))), 1e-10);
}

TEST(AssembleGradient, SumsToZeroWithoutBoundaryConditions) {
  const Body body = build_dislocation_body(0.1, 1.0, Archetype::n_fold(3));
  const TriMesh m = build_mesh(body.region(), 8);
  Vec2 sum = Vec2::Zero();
  for (const Vec2& g : assemble_gradient(body, m, perturbed(m, 0.03, 4))) sum += g;
  EXPECT_LT(sum.norm(), 1e-10);
}

TEST(Minimize, IdentityBoundaryReachesZeroEnergy) {
  const Body body = build_trivial_body(Rectangle{0, 1, 0, 1}, Archetype::distance());
  const TriMesh m = build_mesh(Rectangle{0, 1, 0, 1}, 8);
  const auto bc = BoundaryCondition::affine_on_boundary(m, Mat2::Identity());
  const MinimizeResult r = minimize(make_energy_model(body, m), bc, perturbed(m, 0.05, 12));
  EXPECT_LT(r.energy, 1e-10);
  EXPECT_TRUE(r.converged);
  for (std::size_t i = 1; i < r.energy_history.size(); ++i) EXPECT_LE(r.energy_history[i], r.energy_history[i - 1] + 1e-14 * std::max(1.0, r.energy_history[i - 1]));
}

TEST(Minimize, StretchedBoundaryConvergesMonotonically) {
  const Body body = build_trivial_body(Rectangle{0, 1, 0, 1}, Archetype::neo_hookean());
  const TriMesh m = build_mesh(Rectangle{0, 1, 0, 1}, 8);
  const auto bc = BoundaryCondition::affine_on_boundary(m, mat(1.2, 0, 0, 1));
  const MinimizeResult r = minimize(body, m, bc);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.gradient_norm, 1e-8);
  for (std::size_t i = 1; i < r.energy_history.size(); ++i) EXPECT_LE(r.energy_history[i], r.energy_history[i - 1] + 1e-14 * std::max(1.0, r.energy_history[i - 1]));
  // pinned vertices stay on their targets
  for (std::size_t i = 0; i < bc.pinned.size(); ++i) EXPECT_EQ(r.positions[bc.pinned[i]], bc.targets[i]);
}

TEST(Minimize, DislocationEnergyPositiveAndDecreasingUnderRefinement) {
  const Body body = build_dislocation_body(0.1, 1.0, Archetype::distance());
  std::vector<double> energies;
  for (int n : {8, 16, 32}) {
    const TriMesh m = build_mesh(body.region(), n);
    const MinimizeResult r = minimize(body, m, BoundaryCondition::none());
    EXPECT_TRUE(r.converged) << n;
    energies.push_back(r.energy);
  }
  EXPECT_GT(energies.back(), 0.0);
  EXPECT_LT(energies[1], energies[0]);
  EXPECT_LT(energies[2], energies[1]);
}

TEST(Minimize, FailedLineSearchThrowsStalledDescentWithLastIterate) {
  // deliberately wrong gradient: every proposed step goes uphill
  const Archetype wrong = Archetype::custom(
      "wrong-gradient", [](const Mat2& b) { return (b - Mat2::Identity()).squaredNorm(); },
      [](const Mat2& b) { return (-2.0 * (b - Mat2::Identity())).eval(); });
  const Body body = build_trivial_body(Rectangle{0, 1, 0, 1}, wrong);
  const TriMesh m = build_mesh(Rectangle{0, 1, 0, 1}, 4);
  const Configuration start = perturbed(m, 0.1, 2);
  try {
    minimize(make_energy_model(body, m), BoundaryCondition::none(), start);
    FAIL() << "uphill descent accepted";
  } catch (const StalledDescent& e) {
    EXPECT_EQ(e.code(), ErrorCode::stalled_descent);
    EXPECT_EQ(e.last().positions.size(), m.vertex_count());
    EXPECT_NEAR(e.last().energy, assemble_energy(body, m, start), 1e-15);
  }
}

TEST(Minimize, InfeasibleStartIsRejected) {
  const Archetype barrier = Archetype::custom("barrier", [](const Mat2& b) {
    return b.determinant() <= 0.0 ? std::numeric_limits<double>::infinity() : b.squaredNorm();
  });
  const Body body = build_trivial_body(Rectangle{0, 1, 0, 1}, barrier);
  const TriMesh m = build_mesh(Rectangle{0, 1, 0, 1}, 3);
  try {
    minimize(make_energy_model(body, m), BoundaryCondition::none(),
             mapped(m, [](const Vec2& x) { return Vec2(-x.x(), x.y()); }));
    FAIL() << "infeasible start accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::infeasible_point);
  }
}
