#include "bhom/geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace bhom;

TEST(Layout, QuarterLatticeHasFourCenters) {
  const PatchLayout l = build_layout(DomainSpec::unit_box(3), 0.25, 1.0);
  ASSERT_EQ(l.size(), 4u);
  for (std::size_t k = 0; k < l.size(); ++k) {
    EXPECT_DOUBLE_EQ(l.radius(k), 0.0625);
    EXPECT_DOUBLE_EQ(l.center(k)(2), 0.0);
  }
}

TEST(Layout, EighthLatticeHasSixteenCenters) {
  const PatchLayout l = build_layout(DomainSpec::unit_box(3), 0.125, 1.0);
  EXPECT_EQ(l.size(), 16u);
  EXPECT_DOUBLE_EQ(l.radius(0), 0.015625);
}

TEST(Layout, CentersSitOnTheStaggeredLattice) {
  const double eps = 0.125;
  const PatchLayout l = build_layout(DomainSpec::unit_box(3), eps, 1.0);
  for (std::size_t k = 0; k < l.size(); ++k)
    for (int i = 0; i < 2; ++i) {
      const double m = l.center(k)(i) / (2.0 * eps) - 0.5;
      EXPECT_NEAR(m, std::round(m), 1e-12);
    }
}

TEST(Layout, RadiusAtLeastEpsIsRejected) {
  EXPECT_THROW(build_layout(DomainSpec::unit_box(4), 0.25, 2.0), DomainError);
}

TEST(Layout, TildeROutsideBoundsIsRejected) {
  EXPECT_THROW(build_layout(DomainSpec::unit_box(3), 0.25, 3.0), DomainError);
  EXPECT_THROW(build_layout(DomainSpec::unit_box(3), 0.25, 0.2), DomainError);
}

TEST(Layout, FourDimensionalScalingExponent) {
  const PatchLayout l = build_layout(DomainSpec::unit_box(4), 0.25, 1.0);
  EXPECT_NEAR(l.radius(0), std::pow(0.25, 1.5), 1e-15);
  EXPECT_EQ(l.size(), 8u);
}

TEST(Layout, PerPatchTildeR) {
  std::vector<double> tr(4);
  for (std::size_t k = 0; k < 4; ++k) tr[k] = 0.5 + 0.25 * static_cast<double>(k);
  const PatchLayout l = build_layout(DomainSpec::unit_box(3), 0.25, tr, 0.5, 2.0, CoefficientField::identity(3));
  for (std::size_t k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(l.radius(k), tr[k] * 0.0625);
  EXPECT_FALSE(l.uniform_tilde_r());
}

TEST(Mesh, UnitBoxNodeCount) {
  const DomainSpec spec = DomainSpec::unit_box(3);
  const PatchLayout l = build_layout(spec, 0.25, 1.0);
  const Mesh m = build_mesh(spec, l, 1.0 / 32.0);
  EXPECT_EQ(m.num_nodes(), 33u * 33u * 33u);
}

TEST(Mesh, EveryPatchHoldsSigmaNodes) {
  const DomainSpec spec = DomainSpec::unit_box(3);
  const PatchLayout l = build_layout(spec, 0.25, 1.0);
  const Mesh m = build_mesh(spec, l, 1.0 / 32.0);
  for (std::size_t c : m.patch_node_counts(l.size())) EXPECT_GE(c, 1u);
}

TEST(Mesh, UnderResolvedPatchesAreRejected) {
  const DomainSpec spec = DomainSpec::unit_box(3);
  const PatchLayout l = build_layout(spec, 0.25, 1.0);
  EXPECT_THROW(build_mesh(spec, l, 0.125), DomainError);
  MeshOptions opt;
  opt.resolution_override = true;
  EXPECT_NO_THROW(build_mesh(spec, l, 0.125, opt));
}

TEST(Mesh, NodeCapIsEnforced) {
  MeshOptions opt;
  opt.node_cap = 1000;
  EXPECT_THROW(build_mesh(DomainSpec::unit_box(3), 1.0 / 32.0, opt), DomainError);
}

TEST(Mesh, TagsPartitionTheBoundary) {
  const DomainSpec spec = DomainSpec::unit_box(3);
  const PatchLayout l = build_layout(spec, 0.25, 1.0);
  const Mesh m = build_mesh(spec, l, 1.0 / 32.0);
  for (std::size_t i = 0; i < m.num_nodes(); ++i) {
    const Point x = m.coord(i);
    const bool bottom = x(2) == 0.0;
    const bool lateral = x(0) == 0.0 || x(0) == 1.0 || x(1) == 0.0 || x(1) == 1.0;
    const bool top = x(2) == 1.0;
    const NodeTag t = m.tag(i);
    if (top || lateral) {
      EXPECT_EQ(t, NodeTag::Gamma);
    } else if (bottom) {
      EXPECT_TRUE(t == NodeTag::SigmaFree || t == NodeTag::SigmaPatch);
      EXPECT_EQ(t == NodeTag::SigmaPatch, in_T_eps(l, x));
    } else {
      EXPECT_EQ(t, NodeTag::Interior);
    }
  }
}

TEST(Mesh, PeriodicAxesDropTheDuplicateNodes) {
  const DomainSpec spec = DomainSpec::unit_box(3, BoundaryMode::PeriodicTop);
  const Mesh m = build_mesh(spec, 0.25);
  EXPECT_EQ(m.num_nodes(), 4u * 4u * 5u);
  for (std::size_t i = 0; i < m.num_nodes(); ++i)
    EXPECT_EQ(m.tag(i) == NodeTag::Gamma, m.coord(i)(2) == 1.0);
}

TEST(TEps, CenterAndClosedBoundary) {
  const PatchLayout l = build_layout(DomainSpec::unit_box(3), 0.25, 1.0);
  const Point c = l.center(0);
  EXPECT_TRUE(in_T_eps(l, c));
  Point x = c;
  x(0) += l.radius(0);
  EXPECT_TRUE(in_T_eps(l, x));
  x = c;
  x(0) += 1.5 * l.radius(0);
  EXPECT_FALSE(in_T_eps(l, x));
}

TEST(TEps, AnisotropicMetricBalls) {
  Matrix g = Matrix::Identity(3, 3);
  g(0, 0) = 2.0;
  const CoefficientField cf = CoefficientField::matrix(g);
  const PatchLayout l = build_layout(DomainSpec::unit_box(3), 0.25, {1.0}, 0.5, 2.0, cf);
  Point x = l.center(0);
  x(0) += 1.9 * l.radius(0);  // metric distance 0.95 r
  EXPECT_TRUE(in_T_eps(l, x));
  x = l.center(0);
  x(1) += 1.1 * l.radius(0);
  EXPECT_FALSE(in_T_eps(l, x));
}

TEST(TEps, RandomPointsAgreeWithBruteForce) {
  const PatchLayout l = build_layout(DomainSpec::unit_box(3), 0.125, 1.0);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0), z(0.0, 0.03);
  for (int t = 0; t < 2000; ++t) {
    Point x(3);
    x << u(rng), u(rng), z(rng);
    bool brute = false;
    for (std::size_t k = 0; k < l.size(); ++k) brute = brute || (x - l.center(k)).norm() <= l.radius(k);
    EXPECT_EQ(in_T_eps(l, x), brute);
  }
}
