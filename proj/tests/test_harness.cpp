#include "bhom/harness.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace bhom;

namespace {
LemmaContext matched_context() {
  LemmaContext ctx;
  ctx.c_tilde = {-1.0};
  return ctx;
}

TestFunctionSpec default_family() {
  TestFunctionSpec tf;
  tf.v.push_back(VField::custom("1 + 0.5*x1^2", Field::from([](const Point& x) { return 1.0 + 0.5 * x(0) * x(0); })));
  tf.v.push_back(VField::custom("exp(-x3)", Field::from([](const Point& x) { return std::exp(-x(2)); })));
  return tf;
}

class MatchedReport : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { report_ = new LemmaCheckReport(run_lemma_checks(matched_context(), default_family())); }
  static void TearDownTestSuite() {
    delete report_;
    report_ = nullptr;
  }
  static const LemmaCheckEntry& entry(const std::string& name) {
    const LemmaCheckEntry* e = report_->find(name);
    if (!e) throw std::runtime_error("missing entry " + name);
    return *e;
  }
  static LemmaCheckReport* report_;
};
LemmaCheckReport* MatchedReport::report_ = nullptr;
}  // namespace

TEST_F(MatchedReport, EveryEntryPasses) {
  EXPECT_TRUE(report_->errors.empty());
  for (const auto& e : report_->entries) EXPECT_TRUE(e.pass) << e.name << ": " << e.note;
  EXPECT_TRUE(report_->all_pass());
}

TEST_F(MatchedReport, FlatBoundaryFluxIsExactlyZero) {
  for (const auto& e : report_->entries)
    if (e.name.rfind("E2[", 0) == 0)
      for (double v : e.values) EXPECT_LE(std::abs(v), 1e-12) << e.name;
}

TEST_F(MatchedReport, EnergyPairingApproachesDensityTimesIntegral) {
  const auto& e = entry("le2");
  // Radial energy weighted by 1 - x3: the x3 term integrates cos(theta) over the hemisphere.
  for (std::size_t i = 0; i < e.eps.size(); ++i) {
    const double eps = e.eps[i], r = eps * eps, N = 1.0 / r - 1.0 / eps;
    const double per_patch = 2.0 * oracle::pi / N - oracle::pi * std::log(eps / r) / (N * N);
    EXPECT_NEAR(e.values[i], per_patch / (4.0 * eps * eps), 1e-10);
  }
  EXPECT_LE(std::abs(e.limit - e.target) / e.target, 0.05);
}

TEST_F(MatchedReport, InnerFluxMatchesSphericalOracle) {
  const auto& e = entry("E1[v=1]");
  for (std::size_t i = 0; i < e.eps.size(); ++i) {
    const double eps = e.eps[i], r = eps * eps;
    // Inward flux through the half sphere d = r; the mean of 1 - x3 there is 1 - r/2.
    const double per_patch = oracle::omega_energy_half_ball(r, eps) * (1.0 - r / 2.0);
    EXPECT_NEAR(e.values[i], per_patch / (4.0 * eps * eps), 1e-10);
  }
  EXPECT_EQ(entry("E1[v=0]").values, std::vector<double>(3, 0.0));
}

TEST_F(MatchedReport, EqualityCaseGapShrinks) {
  const auto& e = entry("E3[v=1-omega]");
  const auto& gaps = e.extra.at("relative_gap");
  ASSERT_EQ(gaps.size(), 3u);
  EXPECT_LE(gaps.back(), 0.05);
  EXPECT_LT(gaps[2], gaps[1]);
  EXPECT_LT(gaps[1], gaps[0]);
  const auto& zero = entry("E3[v=0]");
  EXPECT_EQ(zero.values, std::vector<double>(3, 0.0));
  EXPECT_EQ(zero.extra.at("rhs"), std::vector<double>(3, 0.0));
}

TEST_F(MatchedReport, InequalityCaseHolds) {
  const auto& e = entry("E3[v=1]");
  EXPECT_GE(e.values.back(), e.extra.at("rhs").back() - 0.05);
}

TEST_F(MatchedReport, LiftedCentersGiveShrinkingNonzeroFlux) {
  const auto& e = entry("E2_lifted[v=1]");
  ASSERT_EQ(e.values.size(), 3u);
  EXPECT_NE(e.values[0], 0.0);
  EXPECT_LT(std::abs(e.values[1]), std::abs(e.values[0]));
  EXPECT_LT(std::abs(e.values[2]), std::abs(e.values[1]));
}

TEST_F(MatchedReport, VolumeCouplingDecays) {
  const auto& e = entry("volume_coupling[v=1-omega]");
  EXPECT_GE(e.extra.at("slope").front(), 0.7);
}

TEST(LemmaChecks, UnmatchedSeriesIsAnError) {
  LemmaContext ctx;
  ctx.eps_list = {0.25, 0.125};
  ctx.c_tilde = {1.0};
  const auto levels = ctx.levels();
  EXPECT_GT(outer_flux_identity_mismatch(levels, ctx.quad), 1e-3);
  ctx.c_tilde = {-1.0};
  EXPECT_LE(outer_flux_identity_mismatch(ctx.levels(), ctx.quad), 1e-12);
}

TEST(LemmaChecks, UnmatchedReportNamesTheIdentity) {
  LemmaContext ctx;
  ctx.eps_list = {0.25, 0.125};
  ctx.quad = QuadratureOptions{8, 8, 16};
  const LemmaCheckReport rep = run_lemma_checks(ctx, TestFunctionSpec{});
  ASSERT_EQ(rep.errors.size(), 1u);
  EXPECT_EQ(rep.errors[0].name, "outer_flux_identity");
  EXPECT_FALSE(rep.all_pass());
  for (const auto& e : rep.entries) EXPECT_EQ(e.name.rfind("E3", 0), std::string::npos);
}

TEST(LemmaChecks, ConstantTestFunctionHasNoVolumeCoupling) {
  const LemmaContext ctx = matched_context();
  LemmaContext small = ctx;
  small.eps_list = {0.25, 0.125};
  const auto levels = small.levels();
  TestFunctionSpec tf;
  tf.phi = Field::constant(1.0);
  const auto e = check_volume_coupling(small, levels, VField::one(), tf);
  EXPECT_TRUE(e.pass);
  EXPECT_EQ(e.values, std::vector<double>(2, 0.0));
}

TEST(LemmaChecks, ZeroTestFunctionGivesZeroEnergyPairing) {
  LemmaContext ctx = matched_context();
  ctx.eps_list = {0.25, 0.125};
  ctx.mu_limit = oracle::pi / 2.0;
  TestFunctionSpec tf;
  tf.phi = Field::constant(0.0);
  const auto e = check_le2(ctx, ctx.levels(), tf);
  EXPECT_EQ(e.values, std::vector<double>(2, 0.0));
  EXPECT_EQ(e.target, 0.0);
}

TEST(LemmaChecks, AnisotropicFlatFluxIsZero) {
  LemmaContext ctx = matched_context();
  Matrix g(3, 3);
  g << 0.9, 0.05, 0.0, 0.05, 0.8, 0.0, 0.0, 0.0, 1.1;
  ctx.coeff = CoefficientField::matrix(g);
  ctx.eps_list = {0.25, 0.125};
  ctx.quad = QuadratureOptions{16, 16, 32};
  const auto levels = ctx.levels();
  const TestFunctionSpec tf = default_family();
  for (const VField& v : tf.v) {
    const auto e = check_boundary_flux_E2(ctx, levels, v, tf);
    EXPECT_TRUE(e.pass) << e.name;
  }
}

TEST(LemmaChecks, TestFunctionMustVanishOnGamma) {
  TestFunctionSpec tf;
  tf.phi = Field::constant(1.0);
  EXPECT_THROW(tf.validate(DomainSpec::unit_box(3, BoundaryMode::PeriodicTop)), DomainError);
  TestFunctionSpec big;
  big.v.push_back(VField::custom("100", Field::constant(100.0)));
  EXPECT_THROW(big.validate(DomainSpec::unit_box(3, BoundaryMode::PeriodicTop)), DomainError);
}

TEST(Convergence, FeasibleDataGiveZeroDistances) {
  ConvergenceSetup s;
  s.data.psi = Field::constant(1.0);
  s.data.phi = Field::constant(0.0);
  s.h_list = {0.0625, 0.03125, 0.03125};
  s.h_homogenized = 0.0625;
  s.h_fixed = 0.0625;
  s.mesh.resolution_override = true;
  const ConvergenceReport rep = convergence_study(s);
  ASSERT_TRUE(rep.message.empty()) << rep.message;
  EXPECT_TRUE(rep.reduced);
  for (const auto& r : rep.rows) {
    EXPECT_LE(r.l2_domain, 1e-12);
    EXPECT_LE(r.l2_sigma, 1e-12);
    EXPECT_NEAR(r.energy, 0.0, 1e-10);
  }
  EXPECT_TRUE(rep.all_pass());
}

TEST(Convergence, PenaltyIsSelfConsistentOnTheSlab) {
  ConvergenceSetup s;
  s.eps_list = {0.25};
  s.data.psi = Field::constant(0.0);
  s.data.phi = Field::constant(1.0);
  s.mu_override = 0.5;
  s.h_homogenized = 1.0 / 32.0;
  s.h_fixed = 1.0 / 32.0;
  const ConvergenceReport rep = convergence_study(s);
  ASSERT_TRUE(rep.message.empty()) << rep.message;
  EXPECT_TRUE(rep.pass.at("penalty_self_consistent"));
  const double b = oracle::slab_trace(0.5, 1.0);
  EXPECT_NEAR(rep.homogenized_sigma_mean, b, 1e-8);
  EXPECT_NEAR(rep.homogenized_penalty, 0.5 * (1.0 - b) * (1.0 - b), 1e-8);
  EXPECT_NEAR(rep.homogenized_energy, oracle::slab_energy(0.5, 1.0), 1e-8);
}
