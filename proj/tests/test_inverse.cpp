#include <gtest/gtest.h>

#include <numbers>

#include "nlinv/pipeline.hpp"
#include "oracles.hpp"

using namespace nlinv;
constexpr double pi = std::numbers::pi;

namespace {

struct Bank {
  DomainPtr d;
  DiscretizationPtr disc;
  FieldBank bank;
};

Bank basic_bank(int n) {
  Bank b;
  b.d = oracle::disk(n);
  b.disc = make_discretization(b.d);
  b.bank.emplace("one", harmonic_polynomial(b.d, 0, Parity::re).field);
  b.bank.emplace("x", harmonic_polynomial(b.d, 1, Parity::re).field);
  b.bank.emplace("y", harmonic_polynomial(b.d, 1, Parity::im).field);
  return b;
}

DtnSimulator simulator(const DiscretizationPtr& disc, const RVec& q, std::vector<RVec> V = {}) {
  auto c = NonlinearCoefficients::zero(disc->dom(), 5);
  c.q = q;
  for (size_t k = 0; k < V.size(); ++k) c.V[k] = V[k];
  return DtnSimulator(SemilinearSolver(disc, c));
}

MomentRecord boundary_moment(const DtnSimulator& sim, const Bank& b, const std::string& a, const std::string& c,
                             const std::string& last) {
  const Mask all = full_mask(*b.d);
  const auto rec = sim.second_linearization(trace_of(b.bank.at(a), all), trace_of(b.bank.at(c), all), {});
  return moment_from_boundary(rec, b.bank.at(last), {a, c, last});
}

}  // namespace

TEST(Inverse, InteriorMomentTrivialChecks) {
  const Bank b = basic_bank(64);
  const RVec one = RVec::Ones(b.d->n_nodes());
  EXPECT_EQ(std::abs(interior_moment(*b.disc, RVec::Zero(b.d->n_nodes()), {"x", "x", "one"}, 2, b.bank).value), 0.0);
  EXPECT_LT(std::abs(interior_moment(*b.disc, one, {"x", "y", "one"}, 2, b.bank).value), 1e-12);
  EXPECT_NEAR(interior_moment(*b.disc, one, {"x", "x", "one"}, 2, b.bank).value.real(), pi, 0.01 * pi);
  // int x^2 over the disk = pi / 4
  EXPECT_NEAR(interior_moment(*b.disc, one, {"x", "x", "one", "one"}, 3, b.bank).value.real(), pi / 4, 0.01 * pi / 4);
}

TEST(Inverse, BoundaryMomentTrivialChecks) {
  const Bank b = basic_bank(64);
  const auto zero = simulator(b.disc, RVec::Zero(b.d->n_nodes()));
  EXPECT_LT(std::abs(boundary_moment(zero, b, "x", "x", "one").value), 1e-8);
  const auto unit = simulator(b.disc, RVec::Ones(b.d->n_nodes()));
  const auto orth = boundary_moment(unit, b, "x", "y", "one");
  EXPECT_LT(std::abs(orth.value), std::max(orth.error, 1e-8));
  EXPECT_NEAR(boundary_moment(unit, b, "x", "x", "one").value.real(), pi, 0.01 * pi);
}

TEST(Inverse, BoundaryMomentRejectsLeakingTestFunction) {
  const auto d = oracle::disk(32, {0.0, pi}, {0.0, pi});
  const auto disc = make_discretization(d);
  const auto sim = simulator(disc, RVec::Ones(d->n_nodes()));
  BoundaryTrace f{d, d->gamma1, CVec::Zero(d->n_outer)};
  for (int b = 0; b < d->n_outer; ++b)
    if (d->gamma1[b]) f.values[b] = std::sin(d->boundary_param[b]);
  const auto rec = sim.second_linearization(f, f, {});
  EXPECT_THROW(moment_from_boundary(rec, harmonic_polynomial(d, 0, Parity::re).field, {"a", "a", "one"}), SupportViolation);
  EXPECT_THROW(moment_from_boundary(sim.first_linearization(f, {}), harmonic_polynomial(d, 0, Parity::re).field, {"a", "one"}),
               Error);
}

TEST(Inverse, BoundaryAndInteriorMomentsAgree) {
  const auto d = oracle::disk(32);
  const auto disc = make_discretization(d);
  const RVec q = oracle::gaussian(*d);
  const auto sim = simulator(disc, q);
  QExperimentOptions o;
  o.functions.max_degree = 3;
  o.n_triplets = 40;
  const auto res = run_q_experiment(sim, o, q);
  EXPECT_EQ(res.comparison.compared, 40);
  EXPECT_GE(res.comparison.consistent, 40);
}

TEST(Inverse, ZeroQIsRecoveredAsZero) {
  const auto d = oracle::disk(32);
  const auto disc = make_discretization(d);
  const auto sim = simulator(disc, RVec::Zero(d->n_nodes()));
  QExperimentOptions o;
  o.functions.max_degree = 3;
  o.n_triplets = 40;
  const auto res = run_q_experiment(sim, o);
  EXPECT_LT(l2_norm(*d, res.recon.field.values), 1e-6);
}

TEST(Inverse, GaussianQFromInteriorMoments) {
  const auto d = oracle::disk(32);
  const auto disc = make_discretization(d);
  const RVec q = oracle::gaussian(*d);
  const auto sim = simulator(disc, q);
  QExperimentOptions o;
  o.source = MomentSource::interior_oracle;
  const auto res = run_q_experiment(sim, o, q);
  ASSERT_TRUE(res.recon.report.relative_l2_error);
  EXPECT_LT(*res.recon.report.relative_l2_error, 0.02);
  EXPECT_EQ(sim.solves(), 0);
}

TEST(Inverse, GaussianQFromInteriorMomentsOnFinerGrid) {
  const auto d = oracle::disk(64);
  const auto disc = make_discretization(d);
  const RVec q = oracle::gaussian(*d);
  const auto sim = simulator(disc, q);
  QExperimentOptions o;
  o.source = MomentSource::interior_oracle;
  o.n_triplets = 400;
  o.recon.fourier_modes = 11;
  const auto res = run_q_experiment(sim, o, q);
  EXPECT_LT(*res.recon.report.relative_l2_error, 0.02);
  EXPECT_EQ(sim.solves(), 0);
}

TEST(Inverse, GaussianQFromBoundaryDataAtSmallScale) {
  const auto d = oracle::disk(32);
  const auto disc = make_discretization(d);
  const RVec q = oracle::gaussian(*d);
  const auto sim = simulator(disc, q);
  QExperimentOptions o;
  o.functions.max_degree = 4;
  o.n_triplets = 200;
  const auto res = run_q_experiment(sim, o, q);
  EXPECT_LT(*res.recon.report.relative_l2_error, 0.15);
  EXPECT_FALSE(res.recon.report.rank_deficient);
}

TEST(Inverse, CubicCoefficientFromInteriorMoments) {
  const auto d = oracle::disk(32);
  const auto disc = make_discretization(d);
  const RVec v3 = oracle::on_nodes(*d, [](double x, double) { return 1 + x; });
  auto c = NonlinearCoefficients::zero(*d, 3);
  c.V[0] = v3;
  const DtnSimulator sim(SemilinearSolver(disc, c));
  const SemilinearSolver known(disc, NonlinearCoefficients::zero(*d, 3));
  VExperimentOptions o;
  o.source = MomentSource::interior_oracle;
  const auto res = run_v_experiment(sim, known, o, v3);
  EXPECT_LT(*res.recon.report.relative_l2_error, 0.1);
}

TEST(Inverse, KnownPartSubtractionCancelsTheQContribution) {
  const auto d = oracle::disk(32);
  const auto disc = make_discretization(d);
  auto c = NonlinearCoefficients::zero(*d, 3);
  c.q.setConstant(1.0);
  const SemilinearSolver model(disc, c);
  const DtnSimulator sim(model);
  const Mask all = full_mask(*d);
  const std::vector<BoundaryTrace> fs{trace_of(harmonic_polynomial(d, 1, Parity::re).field, all),
                                      trace_of(harmonic_polynomial(d, 2, Parity::im).field, all),
                                      trace_of(harmonic_polynomial(d, 1, Parity::im).field, all)};
  const auto rec = sim.mth_linearization(fs, {});
  const auto sub = subtract_known_part(rec, model);
  EXPECT_GT(rec.output.sup_norm(), 1e-3);
  EXPECT_LT(sub.output.sup_norm(), 1e-4 * rec.output.sup_norm());
}

TEST(Inverse, RecoveryRejectsMismatchedOrders) {
  const Bank b = basic_bank(32);
  const MomentRecord m3 = interior_moment(*b.disc, RVec::Ones(b.d->n_nodes()), {"x", "x", "one", "one"}, 3, b.bank);
  EXPECT_THROW(recover_q(*b.disc, {m3}, b.bank, {}), Error);
  EXPECT_THROW(recover_Vm(*b.disc, 6, {m3}, b.bank, {}), Error);
  EXPECT_THROW(recover_Vm(*b.disc, 4, {m3}, b.bank, {}), Error);
}

TEST(Inverse, SamplingIsDeterministic) {
  const auto a = sample_tuples(13, 2, 13, 400, 1), b = sample_tuples(13, 2, 13, 400, 1);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, sample_tuples(13, 2, 13, 400, 2));
  EXPECT_EQ(a.size(), 400u);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(std::adjacent_find(a.begin(), a.end()), a.end());
  for (const auto& t : a) {
    ASSERT_EQ(t.size(), 3u);
    EXPECT_LE(t[0], t[1]);
    EXPECT_LT(t[1], 13);
    EXPECT_LT(t[2], 13);
  }
  EXPECT_EQ(sample_tuples(3, 2, 2, 1000, 1).size(), 12u);
  const auto m = sample_multisets(9, 3, 40, 7);
  EXPECT_EQ(m, sample_multisets(9, 3, 40, 7));
  for (const auto& t : m) EXPECT_TRUE(std::is_sorted(t.begin(), t.end()));
}

TEST(Inverse, DensityInSpanTarget) {
  const auto d = oracle::disk(32);
  const auto disc = make_discretization(d);
  const auto basis = density_basis(*disc, Mask(d->n_outer, 0), 4, 0);
  const CVec g = oracle::grad_dot(*disc, basis[2], basis[5]);
  Field target{d, CVec::Zero(d->n_nodes())};
  target.values.head(d->n_interior) = g;
  const auto rep = density_check(*disc, basis, target, {2, 4, 6, 8});
  EXPECT_TRUE(rep.monotone);
  EXPECT_LE(rep.residual[2], 1e-6);
  EXPECT_LE(rep.residual[3], 1e-6);
}

TEST(Inverse, DensityConstantTargetOnTheFullBoundary) {
  const auto d = oracle::disk(32);
  const auto disc = make_discretization(d);
  const auto basis = density_basis(*disc, Mask(d->n_outer, 0), 6, 0);
  const auto rep = density_check(*disc, basis, sample(d, [](double, double) { return cplx(1.0); }), {2, 4, 8, 12});
  EXPECT_TRUE(rep.monotone);
  EXPECT_LE(rep.residual.back(), 1e-3);
}

TEST(Inverse, DensityBumpWithHalfCircleIsNonIncreasing) {
  const auto d = oracle::disk(32);
  const auto disc = make_discretization(d);
  Mask gt(d->n_outer, 0);
  for (int b = 0; b < d->n_outer; ++b) gt[b] = d->boundary_param[b] > pi;
  const auto basis = density_basis(*disc, gt, 5, 0);
  Field target{d, oracle::gaussian(*d).cast<cplx>()};
  const auto rep = density_check(*disc, basis, target, {2, 4, 6, 8, 10});
  EXPECT_TRUE(rep.monotone);
  for (size_t k = 1; k < rep.residual.size(); ++k) EXPECT_LE(rep.residual[k], rep.residual[k - 1] * (1 + 1e-12));
  EXPECT_LT(rep.residual.back(), rep.residual.front());
}

TEST(Inverse, DensityRejectsBadInput) {
  const auto d = oracle::disk(32);
  const auto disc = make_discretization(d);
  const auto basis = density_basis(*disc, Mask(d->n_outer, 0), 2, 0);
  const Field one = sample(d, [](double, double) { return cplx(1.0); });
  EXPECT_THROW(density_check(*disc, basis, one, {4, 2}), Error);
  EXPECT_THROW(density_check(*disc, basis, one, {40}), Error);
  EXPECT_THROW(density_check(*disc, basis, Field{d, CVec::Zero(d->n_nodes())}, {2}), Error);
}

TEST(Inverse, ObstacleRecoveredAtSmallScale) {
  DomainConfig cfg;
  cfg.n_cells_per_side = 32;
  cfg.obstacle = CircleParams{{0.1, -0.05}, 0.25};
  const auto d = build_domain(cfg);
  const auto sim = simulator(make_discretization(d), RVec::Ones(d->n_nodes()), {RVec::Ones(d->n_nodes())});
  ObstacleExperimentOptions o;
  o.n_inputs = 3;
  o.search.center_min = {-0.4, -0.4};
  o.search.center_max = {0.4, 0.4};
  o.search.grid_center = 5;
  o.search.grid_radius = 5;
  const auto res = run_obstacle_experiment(sim, o);
  EXPECT_FALSE(res.report.non_identifiable);
  EXPECT_LT(std::hypot(res.report.best.center[0] - 0.1, res.report.best.center[1] + 0.05), 0.02);
  EXPECT_LT(std::abs(res.report.best.radius - 0.25), 0.01);
}

TEST(Inverse, DistinctObstaclesGiveDistinctData) {
  DomainConfig cfg;
  cfg.n_cells_per_side = 32;
  std::vector<BoundaryTrace> out;
  for (double r : {0.2, 0.3}) {
    cfg.obstacle = CircleParams{{0.0, 0.0}, r};
    const auto d = build_domain(cfg);
    const auto sim = simulator(make_discretization(d), RVec::Ones(d->n_nodes()));
    out.push_back(sim.first_linearization(positive_inputs(d, 1)[0], {}).output);
  }
  EXPECT_GT((out[0].values - out[1].values).cwiseAbs().maxCoeff(), 1e3 * 1e-10);
}

TEST(Inverse, CgoFourierCoefficientOfGaussian) {
  const auto d = oracle::disk(32);
  const auto disc = make_discretization(d);
  const RVec q = oracle::gaussian(*d);
  const auto sim = simulator(disc, q);
  const auto est = run_cgo_fourier(sim, {{1.0, 0.0}, {0.0, 2.0}}, {}, q);
  for (const auto& e : est) EXPECT_LT(std::abs(e.estimate - *e.truth), 0.05 * std::abs(*e.truth));
  EXPECT_THROW(cgo_fourier_coefficient(sim, {0.0, 0.0}, {}), ZeroFrequency);
}
