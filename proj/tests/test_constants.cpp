#include <gtest/gtest.h>

#include <dfcrystal/constants.hpp>

using namespace dfc;

namespace {

double lattice_value() {
    static const double v = lattice_sum_inv4(1e-6).value;
    return v;
}

}  // namespace

TEST(LatticeSum, FirstShellAndMonotonePartials) {
    // 6 + 12/4 + 8/9
    EXPECT_NEAR(detail::shell_sum_inv4(1), 6.0 + 3.0 + 8.0 / 9.0, 1e-14);
    double prev = 0.0;
    for (int n = 1; n <= 20; ++n) {
        const double s = shell_partial_inv4(n);
        EXPECT_GT(s, prev);
        prev = s;
    }
    const auto L = lattice_sum_inv4(1e-6);
    EXPECT_GT(L.value, shell_partial_inv4(40));
    EXPECT_LT(L.uncertainty, 1e-6);
    EXPECT_NEAR(L.value, 16.5323, 1e-3);
}

TEST(LatticeSum, TailIsRemainder) {
    const double S = lattice_value();
    EXPECT_NEAR(lattice_tail_inv4(1, S), S, 1e-14);
    EXPECT_NEAR(lattice_tail_inv4(2, S), S - detail::shell_sum_inv4(1), 1e-12);
    EXPECT_GT(lattice_tail_inv4(3, S), 0.0);
}

TEST(CubeIntegrals, IndependentRoutesAgree) {
    EXPECT_NEAR(cube_inverse_square_integral(), cube_inverse_square_integral_dyadic(), 1e-5);
    EXPECT_NEAR(cube_inverse_square_integral(), 15.348, 1e-3);
    EXPECT_GT(cube_integral_eight_thirds(), 0.0);
}

TEST(C0, MinimiserInsideWindow) {
    const auto m = c0_bound(lattice_value());
    EXPECT_NEAR(m.value, 5.02, 0.01);
    EXPECT_GT(m.x, 0.4);
    EXPECT_LE(m.x, r_upper);
    for (double R : {0.1, 0.2, 0.3, 0.45}) EXPECT_GE(c0_expression(R, lattice_value()), m.value - 1e-9);
}

TEST(CG, LimitsAndFormula) {
    const double C0 = c0_bound(lattice_value()).value;
    EXPECT_NEAR(cg_constant(1.0, C0), 6.0 * (1.0 + C0), 1e-12);
    EXPECT_NEAR(cg_constant(1e8, C0), 2.0, 1e-6);
    EXPECT_THROW(cg_constant(0.0, C0), ValidationError);
}

TEST(CLeM, ScalesInverselyWithEll) {
    for (int m = 2; m <= 5; ++m) {
        EXPECT_NEAR(c_le_m_ell(m, 1.0) / c_le_m_ell(m, 10.0), 10.0, 1e-12);
        EXPECT_NEAR(c_le_m_ell(m, 4.0) * 4.0 * 2.0 * pi, (2.0 * m - 1.0) * cube_inverse_square_integral(), 1e-12);
    }
    EXPECT_THROW(c_le_m_ell(1, 1.0), ValidationError);
    EXPECT_THROW(c_ge_m_bound(1, lattice_value()), ValidationError);
}

TEST(EE, Ordering) {
    for (double ell : {1.0, 10.0, 100.0}) {
        const auto c = ee_constants(ell, lattice_value());
        EXPECT_LE(c.C_H, c.C_G);
        EXPECT_GE(c.C_EE, c.C_H);
        EXPECT_LT(c.C_EE_dblprime, c.C_EE);
        EXPECT_EQ(c.C_ge_m.size(), 7u);
        EXPECT_LE(c.C_ell, c.C_ell_m2);
    }
}

TEST(CStar, ClosedForm) {
    EXPECT_NEAR(c_star_upper(1, 2.0 * pi), std::sqrt(5.0), 1e-14);
    EXPECT_THROW(c_star_upper(0, 1.0), ValidationError);
    for (int k = 1; k <= 10; ++k) EXPECT_GE(c_star_upper(k, 10.0), free_band_bounds(k, 10.0).upper);
}

TEST(FreeBands, LevelsAndBounds) {
    EXPECT_DOUBLE_EQ(free_level(1, Vec3::Zero(), 3.0), 1.0);
    EXPECT_DOUBLE_EQ(free_level(2, Vec3::Zero(), 3.0), 1.0);
    EXPECT_NEAR(free_level(3, Vec3::Zero(), 3.0), std::sqrt(1.0 + 4.0 * pi * pi / 9.0), 1e-14);
    for (int k = 1; k < 8; ++k) {
        const auto b = free_band_bounds(k, 5.0);
        EXPECT_LE(b.lower, b.upper);
        EXPECT_LE(free_band_bounds(k, 5.0).lower, free_band_bounds(k + 1, 5.0).lower);
    }
    EXPECT_GE(rank_margin(2.0, 0.1, 10.0), 2);
}

TEST(Assumption, DeskCaseHolds) {
    const auto c = ee_constants(10.0, lattice_value());
    const auto a = check_assumption(CrystalParams{10.0, 2.0, 2.0, 1.0 / 137.0}, c);
    EXPECT_TRUE(a.holds());
    EXPECT_GT(a.lambda0, 0.0);
    EXPECT_LT(a.kappa, 1.0);
    EXPECT_GT(a.tau, 0.0);
    EXPECT_GT(a.M_ret, 0.0);
    EXPECT_LT(2.0 * a.A * a.tau, 1.0);
}

TEST(Assumption, LargeChargeFailsAndWeakCouplingPasses) {
    const auto c = ee_constants(10.0, lattice_value());
    EXPECT_FALSE(check_assumption(CrystalParams{10.0, 18.0, 18.0, 1.0 / 137.0}, c).holds());
    EXPECT_TRUE(check_assumption(CrystalParams{10.0, 18.0, 18.0, 1e-6}, c).holds());
    EXPECT_FALSE(check_assumption(CrystalParams{10.0, 2.0, 2.0, 0.9}, c).feasible);
}

TEST(Assumption, MonotoneInCharge) {
    const auto c = ee_constants(10.0, lattice_value());
    double prev_k = 0.0, prev_c1 = 0.0;
    bool failed = false;
    for (int q = 1; q <= 20; ++q) {
        const auto a = check_assumption(CrystalParams{10.0, double(q), double(q), 1.0 / 137.0}, c);
        EXPECT_GT(a.kappa, prev_k);
        EXPECT_GT(a.cond1, prev_c1);
        prev_k = a.kappa;
        prev_c1 = a.cond1;
        if (failed) EXPECT_FALSE(a.holds());
        failed = failed || !a.holds();
    }
    EXPECT_TRUE(failed);
}

TEST(Assumption, AutoPenalty) {
    const auto c = ee_constants(10.0, lattice_value());
    const auto a = check_assumption(CrystalParams{10.0, 2.0, 2.0, 1.0 / 137.0}, c);
    EXPECT_GT(auto_eps_P(a), a.c_star_q1 / (1.0 - a.kappa));
    AssumptionReport bad;
    EXPECT_THROW(auto_eps_P(bad), ModelFailure);
}

TEST(Hardy, ConstantFunction) {
    TrialFunction u;
    u.pmax = 0;
    u.ell = 2.0;
    u.c = {cplx(1.0, 0.0)};
    // int over the cube of |x|^-2 = (l/2) I
    EXPECT_NEAR(hardy_lhs(u, 2.0), cube_inverse_square_integral(), 1e-3);
    EXPECT_NEAR(u.norm2(), 8.0, 1e-14);
    EXPECT_EQ(u.grad_norm2(), 0.0);
}

TEST(Hardy, RandomTrialsBelowOne) {
    for (double ell : {1.0, 10.0}) {
        const auto r = hardy_cube_validate(ell, 30);
        EXPECT_LE(r.worst_ratio, r.worst_ratio_tight);
        EXPECT_LE(r.worst_ratio_tight, 1.0);
        EXPECT_FALSE(r.note.empty());
    }
    EXPECT_THROW(hardy_cube_validate(1.0, 0), ValidationError);
}

TEST(Report, Consistent) {
    const auto r = constants_report(CrystalParams{10.0, 2.0, 2.0, 1.0 / 137.0});
    EXPECT_EQ(r.c_star_table.size(), 3u);
    EXPECT_NEAR(r.cube_integral, r.cube_integral_check, 1e-5);
    EXPECT_NEAR(r.ee.C0, c0_bound(r.lattice.value).value, 1e-12);
}
