#include <gtest/gtest.h>

#include <random>

#include <dfcrystal/constants.hpp>
#include <dfcrystal/potentials.hpp>

using namespace dfc;

TEST(PeriodicCoulomb, FourierCoefficients) {
    const PeriodicCoulomb g{1.0};
    EXPECT_EQ(g.fourier({0, 0, 0}), 0.0);
    EXPECT_NEAR(g.fourier({1, 0, 0}), 1.0 / pi, 1e-16);
    for (const IVec3& p : {IVec3{1, 2, 3}, IVec3{-2, 0, 1}, IVec3{4, 4, -4}}) {
        EXPECT_GT(g.fourier(p), 0.0);
        EXPECT_EQ(g.fourier(p), g.fourier({-p[0], -p[1], -p[2]}));
    }
}

TEST(CoulombRealspace, ZeroMeanOnUniformGrid) {
    const double ell = 3.0;
    const int pmax = 4, n = 2 * pmax + 2;
    double s = 0.0;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < n; ++c) {
                const Vec3 x = (ell / n) * Vec3(a + 0.5, b + 0.5, c + 0.5);
                s += coulomb_realspace(x, ell, pmax).value;
            }
    EXPECT_LT(std::abs(s / (n * n * n)), 1e-10);
}

TEST(CoulombRealspace, ImaginaryPartCancelsAndSingularFlag) {
    const auto r = coulomb_realspace(Vec3(0.13, -0.27, 0.31), 1.0, 8);
    EXPECT_LT(std::abs(r.imag), 1e-12);
    EXPECT_FALSE(r.near_singular);
    EXPECT_TRUE(coulomb_realspace(Vec3(1e-8, 0, 0), 1.0, 2).near_singular);
    EXPECT_TRUE(coulomb_realspace(Vec3(2.0, 1.0, 0.0), 1.0, 2).near_singular);
    EXPECT_THROW(coulomb_realspace(Vec3(0.1, 0, 0), 1.0, 0), ValidationError);
}

TEST(CoulombRealspace, BoundedDeviationFromBareCoulomb) {
    const double ell = 1.0;
    const double C0 = c0_bound(lattice_sum_inv4(1e-6).value).value;
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int t = 0; t < 12; ++t) {
        Vec3 x(u(rng), u(rng), u(rng));
        if (x.norm() < 0.1) x *= 0.1 / x.norm() * 1.5;
        const double G = coulomb_realspace(x, ell, 48).value;
        EXPECT_LE(std::abs(G - 1.0 / x.norm()), C0 / ell) << x.transpose();
        EXPECT_GE(G, -C0 / ell);
    }
}

TEST(CoulombRealspace, TruncationConverges) {
    const Vec3 x(0.21, -0.33, 0.12);
    const double a = coulomb_realspace(x, 1.0, 64).value;
    const double b = coulomb_realspace(x, 1.0, 128).value;
    EXPECT_LT(std::abs(a - b), 1e-3);
}

TEST(CoulombMatrix, EntriesAndDiagonal) {
    const auto basis = build_basis(1);
    const Mat m = coulomb_matrix(basis, 1.0);
    for (int i = 0; i < basis.dim; ++i) EXPECT_EQ(m(i, i), 0.0);
    const int a = basis.index_of({1, 0, 0}), b = basis.index_of({0, 0, 0});
    for (int s = 0; s < 4; ++s) {
        EXPECT_NEAR(m(4 * a + s, 4 * b + s).real(), 1.0 / pi, 1e-16);
        for (int t = 0; t < 4; ++t)
            if (s != t) EXPECT_EQ(m(4 * a + s, 4 * b + t), 0.0);
    }
    EXPECT_EQ((m - m.adjoint()).norm(), 0.0);
}

TEST(CoulombMatrix, MatchesConvolutionOracle) {
    const double ell = 2.0;
    const auto basis = build_basis(1);
    const Mat m = coulomb_matrix(basis, ell);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    CVec v(basis.dim);
    for (int i = 0; i < basis.dim; ++i) v[i] = cplx(g(rng), g(rng));
    const CVec mv = m * v;
    // (G u)^(k) = sum_k' G^(k - k') u^(k') restricted to the basis
    const PeriodicCoulomb G{ell};
    for (int a = 0; a < basis.n_pw; ++a)
        for (int s = 0; s < 4; ++s) {
            cplx ref = 0.0;
            for (int b = 0; b < basis.n_pw; ++b) {
                const auto& ka = basis.indices[a];
                const auto& kb = basis.indices[b];
                ref += G.fourier({ka[0] - kb[0], ka[1] - kb[1], ka[2] - kb[2]}) * v[4 * b + s];
            }
            EXPECT_LT(std::abs(ref - mv[4 * a + s]), 1e-13);
        }
}

TEST(ExchangeKernel, SingularAndValues) {
    const ExchangeKernel k{1.0, 2};
    EXPECT_TRUE(k.coefficient({0, 0, 0}, Vec3::Zero()).singular);
    const auto e = k.coefficient({1, 0, 0}, Vec3::Zero());
    EXPECT_FALSE(e.singular);
    EXPECT_NEAR(e.value, 1.0 / pi, 1e-15);
    EXPECT_TRUE(k.in_far_part({2, 0, -1}));
    EXPECT_FALSE(k.in_far_part({1, 1, -1}));
}

TEST(ExchangeTable, SingularOnlyOnDiagonalZeroTransfer) {
    const double ell = 3.0;
    const auto grid = build_kgrid(ell, 2, true);
    const auto basis = build_basis(1);
    const auto t = exchange_coefficients(grid, basis, ell);
    EXPECT_EQ(t.pmax, 2);
    for (int i = 0; i < t.nk; ++i)
        for (int j = 0; j < t.nk; ++j)
            for (int a = -t.pmax; a <= t.pmax; ++a)
                for (int b = -t.pmax; b <= t.pmax; ++b)
                    for (int c = -t.pmax; c <= t.pmax; ++c) {
                        const IVec3 p{a, b, c};
                        const bool expect = i == j && a == 0 && b == 0 && c == 0;
                        EXPECT_EQ(t.is_singular(i, j, p), expect);
                        if (!expect) {
                            EXPECT_GT(t.at(i, j, p), 0.0);
                            EXPECT_NEAR(t.at(i, j, p), t.at(j, i, {-a, -b, -c}), 1e-15 * t.at(i, j, p));
                        }
                    }
    EXPECT_THROW(exchange_coefficients(grid, basis, ell, 1), ValidationError);
}

TEST(ExchangeFarPart, CloseToCoulombWithinBound) {
    const double ell = 1.0;
    const double S = lattice_sum_inv4(1e-6).value;
    const double Cge2 = c_ge_m_bound(2, S).value;
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int t = 0; t < 6; ++t) {
        const Vec3 eta = 2.0 * pi / ell * Vec3(u(rng), u(rng), u(rng));
        Vec3 x(u(rng), u(rng), u(rng));
        if (x.norm() < 0.15) x *= 0.15 / x.norm() * 1.5;
        const cplx w = w_far_realspace(eta, x, ell, 2, 40);
        const double G = coulomb_realspace(x, ell, 40).value;
        EXPECT_LE(std::abs(w - G), Cge2 / ell);
    }
}
