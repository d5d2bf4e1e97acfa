#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "dirac.hpp"
#include "lattice.hpp"

namespace dfc {

struct PeriodicCoulomb {
    double ell = 1.0;

    // 1/(pi ell |p|^2), zero-mean gauge at p = 0
    double fourier(const IVec3& p) const {
        const double n2 = norm2(p);
        return n2 == 0.0 ? 0.0 : 1.0 / (pi * ell * n2);
    }
};

struct RealspaceValue {
    double value = 0.0;
    double imag = 0.0;
    bool near_singular = false;
};

inline double distance_to_lattice(const Vec3& x, double ell) {
    Vec3 r;
    for (int j = 0; j < 3; ++j) r[j] = x[j] - ell * std::round(x[j] / ell);
    return r.norm();
}

namespace detail {

inline std::vector<cplx> phases(double theta, int pmax) {
    std::vector<cplx> e(2 * pmax + 1);
    for (int p = -pmax; p <= pmax; ++p) e[p + pmax] = std::polar(1.0, theta * p);
    return e;
}

}  // namespace detail

// truncated Fourier series of G_ell at x
inline RealspaceValue coulomb_realspace(const Vec3& x, double ell, int pmax) {
    if (pmax < 1) throw ValidationError("pmax must be >= 1");
    const double g = 2.0 * pi / ell;
    const auto e1 = detail::phases(g * x[0], pmax);
    const auto e2 = detail::phases(g * x[1], pmax);
    const auto e3 = detail::phases(g * x[2], pmax);
    cplx sum = 0.0;
    for (int a = -pmax; a <= pmax; ++a)
        for (int b = -pmax; b <= pmax; ++b) {
            const cplx e12 = e1[a + pmax] * e2[b + pmax];
            const double ab = double(a) * a + double(b) * b;
            for (int c = -pmax; c <= pmax; ++c) {
                const double n2 = ab + double(c) * c;
                if (n2 == 0.0) continue;
                sum += e12 * e3[c + pmax] / n2;
            }
        }
    RealspaceValue r;
    r.value = sum.real() / (pi * ell);
    r.imag = sum.imag() / (pi * ell);
    r.near_singular = distance_to_lattice(x, ell) < 1e-6 * ell;
    return r;
}

// (a, b) block is G^(k_a - k_b) I_4
inline Mat coulomb_matrix(const PlaneWaveBasis& basis, double ell) {
    const PeriodicCoulomb g{ell};
    Mat m = Mat::Zero(basis.dim, basis.dim);
    for (int a = 0; a < basis.n_pw; ++a)
        for (int b = 0; b < basis.n_pw; ++b) {
            const auto& ka = basis.indices[a];
            const auto& kb = basis.indices[b];
            const double v = g.fourier({ka[0] - kb[0], ka[1] - kb[1], ka[2] - kb[2]});
            if (v == 0.0) continue;
            for (int s = 0; s < 4; ++s) m(4 * a + s, 4 * b + s) = v;
        }
    return m;
}

struct KernelEntry {
    double value = 0.0;
    bool singular = false;
};

struct ExchangeKernel {
    double ell = 1.0;
    int msplit = 2;

    // (4 pi / ell^3) / |2 pi k / ell - eta|^2
    KernelEntry coefficient(const IVec3& k, const Vec3& eta) const {
        const Vec3 d = (2.0 * pi / ell) * to_vec(k) - eta;
        const double n2 = d.squaredNorm();
        if (n2 <= 1e-24 * (2.0 * pi / ell) * (2.0 * pi / ell)) return {0.0, true};
        return {4.0 * pi / (ell * ell * ell) / n2, false};
    }
    bool in_far_part(const IVec3& k) const { return inf_norm(k) >= msplit; }
};

// Coefficients indexed by (xi_i, xi_j, p) with eta = xi_i - xi_j and |p|_inf <= pmax.
struct ExchangeTable {
    int nk = 0;
    int pmax = 0;
    int side = 1;
    int msplit = 2;
    std::vector<double> values;
    std::vector<std::uint8_t> singular;

    int n_transfer() const { return side * side * side; }
    int transfer_index(const IVec3& p) const {
        return ((p[0] + pmax) * side + (p[1] + pmax)) * side + (p[2] + pmax);
    }
    std::size_t slot(int i, int j, const IVec3& p) const {
        return (std::size_t(i) * nk + j) * n_transfer() + transfer_index(p);
    }
    double at(int i, int j, const IVec3& p) const { return values[slot(i, j, p)]; }
    bool is_singular(int i, int j, const IVec3& p) const { return singular[slot(i, j, p)] != 0; }
};

inline ExchangeTable exchange_coefficients(const KGrid& grid, const PlaneWaveBasis& basis, double ell, int msplit = 2) {
    if (msplit < 2) throw ValidationError("msplit must be >= 2");
    ExchangeTable t;
    t.nk = int(grid.size());
    t.pmax = 2 * basis.kmax;
    t.side = 2 * t.pmax + 1;
    t.msplit = msplit;
    const std::size_t n = std::size_t(t.nk) * t.nk * t.n_transfer();
    t.values.assign(n, 0.0);
    t.singular.assign(n, 0);
    const ExchangeKernel ker{ell, msplit};
    for (int i = 0; i < t.nk; ++i)
        for (int j = 0; j < t.nk; ++j) {
            const Vec3 eta = grid.points[i] - grid.points[j];
            for (int a = -t.pmax; a <= t.pmax; ++a)
                for (int b = -t.pmax; b <= t.pmax; ++b)
                    for (int c = -t.pmax; c <= t.pmax; ++c) {
                        const IVec3 p{a, b, c};
                        const auto e = ker.coefficient(p, eta);
                        const auto s = t.slot(i, j, p);
                        t.values[s] = e.value;
                        t.singular[s] = e.singular ? 1 : 0;
                    }
        }
    return t;
}

// truncated series of W_{>=m}(eta, x), |k|_inf in [m, kcut]
inline cplx w_far_realspace(const Vec3& eta, const Vec3& x, double ell, int m, int kcut) {
    const double g = 2.0 * pi / ell;
    const auto e1 = detail::phases(g * x[0], kcut);
    const auto e2 = detail::phases(g * x[1], kcut);
    const auto e3 = detail::phases(g * x[2], kcut);
    cplx sum = 0.0;
    for (int a = -kcut; a <= kcut; ++a)
        for (int b = -kcut; b <= kcut; ++b)
            for (int c = -kcut; c <= kcut; ++c) {
                if (std::max({std::abs(a), std::abs(b), std::abs(c)}) < m) continue;
                const Vec3 d = g * Vec3(a, b, c) - eta;
                sum += e1[a + kcut] * e2[b + kcut] * e3[c + kcut] / d.squaredNorm();
            }
    return (4.0 * pi / (ell * ell * ell)) * std::polar(1.0, -eta.dot(x)) * sum;
}

}  // namespace dfc
