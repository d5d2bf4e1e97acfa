#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "lattice.hpp"

namespace dfc {

// ---------------------------------------------------------------- lattice sum

struct LatticeSum {
    double value = 0.0;
    double partial = 0.0;
    double tail = 0.0;
    double uncertainty = 0.0;
    int shells = 0;
};

namespace detail {

template <class F>
double square_integral(F f, double tol = 1e-13) {
    using boost::math::quadrature::gauss_kronrod;
    auto inner = [&](double y) {
        return gauss_kronrod<double, 31>::integrate([&](double x) { return f(x, y); }, 0.0, 1.0, 12, tol);
    };
    // symmetric integrand on [-1,1]^2
    return 4.0 * gauss_kronrod<double, 31>::integrate(inner, 0.0, 1.0, 12, tol);
}

inline double shell_sum_inv4(int n) {
    if (n == 0) return 0.0;
    double s = 0.0;
    for (int a = -n; a <= n; ++a)
        for (int b = -n; b <= n; ++b) {
            const bool edge = std::abs(a) == n || std::abs(b) == n;
            const double ab = double(a) * a + double(b) * b;
            if (edge) {
                for (int c = -n; c <= n; ++c) {
                    const double r2 = ab + double(c) * c;
                    s += 1.0 / (r2 * r2);
                }
            } else {
                const double r2 = ab + double(n) * n;
                s += 2.0 / (r2 * r2);
            }
        }
    return s;
}

}  // namespace detail

// surface integral of |x|^-4 over the boundary of [-1,1]^3
inline double cube_surface_inv4() {
    static const double v =
        6.0 * detail::square_integral([](double x, double y) { return std::pow(1.0 + x * x + y * y, -2.0); });
    return v;
}

inline double shell_partial_inv4(int nmax) {
    double s = 0.0;
    for (int n = 1; n <= nmax; ++n) s += detail::shell_sum_inv4(n);
    return s;
}

// sum over k != 0 of |k|^-4 by shells |k|_inf = n plus an integral tail c/(N+1/2)
inline LatticeSum lattice_sum_inv4(double tol = 1e-3) {
    if (!(tol > 0.0)) throw ValidationError("lattice_sum_inv4: tol must be positive");
    const double c = cube_surface_inv4();
    std::vector<double> partial{0.0};
    auto estimate = [&](int n) { return partial[n] + c / (n + 0.5); };
    auto grow = [&](int n) {
        while (int(partial.size()) <= n) {
            const int k = int(partial.size());
            partial.push_back(partial.back() + detail::shell_sum_inv4(k));
        }
    };
    LatticeSum r;
    for (int n = 8;; n *= 2) {
        grow(n);
        const double u = std::abs(estimate(n) - estimate(n / 2));
        r.shells = n;
        r.partial = partial[n];
        r.tail = c / (n + 0.5);
        r.value = estimate(n);
        r.uncertainty = u;
        if (u < tol || n >= 1024) break;
    }
    return r;
}

// sum over |k|_inf >= m of |k|^-4
inline double lattice_tail_inv4(int m, double total) { return total - shell_partial_inv4(m - 1); }

// ---------------------------------------------------------------- cube integrals

// int over [-1,1]^3 of |x|^-2: unit ball (4 pi) plus the part of the cube outside it
inline double cube_inverse_square_integral() {
    static const double v = 4.0 * pi + 6.0 * detail::square_integral([](double x, double y) {
                                           const double r2 = 1.0 + x * x + y * y;
                                           return 1.0 / r2 - std::pow(r2, -1.5);
                                       });
    return v;
}

// same integral by dyadic scaling: I = 16 J, J over [0,1]^3 minus [0,1/2]^3
inline double cube_inverse_square_integral_dyadic(int split = 2) {
    using G = boost::math::quadrature::gauss<double, 20>;
    std::vector<double> x, w;
    for (std::size_t i = 0; i < G::abscissa().size(); ++i) {
        const double a = G::abscissa()[i];
        const double b = G::weights()[i];
        x.push_back(a);
        w.push_back(b);
        if (a != 0.0) {
            x.push_back(-a);
            w.push_back(b);
        }
    }
    const double h = 0.5 / split;
    double J = 0.0;
    for (int ci = 0; ci < 2 * split; ++ci)
        for (int cj = 0; cj < 2 * split; ++cj)
            for (int ck = 0; ck < 2 * split; ++ck) {
                if (ci < split && cj < split && ck < split) continue;
                const double o1 = (ci + 0.5) * h, o2 = (cj + 0.5) * h, o3 = (ck + 0.5) * h;
                double s = 0.0;
                for (std::size_t a = 0; a < x.size(); ++a)
                    for (std::size_t b = 0; b < x.size(); ++b)
                        for (std::size_t c = 0; c < x.size(); ++c) {
                            const double p1 = o1 + 0.5 * h * x[a], p2 = o2 + 0.5 * h * x[b], p3 = o3 + 0.5 * h * x[c];
                            s += w[a] * w[b] * w[c] / (p1 * p1 + p2 * p2 + p3 * p3);
                        }
                J += s * std::pow(0.5 * h, 3);
            }
    return 16.0 * J;
}

// 18 * int over [-1,1]^2 of (1+x^2+y^2)^(-4/3)
inline double cube_integral_eight_thirds() {
    static const double v =
        18.0 * detail::square_integral([](double x, double y) { return std::pow(1.0 + x * x + y * y, -4.0 / 3.0); });
    return v;
}

// ---------------------------------------------------------------- minimisation

struct Minimum {
    double x = 0.0;
    double value = 0.0;
};

template <class F>
Minimum golden_section(F f, double a, double b, double tol = 1e-6) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    const double x = 0.5 * (a + b);
    return {x, f(x)};
}

inline constexpr double r_lower = 1e-3;
inline constexpr double r_upper = 0.5 - 1e-6;

inline double ball_average_term(double R, double lattice_sum) {
    const double v = 4.0 * pi * R * R * R / 3.0;
    return 3.0 / (4.0 * pi * pi * R * R * R) * std::min(std::sqrt(v), std::sqrt(std::max(0.0, 1.0 - v))) *
           std::sqrt(lattice_sum);
}

inline double c0_expression(double R, double lattice_sum) {
    return 3.0 / (2.0 * R) + 2.0 * pi * R * R / 5.0 + ball_average_term(R, lattice_sum);
}

inline Minimum c0_bound(double lattice_sum) {
    return golden_section([&](double R) { return c0_expression(R, lattice_sum); }, r_lower, r_upper);
}

inline double c_ge_m_expression(int m, double R, double lattice_sum) {
    const double tail = lattice_tail_inv4(m, lattice_sum);
    const double mm = m;
    return std::sqrt(3.0) / (2.0 * std::pow(pi * R, 1.5)) * (mm * mm + 2.0) / ((mm - 1.0) * (mm - 1.0)) *
               std::sqrt(tail) +
           2.0 * pi * (std::pow(2.0 * mm - 1.0, 3) + 1.0) * R * R / 5.0 + ball_average_term(R, lattice_sum);
}

inline Minimum c_ge_m_bound(int m, double lattice_sum) {
    if (m < 2) throw ValidationError("c_ge_m_bound: m must be >= 2");
    return golden_section([&](double R) { return c_ge_m_expression(m, R, lattice_sum); }, r_lower, r_upper);
}

inline double c_le_m_ell(int m, double ell) {
    if (m < 2 || !(ell > 0.0)) throw ValidationError("c_le_m_ell: need m >= 2, ell > 0");
    return (2.0 * m - 1.0) / (2.0 * pi * ell) * cube_inverse_square_integral();
}

inline double c_le_m_ell_prime(int m, double ell) {
    const double a = (2.0 * m - 1.0) * pi / ell;
    const double vol = std::pow(2.0 * m - 1.0, 3) * std::pow(2.0 * pi / ell, 3);
    return std::pow(std::cbrt(a) * cube_integral_eight_thirds(), 0.75) * std::pow(vol, 0.25) / (2.0 * pi * pi);
}

inline double cg_constant(double ell, double C0) {
    if (!(ell > 0.0)) throw ValidationError("cg_constant: ell must be positive");
    return 2.0 * (1.0 + C0 / ell) * std::max(std::sqrt(1.0 + 3.0 / ell), std::sqrt(3.0 / ell + 6.0 / (ell * ell)));
}

inline double c_star_upper(int k, double ell) {
    if (k < 1) throw ValidationError("c_star_upper: k must be >= 1");
    const double kk = k + 1.0;
    return std::sqrt(1.0 + 4.0 * pi * pi * kk * kk / (ell * ell));
}

// ---------------------------------------------------------------- free band bounds

// k-th positive free level (multiplicity two per plane wave) at xi
inline double free_level(int k, const Vec3& xi, double ell) {
    const int need = (k + 1) / 2;
    const int P = int(std::ceil(std::cbrt(double(need)))) + 2;
    std::vector<double> e;
    e.reserve(std::size_t(std::pow(2 * P + 1, 3)));
    for (int a = -P; a <= P; ++a)
        for (int b = -P; b <= P; ++b)
            for (int c = -P; c <= P; ++c) e.push_back((xi + (2.0 * pi / ell) * Vec3(a, b, c)).squaredNorm());
    std::nth_element(e.begin(), e.begin() + (need - 1), e.end());
    return std::sqrt(1.0 + e[need - 1]);
}

struct BandBounds {
    double lower = 0.0;
    double upper = 0.0;
};

// inf and sup over xi of the k-th level, sampled on the octant [0, pi/ell]^3
inline BandBounds free_band_bounds(int k, double ell, int samples = 12) {
    BandBounds b{std::numeric_limits<double>::infinity(), 0.0};
    for (int i = 0; i <= samples; ++i)
        for (int j = 0; j <= i; ++j)
            for (int l = 0; l <= j; ++l) {
                const Vec3 xi = (pi / ell / samples) * Vec3(i, j, l);
                const double v = free_level(k, xi, ell);
                b.lower = std::min(b.lower, v);
                b.upper = std::max(b.upper, v);
            }
    return b;
}

// smallest M >= 2 with c_*(q+M) > e, e just above c^*(q+1)/(1-kappa)
inline int rank_margin(double q, double kappa, double ell, int samples = 12) {
    const int qi = int(std::ceil(q - 1e-12));
    const double e = free_band_bounds(qi + 1, ell, samples).upper / (1.0 - kappa) * (1.0 + 1e-9);
    for (int M = 2; M < 100000; ++M)
        if (free_band_bounds(qi + M, ell, samples).lower > e) return M;
    throw NumericError("rank_margin: no M found");
}

// ---------------------------------------------------------------- reports

struct EEConstants {
    double C0 = 0.0;
    double C_G = 0.0;
    double C_H = 0.0;
    std::vector<double> C_ge_m;  // m = 2..8
    std::vector<double> C_ge_m_R;
    std::vector<double> C_le_m;
    std::vector<double> C_le_m_prime;
    int m_best = 2;
    int m_best_prime = 2;
    double C_ell = 0.0;
    double C_ell_m2 = 0.0;
    double C_ell_prime = 0.0;
    double C_W = 0.0, C_W_prime = 0.0, C_W_dblprime = 0.0;
    double C_EE = 0.0, C_EE_prime = 0.0, C_EE_dblprime = 0.0;
};

inline constexpr int m_search_max = 8;

inline EEConstants ee_constants(double ell, double lattice_sum) {
    EEConstants c;
    c.C0 = c0_bound(lattice_sum).value;
    c.C_G = cg_constant(ell, c.C0);
    c.C_H = c.C_G;
    c.C_ell = c.C_ell_prime = std::numeric_limits<double>::infinity();
    for (int m = 2; m <= m_search_max; ++m) {
        const auto g = c_ge_m_bound(m, lattice_sum);
        c.C_ge_m.push_back(g.value);
        c.C_ge_m_R.push_back(g.x);
        c.C_le_m.push_back(c_le_m_ell(m, ell));
        c.C_le_m_prime.push_back(c_le_m_ell_prime(m, ell));
        const double v = g.value / ell + c.C_le_m.back();
        const double vp = g.value / ell + c.C_le_m_prime.back();
        if (m == 2) c.C_ell_m2 = v;
        if (v < c.C_ell) {
            c.C_ell = v;
            c.m_best = m;
        }
        if (vp < c.C_ell_prime) {
            c.C_ell_prime = vp;
            c.m_best_prime = m;
        }
    }
    c.C_W = c.C_H + c.C_ell;
    c.C_W_prime = c.C_G + c.C_ell;
    c.C_W_dblprime = c.C_H + c.C_ell_prime;
    c.C_EE = c.C_H + c.C_ell;
    c.C_EE_prime = c.C_G + c.C_ell;
    c.C_EE_dblprime = 2.0 * c.C0 / ell + c.C_ell;
    return c;
}

struct AssumptionReport {
    bool feasible = false;  // kappa < 1
    double kappa = 0.0;
    double lambda0 = 0.0;
    double A = 0.0;
    double tau = 0.0;
    double M_ret = 0.0;
    double c_star_q1 = 0.0;
    double cond1 = 0.0;
    double cond2 = 0.0;
    std::optional<double> cond2_eps;
    bool cond1_holds = false;
    bool cond2_holds = false;
    bool holds() const { return feasible && cond1_holds && cond2_holds; }
};

inline AssumptionReport check_assumption(const CrystalParams& p, const EEConstants& c,
                                         std::optional<double> eps_P = std::nullopt) {
    p.validate(true);
    AssumptionReport r;
    const double a = p.alpha, qp = p.q_plus();
    r.kappa = a * (c.C_G * p.z + c.C_EE_prime * qp);
    r.cond1 = r.kappa + 0.5 * a * c.C_EE * qp;
    r.cond1_holds = r.cond1 < 1.0;
    r.c_star_q1 = c_star_upper(int(std::ceil(p.q - 1e-12)) + 1, p.ell);
    r.feasible = r.kappa < 1.0;
    if (!r.feasible) return r;
    r.lambda0 = 1.0 - a * std::max(c.C_H * p.z + c.C_EE_dblprime * qp, c.C0 * p.z / p.ell + c.C_EE * qp);
    if (r.lambda0 <= 0.0) {
        r.feasible = false;
        return r;
    }
    r.A = 0.5 * a * c.C_EE / std::sqrt(1.0 - r.kappa) / std::sqrt(r.lambda0);
    if (r.cond1_holds) {
        const double inner = std::max(r.c_star_q1 * p.q / ((1.0 - r.cond1) * (1.0 - r.kappa)), 1.0);
        r.cond2 = 2.0 * r.A * std::sqrt(inner * qp);
        if (eps_P) r.cond2_eps = 2.0 * r.A * std::sqrt(std::max(*eps_P * p.q / (1.0 - r.cond1), 1.0) * qp);
    } else {
        r.cond2 = std::numeric_limits<double>::infinity();
    }
    r.cond2_holds = r.cond2 < 1.0;
    if (2.0 * r.A < 1.0) {
        r.tau = 0.5 * (1.0 + 1.0 / (2.0 * r.A));
        r.M_ret = std::max((2.0 + r.A * qp) / 2.0, 1.0 / (1.0 - 2.0 * r.A * r.tau));
    }
    return r;
}

struct ConstantsReport {
    CrystalParams params;
    LatticeSum lattice;
    double C0_R = 0.0;
    double cube_integral = 0.0;
    double cube_integral_check = 0.0;
    EEConstants ee;
    std::vector<std::pair<int, double>> c_star_table;
    AssumptionReport assumption;
};

inline ConstantsReport constants_report(const CrystalParams& p, std::optional<double> eps_P = std::nullopt) {
    ConstantsReport r;
    r.params = p;
    r.lattice = lattice_sum_inv4(1e-6);
    r.C0_R = c0_bound(r.lattice.value).x;
    r.cube_integral = cube_inverse_square_integral();
    r.cube_integral_check = cube_inverse_square_integral_dyadic();
    r.ee = ee_constants(p.ell, r.lattice.value);
    const int qi = int(std::ceil(p.q - 1e-12));
    for (int k = 1; k <= qi + 1; ++k) r.c_star_table.emplace_back(k, c_star_upper(k, p.ell));
    r.assumption = check_assumption(p, r.ee, eps_P);
    return r;
}

// eps_P = 1.05 c^*(q+1) / (1 - kappa)
inline double auto_eps_P(const AssumptionReport& a) {
    if (!a.feasible) throw ModelFailure("auto eps_P needs kappa < 1");
    return 1.05 * a.c_star_q1 / (1.0 - a.kappa);
}

// ---------------------------------------------------------------- Hardy validation

struct HardyReport {
    int trials = 0;
    double worst_ratio = 0.0;        // against (4l+24)/l, (48+24l)/l^2
    double worst_ratio_tight = 0.0;  // against (4l+12)/l, (24+12l)/l^2
    std::string note;
};

struct HardyCoefficients {
    double grad = 0.0;
    double mass = 0.0;
};

inline HardyCoefficients hardy_loose(double ell) { return {(4.0 * ell + 24.0) / ell, (48.0 + 24.0 * ell) / (ell * ell)}; }
inline HardyCoefficients hardy_tight(double ell) { return {(4.0 * ell + 12.0) / ell, (24.0 + 12.0 * ell) / (ell * ell)}; }

struct TrialFunction {
    int pmax = 0;
    double ell = 1.0;
    std::vector<cplx> c;  // lexicographic over |p|_inf <= pmax

    cplx operator()(const Vec3& x) const {
        const int s = 2 * pmax + 1;
        const double g = 2.0 * pi / ell;
        std::vector<cplx> e1(s), e2(s), e3(s);
        for (int p = -pmax; p <= pmax; ++p) {
            e1[p + pmax] = std::polar(1.0, g * p * x[0]);
            e2[p + pmax] = std::polar(1.0, g * p * x[1]);
            e3[p + pmax] = std::polar(1.0, g * p * x[2]);
        }
        cplx v = 0.0;
        std::size_t i = 0;
        for (int a = 0; a < s; ++a)
            for (int b = 0; b < s; ++b) {
                const cplx ab = e1[a] * e2[b];
                for (int d = 0; d < s; ++d) v += c[i++] * ab * e3[d];
            }
        return v;
    }
    double norm2() const {
        double s = 0.0;
        for (auto z : c) s += std::norm(z);
        return s * ell * ell * ell;
    }
    double grad_norm2() const {
        const int s = 2 * pmax + 1;
        const double g = 2.0 * pi / ell;
        double t = 0.0;
        std::size_t i = 0;
        for (int a = 0; a < s; ++a)
            for (int b = 0; b < s; ++b)
                for (int d = 0; d < s; ++d) {
                    const double p2 = double((a - pmax) * (a - pmax) + (b - pmax) * (b - pmax) + (d - pmax) * (d - pmax));
                    t += std::norm(c[i++]) * g * g * p2;
                }
        return t * ell * ell * ell;
    }
};

// int over (-l/2, l/2]^3 of |u|^2/|x|^2 through six pyramids x = t (s1, s2, +-l/2)
template <class U>
double hardy_lhs(const U& u, double ell, int order = 24) {
    std::vector<double> x, w;
    {
        auto add = [&](const auto& abs, const auto& wts) {
            for (std::size_t i = 0; i < abs.size(); ++i) {
                x.push_back(abs[i]);
                w.push_back(wts[i]);
                if (abs[i] != 0.0) {
                    x.push_back(-abs[i]);
                    w.push_back(wts[i]);
                }
            }
        };
        if (order <= 16)
            add(boost::math::quadrature::gauss<double, 16>::abscissa(), boost::math::quadrature::gauss<double, 16>::weights());
        else if (order <= 24)
            add(boost::math::quadrature::gauss<double, 24>::abscissa(), boost::math::quadrature::gauss<double, 24>::weights());
        else
            add(boost::math::quadrature::gauss<double, 40>::abscissa(), boost::math::quadrature::gauss<double, 40>::weights());
    }
    const double h = 0.5 * ell;
    double total = 0.0;
    for (int axis = 0; axis < 3; ++axis)
        for (int sign = -1; sign <= 1; sign += 2)
            for (std::size_t i = 0; i < x.size(); ++i)
                for (std::size_t j = 0; j < x.size(); ++j) {
                    const double s1 = h * x[i], s2 = h * x[j];
                    const double jac = h / (s1 * s1 + s2 * s2 + h * h) * w[i] * w[j] * h * h;
                    for (std::size_t k = 0; k < x.size(); ++k) {
                        const double t = 0.5 * (x[k] + 1.0);
                        Vec3 p;
                        p[axis] = sign * h * t;
                        p[(axis + 1) % 3] = s1 * t;
                        p[(axis + 2) % 3] = s2 * t;
                        total += std::norm(u(p)) * jac * 0.5 * w[k];
                    }
                }
    return total;
}

inline HardyReport hardy_cube_validate(double ell, int trial_count, unsigned seed = 7, int pmax = 2) {
    if (trial_count < 1) throw ValidationError("hardy_cube_validate: trial_count must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    std::uniform_int_distribution<int> modes(0, pmax);
    HardyReport r;
    r.trials = trial_count;
    const auto st = hardy_loose(ell), pr = hardy_tight(ell);
    for (int t = 0; t < trial_count; ++t) {
        TrialFunction u;
        u.pmax = modes(rng);
        u.ell = ell;
        const int s = 2 * u.pmax + 1;
        const double decay = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
        for (int a = 0; a < s; ++a)
            for (int b = 0; b < s; ++b)
                for (int d = 0; d < s; ++d) {
                    const double p2 = double((a - u.pmax) * (a - u.pmax) + (b - u.pmax) * (b - u.pmax) +
                                             (d - u.pmax) * (d - u.pmax));
                    u.c.emplace_back(gauss(rng) * std::exp(-decay * p2), gauss(rng) * std::exp(-decay * p2));
                }
        const double lhs = hardy_lhs(u, ell);
        const double n2 = u.norm2(), g2 = u.grad_norm2();
        r.worst_ratio = std::max(r.worst_ratio, lhs / (st.grad * g2 + st.mass * n2));
        r.worst_ratio_tight = std::max(r.worst_ratio_tight, lhs / (pr.grad * g2 + pr.mass * n2));
    }
    r.note = "coefficients (4l+24)/l, (48+24l)/l^2: worst ratio " + std::to_string(r.worst_ratio) +
             "; tighter (4l+12)/l, (24+12l)/l^2: worst ratio " + std::to_string(r.worst_ratio_tight);
    return r;
}

}  // namespace dfc
