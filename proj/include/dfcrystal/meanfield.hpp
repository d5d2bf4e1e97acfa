#pragma once

#include <functional>
#include <string>
#include <vector>

#include "constants.hpp"
#include "density.hpp"
#include "dirac.hpp"
#include "potentials.hpp"

namespace dfc {

enum class ExchangeScheme { omit, probe_correction };

inline ExchangeScheme parse_scheme(const std::string& s) {
    if (s == "omit") return ExchangeScheme::omit;
    if (s == "probe-correction") return ExchangeScheme::probe_correction;
    throw ConfigError("unknown exchange scheme: " + s);
}

inline std::string to_string(ExchangeScheme s) { return s == ExchangeScheme::omit ? "omit" : "probe-correction"; }

// (4 pi / l^3) (l / 2 pi)^3 times the integral of |q|^-2 over one grid cell around 0
inline double probe_constant(double ell, int n_per_axis) {
    return cube_inverse_square_integral() / (2.0 * pi * ell * n_per_axis);
}

struct MeanFieldOperator {
    CrystalParams params;
    KGrid grid;
    PlaneWaveBasis basis;
    ExchangeScheme scheme = ExchangeScheme::probe_correction;
    Mat nuclear;                 // -alpha z G
    Mat hartree;                 // rho * G, without alpha
    std::vector<Mat> exchange;   // W_xi, without alpha
    std::vector<FiberOperator> fibers;
};

inline Mat hartree_matrix(const DensityFourier& rho, const PlaneWaveBasis& basis, double ell) {
    const PeriodicCoulomb g{ell};
    const double vol = ell * ell * ell;
    Mat m = Mat::Zero(basis.dim, basis.dim);
    for (int a = 0; a < basis.n_pw; ++a)
        for (int b = 0; b < basis.n_pw; ++b) {
            const auto& ka = basis.indices[a];
            const auto& kb = basis.indices[b];
            const IVec3 p{ka[0] - kb[0], ka[1] - kb[1], ka[2] - kb[2]};
            const cplx v = vol * rho.at(p) * g.fourier(p);
            if (v == cplx(0.0)) continue;
            for (int s = 0; s < 4; ++s) m(4 * a + s, 4 * b + s) = v;
        }
    return m;
}

inline Mat hartree_matrix(const BlochDensityMatrix& g) {
    return hartree_matrix(density_fourier(g), g.basis, g.grid.ell);
}

namespace detail {

// W(a,b) += c * Gamma(a+p, b+p) over all a, b with a+p, b+p inside the basis
inline void add_shifted(Mat& W, const Mat& gam, const PlaneWaveBasis& basis, const IVec3& p, cplx c) {
    const int K = basis.kmax, L = basis.side;
    int lo[3], hi[3];
    for (int d = 0; d < 3; ++d) {
        lo[d] = std::max(-K, -K - p[d]);
        hi[d] = std::min(K, K - p[d]);
        if (lo[d] > hi[d]) return;
    }
    auto idx = [&](int x, int y, int z) { return ((x + K) * L + (y + K)) * L + (z + K); };
    const int run = 4 * (hi[2] - lo[2] + 1);
    const Eigen::Index ld = W.rows();
    for (int b1 = lo[0]; b1 <= hi[0]; ++b1)
        for (int b2 = lo[1]; b2 <= hi[1]; ++b2)
            for (int b3 = lo[2]; b3 <= hi[2]; ++b3) {
                const int cb = 4 * idx(b1, b2, b3), cg = 4 * idx(b1 + p[0], b2 + p[1], b3 + p[2]);
                for (int t = 0; t < 4; ++t) {
                    cplx* wcol = W.data() + (cb + t) * ld;
                    const cplx* gcol = gam.data() + (cg + t) * ld;
                    for (int a1 = lo[0]; a1 <= hi[0]; ++a1)
                        for (int a2 = lo[1]; a2 <= hi[1]; ++a2) {
                            cplx* dst = wcol + 4 * idx(a1, a2, lo[2]);
                            const cplx* src = gcol + 4 * idx(a1 + p[0], a2 + p[1], lo[2] + p[2]);
                            for (int r = 0; r < run; ++r) dst[r] += c * src[r];
                        }
                }
            }
}

// sum_j sum_p coef(j, p) Gamma_j(a+p, b+p)
inline Mat exchange_sum(const std::vector<Mat>& dense, const PlaneWaveBasis& basis,
                        const std::function<double(int, const IVec3&)>& coef) {
    Mat W = Mat::Zero(basis.dim, basis.dim);
    const int P = 2 * basis.kmax;
    for (std::size_t j = 0; j < dense.size(); ++j) {
        if (dense[j].size() == 0) continue;
        for (int a = -P; a <= P; ++a)
            for (int b = -P; b <= P; ++b)
                for (int c = -P; c <= P; ++c) {
                    const IVec3 p{a, b, c};
                    const double v = coef(int(j), p);
                    if (v != 0.0) add_shifted(W, dense[j], basis, p, v);
                }
    }
    return 0.5 * (W + W.adjoint());
}

inline std::vector<Mat> dense_fibers(const BlochDensityMatrix& g) {
    std::vector<Mat> d(g.size());
    for (std::size_t j = 0; j < g.size(); ++j)
        if (g.fibers[j].rank() > 0) d[j] = g.fibers[j].dense();
    return d;
}

inline double scheme_coefficient(const ExchangeTable& t, const KGrid& grid, ExchangeScheme scheme, int i, int j,
                                 const IVec3& p) {
    if (t.is_singular(i, j, p))
        return scheme == ExchangeScheme::omit ? 0.0 : probe_constant(grid.ell, grid.n_per_axis);
    return grid.weights[j] * t.at(i, j, p);
}

}  // namespace detail

inline Mat exchange_apply(const BlochDensityMatrix& g, int xi_index, ExchangeScheme scheme, const ExchangeTable& table,
                          const std::vector<Mat>& dense) {
    return detail::exchange_sum(dense, g.basis, [&](int j, const IVec3& p) {
        return detail::scheme_coefficient(table, g.grid, scheme, xi_index, j, p);
    });
}

inline Mat exchange_apply(const BlochDensityMatrix& g, int xi_index, ExchangeScheme scheme) {
    const auto table = exchange_coefficients(g.grid, g.basis, g.grid.ell);
    return exchange_apply(g, xi_index, scheme, table, detail::dense_fibers(g));
}

// exchange operator at an arbitrary quasi-momentum; near-coincident points are capped at the cell average
inline Mat exchange_apply_at(const BlochDensityMatrix& g, const Vec3& xi, ExchangeScheme scheme) {
    const auto dense = detail::dense_fibers(g);
    const double ell = g.grid.ell;
    const ExchangeKernel ker{ell, 2};
    const double chi = probe_constant(ell, g.grid.n_per_axis);
    return detail::exchange_sum(dense, g.basis, [&](int j, const IVec3& p) {
        const auto e = ker.coefficient(p, xi - g.grid.points[j]);
        const double w = g.grid.weights[j];
        if (scheme == ExchangeScheme::omit) return e.singular ? 0.0 : w * e.value;
        return e.singular ? chi : std::min(w * e.value, chi);
    });
}

inline MeanFieldOperator assemble_meanfield(const BlochDensityMatrix& g, const CrystalParams& params,
                                            ExchangeScheme scheme) {
    params.validate(true);
    validate(g, params.q_plus());
    MeanFieldOperator op;
    op.params = params;
    op.grid = g.grid;
    op.basis = g.basis;
    op.scheme = scheme;
    const double a = params.alpha;
    op.nuclear = -a * params.z * coulomb_matrix(g.basis, g.grid.ell);
    op.hartree = hartree_matrix(g);
    const auto table = exchange_coefficients(g.grid, g.basis, g.grid.ell);
    const auto dense = detail::dense_fibers(g);
    const int nk = int(g.size());
    op.exchange.resize(nk);
    op.fibers.resize(nk);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < nk; ++i) {
        op.exchange[i] = exchange_apply(g, i, scheme, table, dense);
        op.fibers[i] = assemble_free_dirac(g.basis, g.grid.points[i], g.grid.ell);
        op.fibers[i].matrix += op.nuclear + a * (op.hartree - op.exchange[i]);
    }
    return op;
}

// D_xi - alpha z G + alpha (rho*G - W_xi) at an off-grid xi, for band plots
inline FiberOperator meanfield_at(const BlochDensityMatrix& g, const CrystalParams& params, ExchangeScheme scheme,
                                  const Vec3& xi) {
    FiberOperator f = assemble_free_dirac(g.basis, xi, g.grid.ell);
    f.matrix += -params.alpha * params.z * coulomb_matrix(g.basis, g.grid.ell) +
                params.alpha * (hartree_matrix(g) - exchange_apply_at(g, xi, scheme));
    return f;
}

inline double kinetic_energy(const BlochDensityMatrix& g) {
    double e = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto& f = g.fibers[i];
        double s = 0.0;
        for (Eigen::Index n = 0; n < f.rank(); ++n)
            for (int a = 0; a < g.basis.n_pw; ++a) {
                const Eigen::Vector4cd u = f.U.col(n).segment<4>(4 * a);
                s += f.occ[n] * u.dot(dirac_block(momentum(g.basis.indices[a], g.grid.points[i], g.grid.ell)) * u).real();
            }
        e += g.grid.weights[i] * s;
    }
    return e;
}

struct DirectEnergies {
    double nuclear = 0.0;
    double hartree = 0.0;
};

inline DirectEnergies direct_energies(const DensityFourier& rho, const CrystalParams& p) {
    const PeriodicCoulomb g{p.ell};
    const double vol = p.ell * p.ell * p.ell;
    DirectEnergies e;
    for (int i = 0; i < int(rho.coeffs.size()); ++i) {
        const double gh = g.fourier(rho.transfer(i));
        if (gh == 0.0) continue;
        e.nuclear += -p.alpha * p.z * vol * gh * std::conj(rho.coeffs[i]).real();
        e.hartree += 0.5 * p.alpha * vol * vol * gh * std::norm(rho.coeffs[i]);
    }
    return e;
}

// sum over fibers of w Tr[M_xi gamma_xi]
inline double weighted_trace(const BlochDensityMatrix& g, const std::function<const Mat&(int)>& m) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto& f = g.fibers[i];
        if (f.rank() == 0) continue;
        const Mat& mi = m(int(i));
        for (Eigen::Index n = 0; n < f.rank(); ++n)
            s += g.grid.weights[i] * f.occ[n] * f.U.col(n).dot(mi * f.U.col(n)).real();
    }
    return s;
}

// -(alpha/2) sum_{xi,xi'} w w' sum_p K_p sum_{m,n} occ occ' |<u_m, S_p u'_n>|^2
inline double exchange_energy_pairs(const BlochDensityMatrix& g, double alpha, ExchangeScheme scheme) {
    const auto table = exchange_coefficients(g.grid, g.basis, g.grid.ell);
    const int K = g.basis.kmax, P = 2 * K;
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto& fi = g.fibers[i];
        if (fi.rank() == 0) continue;
        for (std::size_t j = 0; j < g.size(); ++j) {
            const auto& fj = g.fibers[j];
            if (fj.rank() == 0) continue;
            for (int a = -P; a <= P; ++a)
                for (int b = -P; b <= P; ++b)
                    for (int c = -P; c <= P; ++c) {
                        const IVec3 p{a, b, c};
                        const double coef = detail::scheme_coefficient(table, g.grid, scheme, int(i), int(j), p);
                        if (coef == 0.0) continue;
                        // shifted(k) = u'(k + p)
                        Mat shifted = Mat::Zero(g.basis.dim, fj.rank());
                        for (int k = 0; k < g.basis.n_pw; ++k) {
                            const auto& kk = g.basis.indices[k];
                            const int src = g.basis.index_of({kk[0] + a, kk[1] + b, kk[2] + c});
                            if (src >= 0) shifted.middleRows<4>(4 * k) = fj.U.middleRows<4>(4 * src);
                        }
                        const Mat o = fi.U.adjoint() * shifted;
                        double t = 0.0;
                        for (Eigen::Index m = 0; m < fi.rank(); ++m)
                            for (Eigen::Index n = 0; n < fj.rank(); ++n) t += fi.occ[m] * fj.occ[n] * std::norm(o(m, n));
                        s += g.grid.weights[i] * coef * t;
                    }
        }
    }
    return -0.5 * alpha * s;
}

inline EnergyBreakdown finish_energy(EnergyBreakdown e, double trace, double eps_P) {
    e.total = e.kinetic + e.nuclear + e.hartree + e.exchange;
    e.eps_P = eps_P;
    e.penalized = e.total - eps_P * trace;
    return e;
}

// energy with the exchange taken from an operator assembled at the same gamma
inline EnergyBreakdown energy(const BlochDensityMatrix& g, const MeanFieldOperator& op, double eps_P) {
    EnergyBreakdown e;
    e.kinetic = kinetic_energy(g);
    const auto d = direct_energies(density_fourier(g), op.params);
    e.nuclear = d.nuclear;
    e.hartree = d.hartree;
    e.exchange = -0.5 * op.params.alpha * weighted_trace(g, [&](int i) -> const Mat& { return op.exchange[i]; });
    return finish_energy(e, trace_per_cell(g), eps_P);
}

// energy by the double k-sum, no operator assembly
inline EnergyBreakdown energy(const BlochDensityMatrix& g, const CrystalParams& p, ExchangeScheme scheme, double eps_P) {
    EnergyBreakdown e;
    e.kinetic = kinetic_energy(g);
    const auto d = direct_energies(density_fourier(g), p);
    e.nuclear = d.nuclear;
    e.hartree = d.hartree;
    e.exchange = exchange_energy_pairs(g, p.alpha, scheme);
    return finish_energy(e, trace_per_cell(g), eps_P);
}

struct DerivativeReport {
    std::vector<double> t;
    std::vector<double> error;
    std::vector<double> order;  // log10(err_i / err_{i+1}) / log10(t_i / t_{i+1})
    double derivative = 0.0;
};

// h = target - gamma; checks (E(gamma + t h) - E(gamma))/t against sum w Tr[D_gamma h]
inline DerivativeReport directional_derivative_check(const BlochDensityMatrix& gamma, const BlochDensityMatrix& target,
                                                     const std::vector<double>& t_list, const CrystalParams& p,
                                                     ExchangeScheme scheme) {
    DerivativeReport r;
    const auto op = assemble_meanfield(gamma, p, scheme);
    auto D = [&](int i) -> const Mat& { return op.fibers[i].matrix; };
    r.derivative = weighted_trace(target, D) - weighted_trace(gamma, D);
    const double e0 = energy(gamma, p, scheme, 0.0).total;
    for (double t : t_list) {
        const auto gt = mix(gamma, target, t, 0.0);
        const double et = energy(gt, p, scheme, 0.0).total;
        r.t.push_back(t);
        r.error.push_back(std::abs((et - e0) / t - r.derivative));
    }
    for (std::size_t i = 0; i + 1 < r.t.size(); ++i)
        r.order.push_back(std::log10(r.error[i] / r.error[i + 1]) / std::log10(r.t[i] / r.t[i + 1]));
    return r;
}

}  // namespace dfc
