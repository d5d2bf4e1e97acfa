#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "constants.hpp"
#include "density.hpp"
#include "dirac.hpp"
#include "meanfield.hpp"

namespace dfc {

inline std::vector<FiberEigensystem> diagonalize_all(const MeanFieldOperator& op) {
    std::vector<FiberEigensystem> out(op.fibers.size());
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < int(op.fibers.size()); ++i) out[i] = diagonalize(op.fibers[i], 1e-10);
    return out;
}

// a density with its assembled operator and spectra
struct Snapshot {
    BlochDensityMatrix gamma;
    MeanFieldOperator op;
    std::vector<FiberEigensystem> spectra;
};

inline Snapshot evaluate(const BlochDensityMatrix& g, const CrystalParams& p, ExchangeScheme scheme) {
    Snapshot s;
    s.gamma = g;
    s.op = assemble_meanfield(g, p, scheme);
    s.spectra = diagonalize_all(s.op);
    return s;
}

// ---------------------------------------------------------------- counting and aufbau

inline double counting_function(const std::vector<RVec>& eigenvalues, const std::vector<double>& weights, double s) {
    double c = 0.0;
    for (std::size_t i = 0; i < eigenvalues.size(); ++i)
        for (Eigen::Index n = 0; n < eigenvalues[i].size(); ++n) {
            const double l = eigenvalues[i][n];
            if (l >= 0.0 && l <= s) c += weights[i];
        }
    return c;
}

inline double counting_function(const std::vector<FiberEigensystem>& spectra, const KGrid& grid, double s) {
    std::vector<RVec> ev;
    for (const auto& e : spectra) ev.push_back(e.eigenvalues);
    return counting_function(ev, grid.weights, s);
}

struct Filling {
    std::vector<RVec> occupations;  // per fiber, aligned with the eigenvalues
    double nu = 0.0;
    double nu1 = 0.0;
    double filled_charge = 0.0;
    bool eps_branch = false;
    int bisection_steps = 0;
};

// aufbau over all fibers: bisect the counting function, spread the residual charge over the nu-shell
inline Filling aufbau_fill(const std::vector<RVec>& ev, const std::vector<double>& w, double q, double eps_P,
                           double shell_tol = 1e-8, double zero_tol = 0.0) {
    Filling f;
    double maxpos = -1.0;
    bool any = false;
    for (const auto& e : ev)
        for (Eigen::Index n = 0; n < e.size(); ++n) {
            if (zero_tol > 0.0 && std::abs(e[n]) <= zero_tol)
                throw AmbiguityError("eigenvalue at the positive/negative splitting point", e[n]);
            if (e[n] >= 0.0) {
                any = true;
                maxpos = std::max(maxpos, e[n]);
            }
        }
    if (!any) throw ModelFailure("no positive eigenvalues to fill");
    auto C = [&](double s) { return counting_function(ev, w, s); };
    const double qtol = 1e-12 * std::max(1.0, q);
    if (C(maxpos) < q - qtol) {
        f.nu1 = std::numeric_limits<double>::infinity();
    } else {
        double lo = 0.0, hi = maxpos;
        if (C(lo) >= q - qtol) {
            hi = lo;
        } else {
            while (f.bisection_steps < 200 && hi - lo > 1e-13 * std::max(1.0, hi)) {
                const double mid = 0.5 * (lo + hi);
                (C(mid) >= q - qtol ? hi : lo) = mid;
                ++f.bisection_steps;
            }
        }
        f.nu1 = std::numeric_limits<double>::infinity();
        for (const auto& e : ev)
            for (Eigen::Index n = 0; n < e.size(); ++n)
                if (e[n] >= 0.0 && (e[n] > lo || (hi == lo && e[n] >= lo))) f.nu1 = std::min(f.nu1, e[n]);
    }
    f.eps_branch = eps_P < f.nu1;
    f.nu = std::min(f.nu1, eps_P);
    f.occupations.resize(ev.size());
    double below = 0.0, shell_weight = 0.0;
    for (std::size_t i = 0; i < ev.size(); ++i) {
        f.occupations[i] = RVec::Zero(ev[i].size());
        for (Eigen::Index n = 0; n < ev[i].size(); ++n) {
            const double l = ev[i][n];
            if (l < 0.0) continue;
            if (f.eps_branch) {
                if (l < eps_P) f.occupations[i][n] = 1.0;
            } else if (l < f.nu1 - shell_tol) {
                f.occupations[i][n] = 1.0;
            } else if (l <= f.nu1 + shell_tol) {
                shell_weight += w[i];
                continue;
            }
            below += w[i] * f.occupations[i][n];
        }
    }
    if (!f.eps_branch && shell_weight > 0.0) {
        const double theta = std::clamp((q - below) / shell_weight, 0.0, 1.0);
        for (std::size_t i = 0; i < ev.size(); ++i)
            for (Eigen::Index n = 0; n < ev[i].size(); ++n) {
                const double l = ev[i][n];
                if (l >= 0.0 && l >= f.nu1 - shell_tol && l <= f.nu1 + shell_tol) f.occupations[i][n] = theta;
            }
    }
    f.filled_charge = 0.0;
    for (std::size_t i = 0; i < ev.size(); ++i) f.filled_charge += w[i] * f.occupations[i].sum();
    return f;
}

struct LinearSolveResult {
    BlochDensityMatrix gamma_new;
    double nu = 0.0;
    double nu1 = 0.0;
    double filled_charge = 0.0;
    bool eps_branch = false;
    std::vector<RVec> delta_occupations;  // fractional shell occupations per fiber
};

inline LinearSolveResult linear_solve(const std::vector<FiberEigensystem>& spectra, const KGrid& grid,
                                      const PlaneWaveBasis& basis, double q, double eps_P, double shell_tol = 1e-8) {
    std::vector<RVec> ev;
    double zero_tol = 0.0;
    for (const auto& e : spectra) {
        ev.push_back(e.eigenvalues);
        zero_tol = std::max(zero_tol, e.degeneracy_tol());
    }
    const auto f = aufbau_fill(ev, grid.weights, q, eps_P, shell_tol, zero_tol);
    LinearSolveResult r;
    r.nu = f.nu;
    r.nu1 = f.nu1;
    r.filled_charge = f.filled_charge;
    r.eps_branch = f.eps_branch;
    r.gamma_new = zero_density(grid, basis);
    r.delta_occupations.resize(spectra.size());
    for (std::size_t i = 0; i < spectra.size(); ++i) {
        std::vector<int> cols;
        std::vector<double> shell;
        for (Eigen::Index n = 0; n < f.occupations[i].size(); ++n) {
            const double o = f.occupations[i][n];
            if (o > 0.0) cols.push_back(int(n));
            if (o > 0.0 && o < 1.0) shell.push_back(o);
        }
        auto& fib = r.gamma_new.fibers[i];
        fib.U = select_columns(spectra[i].eigenvectors, cols);
        fib.occ.resize(Eigen::Index(cols.size()));
        for (std::size_t c = 0; c < cols.size(); ++c) fib.occ[Eigen::Index(c)] = f.occupations[i][cols[c]];
        r.delta_occupations[i] = Eigen::Map<const RVec>(shell.data(), Eigen::Index(shell.size()));
    }
    return r;
}

struct AufbauVerdict {
    double brute = 0.0;
    double aufbau = 0.0;
    bool ok = false;
};

// single fiber: exhaustive 0/1 occupations with at most q electrons against the aufbau value
inline AufbauVerdict aufbau_optimality_bruteforce(const RVec& eigenvalues, int q, double eps_P) {
    std::vector<double> pos;
    for (Eigen::Index n = 0; n < eigenvalues.size(); ++n)
        if (eigenvalues[n] >= 0.0) pos.push_back(eigenvalues[n]);
    if (pos.size() > 20) throw ValidationError("aufbau_optimality_bruteforce: too many levels");
    AufbauVerdict v;
    v.brute = 0.0;
    for (unsigned mask = 0; mask < (1u << pos.size()); ++mask) {
        if (std::popcount(mask) > q) continue;
        double s = 0.0;
        for (std::size_t k = 0; k < pos.size(); ++k)
            if (mask & (1u << k)) s += pos[k] - eps_P;
        v.brute = std::min(v.brute, s);
    }
    const auto f = aufbau_fill({eigenvalues}, {1.0}, double(q), eps_P);
    for (Eigen::Index n = 0; n < eigenvalues.size(); ++n) v.aufbau += f.occupations[0][n] * (eigenvalues[n] - eps_P);
    v.ok = std::abs(v.brute - v.aufbau) <= 1e-12 * std::max(1.0, std::abs(v.brute));
    return v;
}

// ---------------------------------------------------------------- retraction

// P+ gamma P+ per fiber, P+ from the given spectra of D_gamma
inline BlochDensityMatrix retract_T(const BlochDensityMatrix& g, const std::vector<FiberEigensystem>& spectra) {
    BlochDensityMatrix out = g;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto& f = g.fibers[i];
        if (f.rank() == 0) continue;
        const double tol = spectra[i].degeneracy_tol();
        const Mat vp = select_columns(spectra[i].eigenvectors,
                                      columns_in(spectra[i], 0.0, std::numeric_limits<double>::infinity(), tol));
        out.fibers[i] = compress(vp * (vp.adjoint() * f.U), f.occ, 0.0);
    }
    return out;
}

inline BlochDensityMatrix retract_T(const BlochDensityMatrix& g, const CrystalParams& p, ExchangeScheme scheme) {
    return retract_T(g, evaluate(g, p, scheme).spectra);
}

struct RetractionReport {
    int steps = 0;
    double final_residual = 0.0;
    std::vector<double> residuals;
    std::vector<double> ratios;
    double measured_ratio = 0.0;  // first ||T^2 g - T g|| / ||T g - g||
    double bound = 0.0;           // 2 A tau
    double admissible_value = 0.0;
    double tau = 0.0;
    bool admissible = false;
};

struct Divergence : Error {
    RetractionReport report;
    Divergence(const std::string& what, RetractionReport r) : Error(what), report(std::move(r)) {}
};

struct RetractionParams {
    double A = 0.0;
    double tau = 0.0;
    double M_ret = 0.0;
};

inline RetractionParams retraction_params(const AssumptionReport& a) { return {a.A, a.tau, a.M_ret}; }

struct ThetaResult {
    Snapshot snapshot;
    RetractionReport report;
};

// iterate T until ||T g - g|| (max of S11 and Y) < tol
inline ThetaResult retract_theta(Snapshot start, const CrystalParams& p, ExchangeScheme scheme, double tol,
                                 int max_iter, const RetractionParams& rp) {
    ThetaResult r{std::move(start), {}};
    auto& rep = r.report;
    rep.bound = 2.0 * rp.A * rp.tau;
    rep.tau = rp.tau;
    BlochDensityMatrix t = retract_T(r.snapshot.gamma, r.snapshot.spectra);
    Norms d = difference_norms(t, r.snapshot.gamma);
    double res = d.S11Y();
    rep.residuals.push_back(res);
    rep.admissible_value =
        std::max(sandwich_half_norm(r.snapshot.gamma), norms(r.snapshot.gamma).Y) + rp.M_ret * d.XY();
    rep.admissible = rep.admissible_value < rp.tau;
    while (res >= tol) {
        if (rep.steps >= max_iter) {
            rep.final_residual = res;
            throw Divergence("retraction did not converge", rep);
        }
        r.snapshot = evaluate(t, p, scheme);
        ++rep.steps;
        t = retract_T(r.snapshot.gamma, r.snapshot.spectra);
        const double next = difference_norms(t, r.snapshot.gamma).S11Y();
        rep.ratios.push_back(res > 0.0 ? next / res : 0.0);
        rep.residuals.push_back(next);
        res = next;
    }
    rep.final_residual = res;
    if (!rep.ratios.empty()) rep.measured_ratio = rep.ratios.front();
    return r;
}

// ---------------------------------------------------------------- SCF

struct ScfConfig {
    int kmax = 2;
    int n_per_axis = 2;
    bool shifted = true;
    std::optional<double> eps_P;  // empty: automatic
    double tol_scf = 1e-8;
    double tol_E = 1e-10;
    int max_iter = 100;
    double mixing = 0.3;
    int retract_every = 1;
    ExchangeScheme scheme = ExchangeScheme::probe_correction;
    bool anderson = false;
    int anderson_depth = 5;
    double theta_tol = 1e-9;
    int theta_max_iter = 50;
    double shell_tol = 1e-8;

    void validate() const {
        if (kmax < 0 || n_per_axis < 1) throw ConfigError("kmax >= 0 and kgrid_n >= 1 required");
        if (!(tol_scf > 0.0) || !(tol_E > 0.0) || !(theta_tol > 0.0)) throw ConfigError("tolerances must be positive");
        if (max_iter < 1) throw ConfigError("max_iter must be >= 1");
        if (!(mixing > 0.0 && mixing <= 1.0)) throw ConfigError("mixing must lie in (0,1]");
        if (retract_every < 0) throw ConfigError("retract_every must be >= 0");
        if (anderson_depth < 1) throw ConfigError("anderson_depth must be >= 1");
        if (eps_P && !(*eps_P > 0.0)) throw ConfigError("eps_P must be positive");
    }
};

struct IterationRecord {
    int iter = 0;
    double E_total = 0.0;
    double E_pen = 0.0;
    double residual = 0.0;
    double nu = 0.0;
    double charge = 0.0;
    int theta_steps = 0;
    double seconds = 0.0;
};

struct ScfState {
    BlochDensityMatrix iterate;
    EnergyBreakdown energy;
    double residual_fixedpoint = 0.0;
    double residual_retraction = 0.0;
    int iteration = 0;
};

struct ScfResult {
    ScfState state;
    EnergyBreakdown energy;
    bool converged = false;
    int iterations = 0;
    double eps_P = 0.0;
    bool eps_hypothesis_ok = false;
    double charge = 0.0;
    double nu = 0.0;
    double nu_bound = 0.0;
    bool nu_ok = false;
    double self_consistency_residual = 0.0;
    double min_abs_eig = 0.0;
    double lambda0 = 0.0;
    bool gap_ok = false;
    int max_rank = 0;
    int rank_bound = 0;
    bool rank_ok = false;
    double S1inf = 0.0;
    AssumptionReport assumption;
    EEConstants constants;
    std::vector<IterationRecord> history;
    std::vector<FiberEigensystem> spectra;
};

struct NonConvergence : Error {
    ScfResult result;
    NonConvergence(const std::string& what, ScfResult r) : Error(what), result(std::move(r)) {}
};

namespace detail {

// Hilbert-Schmidt inner product sum_i w_i Tr[a_i b_i]
inline double hs_inner(const BlochDensityMatrix& a, const BlochDensityMatrix& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto& fa = a.fibers[i];
        const auto& fb = b.fibers[i];
        if (fa.rank() == 0 || fb.rank() == 0) continue;
        const Mat o = fa.U.adjoint() * fb.U;
        for (Eigen::Index m = 0; m < o.rows(); ++m)
            for (Eigen::Index n = 0; n < o.cols(); ++n) s += a.grid.weights[i] * fa.occ[m] * fb.occ[n] * std::norm(o(m, n));
    }
    return s;
}

struct AndersonHistory {
    std::vector<BlochDensityMatrix> in, out;
};

// minimise |sum c_k f_k| with sum c_k = 1, then sum c_k ((1-b) in_k + b out_k), projected to the constraints
inline BlochDensityMatrix anderson_step(AndersonHistory& h, int depth, double beta, double q) {
    while (int(h.in.size()) > depth) {
        h.in.erase(h.in.begin());
        h.out.erase(h.out.begin());
    }
    const int m = int(h.in.size());
    Eigen::MatrixXd G(m, m);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b <= a; ++b) {
            const double v = hs_inner(h.out[a], h.out[b]) - hs_inner(h.out[a], h.in[b]) - hs_inner(h.in[a], h.out[b]) +
                             hs_inner(h.in[a], h.in[b]);
            G(a, b) = G(b, a) = v;
        }
    G.diagonal().array() += 1e-14 * std::max(G.trace(), 1e-300);
    const Eigen::VectorXd x = G.ldlt().solve(Eigen::VectorXd::Ones(m));
    const Eigen::VectorXd c = x / x.sum();
    std::vector<const BlochDensityMatrix*> parts;
    std::vector<double> coef;
    for (int k = 0; k < m; ++k) {
        parts.push_back(&h.in[k]);
        coef.push_back(c[k] * (1.0 - beta));
        parts.push_back(&h.out[k]);
        coef.push_back(c[k] * beta);
    }
    BlochDensityMatrix g = combine(parts, coef, 1e-14);
    const double tr = trace_per_cell(g);
    if (tr > q)
        for (auto& f : g.fibers) f.occ *= q / tr;
    return g;
}

}  // namespace detail

using IterationCallback = std::function<void(const IterationRecord&)>;

inline ScfResult solve_penalized(const CrystalParams& params, const ScfConfig& cfg, IterationCallback log = {}) {
    params.validate(true);
    cfg.validate();
    using clock = std::chrono::steady_clock;
    ScfResult res;
    const double S = lattice_sum_inv4(1e-6).value;
    res.constants = ee_constants(params.ell, S);
    res.assumption = check_assumption(params, res.constants, cfg.eps_P);
    if (!res.assumption.feasible) throw ModelFailure("kappa >= 1: mean-field operator bounds unavailable");
    res.eps_P = cfg.eps_P ? *cfg.eps_P : auto_eps_P(res.assumption);
    res.nu_bound = res.assumption.c_star_q1 / (1.0 - res.assumption.kappa);
    res.eps_hypothesis_ok = res.eps_P > res.nu_bound;
    const auto rp = retraction_params(res.assumption);

    const auto basis = build_basis(cfg.kmax);
    const auto grid = build_kgrid(params.ell, cfg.n_per_axis, cfg.shifted);
    auto solve = [&](const Snapshot& s) {
        return linear_solve(s.spectra, grid, basis, params.q, res.eps_P, cfg.shell_tol);
    };

    // start from the aufbau state of D0 - alpha z G
    Snapshot snap = evaluate(zero_density(grid, basis), params, cfg.scheme);
    snap = evaluate(solve(snap).gamma_new, params, cfg.scheme);

    detail::AndersonHistory hist;
    LinearSolveResult lin;
    double e_prev = std::numeric_limits<double>::quiet_NaN();
    for (int it = 1; it <= cfg.max_iter; ++it) {
        const auto t0 = clock::now();
        IterationRecord rec;
        rec.iter = it;
        if (cfg.retract_every > 0 && it % cfg.retract_every == 0) {
            auto th = retract_theta(std::move(snap), params, cfg.scheme, cfg.theta_tol, cfg.theta_max_iter, rp);
            snap = std::move(th.snapshot);
            rec.theta_steps = th.report.steps;
            res.state.residual_retraction = th.report.final_residual;
        }
        lin = solve(snap);
        const double residual = difference_norms(snap.gamma, lin.gamma_new).S11;
        const auto e = energy(snap.gamma, snap.op, res.eps_P);
        rec.E_total = e.total;
        rec.E_pen = e.penalized;
        rec.residual = residual;
        rec.nu = lin.nu;
        rec.charge = trace_per_cell(snap.gamma);
        rec.seconds = std::chrono::duration<double>(clock::now() - t0).count();
        res.history.push_back(rec);
        if (log) log(rec);
        res.state.iteration = it;
        res.state.residual_fixedpoint = residual;
        const double de = std::isnan(e_prev) ? 0.0 : std::abs(e.total - e_prev);
        e_prev = e.total;
        if (residual < cfg.tol_scf && de < cfg.tol_E) {
            res.converged = true;
            break;
        }
        if (it == cfg.max_iter) break;
        BlochDensityMatrix next;
        if (cfg.anderson) {
            hist.in.push_back(snap.gamma);
            hist.out.push_back(lin.gamma_new);
            next = detail::anderson_step(hist, cfg.anderson_depth, cfg.mixing, params.q);
        } else {
            next = mix(snap.gamma, lin.gamma_new, cfg.mixing);
        }
        snap = evaluate(next, params, cfg.scheme);
    }
    res.iterations = res.state.iteration;

    // report on the aufbau output of the last operator
    const Snapshot fin = evaluate(lin.gamma_new, params, cfg.scheme);
    const auto lin_f = solve(fin);
    res.self_consistency_residual = difference_norms(fin.gamma, lin_f.gamma_new).S11;
    res.energy = energy(fin.gamma, fin.op, res.eps_P);
    res.state.iterate = fin.gamma;
    res.state.energy = res.energy;
    res.charge = trace_per_cell(fin.gamma);
    res.nu = lin_f.nu;
    res.nu_ok = res.nu <= res.nu_bound;
    res.min_abs_eig = std::numeric_limits<double>::infinity();
    for (const auto& s : fin.spectra) res.min_abs_eig = std::min(res.min_abs_eig, s.eigenvalues.cwiseAbs().minCoeff());
    res.lambda0 = res.assumption.lambda0;
    res.gap_ok = res.min_abs_eig >= res.lambda0;
    res.max_rank = 0;
    for (const auto& f : fin.gamma.fibers) res.max_rank = std::max(res.max_rank, int(f.rank()));
    res.rank_bound = int(std::ceil(params.q - 1e-12)) + rank_margin(params.q, res.assumption.kappa, params.ell);
    res.rank_ok = res.max_rank <= res.rank_bound;
    res.S1inf = norms(fin.gamma).S1inf;
    res.spectra = fin.spectra;
    if (!res.converged) throw NonConvergence("SCF did not converge in " + std::to_string(cfg.max_iter) + " iterations", res);
    return res;
}

}  // namespace dfc
