// one PASS/FAIL line per acceptance criterion; exits non-zero only if a criterion could not be evaluated
#include <chrono>
#include <cstdio>
#include <iostream>
#include <random>
#include <sstream>

#include <omp.h>

#include <dfcrystal/dfcrystal.hpp>

using namespace dfc;

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

int passed = 0, failed = 0;

void report(int id, bool ok, const std::string& detail) {
    (ok ? passed : failed)++;
    std::printf("criterion %2d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
}

bool within(double v, double target, double tol) { return std::abs(v - target) <= tol; }

std::string fmt(const char* f, auto... args) {
    char buf[1024];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

const CrystalParams desk{10.0, 2.0, 2.0, 1.0 / 137.0};

ScfConfig desk_config(ExchangeScheme s, int n) {
    ScfConfig c;
    c.kmax = 2;
    c.n_per_axis = n;
    c.mixing = 1.0;
    c.scheme = s;
    return c;
}

void criterion1() {
    const auto t0 = clock_type::now();
    const auto L = lattice_sum_inv4(1e-6);
    const double dt = seconds_since(t0);
    report(1, within(L.value, 16.512, 0.005) && dt < 1.0,
           fmt("sum=%.8f (+-%.1e, %d shells) target 16.512+-0.005, %.3f s", L.value, L.uncertainty, L.shells, dt));
}

void criterion2(double S) {
    const auto m = c0_bound(S);
    report(2, within(m.value, 5.019, 0.05) && m.x > 0.4,
           fmt("C0=%.6f at R=%.6f target 5.019+-0.05", m.value, m.x));
}

void criterion3(double C0) {
    const double a = cg_constant(1000.0, C0), b = cg_constant(1e8, C0);
    report(3, within(a, 2.011, 0.005) && within(b, 2.0, 1e-3),
           fmt("C_G(1000)=%.6f target 2.011+-0.005; C_G(1e8)=%.8f target 2+-1e-3", a, b));
}

void criterion4(double S) {
    const auto g = c_ge_m_bound(2, S);
    const double le = c_le_m_ell(2, 1000.0);
    const double I = cube_inverse_square_integral(), Id = cube_inverse_square_integral_dyadic();
    const bool ok = within(g.value, 20.912, 0.2) && within(le, 0.010, 0.001) && std::abs(I - Id) < 1e-5;
    report(4, ok,
           fmt("C_>=2=%.4f (R=%.4f) target 20.912+-0.2; C_<=2,1000=%.6f target 0.010+-0.001; I=%.8f dyadic=%.8f diff=%.1e",
               g.value, g.x, le, I, Id, std::abs(I - Id)));
}

void criterion5(double S) {
    const auto c = ee_constants(1000.0, S);
    const bool ok = within(c.C_W, 2.042, 0.01) && within(c.C_EE, 2.052, 0.01) && within(c.C_EE_prime, 2.052, 0.01) &&
                    within(c.C_EE_dblprime, 0.041, 0.005);
    report(5, ok,
           fmt("C_W=%.5f (2.042); C_EE=%.5f (2.052); C_EE'=%.5f (2.052); C_EE''=%.5f (0.041); m*=%d", c.C_W, c.C_EE,
               c.C_EE_prime, c.C_EE_dblprime, c.m_best));
}

void criterion6() {
    const auto t0 = clock_type::now();
    const auto ee = ee_constants(1000.0, lattice_sum_inv4(1e-6).value);
    const auto a17 = check_assumption(CrystalParams{1000.0, 17.0, 17.0, 1.0 / 137.0}, ee);
    const auto a18 = check_assumption(CrystalParams{1000.0, 18.0, 18.0, 1.0 / 137.0}, ee);
    const double dt = seconds_since(t0);
    const bool ok = within(a17.cond1, 0.630, 0.01) && a17.cond1_holds && within(a17.cond2, 0.973, 0.02) &&
                    a17.cond2_holds && a18.cond2 > 1.0 && dt < 1.0;
    report(6, ok,
           fmt("q=17: cond1=%.4f (0.630) cond2=%.4f (0.973) holds=%d; q=18: cond2=%.4f holds=%d; %.3f s", a17.cond1,
               a17.cond2, int(a17.holds()), a18.cond2, int(a18.holds()), dt));
}

void criterion7() {
    const double c = c_star_upper(17, 1000.0);
    report(7, c <= 1.0065 && c >= 1.006, fmt("c*(17) at l=1000: %.6f in [1.006, 1.0065]", c));
}

void criterion8() {
    const auto t0 = clock_type::now();
    const double ell = 10.0;
    const auto basis = build_basis(2);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-pi / ell, pi / ell);
    double worst = 0.0;
    for (int s = 0; s < 50; ++s) {
        const Vec3 xi(u(rng), u(rng), u(rng));
        const auto e = diagonalize(assemble_free_dirac(basis, xi, ell));
        worst = std::max(worst, (e.eigenvalues - free_eigenvalues(basis, xi, ell)).cwiseAbs().maxCoeff());
    }
    const double dt = seconds_since(t0);
    report(8, worst <= 1e-12 && dt < 10.0, fmt("50 random xi at K=2: max error %.2e, %.2f s", worst, dt));
}

void criterion9() {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-3.0, 5.0);
    std::uniform_int_distribution<int> len(1, 12), qd(1, 6);
    double worst = 0.0;
    int bad = 0;
    for (int s = 0; s < 200; ++s) {
        RVec ev(len(rng));
        for (auto& x : ev) x = u(rng);
        std::sort(ev.begin(), ev.end());
        if ((ev.array() >= 0.0).count() == 0) ev[ev.size() - 1] = std::abs(ev[ev.size() - 1]) + 0.1;
        const auto v = aufbau_optimality_bruteforce(ev, qd(rng), 0.5 + std::abs(u(rng)));
        worst = std::max(worst, std::abs(v.brute - v.aufbau));
        bad += !v.ok;
    }
    report(9, bad == 0, fmt("200 spectra: %d mismatches, max |brute - aufbau| %.2e", bad, worst));
}

void criterion10() {
    CrystalParams p = desk;
    p.alpha = 0.0;
    const auto c = desk_config(ExchangeScheme::probe_correction, 2);
    const auto r = solve_penalized(p, c);
    // greedy fill of the free levels over the grid
    const auto basis = build_basis(c.kmax);
    const auto grid = build_kgrid(p.ell, c.n_per_axis, c.shifted);
    std::vector<std::pair<double, double>> lv;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const RVec e = free_eigenvalues(basis, grid.points[i], p.ell);
        for (double x : e)
            if (x > 0.0) lv.emplace_back(x, grid.weights[i]);
    }
    std::sort(lv.begin(), lv.end());
    double left = p.q, ref = 0.0;
    for (const auto& [x, w] : lv) {
        const double take = std::min(w, left);
        ref += take * x;
        left -= take;
        if (left <= 0.0) break;
    }
    const double err = std::abs(r.energy.total - ref);
    report(10, r.converged && r.iterations == 1 && err <= 1e-10,
           fmt("iterations=%d E=%.12f closed form=%.12f error %.2e", r.iterations, r.energy.total, ref, err));
}

struct DeskRuns {
    ScfResult probe, omit;
};

DeskRuns criterion11() {
    const int threads = omp_get_max_threads();
    omp_set_num_threads(1);
    DeskRuns d;
    bool ok = true;
    std::ostringstream detail;
    for (auto s : {ExchangeScheme::probe_correction, ExchangeScheme::omit}) {
        const auto t0 = clock_type::now();
        ScfResult r;
        try {
            r = solve_penalized(desk, desk_config(s, 2));
        } catch (const NonConvergence& e) {
            r = e.result;
        }
        const double dt = seconds_since(t0);
        const bool this_ok = r.converged && r.iterations <= 100 && r.state.residual_fixedpoint < 1e-8 &&
                             std::abs(r.charge - 2.0) <= 1e-10 && r.self_consistency_residual < 1e-6 && r.gap_ok &&
                             r.nu_ok && r.rank_ok && dt < 300.0;
        ok = ok && this_ok;
        detail << fmt("[%s: it=%d res=%.1e charge=%.12f selfcons=%.1e min|eig|=%.5f>=%.5f nu=%.5f<=%.5f rank=%d<=%d "
                      "E=%.9f X=%.6e %.1f s] ",
                      to_string(s).c_str(), r.iterations, r.state.residual_fixedpoint, r.charge,
                      r.self_consistency_residual, r.min_abs_eig, r.lambda0, r.nu, r.nu_bound, r.max_rank, r.rank_bound,
                      r.energy.total, r.energy.exchange, dt);
        (s == ExchangeScheme::omit ? d.omit : d.probe) = r;
    }
    omp_set_num_threads(threads);
    report(11, ok, detail.str());
    return d;
}

// occupied orbitals of a higher free band, a direction far from the SCF state
BlochDensityMatrix excited_state(const BlochDensityMatrix& like) {
    auto g = zero_density(like.grid, like.basis);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto e = diagonalize(assemble_free_dirac(g.basis, g.grid.points[i], g.grid.ell));
        g.fibers[i].U = e.eigenvectors.middleCols(g.basis.dim / 2 + 2, 2);
        g.fibers[i].occ = RVec::Constant(2, 0.8);
    }
    return g;
}

void criterion12(const ScfResult& r) {
    const auto& g = r.state.iterate;
    const auto d = directional_derivative_check(g, excited_state(g), {1e-2, 1e-3, 1e-4}, desk,
                                                ExchangeScheme::probe_correction);
    bool ok = true;
    for (double o : d.order) ok = ok && within(o, 1.0, 0.2);
    report(12, ok,
           fmt("errors %.3e %.3e %.3e, orders %.4f %.4f, dE=%.6e", d.error[0], d.error[1], d.error[2], d.order[0],
               d.order[1], d.derivative));
}

void criterion13(const ScfResult& r) {
    const auto& g = r.state.iterate;
    std::mt19937_64 rng(13);
    std::normal_distribution<double> n;
    auto noise = zero_density(g.grid, g.basis);
    for (auto& f : noise.fibers) {
        CVec v(g.basis.dim);
        for (auto& x : v) x = cplx(n(rng), n(rng));
        f.U = v.normalized();
        f.occ = RVec::Ones(1);
    }
    // noise trace per cell is 1; rescale gamma so the charge stays at q
    const auto perturbed = combine({&g, &noise}, {1.0 - 0.5e-3, 1e-3});
    const auto rp = retraction_params(r.assumption);
    try {
        const auto th = retract_theta(evaluate(perturbed, desk, ExchangeScheme::probe_correction), desk,
                                      ExchangeScheme::probe_correction, 1e-10, 50, rp);
        const auto& rep = th.report;
        const bool ok = rep.measured_ratio < 1.0 && rep.measured_ratio <= rep.bound + 0.1 && rep.final_residual < 1e-10;
        report(13, ok,
               fmt("ratio=%.3e bound 2A tau=%.4f steps=%d final residual=%.2e", rep.measured_ratio, rep.bound, rep.steps,
                   rep.final_residual));
    } catch (const Divergence& e) {
        report(13, false, fmt("diverged after %d steps, residual %.2e", e.report.steps, e.report.final_residual));
    }
}

void criterion14() {
    const auto h = hardy_cube_validate(10.0, 100);
    report(14, h.worst_ratio <= 1.0 && !h.note.empty(), fmt("100 trials at l=10: %s", h.note.c_str()));
}

void criterion15(const ScfResult& coarse) {
    const auto t0 = clock_type::now();
    ScfResult fine;
    try {
        fine = solve_penalized(desk, desk_config(ExchangeScheme::probe_correction, 3));
    } catch (const NonConvergence& e) {
        fine = e.result;
    }
    const double x2 = coarse.energy.exchange, x3 = fine.energy.exchange;
    const double rel = std::abs(x2 - x3) / std::abs(x3);
    report(15, fine.converged && rel < 0.05,
           fmt("exchange 2^3=%.10f 3^3=%.10f relative difference %.2f%% (limit 5%%); 3^3 converged=%d, %.1f s", x2,
               x3, 100 * rel, int(fine.converged), seconds_since(t0)));
}

}  // namespace

int main() {
    try {
        const double S = lattice_sum_inv4(1e-6).value;
        const double C0 = c0_bound(S).value;
        criterion1();
        criterion2(S);
        criterion3(C0);
        criterion4(S);
        criterion5(S);
        criterion6();
        criterion7();
        criterion8();
        criterion9();
        criterion10();
        const auto runs = criterion11();
        criterion12(runs.probe);
        criterion13(runs.probe);
        criterion14();
        criterion15(runs.probe);
    } catch (const std::exception& e) {
        std::printf("acceptance aborted: %s\n", e.what());
        return 1;
    }
    std::printf("summary: %d PASS, %d FAIL\n", passed, failed);
    return 0;
}
