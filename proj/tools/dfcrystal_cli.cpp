#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <omp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <dfcrystal/dfcrystal.hpp>

namespace {

using nlohmann::json;

enum Exit : int {
    exit_ok = 0,
    exit_assumption = 2,
    exit_nonconverged = 3,
    exit_model = 4,
    exit_usage = 64,
    exit_data = 65,
};

std::string fmt6(double x) {
    std::ostringstream s;
    s << std::setprecision(6) << x;
    return s.str();
}

void row(const std::string& name, double v) { std::cout << "  " << std::left << std::setw(28) << name << fmt6(v) << "\n"; }

json assumption_json(const dfc::AssumptionReport& a) {
    json j;
    j["feasible"] = a.feasible;
    j["kappa"] = a.kappa;
    j["lambda0"] = a.lambda0;
    j["A"] = a.A;
    j["tau"] = a.tau;
    j["M_ret"] = a.M_ret;
    j["c_star_q_plus_1"] = a.c_star_q1;
    j["cond1"] = a.cond1;
    j["cond2"] = a.cond2;
    if (a.cond2_eps) j["cond2_eps_P"] = *a.cond2_eps;
    j["cond1_holds"] = a.cond1_holds;
    j["cond2_holds"] = a.cond2_holds;
    j["holds"] = a.holds();
    return j;
}

json params_json(const dfc::CrystalParams& p) {
    return {{"ell", p.ell}, {"z", p.z}, {"q", p.q}, {"alpha", p.alpha}};
}

json energy_json(const dfc::EnergyBreakdown& e) {
    return {{"kinetic", e.kinetic}, {"nuclear", e.nuclear}, {"hartree", e.hartree}, {"exchange", e.exchange},
            {"total", e.total},     {"penalized", e.penalized}, {"eps_P", e.eps_P}};
}

void write_json(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw dfc::ResourceError("cannot write " + path);
    out << j.dump(2) << "\n";
}

int cmd_constants(const dfc::CrystalParams& p, const std::string& json_path) {
    p.validate();
    const auto r = dfc::constants_report(p);
    const auto& e = r.ee;
    const auto& a = r.assumption;
    std::cout << "constants  ell=" << fmt6(p.ell) << " z=" << fmt6(p.z) << " q=" << fmt6(p.q)
              << " alpha=" << fmt6(p.alpha) << "\n";
    row("lattice sum |k|^-4", r.lattice.value);
    row("cube integral I", r.cube_integral);
    row("C0", e.C0);
    row("C0 minimiser R", r.C0_R);
    row("C_G", e.C_G);
    for (std::size_t m = 0; m < e.C_ge_m.size(); ++m) {
        const std::string s = std::to_string(m + 2);
        row("C_>=" + s, e.C_ge_m[m]);
        row("C_<=" + s + ",ell", e.C_le_m[m]);
    }
    row("C_ell (best m=" + std::to_string(e.m_best) + ")", e.C_ell);
    row("C_W", e.C_W);
    row("C_EE", e.C_EE);
    row("C_EE'", e.C_EE_prime);
    row("C_EE''", e.C_EE_dblprime);
    for (const auto& [k, c] : r.c_star_table) row("c*(" + std::to_string(k) + ")", c);
    row("kappa", a.kappa);
    row("lambda0", a.lambda0);
    row("A", a.A);
    row("cond1", a.cond1);
    row("cond2", a.cond2);
    std::cout << "  assumption " << (a.holds() ? "holds" : "fails") << "\n";
    if (!json_path.empty()) {
        json j;
        j["params"] = params_json(p);
        j["lattice_sum"] = {{"value", r.lattice.value}, {"uncertainty", r.lattice.uncertainty}, {"shells", r.lattice.shells}};
        j["cube_integral"] = r.cube_integral;
        j["cube_integral_dyadic"] = r.cube_integral_check;
        j["C0"] = e.C0;
        j["C0_R"] = r.C0_R;
        j["C_G"] = e.C_G;
        j["C_H"] = e.C_H;
        j["C_ge_m"] = e.C_ge_m;
        j["C_le_m_ell"] = e.C_le_m;
        j["C_le_m_ell_prime"] = e.C_le_m_prime;
        j["m_best"] = e.m_best;
        j["C_ell"] = e.C_ell;
        j["C_W"] = e.C_W;
        j["C_EE"] = e.C_EE;
        j["C_EE_prime"] = e.C_EE_prime;
        j["C_EE_dblprime"] = e.C_EE_dblprime;
        json cs = json::array();
        for (const auto& [k, c] : r.c_star_table) cs.push_back({{"k", k}, {"c_star", c}});
        j["c_star"] = cs;
        j["assumption"] = assumption_json(a);
        write_json(j, json_path);
    }
    return a.holds() ? exit_ok : exit_assumption;
}

json result_json(const dfc::RunConfig& cfg, const dfc::ScfResult& r) {
    json j;
    j["params"] = params_json(cfg.crystal);
    j["kmax"] = cfg.scf.kmax;
    j["kgrid_n"] = cfg.scf.n_per_axis;
    j["kgrid_shifted"] = cfg.scf.shifted;
    j["exchange_scheme"] = dfc::to_string(cfg.scf.scheme);
    j["converged"] = r.converged;
    j["iterations"] = r.iterations;
    j["energy"] = energy_json(r.energy);
    j["eps_P"] = r.eps_P;
    j["eps_P_hypothesis_holds"] = r.eps_hypothesis_ok;
    j["charge"] = r.charge;
    j["nu"] = r.nu;
    j["nu_bound"] = r.nu_bound;
    j["self_consistency_residual"] = r.self_consistency_residual;
    j["residual_fixedpoint"] = r.state.residual_fixedpoint;
    j["min_abs_eigenvalue"] = r.min_abs_eig;
    j["lambda0"] = r.lambda0;
    j["max_rank"] = r.max_rank;
    j["rank_bound"] = r.rank_bound;
    j["S1inf"] = r.S1inf;
    j["assumption"] = assumption_json(r.assumption);
    return j;
}

int cmd_solve(const std::string& config_path, const std::string& checkpoint_flag) {
    dfc::RunConfig cfg;
    try {
        cfg = dfc::load_config(config_path);
    } catch (const dfc::Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_usage;
    }
    if (!checkpoint_flag.empty()) cfg.checkpoint = checkpoint_flag;
    std::ofstream log;
    if (!cfg.iteration_log.empty()) {
        log.open(cfg.iteration_log);
        if (!log) throw dfc::ResourceError("cannot write " + cfg.iteration_log);
    }
    auto on_iter = [&](const dfc::IterationRecord& rec) {
        json j = {{"iter", rec.iter},         {"E_total", rec.E_total}, {"E_pen", rec.E_pen},
                  {"residual", rec.residual}, {"nu", rec.nu},           {"charge", rec.charge}};
        if (log) log << j.dump() << std::endl;
        std::cout << "iter " << std::setw(4) << rec.iter << "  E " << fmt6(rec.E_total) << "  residual "
                  << fmt6(rec.residual) << "  nu " << fmt6(rec.nu) << "  charge " << fmt6(rec.charge) << "\n";
    };
    dfc::ScfResult r;
    bool converged = true;
    try {
        r = dfc::solve_penalized(cfg.crystal, cfg.scf, on_iter);
    } catch (const dfc::NonConvergence& e) {
        r = e.result;
        converged = false;
        std::cerr << e.what() << "\n";
    }
    if (!cfg.energy_json.empty()) write_json(result_json(cfg, r), cfg.energy_json);
    if (!cfg.checkpoint.empty()) dfc::save_checkpoint(r.state.iterate, cfg.checkpoint);
    std::cout << (converged ? "converged" : "not converged") << " after " << r.iterations << " iterations\n";
    row("E_total", r.energy.total);
    row("E_penalized", r.energy.penalized);
    row("charge", r.charge);
    row("nu", r.nu);
    row("self-consistency residual", r.self_consistency_residual);
    if (!r.eps_hypothesis_ok) std::cerr << "warning: eps_P below (1-kappa)^-1 c*(q+1)\n";
    return converged ? exit_ok : exit_nonconverged;
}

std::vector<dfc::Vec3> path_vertices(const std::string& path, double ell) {
    const double h = dfc::pi / ell;
    std::vector<dfc::Vec3> out;
    std::stringstream ss(path);
    std::string tok;
    while (std::getline(ss, tok, '-')) {
        if (tok == "G" || tok == "\xCE\x93" || tok == "Gamma") out.emplace_back(0, 0, 0);
        else if (tok == "X") out.emplace_back(h, 0, 0);
        else if (tok == "M") out.emplace_back(h, h, 0);
        else if (tok == "R") out.emplace_back(h, h, h);
        else throw dfc::ConfigError("unknown path label: " + tok);
    }
    if (out.size() < 2) throw dfc::ConfigError("path needs at least two labels");
    return out;
}

int cmd_bands(const std::string& config_path, const std::string& checkpoint, const std::string& path, int samples,
              int nbands, const std::string& csv) {
    dfc::RunConfig cfg;
    std::vector<dfc::Vec3> verts;
    try {
        cfg = dfc::load_config(config_path);
        verts = path_vertices(path, cfg.crystal.ell);
        if (samples < 2 || nbands < 1) throw dfc::ConfigError("samples >= 2 and bands >= 1 required");
    } catch (const dfc::Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_usage;
    }
    dfc::BlochDensityMatrix g;
    try {
        g = dfc::load_checkpoint(checkpoint);
    } catch (const dfc::Error& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return exit_data;
    }
    if (g.basis.kmax != cfg.scf.kmax || g.grid.n_per_axis != cfg.scf.n_per_axis || g.grid.shifted != cfg.scf.shifted ||
        std::abs(g.grid.ell - cfg.crystal.ell) > 1e-12 * cfg.crystal.ell) {
        std::cerr << "checkpoint does not match the configured basis or grid\n";
        return exit_data;
    }
    std::vector<double> seg{0.0};
    for (std::size_t s = 1; s < verts.size(); ++s) seg.push_back(seg.back() + (verts[s] - verts[s - 1]).norm());
    const double total = seg.back();
    std::ofstream out(csv);
    if (!out) throw dfc::ResourceError("cannot write " + csv);
    out << "path_coordinate,xi_1,xi_2,xi_3";
    for (int b = 1; b <= nbands; ++b) out << ",band_" << b;
    for (int b = 1; b <= nbands; ++b) out << ",band_-" << b;
    out << "\n" << std::setprecision(17);
    for (int s = 0; s < samples; ++s) {
        const double t = total * s / (samples - 1);
        std::size_t k = 1;
        while (k + 1 < seg.size() && seg[k] < t) ++k;
        const double len = seg[k] - seg[k - 1];
        const double u = len > 0 ? std::clamp((t - seg[k - 1]) / len, 0.0, 1.0) : 0.0;
        const dfc::Vec3 xi = verts[k - 1] + u * (verts[k] - verts[k - 1]);
        const auto eig = dfc::diagonalize(dfc::meanfield_at(g, cfg.crystal, cfg.scf.scheme, xi), 1e-10);
        std::vector<double> pos, neg;
        for (Eigen::Index n = 0; n < eig.eigenvalues.size(); ++n)
            (eig.eigenvalues[n] >= 0 ? pos : neg).push_back(eig.eigenvalues[n]);
        std::reverse(neg.begin(), neg.end());
        out << t << "," << xi[0] << "," << xi[1] << "," << xi[2];
        for (int b = 0; b < nbands; ++b) {
            out << ",";
            if (b < int(pos.size())) out << pos[b];
        }
        for (int b = 0; b < nbands; ++b) {
            out << ",";
            if (b < int(neg.size())) out << neg[b];
        }
        out << "\n";
    }
    std::cout << "wrote " << samples << " samples to " << csv << "\n";
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Periodic Dirac-Fock plane-wave solver"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "OpenMP thread count (0: runtime default)")->check(CLI::NonNegativeNumber);

    auto* con = app.add_subcommand("constants", "Hardy-type constants and assumption check");
    dfc::CrystalParams p;
    std::string json_path;
    con->add_option("--ell", p.ell, "cell edge")->required();
    con->add_option("--z", p.z, "nuclear charge per cell")->required();
    con->add_option("--q", p.q, "electrons per cell")->required();
    con->add_option("--alpha", p.alpha, "fine structure constant")->capture_default_str();
    con->add_option("--json", json_path, "write report as JSON");

    auto* sol = app.add_subcommand("solve", "run the penalized SCF");
    std::string config_path, checkpoint;
    sol->add_option("--config", config_path, "config file")->required();
    sol->add_option("--checkpoint", checkpoint, "final density checkpoint (overrides config)");

    auto* bnd = app.add_subcommand("bands", "band structure along a path");
    std::string bconfig, bcheckpoint, path = "G-X-M-R", csv;
    int samples = 50, nbands = 4;
    bnd->add_option("--config", bconfig, "config file")->required();
    bnd->add_option("--checkpoint", bcheckpoint, "density checkpoint")->required();
    bnd->add_option("--path", path, "labels from G X M R joined by '-'")->capture_default_str();
    bnd->add_option("--samples", samples, "points along the path")->capture_default_str();
    bnd->add_option("--bands", nbands, "bands per sign")->capture_default_str();
    bnd->add_option("--csv", csv, "output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_usage;
    }
    if (threads > 0) omp_set_num_threads(threads);

    try {
        if (*con) return cmd_constants(p, json_path);
        if (*sol) return cmd_solve(config_path, checkpoint);
        if (*bnd) return cmd_bands(bconfig, bcheckpoint, path, samples, nbands, csv);
    } catch (const dfc::ModelFailure& e) {
        std::cerr << "model failure: " << e.what() << "\n";
        return exit_model;
    } catch (const dfc::ValidationError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return exit_usage;
    } catch (const dfc::ConfigError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return exit_usage;
    } catch (const dfc::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return exit_usage;
}
