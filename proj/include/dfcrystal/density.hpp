#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dirac.hpp"
#include "lattice.hpp"

namespace dfc {

// gamma_xi = U diag(occ) U^*, U with orthonormal columns
struct FiberState {
    Mat U;
    RVec occ;

    Eigen::Index rank() const { return occ.size(); }
    Mat dense() const { return U * occ.asDiagonal() * U.adjoint(); }
};

struct BlochDensityMatrix {
    KGrid grid;
    PlaneWaveBasis basis;
    std::vector<FiberState> fibers;

    std::size_t size() const { return fibers.size(); }
};

inline BlochDensityMatrix zero_density(const KGrid& grid, const PlaneWaveBasis& basis) {
    BlochDensityMatrix g;
    g.grid = grid;
    g.basis = basis;
    g.fibers.resize(grid.size());
    for (auto& f : g.fibers) {
        f.U = Mat::Zero(basis.dim, 0);
        f.occ = RVec::Zero(0);
    }
    return g;
}

struct EnergyBreakdown {
    double kinetic = 0.0;
    double nuclear = 0.0;
    double hartree = 0.0;
    double exchange = 0.0;
    double total = 0.0;
    double penalized = 0.0;
    double eps_P = 0.0;
};

inline double trace_per_cell(const BlochDensityMatrix& g) {
    double t = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) t += g.grid.weights[i] * g.fibers[i].occ.sum();
    return t;
}

inline void validate(const BlochDensityMatrix& g, double q_limit = -1.0) {
    if (g.fibers.size() != g.grid.size()) throw ValidationError("density: fiber count differs from grid size");
    for (const auto& f : g.fibers) {
        if (f.U.rows() != g.basis.dim || f.U.cols() != f.occ.size())
            throw ValidationError("density: orbital block has wrong shape");
        if (f.occ.size() == 0) continue;
        if (f.occ.minCoeff() < -1e-12 || f.occ.maxCoeff() > 1.0 + 1e-12)
            throw ValidationError("density: occupation outside [0,1]");
        const Mat gram = f.U.adjoint() * f.U;
        if ((gram - Mat::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() > 1e-10)
            throw ValidationError("density: orbitals not orthonormal");
    }
    if (q_limit > 0.0 && trace_per_cell(g) > q_limit * (1.0 + 1e-12) + 1e-12)
        throw ValidationError("density: trace per cell exceeds the charge bound");
}

// Fourier coefficients of rho on |p|_inf <= 2K, lexicographic
struct DensityFourier {
    int pmax = 0;
    int side = 1;
    double ell = 1.0;
    std::vector<cplx> coeffs;

    int index_of(const IVec3& p) const {
        if (inf_norm(p) > pmax) return -1;
        return ((p[0] + pmax) * side + (p[1] + pmax)) * side + (p[2] + pmax);
    }
    cplx at(const IVec3& p) const {
        const int i = index_of(p);
        return i < 0 ? cplx(0.0) : coeffs[i];
    }
    IVec3 transfer(int i) const {
        return {i / (side * side) - pmax, (i / side) % side - pmax, i % side - pmax};
    }
};

// rho^(p) = (1/ell^3) sum_xi w sum_n occ_n sum_k u_n(k)^* u_n(k+p)
inline DensityFourier density_fourier(const BlochDensityMatrix& g) {
    const auto& basis = g.basis;
    DensityFourier r;
    r.pmax = 2 * basis.kmax;
    r.side = 2 * r.pmax + 1;
    r.ell = g.grid.ell;
    r.coeffs.assign(std::size_t(r.side) * r.side * r.side, cplx(0.0));
    const double vol = std::pow(g.grid.ell, 3);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto& f = g.fibers[i];
        // Gamma = U occ U^*; tr_4 Gamma(k+p, k) summed over k
        const Mat gam = f.dense();
        for (int a = 0; a < basis.n_pw; ++a)
            for (int b = 0; b < basis.n_pw; ++b) {
                const auto& ka = basis.indices[a];
                const auto& kb = basis.indices[b];
                const IVec3 p{ka[0] - kb[0], ka[1] - kb[1], ka[2] - kb[2]};
                cplx tr = 0.0;
                for (int s = 0; s < 4; ++s) tr += gam(4 * a + s, 4 * b + s);
                r.coeffs[r.index_of(p)] += g.grid.weights[i] * tr / vol;
            }
    }
    return r;
}

inline double density_realspace(const DensityFourier& r, const Vec3& x) {
    cplx s = 0.0;
    const double g = 2.0 * pi / r.ell;
    for (int i = 0; i < int(r.coeffs.size()); ++i) {
        if (r.coeffs[i] == cplx(0.0)) continue;
        s += r.coeffs[i] * std::polar(1.0, g * to_vec(r.transfer(i)).dot(x));
    }
    return s.real();
}

// 4-spinor value of the Bloch orbital u at x
inline Eigen::Vector4cd orbital_at(const PlaneWaveBasis& basis, const Vec3& xi, double ell, const CVec& u, const Vec3& x) {
    Eigen::Vector4cd v = Eigen::Vector4cd::Zero();
    for (int a = 0; a < basis.n_pw; ++a) {
        const cplx ph = std::polar(1.0, momentum(basis.indices[a], xi, ell).dot(x));
        v += ph * u.segment<4>(4 * a);
    }
    return v / std::pow(ell, 1.5);
}

inline Mat4 kernel_at(const BlochDensityMatrix& g, const Vec3& x, const Vec3& y) {
    Mat4 k = Mat4::Zero();
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto& f = g.fibers[i];
        for (Eigen::Index n = 0; n < f.rank(); ++n) {
            const auto vx = orbital_at(g.basis, g.grid.points[i], g.grid.ell, f.U.col(n), x);
            const auto vy = orbital_at(g.basis, g.grid.points[i], g.grid.ell, f.U.col(n), y);
            k += g.grid.weights[i] * f.occ[n] * vx * vy.adjoint();
        }
    }
    return k;
}

// sqrt(1 + |xi + 2 pi k / ell|^2) per spinor row
inline RVec free_abs_symbol(const PlaneWaveBasis& basis, const Vec3& xi, double ell) {
    RVec d(basis.dim);
    for (int a = 0; a < basis.n_pw; ++a)
        d.segment<4>(4 * a).setConstant(std::sqrt(1.0 + momentum(basis.indices[a], xi, ell).squaredNorm()));
    return d;
}

struct Norms {
    double S11 = 0.0;
    double S1inf = 0.0;
    double X = 0.0;
    double Y = 0.0;
    double XY() const { return std::max(X, Y); }
    double S11Y() const { return std::max(S11, Y); }
};

inline Norms norms(const BlochDensityMatrix& g) {
    Norms n;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto& f = g.fibers[i];
        if (f.rank() == 0) continue;
        const double w = g.grid.weights[i];
        const double tr = f.occ.cwiseAbs().sum();
        const RVec d = free_abs_symbol(g.basis, g.grid.points[i], g.grid.ell);
        double x = 0.0;
        for (Eigen::Index c = 0; c < f.rank(); ++c)
            x += std::abs(f.occ[c]) * (f.U.col(c).cwiseAbs2().cwiseProduct(d)).sum();
        n.S11 += w * tr;
        n.S1inf = std::max(n.S1inf, tr);
        n.X += w * x;
        n.Y = std::max(n.Y, f.occ.cwiseAbs().maxCoeff());
    }
    return n;
}

// ||gamma |D0|^{1/2}||_{S11}
inline double sandwich_half_norm(const BlochDensityMatrix& g) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto& f = g.fibers[i];
        if (f.rank() == 0) continue;
        const RVec d = free_abs_symbol(g.basis, g.grid.points[i], g.grid.ell);
        const Mat m = f.occ.asDiagonal() * (f.U.adjoint() * d.asDiagonal() * f.U) * f.occ.asDiagonal();
        Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly);
        s += g.grid.weights[i] * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    }
    return s;
}

namespace detail {

// eigenpairs of Z S Z^* through a thin QR of Z
struct LowRankEig {
    Mat vectors;
    RVec values;
};

inline LowRankEig lowrank_eig(const Mat& Z, const RVec& s) {
    LowRankEig out;
    const Eigen::Index r = Z.cols();
    if (r == 0) {
        out.vectors = Mat::Zero(Z.rows(), 0);
        out.values = RVec::Zero(0);
        return out;
    }
    const Eigen::Index k = std::min(r, Z.rows());
    Eigen::HouseholderQR<Mat> qr(Z);
    const Mat Q = qr.householderQ() * Mat::Identity(Z.rows(), k);
    const Mat R = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    const Mat small = R * s.asDiagonal() * R.adjoint();
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (small + small.adjoint()));
    out.vectors = Q * es.eigenvectors();
    out.values = es.eigenvalues();
    return out;
}

}  // namespace detail

// compress Z S Z^* to orthonormal storage, dropping |eig| <= drop_tol, clamping to [0,1]
inline FiberState compress(const Mat& Z, const RVec& s, double drop_tol = 1e-14) {
    const auto e = detail::lowrank_eig(Z, s);
    std::vector<int> keep;
    for (Eigen::Index i = e.values.size() - 1; i >= 0; --i)
        if (e.values[i] > drop_tol) keep.push_back(int(i));
    FiberState f;
    f.U.resize(Z.rows(), Eigen::Index(keep.size()));
    f.occ.resize(Eigen::Index(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) {
        f.U.col(Eigen::Index(c)) = e.vectors.col(keep[c]);
        f.occ[Eigen::Index(c)] = std::clamp(e.values[keep[c]], 0.0, 1.0);
    }
    return f;
}

// sum_j c_j gamma_j, re-compressed per fiber
inline BlochDensityMatrix combine(const std::vector<const BlochDensityMatrix*>& gs, const std::vector<double>& c,
                                  double drop_tol = 1e-14) {
    if (gs.empty() || gs.size() != c.size()) throw ValidationError("combine: bad arguments");
    BlochDensityMatrix out = *gs.front();
    for (std::size_t i = 0; i < out.size(); ++i) {
        Eigen::Index r = 0;
        for (auto* g : gs) r += g->fibers[i].rank();
        Mat Z(out.basis.dim, r);
        RVec s(r);
        Eigen::Index o = 0;
        for (std::size_t j = 0; j < gs.size(); ++j) {
            const auto& f = gs[j]->fibers[i];
            Z.middleCols(o, f.rank()) = f.U;
            s.segment(o, f.rank()) = c[j] * f.occ;
            o += f.rank();
        }
        out.fibers[i] = compress(Z, s, drop_tol);
    }
    return out;
}

// (1 - t) a + t b
inline BlochDensityMatrix mix(const BlochDensityMatrix& a, const BlochDensityMatrix& b, double t,
                              double drop_tol = 1e-14) {
    return combine({&a, &b}, {1.0 - t, t}, drop_tol);
}

// norms of a - b, computed exactly from the stacked orbitals
inline Norms difference_norms(const BlochDensityMatrix& a, const BlochDensityMatrix& b) {
    Norms n;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto& fa = a.fibers[i];
        const auto& fb = b.fibers[i];
        const Eigen::Index r = fa.rank() + fb.rank();
        if (r == 0) continue;
        Mat Z(a.basis.dim, r);
        Z << fa.U, fb.U;
        RVec s(r);
        s << fa.occ, -fb.occ;
        const auto e = detail::lowrank_eig(Z, s);
        const double tr = e.values.cwiseAbs().sum();
        const RVec d = free_abs_symbol(a.basis, a.grid.points[i], a.grid.ell).cwiseSqrt();
        const auto ex = detail::lowrank_eig(d.asDiagonal() * Z, s);
        const double w = a.grid.weights[i];
        n.S11 += w * tr;
        n.S1inf = std::max(n.S1inf, tr);
        n.X += w * ex.values.cwiseAbs().sum();
        n.Y = std::max(n.Y, e.values.cwiseAbs().maxCoeff());
    }
    return n;
}

inline constexpr const char* checkpoint_format = "dfcrystal-density";
inline constexpr int checkpoint_version = 1;

inline void save_checkpoint(const BlochDensityMatrix& g, const std::string& path) {
    static_assert(std::endian::native == std::endian::little, "checkpoint blobs are little-endian");
    nlohmann::json meta;
    meta["format"] = checkpoint_format;
    meta["version"] = checkpoint_version;
    meta["ell"] = g.grid.ell;
    meta["kmax"] = g.basis.kmax;
    meta["n_per_axis"] = g.grid.n_per_axis;
    meta["shifted"] = g.grid.shifted;
    meta["dim"] = g.basis.dim;
    std::vector<long long> ranks;
    for (const auto& f : g.fibers) ranks.push_back(f.rank());
    meta["ranks"] = ranks;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ResourceError("cannot open checkpoint for writing: " + path);
    out << meta.dump() << '\n';
    for (const auto& f : g.fibers) {
        out.write(reinterpret_cast<const char*>(f.occ.data()), std::streamsize(sizeof(double) * f.occ.size()));
        out.write(reinterpret_cast<const char*>(f.U.data()), std::streamsize(sizeof(cplx) * f.U.size()));
    }
    if (!out) throw ResourceError("checkpoint write failed: " + path);
}

inline BlochDensityMatrix load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ResourceError("cannot open checkpoint: " + path);
    std::string line;
    std::getline(in, line);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("checkpoint header: ") + e.what());
    }
    if (meta.value("format", "") != checkpoint_format || meta.value("version", 0) != checkpoint_version)
        throw ValidationError("checkpoint: unknown format or version");
    const auto grid = build_kgrid(meta.at("ell").get<double>(), meta.at("n_per_axis").get<int>(),
                                  meta.at("shifted").get<bool>());
    const auto basis = build_basis(meta.at("kmax").get<int>());
    if (meta.at("dim").get<int>() != basis.dim) throw ValidationError("checkpoint: dimension mismatch");
    const auto ranks = meta.at("ranks").get<std::vector<long long>>();
    if (ranks.size() != grid.size()) throw ValidationError("checkpoint: rank list length mismatch");
    BlochDensityMatrix g = zero_density(grid, basis);
    for (std::size_t i = 0; i < ranks.size(); ++i) {
        auto& f = g.fibers[i];
        f.occ.resize(ranks[i]);
        f.U.resize(basis.dim, ranks[i]);
        in.read(reinterpret_cast<char*>(f.occ.data()), std::streamsize(sizeof(double) * f.occ.size()));
        in.read(reinterpret_cast<char*>(f.U.data()), std::streamsize(sizeof(cplx) * f.U.size()));
        if (!in) throw ValidationError("checkpoint: truncated data");
    }
    validate(g);
    return g;
}

}  // namespace dfc
