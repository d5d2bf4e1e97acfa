#pragma once

#include <algorithm>
#include <complex>
#include <limits>
#include <vector>

#ifndef LAPACK_COMPLEX_CPP
#define LAPACK_COMPLEX_CPP
#endif
#include <lapacke.h>

#include <Eigen/Dense>

#include "errors.hpp"
#include "lattice.hpp"

namespace dfc {

using Mat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;
using Mat4 = Eigen::Matrix<cplx, 4, 4>;
using Mat2 = Eigen::Matrix<cplx, 2, 2>;

inline Mat2 pauli(int j) {
    const cplx I(0.0, 1.0);
    Mat2 s;
    switch (j) {
        case 0: s << 0.0, 1.0, 1.0, 0.0; break;
        case 1: s << 0.0, -I, I, 0.0; break;
        default: s << 1.0, 0.0, 0.0, -1.0; break;
    }
    return s;
}

// Dirac representation: alpha_j = [[0, s_j], [s_j, 0]]
inline Mat4 alpha_matrix(int j) {
    Mat4 a = Mat4::Zero();
    a.block<2, 2>(0, 2) = pauli(j);
    a.block<2, 2>(2, 0) = pauli(j);
    return a;
}

inline Mat4 beta_matrix() {
    Mat4 b = Mat4::Zero();
    b.diagonal() << 1.0, 1.0, -1.0, -1.0;
    return b;
}

// max abs deviation from the anticommutation relations
inline double clifford_defect() {
    const Mat4 id = Mat4::Identity();
    const Mat4 b = beta_matrix();
    double worst = (b * b - id).cwiseAbs().maxCoeff();
    for (int j = 0; j < 3; ++j) {
        const Mat4 aj = alpha_matrix(j);
        worst = std::max(worst, (aj * b + b * aj).cwiseAbs().maxCoeff());
        for (int k = 0; k < 3; ++k) {
            const Mat4 ak = alpha_matrix(k);
            const Mat4 target = (j == k ? 2.0 : 0.0) * id;
            worst = std::max(worst, (aj * ak + ak * aj - target).cwiseAbs().maxCoeff());
        }
    }
    return worst;
}

// 4x4 block p.alpha + beta
inline Mat4 dirac_block(const Vec3& p) {
    return p[0] * alpha_matrix(0) + p[1] * alpha_matrix(1) + p[2] * alpha_matrix(2) + beta_matrix();
}

struct FiberOperator {
    Vec3 xi = Vec3::Zero();
    Mat matrix;
};

struct FiberEigensystem {
    Vec3 xi = Vec3::Zero();
    RVec eigenvalues;
    Mat eigenvectors;

    double degeneracy_tol() const {
        return eigenvalues.size() ? 1e-9 * eigenvalues.cwiseAbs().maxCoeff() : 0.0;
    }
};

inline Vec3 momentum(const IVec3& k, const Vec3& xi, double ell) {
    return xi + (2.0 * pi / ell) * to_vec(k);
}

inline FiberOperator assemble_free_dirac(const PlaneWaveBasis& basis, const Vec3& xi, double ell) {
    FiberOperator op;
    op.xi = xi;
    op.matrix = Mat::Zero(basis.dim, basis.dim);
    for (int a = 0; a < basis.n_pw; ++a)
        op.matrix.block<4, 4>(4 * a, 4 * a) = dirac_block(momentum(basis.indices[a], xi, ell));
    return op;
}

struct FreeLevel {
    IVec3 k;
    double energy;
};

// each entry is a twofold level; both signs listed
inline std::vector<FreeLevel> free_spectrum(const PlaneWaveBasis& basis, const Vec3& xi, double ell) {
    std::vector<FreeLevel> out;
    out.reserve(2 * basis.n_pw);
    for (const auto& k : basis.indices) {
        const double e = std::sqrt(1.0 + momentum(k, xi, ell).squaredNorm());
        out.push_back({k, e});
        out.push_back({k, -e});
    }
    std::sort(out.begin(), out.end(), [](const FreeLevel& a, const FreeLevel& b) { return a.energy < b.energy; });
    return out;
}

// sorted eigenvalues with multiplicity, as diagonalize would return them
inline RVec free_eigenvalues(const PlaneWaveBasis& basis, const Vec3& xi, double ell) {
    const auto lv = free_spectrum(basis, xi, ell);
    RVec ev(2 * lv.size());
    for (std::size_t i = 0; i < lv.size(); ++i) ev[2 * i] = ev[2 * i + 1] = lv[i].energy;
    return ev;
}

namespace detail {

// Fix the gauge inside a degenerate block by Gram-Schmidt of P e_j in standard order.
inline void fix_gauge(Mat& v, int begin, int count) {
    if (count < 2) return;
    const Eigen::Index dim = v.rows();
    const Mat vc = v.middleCols(begin, count);
    Mat out(dim, count);
    int found = 0;
    for (Eigen::Index j = 0; j < dim && found < count; ++j) {
        // |P e_j| bounds the remainder below
        if (vc.row(j).norm() <= 1e-3) continue;
        CVec w = vc * vc.row(j).adjoint();
        for (int i = 0; i < found; ++i) w -= out.col(i) * out.col(i).dot(w);
        const double nrm = w.norm();
        if (nrm > 1e-3) out.col(found++) = w / nrm;
    }
    if (found == count) v.middleCols(begin, count) = out;
}

}  // namespace detail

inline double hermitian_defect(const Mat& a) {
    const double n = a.norm();
    return n > 0 ? (a - a.adjoint()).norm() / n : 0.0;
}

inline FiberEigensystem diagonalize(const FiberOperator& op, double hermitian_tol = 1e-12) {
    const Mat& a = op.matrix;
    if (a.rows() != a.cols()) throw ValidationError("diagonalize: matrix not square");
    if (hermitian_defect(a) > hermitian_tol) throw ValidationError("diagonalize: matrix not Hermitian");
    const lapack_int n = lapack_int(a.rows());
    FiberEigensystem es;
    es.xi = op.xi;
    Mat h = 0.5 * (a + a.adjoint());
    es.eigenvectors.resize(n, n);
    es.eigenvalues.resize(n);
    if (n == 0) return es;
    std::vector<lapack_int> support(2 * std::size_t(n));
    lapack_int found = 0;
    const lapack_int info =
        LAPACKE_zheevr(LAPACK_COL_MAJOR, 'V', 'A', 'U', n, reinterpret_cast<lapack_complex_double*>(h.data()), n, 0.0,
                       0.0, 0, 0, 0.0, &found, es.eigenvalues.data(),
                       reinterpret_cast<lapack_complex_double*>(es.eigenvectors.data()), n, support.data());
    if (info != 0 || found != n) throw NumericError("zheevr failed with info=" + std::to_string(info));
    const double tol = es.degeneracy_tol();
    int start = 0;
    for (int i = 1; i <= n; ++i) {
        if (i == n || es.eigenvalues[i] - es.eigenvalues[i - 1] > tol) {
            detail::fix_gauge(es.eigenvectors, start, i - start);
            start = i;
        }
    }
    return es;
}

// column indices with eigenvalue in [a, b)
inline std::vector<int> columns_in(const FiberEigensystem& eig, double a, double b, double tol) {
    std::vector<int> cols;
    for (Eigen::Index i = 0; i < eig.eigenvalues.size(); ++i) {
        const double lam = eig.eigenvalues[i];
        if (std::isfinite(a) && std::abs(lam - a) <= tol)
            throw AmbiguityError("eigenvalue on lower interval endpoint", lam);
        if (std::isfinite(b) && std::abs(lam - b) <= tol)
            throw AmbiguityError("eigenvalue on upper interval endpoint", lam);
        if (lam >= a && lam < b) cols.push_back(int(i));
    }
    return cols;
}

inline Mat select_columns(const Mat& v, const std::vector<int>& cols) {
    Mat out(v.rows(), Eigen::Index(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) out.col(Eigen::Index(i)) = v.col(cols[i]);
    return out;
}

inline Mat spectral_projector(const FiberEigensystem& eig, double a, double b, double degeneracy_tol = -1.0) {
    if (!(a < b)) throw ValidationError("spectral_projector: need a < b");
    const double tol = degeneracy_tol < 0 ? eig.degeneracy_tol() : degeneracy_tol;
    const Mat v = select_columns(eig.eigenvectors, columns_in(eig, a, b, tol));
    return v * v.adjoint();
}

}  // namespace dfc
