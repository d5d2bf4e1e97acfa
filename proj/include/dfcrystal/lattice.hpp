#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace dfc {

using IVec3 = std::array<int, 3>;
using Vec3 = Eigen::Vector3d;
using cplx = std::complex<double>;

inline constexpr double pi = std::numbers::pi;

struct CrystalParams {
    double ell = 1.0;
    double z = 1.0;
    double q = 1.0;
    double alpha = 1.0 / 137.0;

    double q_plus() const { return q > 1.0 ? q : 1.0; }
    double cell_volume() const { return ell * ell * ell; }
    double reciprocal_volume() const { return std::pow(2.0 * pi / ell, 3); }

    // allow_free admits the decoupled limits z = 0 and alpha = 0
    void validate(bool allow_free = false) const {
        if (!(ell > 0.0)) throw ValidationError("ell must be positive");
        if (!(q > 0.0)) throw ValidationError("q must be positive");
        if (allow_free) {
            if (!(z >= 0.0)) throw ValidationError("z must be non-negative");
            if (!(alpha >= 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in [0,1)");
        } else {
            if (!(z > 0.0)) throw ValidationError("z must be positive");
            if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0,1)");
        }
    }
};

inline int inf_norm(const IVec3& k) {
    return std::max({std::abs(k[0]), std::abs(k[1]), std::abs(k[2])});
}

inline double norm2(const IVec3& k) {
    return double(k[0]) * k[0] + double(k[1]) * k[1] + double(k[2]) * k[2];
}

inline Vec3 to_vec(const IVec3& k) { return Vec3(k[0], k[1], k[2]); }

// Plane waves e^{i(xi + 2 pi k / ell).x} with |k|_inf <= kmax, lexicographic order.
struct PlaneWaveBasis {
    int kmax = 0;
    int side = 1;
    int n_pw = 1;
    int dim = 4;
    std::vector<IVec3> indices;

    int index_of(const IVec3& k) const {
        if (inf_norm(k) > kmax) return -1;
        return ((k[0] + kmax) * side + (k[1] + kmax)) * side + (k[2] + kmax);
    }
    bool contains(const IVec3& k) const { return inf_norm(k) <= kmax; }
};

inline constexpr std::size_t default_memory_budget = std::size_t(8) << 30;

inline PlaneWaveBasis build_basis(int kmax, std::size_t memory_budget = default_memory_budget) {
    if (kmax < 0) throw ValidationError("kmax must be >= 0");
    PlaneWaveBasis b;
    b.kmax = kmax;
    b.side = 2 * kmax + 1;
    const double n_pw = std::pow(double(b.side), 3);
    const double bytes = 16.0 * (4.0 * n_pw) * (4.0 * n_pw);
    if (bytes > double(memory_budget))
        throw ResourceError("kmax=" + std::to_string(kmax) + " needs " + std::to_string(bytes) +
                            " bytes per fiber matrix");
    b.n_pw = b.side * b.side * b.side;
    b.dim = 4 * b.n_pw;
    b.indices.reserve(b.n_pw);
    for (int i = -kmax; i <= kmax; ++i)
        for (int j = -kmax; j <= kmax; ++j)
            for (int k = -kmax; k <= kmax; ++k) b.indices.push_back({i, j, k});
    return b;
}

struct KGrid {
    double ell = 1.0;
    int n_per_axis = 1;
    bool shifted = false;
    std::vector<Vec3> points;
    std::vector<double> weights;

    std::size_t size() const { return points.size(); }
};

// xi_j = -pi/ell + 2 pi (i_j + s) / (ell n), s = 1/2 when shifted
inline KGrid build_kgrid(double ell, int n_per_axis, bool shifted) {
    if (n_per_axis < 1) throw ValidationError("n_per_axis must be >= 1");
    if (!(ell > 0.0)) throw ValidationError("ell must be positive");
    KGrid g;
    g.ell = ell;
    g.n_per_axis = n_per_axis;
    g.shifted = shifted;
    const int n = n_per_axis;
    const double s = shifted ? 0.5 : 0.0;
    std::vector<double> axis(n);
    for (int i = 0; i < n; ++i) axis[i] = -pi / ell + 2.0 * pi * (i + s) / (ell * n);
    const double w = 1.0 / (double(n) * n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                g.points.emplace_back(axis[i], axis[j], axis[k]);
                g.weights.push_back(w);
            }
    return g;
}

}  // namespace dfc
