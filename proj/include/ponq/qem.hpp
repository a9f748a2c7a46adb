// Quadric error metric algebra: homogeneous tangent planes, rank-1 plane
// quadrics, accumulation, evaluation, and the truncated-eigenvalue minimizer
// with anchor fallback. Pure value types, reentrant everywhere.
#pragma once

#include <array>
#include <optional>

#include "ponq/errors.hpp"
#include "ponq/vec.hpp"

namespace ponq {

// Homogeneous plane [a,b,c,d] with unit (a,b,c); plane membership is
// v^T n_p = 0 for v = [x,y,z,1].
struct HPlane {
    double a = 0, b = 0, c = 0, d = 0;

    // Signed distance of a point to the plane (unit normal assumed).
    double eval(const Vec3& p) const { return a * p.x + b * p.y + c * p.z + d; }
};

// Tangent plane through `point`: d = -normal . point.
HPlane plane_from_sample(const Vec3& point, const Vec3& unit_normal);

// Symmetric 4x4 quadric stored as 10 upper-triangular scalars in row-major
// order: (0,0)(0,1)(0,2)(0,3)(1,1)(1,2)(1,3)(2,2)(2,3)(3,3).
struct Quadric {
    std::array<double, 10> m{};

    static constexpr int upper_index(int r, int c) {
        if (r > c) std::swap(r, c);
        constexpr int row_start[4] = {0, 4, 7, 9};
        return row_start[r] + (c - r);
    }
    double at(int r, int c) const { return m[upper_index(r, c)]; }
    double& at(int r, int c) { return m[upper_index(r, c)]; }

    Quadric operator+(const Quadric& o) const {
        Quadric q;
        for (int i = 0; i < 10; ++i) q.m[i] = m[i] + o.m[i];
        return q;
    }
    Quadric& operator+=(const Quadric& o) {
        for (int i = 0; i < 10; ++i) m[i] += o.m[i];
        return *this;
    }
    Quadric operator*(double s) const {
        Quadric q;
        for (int i = 0; i < 10; ++i) q.m[i] = m[i] * s;
        return q;
    }
    bool operator==(const Quadric& o) const { return m == o.m; }

    double trace() const { return at(0, 0) + at(1, 1) + at(2, 2) + at(3, 3); }
    bool finite() const {
        for (double v : m)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

// K_p = n_p n_p^T (rank 1).
Quadric quadric_from_plane(const HPlane& p);

// v^T Q v at v = [x,y,z,1]; equals the sum of squared plane distances when Q
// is a plane-quadric sum.
double qem_eval(const Quadric& q, const Vec3& position);

// Squared Frobenius norm of the difference, counting off-diagonals twice.
double quadric_frobenius2(const Quadric& a, const Quadric& b);

// Full 4x4 eigenvalues (ascending), for PSD checks.
std::array<double, 4> quadric_eigenvalues(const Quadric& q);

// Where grid-level fitters anchor the minimizer before truncation fills in.
enum class AnchorPolicy {
    sample_centroid,  // mean of the cell's contributing samples
    cell_center,
};

struct QemMinimizerConfig {
    double tau = 1e-3;        // singular-value cutoff ratio, 0 < tau < 1
    bool clamp_to_bounds = true;
    AnchorPolicy anchor = AnchorPolicy::sample_centroid;
};

struct QemMinimizeResult {
    Vec3 position{};
    int rank = 0;          // eigen-directions kept
    bool anchor_fallback = false;  // all directions truncated
    bool clamped = false;
};

// Decompose Q into (A, b, c); solve A x = -b by symmetric eigendecomposition
// with eigenvalues below tau * lambda_max truncated; truncated directions are
// filled from the anchor; optional clamp to bounds. Guarantees
// qem_eval(result) <= qem_eval(anchor).
QemMinimizeResult qem_minimize(const Quadric& q, const Vec3& anchor,
                               const std::optional<Aabb>& bounds, const QemMinimizerConfig& config);

}  // namespace ponq
