#include "ponq/qem.hpp"

#include <cmath>

namespace ponq {

HPlane plane_from_sample(const Vec3& point, const Vec3& unit_normal) {
    double n2 = stable_norm2(unit_normal);
    if (std::abs(n2 - 1.0) > 2e-9) throw geometry_error("plane normal must be unit length");
    return {unit_normal.x, unit_normal.y, unit_normal.z, -dot(unit_normal, point)};
}

Quadric quadric_from_plane(const HPlane& p) {
    const double n[4] = {p.a, p.b, p.c, p.d};
    Quadric q;
    int idx = 0;
    for (int r = 0; r < 4; ++r)
        for (int c = r; c < 4; ++c) q.m[idx++] = n[r] * n[c];
    return q;
}

double qem_eval(const Quadric& q, const Vec3& v) {
    const double h[4] = {v.x, v.y, v.z, 1.0};
    double sum = 0.0;
    for (int r = 0; r < 4; ++r) {
        sum += q.at(r, r) * h[r] * h[r];
        for (int c = r + 1; c < 4; ++c) sum += 2.0 * q.at(r, c) * h[r] * h[c];
    }
    return sum;
}

double quadric_frobenius2(const Quadric& a, const Quadric& b) {
    double sum = 0.0;
    for (int r = 0; r < 4; ++r) {
        double d = a.at(r, r) - b.at(r, r);
        sum += d * d;
        for (int c = r + 1; c < 4; ++c) {
            double e = a.at(r, c) - b.at(r, c);
            sum += 2.0 * e * e;
        }
    }
    return sum;
}

std::array<double, 4> quadric_eigenvalues(const Quadric& q) {
    std::array<std::array<double, 4>, 4> a{};
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) a[r][c] = q.at(r, c);
    return sym_eigen<4>(a).values;
}

QemMinimizeResult qem_minimize(const Quadric& q, const Vec3& anchor,
                               const std::optional<Aabb>& bounds,
                               const QemMinimizerConfig& config) {
    if (!q.finite()) throw geometry_error("non-finite quadric");
    if (!is_finite(anchor)) throw geometry_error("non-finite anchor");
    if (!(config.tau > 0.0 && config.tau < 1.0)) throw geometry_error("tau must be in (0,1)");

    // Q = [[A, b], [b^T, c]] with A the 3x3 block.
    std::array<std::array<double, 3>, 3> a{};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) a[r][c] = q.at(r, c);
    Vec3 b{q.at(0, 3), q.at(1, 3), q.at(2, 3)};

    SymEig<3> eig = sym_eigen<3>(a);
    double lambda_max = std::max({std::abs(eig.values[0]), std::abs(eig.values[1]),
                                  std::abs(eig.values[2])});

    QemMinimizeResult result;
    result.position = anchor;
    if (lambda_max > 0.0) {
        // x = anchor + sum over kept directions of u_i u_i^T (-b - A anchor) / lambda_i.
        Vec3 a_anchor{
            a[0][0] * anchor.x + a[0][1] * anchor.y + a[0][2] * anchor.z,
            a[1][0] * anchor.x + a[1][1] * anchor.y + a[1][2] * anchor.z,
            a[2][0] * anchor.x + a[2][1] * anchor.y + a[2][2] * anchor.z,
        };
        Vec3 rhs = -b - a_anchor;
        for (int i = 0; i < 3; ++i) {
            double lambda = eig.values[i];
            if (lambda <= config.tau * lambda_max) continue;
            Vec3 u{eig.vecs[0][i], eig.vecs[1][i], eig.vecs[2][i]};
            result.position += u * (dot(u, rhs) / lambda);
            ++result.rank;
        }
    }
    result.anchor_fallback = result.rank == 0;

    if (bounds && config.clamp_to_bounds) {
        Vec3 clamped = bounds->clamp(result.position);
        result.clamped = !(clamped == result.position);
        result.position = clamped;
        // The box projection is not a descent step; keep the anchor when it
        // beats the clamped point so qem_eval(result) <= qem_eval(anchor).
        if (result.clamped && bounds->contains(anchor) &&
            qem_eval(q, result.position) > qem_eval(q, anchor)) {
            result.position = anchor;
            result.anchor_fallback = true;
        }
    }
    return result;
}

}  // namespace ponq
