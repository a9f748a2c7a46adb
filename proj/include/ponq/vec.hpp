// Small fixed-size linear algebra used across the library: 3-vectors, axis
// boxes, and symmetric eigen-solves. Dependency-free on purpose so the core
// stays easy to embed.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

namespace ponq {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    double& operator[](int i) { return (&x)[i]; }
    double operator[](int i) const { return (&x)[i]; }

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }
    bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

// Squared norm with the three squares accumulated in sorted order. Makes the
// result bit-identical under signed permutations of the components, which
// keeps sampling and normals exactly equivariant under 90-degree rotations.
inline double stable_norm2(const Vec3& v) {
    double s[3] = {v.x * v.x, v.y * v.y, v.z * v.z};
    if (s[0] > s[1]) std::swap(s[0], s[1]);
    if (s[1] > s[2]) std::swap(s[1], s[2]);
    if (s[0] > s[1]) std::swap(s[0], s[1]);
    return (s[0] + s[1]) + s[2];
}

inline double norm(const Vec3& v) { return std::sqrt(stable_norm2(v)); }
inline double norm2(const Vec3& v) { return stable_norm2(v); }

inline Vec3 normalized(const Vec3& v) {
    double n = norm(v);
    return n > 0.0 ? v / n : Vec3{0.0, 0.0, 0.0};
}

inline double dist2(const Vec3& a, const Vec3& b) { return stable_norm2(a - b); }
inline double dist(const Vec3& a, const Vec3& b) { return std::sqrt(dist2(a, b)); }

inline bool is_finite(const Vec3& v) {
    return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

inline Vec3 min(const Vec3& a, const Vec3& b) {
    return {std::min(a.x, b.x), std::min(a.y, b.y), std::min(a.z, b.z)};
}
inline Vec3 max(const Vec3& a, const Vec3& b) {
    return {std::max(a.x, b.x), std::max(a.y, b.y), std::max(a.z, b.z)};
}

// Axis-aligned box.
struct Aabb {
    Vec3 lo{1e300, 1e300, 1e300};
    Vec3 hi{-1e300, -1e300, -1e300};

    void expand(const Vec3& p) { lo = min(lo, p); hi = max(hi, p); }
    void expand(const Aabb& b) { lo = min(lo, b.lo); hi = max(hi, b.hi); }
    void pad(double r) { lo -= Vec3{r, r, r}; hi += Vec3{r, r, r}; }
    bool valid() const { return lo.x <= hi.x && lo.y <= hi.y && lo.z <= hi.z; }
    Vec3 center() const { return (lo + hi) * 0.5; }
    Vec3 extent() const { return hi - lo; }
    bool contains(const Vec3& p) const {
        return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z;
    }
    bool overlaps(const Aabb& b) const {
        return lo.x <= b.hi.x && hi.x >= b.lo.x && lo.y <= b.hi.y && hi.y >= b.lo.y &&
               lo.z <= b.hi.z && hi.z >= b.lo.z;
    }
    Vec3 clamp(const Vec3& p) const {
        return {std::clamp(p.x, lo.x, hi.x), std::clamp(p.y, lo.y, hi.y), std::clamp(p.z, lo.z, hi.z)};
    }
    // Squared distance from p to the box (0 if inside).
    double dist2(const Vec3& p) const {
        Vec3 d{std::max({lo.x - p.x, 0.0, p.x - hi.x}),
               std::max({lo.y - p.y, 0.0, p.y - hi.y}),
               std::max({lo.z - p.z, 0.0, p.z - hi.z})};
        return dot(d, d);
    }
};

// Jacobi eigen-decomposition of a symmetric NxN matrix (N = 3 or 4 here).
// Eigenvalues ascending, eigenvectors as columns of `vecs`. Deterministic;
// converges to ~1e-15 relative for the sizes used.
template <int N>
struct SymEig {
    std::array<double, N> values{};
    std::array<std::array<double, N>, N> vecs{};  // vecs[row][col], column = eigenvector
};

template <int N>
inline SymEig<N> sym_eigen(std::array<std::array<double, N>, N> a) {
    SymEig<N> out;
    double v[N][N] = {};
    for (int i = 0; i < N; ++i) v[i][i] = 1.0;
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < N; ++p)
            for (int q = p + 1; q < N; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-300) break;
        for (int p = 0; p < N; ++p) {
            for (int q = p + 1; q < N; ++q) {
                double apq = a[p][q];
                if (apq == 0.0) continue;
                double app = a[p][p], aqq = a[q][q];
                double tau = (aqq - app) / (2.0 * apq);
                double t = (tau >= 0.0) ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                        : 1.0 / (tau - std::sqrt(1.0 + tau * tau));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = t * c;
                for (int k = 0; k < N; ++k) {
                    double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < N; ++k) {
                    double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (int k = 0; k < N; ++k) {
                    double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    // Sort ascending by eigenvalue, stable in index for ties.
    std::array<int, N> order;
    for (int i = 0; i < N; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int i, int j) {
        if (a[i][i] != a[j][j]) return a[i][i] < a[j][j];
        return i < j;
    });
    for (int i = 0; i < N; ++i) {
        out.values[i] = a[order[i]][order[i]];
        for (int r = 0; r < N; ++r) out.vecs[r][i] = v[r][order[i]];
    }
    return out;
}

}  // namespace ponq
