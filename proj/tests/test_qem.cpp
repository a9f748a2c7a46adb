#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ponq/decimate.hpp"
#include "ponq/qem.hpp"
#include "ponq/rng.hpp"
#include "support/oracles.hpp"
#include "support/shapes.hpp"

using namespace ponq;
using namespace ponq::testshapes;

namespace {

Quadric quadric_of_planes(const std::vector<HPlane>& planes) {
    Quadric q;
    for (const HPlane& p : planes) q += quadric_from_plane(p);
    return q;
}

HPlane random_tangent_plane(Rng& rng, double spread) {
    Vec3 n{rng.normal(), rng.normal(), rng.normal()};
    while (stable_norm2(n) < 1e-12) n = {rng.normal(), rng.normal(), rng.normal()};
    n = normalized(n);
    Vec3 p{rng.uniform(-spread, spread), rng.uniform(-spread, spread),
           rng.uniform(-spread, spread)};
    return plane_from_sample(p, n);
}

}  // namespace

TEST_CASE("plane_from_sample fixes the tangent offset") {
    HPlane a = plane_from_sample({0, 0, 0}, {0, 0, 1});
    CHECK(a.a == 0.0);
    CHECK(a.b == 0.0);
    CHECK(a.c == 1.0);
    CHECK(a.d == 0.0);

    HPlane b = plane_from_sample({1, 1, 1}, {1, 0, 0});
    CHECK(b.a == 1.0);
    CHECK(b.d == -1.0);

    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        Vec3 n = normalized({rng.normal(), rng.normal(), rng.normal()});
        Vec3 p{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
        HPlane plane = plane_from_sample(p, n);
        CHECK(std::abs(plane.eval(p)) <= 1e-12);
    }
    CHECK_THROWS_AS(plane_from_sample({0, 0, 0}, {0, 0, 2}), geometry_error);
}

TEST_CASE("quadric_from_plane is the rank-1 outer product") {
    Quadric q = quadric_from_plane({0, 0, 1, 0});
    for (int r = 0; r < 4; ++r)
        for (int c = r; c < 4; ++c)
            CHECK(q.at(r, c) == ((r == 2 && c == 2) ? 1.0 : 0.0));

    // v^T Q v = (v^T n)^2 on random homogeneous points.
    Rng rng(6);
    for (int i = 0; i < 100; ++i) {
        HPlane plane = random_tangent_plane(rng, 1.0);
        Vec3 v{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
        double direct = plane.eval(v);
        CHECK(qem_eval(quadric_from_plane(plane), v) ==
              doctest::Approx(direct * direct).epsilon(1e-12));
    }

    // Eigenvalues {|n|^2, 0, 0, 0} for a unit-normal tangent plane.
    HPlane plane = plane_from_sample({0.3, -0.2, 0.7}, normalized({1, 2, 3}));
    auto ev = quadric_eigenvalues(quadric_from_plane(plane));
    double n2 = plane.a * plane.a + plane.b * plane.b + plane.c * plane.c + plane.d * plane.d;
    CHECK(ev[3] == doctest::Approx(n2).epsilon(1e-12));
    for (int i = 0; i < 3; ++i) CHECK(std::abs(ev[i]) < 1e-12);
}

TEST_CASE("qem_eval sums squared plane distances") {
    Quadric z0 = quadric_from_plane({0, 0, 1, 0});
    CHECK(qem_eval(z0, {0, 0, 2}) == doctest::Approx(4.0));

    Quadric q = quadric_of_planes({{1, 0, 0, 0}, {0, 1, 0, 0}});
    CHECK(qem_eval(q, {1, 1, 0}) == doctest::Approx(2.0));

    Rng rng(7);
    std::vector<HPlane> planes;
    for (int i = 0; i < 9; ++i) planes.push_back(random_tangent_plane(rng, 1.0));
    Quadric sum = quadric_of_planes(planes);
    for (int i = 0; i < 50; ++i) {
        Vec3 v{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
        double direct = 0.0;
        for (const HPlane& p : planes) direct += p.eval(v) * p.eval(v);
        CHECK(qem_eval(sum, v) == doctest::Approx(direct).epsilon(1e-10));
    }
}

TEST_CASE("quadric additivity") {
    Rng rng(8);
    Quadric q1 = quadric_from_plane(random_tangent_plane(rng, 1.0));
    Quadric q2 = quadric_of_planes({random_tangent_plane(rng, 1.0),
                                    random_tangent_plane(rng, 1.0)});
    Quadric sum = q1 + q2;
    for (int i = 0; i < 50; ++i) {
        Vec3 v{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
        CHECK(qem_eval(sum, v) ==
              doctest::Approx(qem_eval(q1, v) + qem_eval(q2, v)).epsilon(1e-12));
    }
}

TEST_CASE("plane sums stay positive semi-definite") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<HPlane> planes;
        int count = 1 + int(rng.uniform_index(12));
        for (int i = 0; i < count; ++i) planes.push_back(random_tangent_plane(rng, 1.0));
        auto ev = quadric_eigenvalues(quadric_of_planes(planes));
        CHECK(ev[0] >= -1e-9);
    }
}

TEST_CASE("qem_minimize solves the full-rank corner exactly") {
    Quadric q = quadric_of_planes({
        plane_from_sample({1, 0, 0}, {1, 0, 0}),
        plane_from_sample({0, 1, 0}, {0, 1, 0}),
        plane_from_sample({0, 0, 1}, {0, 0, 1}),
    });
    auto r = qem_minimize(q, {0.2, 0.3, 0.4}, std::nullopt, {});
    CHECK(dist(r.position, Vec3{1, 1, 1}) <= 1e-9);
    CHECK(r.rank == 3);
    // First-order optimality: |2(A v + b)| small.
    CHECK(qem_eval(q, r.position) <= 1e-16);
}

TEST_CASE("qem_minimize fills truncated directions from the anchor") {
    Quadric q = quadric_of_planes({{1, 0, 0, 0}, {0, 1, 0, 0}});
    auto r = qem_minimize(q, {0.3, 0.4, 0.7}, std::nullopt, {});
    CHECK(r.rank == 2);
    CHECK(dist(r.position, Vec3{0, 0, 0.7}) <= 1e-9);

    // All directions truncated: zero quadric returns the anchor, flagged.
    Quadric zero;
    auto rz = qem_minimize(zero, {0.5, -0.5, 0.25}, std::nullopt, {});
    CHECK(rz.anchor_fallback);
    CHECK(rz.position == Vec3{0.5, -0.5, 0.25});

    Quadric bad;
    bad.m[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(qem_minimize(bad, {0, 0, 0}, std::nullopt, {}), geometry_error);
}

TEST_CASE("qem_minimize beats a 1e6-point random search with Nelder-Mead polish") {
    Rng rng(12);
    std::vector<HPlane> planes;
    std::vector<Vec3> pts;
    for (int i = 0; i < 12; ++i) {
        Vec3 n = normalized({rng.normal(), rng.normal(), rng.normal()});
        Vec3 p{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
        planes.push_back(plane_from_sample(p, n));
        pts.push_back(p);
    }
    Quadric q = quadric_of_planes(planes);
    Vec3 anchor{};
    for (const Vec3& p : pts) anchor += p;
    anchor = anchor / double(pts.size());

    auto r = qem_minimize(q, anchor, std::nullopt, {});
    Aabb box;
    box.expand(anchor - Vec3{2, 2, 2});
    box.expand(anchor + Vec3{2, 2, 2});
    double oracle = oracles::qem_min_oracle(q, box, 1000000, 99);
    double ours = qem_eval(q, r.position);
    CHECK(ours <= oracle + 1e-6 * (1.0 + std::abs(oracle)));
}

TEST_CASE("qem_minimize is translation equivariant") {
    Rng rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<Vec3> pts, normals;
        int count = 3 + int(rng.uniform_index(8));
        for (int i = 0; i < count; ++i) {
            pts.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
            normals.push_back(normalized({rng.normal(), rng.normal(), rng.normal()}));
        }
        Vec3 t{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
        Quadric q, qt;
        for (int i = 0; i < count; ++i) {
            q += quadric_from_plane(plane_from_sample(pts[i], normals[i]));
            qt += quadric_from_plane(plane_from_sample(pts[i] + t, normals[i]));
        }
        Vec3 anchor = pts[0];
        Vec3 a = qem_minimize(q, anchor, std::nullopt, {}).position;
        Vec3 b = qem_minimize(qt, anchor + t, std::nullopt, {}).position;
        CHECK(dist(a + t, b) <= 1e-9 * (1.0 + norm(t)));
    }
}

TEST_CASE("cluster_decimate keeps cube corners at resolution 2") {
    TriangleMesh cube = make_cube(1.0);
    TriangleMesh dec = cluster_decimate(cube, 2);
    REQUIRE(dec.vertices.size() == 8);
    for (const Vec3& v : dec.vertices) {
        CHECK(std::abs(std::abs(v.x) - 0.5) <= 1e-9);
        CHECK(std::abs(std::abs(v.y) - 0.5) <= 1e-9);
        CHECK(std::abs(std::abs(v.z) - 0.5) <= 1e-9);
    }
    CHECK(dec.faces.size() == cube.faces.size());
    CHECK(audit_mesh(dec).watertight);
}

TEST_CASE("cluster_decimate at resolution 1 collapses to a point") {
    TriangleMesh dec = cluster_decimate(make_cube(), 1);
    CHECK(dec.vertices.size() == 1);
    CHECK(dec.faces.empty());
    CHECK_THROWS_AS(cluster_decimate(make_cube(), 0), geometry_error);
}

TEST_CASE("cluster_decimate keeps a dense sphere within two cell diagonals") {
    TriangleMesh sphere = make_sphere(0.45, 64, 32);
    TriangleMesh dec = cluster_decimate(sphere, 16);
    CHECK(dec.faces.size() <= sphere.faces.size());
    Vec3 cell = sphere.bounds().extent() / 16.0;
    double tol = 2.0 * norm(cell);
    CHECK(oracles::sampled_hausdorff(sphere, dec, 20000, 5) <= tol);
}
