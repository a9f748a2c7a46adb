#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ponq/mesh.hpp"
#include "ponq/rng.hpp"
#include "ponq/sdf.hpp"
#include "support/shapes.hpp"

using namespace ponq;
using namespace ponq::testshapes;

TEST_CASE("load_obj parses the smallest valid input") {
    TriangleMesh m = load_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
    CHECK(m.vertices.size() == 3);
    CHECK(m.faces.size() == 1);
    CHECK(m.faces[0] == std::array<std::int32_t, 3>{0, 1, 2});
}

TEST_CASE("load_obj fan-triangulates quads") {
    TriangleMesh m = load_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
    REQUIRE(m.faces.size() == 2);
    CHECK(m.faces[0] == std::array<std::int32_t, 3>{0, 1, 2});
    CHECK(m.faces[1] == std::array<std::int32_t, 3>{0, 2, 3});
}

TEST_CASE("load_obj rejects out-of-range indices and malformed records") {
    CHECK_THROWS_AS(load_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 5\n"), geometry_error);
    try {
        load_obj("v 0 0 0\nv 1 0 oops\n");
        FAIL("expected parse error");
    } catch (const parse_error& e) {
        CHECK(e.line == 2);
    }
    // CRLF, comments, and ignored records are accepted.
    TriangleMesh m = load_obj("# comment\r\nv 0 0 0\r\nvn 0 0 1\nv 1 0 0\nv 0 1 0\nf 1//1 2//1 3//1\n");
    CHECK(m.faces.size() == 1);
}

TEST_CASE("load_obj drops zero-area faces with a warning count") {
    LoadStats stats;
    TriangleMesh m = load_obj("v 0 0 0\nv 1 0 0\nv 2 0 0\nv 0 1 0\nf 1 2 3\nf 1 2 4\n", &stats);
    CHECK(m.faces.size() == 1);
    CHECK(stats.degenerate_faces_dropped == 1);
}

TEST_CASE("save_obj round-trips the cube and the empty mesh") {
    TriangleMesh cube = make_cube();
    TriangleMesh reloaded = load_obj(save_obj(cube));
    REQUIRE(reloaded.vertices.size() == cube.vertices.size());
    REQUIRE(reloaded.faces == cube.faces);
    for (std::size_t i = 0; i < cube.vertices.size(); ++i)
        CHECK(reloaded.vertices[i] == cube.vertices[i]);

    TriangleMesh empty;
    TriangleMesh empty_reloaded = load_obj(save_obj(empty));
    CHECK(empty_reloaded.vertices.empty());
    CHECK(empty_reloaded.faces.empty());
}

TEST_CASE("save_obj text is idempotent and keeps indices bit-identical on 10k triangles") {
    TriangleMesh soup = make_random_soup(20240601, 10000);
    std::string text = save_obj(soup);
    TriangleMesh reloaded = load_obj(text);
    CHECK(reloaded.faces == soup.faces);  // indices exact
    CHECK(save_obj(reloaded) == text);    // 9-significant-digit text is stable
}

TEST_CASE("sample_surface splits a unit square across its two triangles binomially") {
    TriangleMesh square;
    square.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
    square.faces = {{0, 1, 2}, {0, 2, 3}};
    const std::size_t count = 100000;
    SurfaceSampleSet set = sample_surface(square, count, 7);
    // Triangle membership via the diagonal y <= x.
    std::size_t first = 0;
    for (const Vec3& p : set.points)
        if (p.y <= p.x) ++first;
    double sigma = std::sqrt(0.25 * count);
    CHECK(std::abs(double(first) - 0.5 * count) < 3.0 * sigma);
}

TEST_CASE("sample_surface uses the face normal and is deterministic") {
    TriangleMesh tri;
    tri.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    tri.faces = {{0, 1, 2}};
    SurfaceSampleSet a = sample_surface(tri, 100, 42);
    for (const Vec3& n : a.normals) CHECK(n == Vec3{0, 0, 1});
    // Samples lie on the triangle (barycentric residual).
    for (const Vec3& p : a.points) {
        CHECK(p.z == 0.0);
        CHECK(p.x >= -1e-12);
        CHECK(p.y >= -1e-12);
        CHECK(p.x + p.y <= 1.0 + 1e-12);
    }
    SurfaceSampleSet b = sample_surface(tri, 100, 42);
    CHECK(a.points == b.points);
    CHECK(a.normals == b.normals);
}

TEST_CASE("sample_surface on a sphere has its mean near the center") {
    TriangleMesh sphere = make_sphere(0.45, 32, 16, {0.2, -0.1, 0.3});
    SurfaceSampleSet set = sample_surface(sphere, 100000, 11);
    Vec3 mean{};
    for (const Vec3& p : set.points) mean += p;
    mean = mean / double(set.points.size());
    CHECK(dist(mean, Vec3{0.2, -0.1, 0.3}) < 0.01);
}

TEST_CASE("sample_surface refuses fully degenerate meshes") {
    TriangleMesh bad;
    bad.vertices = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
    bad.faces = {{0, 1, 2}};
    CHECK_THROWS_AS(sample_surface(bad, 10, 0), geometry_error);
}

TEST_CASE("audit_mesh on the closed cube and an opened cube") {
    TriangleMesh cube = make_cube();
    MeshAuditReport closed = audit_mesh(cube);
    CHECK(closed.watertight);
    CHECK(closed.boundary_edge_count == 0);
    CHECK(closed.non_manifold_edge_count == 0);
    CHECK(closed.self_intersection_pair_count == 0);

    TriangleMesh open = cube;
    open.faces.pop_back();
    MeshAuditReport report = audit_mesh(open);
    CHECK(!report.watertight);
    CHECK(report.boundary_edge_count > 0);
}

TEST_CASE("audit_mesh counts interpenetrating tetrahedra and matches the exhaustive oracle") {
    TriangleMesh a = make_tetrahedron(0.4);
    TriangleMesh b = make_tetrahedron(0.4);
    for (Vec3& v : b.vertices) v += Vec3{0.15, 0.1, 0.05};
    auto offset = static_cast<std::int32_t>(a.vertices.size());
    a.vertices.insert(a.vertices.end(), b.vertices.begin(), b.vertices.end());
    for (const auto& f : b.faces) a.faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});

    MeshAuditReport report = audit_mesh(a);
    CHECK(report.self_intersection_pair_count > 0);
    CHECK(report.self_intersection_pair_count == serial::self_intersection_pairs(a));
}

TEST_CASE("BVH-accelerated pair count equals the exhaustive oracle on random soups") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        TriangleMesh soup = make_random_soup(seed, 150);
        CHECK(audit_mesh(soup).self_intersection_pair_count ==
              serial::self_intersection_pairs(soup));
    }
}

TEST_CASE("sdf grid of a sphere matches the analytic distance") {
    TriangleMesh sphere = make_sphere(0.45, 64, 32);
    SdfGrid grid = mesh_to_sdf_grid(sphere, 16, 0.1);
    double diag = grid.spacing * std::sqrt(3.0);
    for (std::uint32_t k = 0; k < 16; ++k)
        for (std::uint32_t j = 0; j < 16; ++j)
            for (std::uint32_t i = 0; i < 16; ++i) {
                Vec3 p = grid.node_pos(i, j, k);
                double analytic = norm(p) - 0.45;
                CHECK(std::abs(grid.values[grid.index(i, j, k)] - analytic) <= diag);
            }
}

TEST_CASE("sdf sign conventions: surface nodes near zero, far corner positive") {
    TriangleMesh cube = make_cube(0.9);
    SdfGrid grid = mesh_to_sdf_grid(cube, 11, 0.1425);
    // Far corner node is outside.
    CHECK(grid.values[grid.index(0, 0, 0)] > 0.0f);
    // Center is inside.
    double best_center = 1e9;
    std::uint32_t mid = 5;
    best_center = grid.values[grid.index(mid, mid, mid)];
    CHECK(best_center < 0.0f);
}

TEST_CASE("sdf node exactly on the surface has |value| <= 1e-6") {
    // Grid arranged so nodes land exactly on the cube face planes.
    TriangleMesh cube = make_cube(1.0);
    SdfGrid grid = mesh_to_sdf_grid(cube, 21, 0.5);
    // Nodes span [-1,1] with spacing 0.1: nodes at +-0.5 hit the faces.
    bool found_zero = false;
    for (std::uint32_t i = 0; i < 21; ++i) {
        Vec3 p = grid.node_pos(i, 10, 10);
        if (std::abs(p.x - 0.5) < 1e-12) {
            CHECK(std::abs(grid.values[grid.index(i, 10, 10)]) <= 1e-6f);
            found_zero = true;
        }
    }
    CHECK(found_zero);
}

TEST_CASE("sdf refuses non-watertight input") {
    TriangleMesh open = make_cube();
    open.faces.pop_back();
    CHECK_THROWS_AS(mesh_to_sdf_grid(open, 8, 0.1), geometry_error);
}

TEST_CASE("parallel sdf agrees with the serial single-ray reference on watertight shapes") {
    for (const TriangleMesh& mesh : {make_sphere(0.45, 24, 12), make_cube(0.8)}) {
        SdfGrid fast = mesh_to_sdf_grid(mesh, 9, 0.1);
        SdfGrid ref = serial::mesh_to_sdf_grid(mesh, 9, 0.1);
        REQUIRE(fast.values.size() == ref.values.size());
        for (std::size_t i = 0; i < fast.values.size(); ++i) {
            CHECK(fast.values[i] == doctest::Approx(ref.values[i]).epsilon(1e-6));
            // Signs must agree exactly away from the surface.
            if (std::abs(ref.values[i]) > 1e-6)
                CHECK((fast.values[i] > 0) == (ref.values[i] > 0));
        }
    }
}

TEST_CASE("SDFG file round trip is bit-exact") {
    TriangleMesh sphere = make_sphere(0.45, 16, 8);
    SdfGrid grid = mesh_to_sdf_grid(sphere, 8, 0.1);
    auto bytes = write_sdf_grid(grid);
    SdfGrid back = read_sdf_grid(bytes);
    CHECK(write_sdf_grid(back) == bytes);
    CHECK(back.values == grid.values);
    CHECK_THROWS_AS(read_sdf_grid(std::vector<unsigned char>{'X', 'X', 'X', 'X'}), format_error);
    auto truncated = bytes;
    truncated.resize(truncated.size() - 1);
    CHECK_THROWS_AS(read_sdf_grid(truncated), format_error);
}

TEST_CASE("normalize_transform maps the longest axis onto [-0.45, 0.45]") {
    TriangleMesh cube = make_cube(2.0, {1, 2, 3});
    NormalizeTransform t = normalize_transform(cube);
    TriangleMesh n = apply_transform(cube, t);
    Aabb b = n.bounds();
    CHECK(b.lo.x == doctest::Approx(-0.45).epsilon(1e-12));
    CHECK(b.hi.x == doctest::Approx(0.45).epsilon(1e-12));
    CHECK(b.contains(Vec3{0, 0, 0}));
}
