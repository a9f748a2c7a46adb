#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ponq/occupancy.hpp"
#include "ponq/ponq_grid.hpp"
#include "ponq/rng.hpp"
#include "support/shapes.hpp"

using namespace ponq;
using namespace ponq::testshapes;

namespace {

SurfaceSampleSet planar_patch(std::size_t count, double z, Vec3 normal, std::uint64_t seed,
                              double lo = 0.0, double hi = 0.25) {
    SurfaceSampleSet set;
    set.seed = seed;
    Rng rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
        set.points.push_back({rng.uniform(lo, hi), rng.uniform(lo, hi), z});
        set.normals.push_back(normal);
    }
    return set;
}

Aabb box_of(Vec3 lo, Vec3 hi) {
    Aabb b;
    b.expand(lo);
    b.expand(hi);
    return b;
}

}  // namespace

TEST_CASE("bin_samples follows the floor rule, including on shared faces") {
    SurfaceSampleSet set;
    set.points = {{-0.25, -0.25, -0.25},  // center of cell (0,0,0) at N=2
                  {0.0, -0.3, -0.3},      // exactly on the x face between cells 0 and 1
                  {0.5, 0.5, 0.5}};       // upper corner, clamps into the last cell
    set.normals = {{0, 0, 1}, {0, 0, 1}, {0, 0, 1}};
    CellBins bins = bin_samples(set, unit_grid_bounds(), 2);
    REQUIRE(bins.cells.count(0) == 1);
    CHECK(bins.cells.at(0) == std::vector<std::uint32_t>{0});
    // floor((0 - -0.5)/0.5) = 1: the face sample lands in the upper cell.
    REQUIRE(bins.cells.count(1) == 1);
    CHECK(bins.cells.at(1) == std::vector<std::uint32_t>{1});
    REQUIRE(bins.cells.count(7) == 1);
    CHECK(bins.cells.at(7) == std::vector<std::uint32_t>{2});

    SurfaceSampleSet empty;
    CHECK_THROWS_AS(bin_samples(empty, unit_grid_bounds(), 2), geometry_error);
}

TEST_CASE("bin_samples occupies exactly the brute-force cells on a sphere") {
    TriangleMesh sphere = make_sphere(0.45, 32, 16);
    SurfaceSampleSet set = sample_surface(sphere, 100000, 3);
    const std::uint32_t n = 16;
    CellBins bins = bin_samples(set, unit_grid_bounds(), n);
    // Exhaustive re-binning oracle.
    std::map<std::uint32_t, std::size_t> expected;
    for (const Vec3& p : set.points) {
        std::uint32_t idx3[3];
        for (int a = 0; a < 3; ++a) {
            auto c = static_cast<std::int64_t>(std::floor((p[a] + 0.5) * n));
            c = std::clamp<std::int64_t>(c, 0, n - 1);
            idx3[a] = static_cast<std::uint32_t>(c);
        }
        ++expected[(idx3[2] * n + idx3[1]) * n + idx3[0]];
    }
    REQUIRE(bins.cells.size() == expected.size());
    for (const auto& [cell, indices] : bins.cells) CHECK(indices.size() == expected.at(cell));
    // Every occupied cell intersects a sphere-crust cell box (samples lie on
    // the surface, so this is the mask-consistency direction).
    OccupancyGrid crust = serial::occupancy_from_mesh(sphere, n, unit_grid_bounds());
    for (const auto& [cell, indices] : bins.cells) CHECK(crust.at_index(cell));
}

TEST_CASE("fit_cell on a planar patch recovers the plane") {
    SurfaceSampleSet set = planar_patch(200, 0.125, {0, 0, 1}, 21);
    std::vector<std::uint32_t> idx(set.points.size());
    for (std::uint32_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Aabb cell = box_of({0, 0, 0}, {0.25, 0.25, 0.25});
    FitConfig config;
    auto fitted = fit_cell(set, idx, cell, config);
    REQUIRE(fitted.size() == 1);
    CHECK(dist(fitted[0].normal, Vec3{0, 0, 1}) <= 1e-9);
    CHECK(std::abs(fitted[0].point.z - 0.125) <= 1e-9);
    CHECK(!fitted[0].degenerate);
    // Rank 1: one dominant eigenvalue.
    auto ev = quadric_eigenvalues(fitted[0].quadric);
    CHECK(ev[3] > 0.9);
    CHECK(std::abs(ev[2]) < 1e-9);
}

TEST_CASE("fit_cell on two orthogonal plane sets lands on their intersection line") {
    SurfaceSampleSet set;
    Rng rng(22);
    for (int i = 0; i < 100; ++i) {
        set.points.push_back({0.1, rng.uniform(0.0, 0.25), rng.uniform(0.0, 0.25)});
        set.normals.push_back({1, 0, 0});
        set.points.push_back({rng.uniform(0.0, 0.25), 0.1, rng.uniform(0.0, 0.25)});
        set.normals.push_back({0, 1, 0});
    }
    std::vector<std::uint32_t> idx(set.points.size());
    for (std::uint32_t i = 0; i < idx.size(); ++i) idx[i] = i;
    auto fitted = fit_cell(set, idx, box_of({0, 0, 0}, {0.25, 0.25, 0.25}), {});
    REQUIRE(fitted.size() == 1);
    CHECK(std::abs(fitted[0].point.x - 0.1) <= 1e-9);
    CHECK(std::abs(fitted[0].point.y - 0.1) <= 1e-9);
}

TEST_CASE("fit_cell flags antipodal normals and degenerate thin cells") {
    SurfaceSampleSet set;
    Rng rng(23);
    for (int i = 0; i < 50; ++i) {
        double x = rng.uniform(0.0, 0.25), y = rng.uniform(0.0, 0.25);
        set.points.push_back({x, y, 0.1});
        set.normals.push_back({0, 0, 1});
        set.points.push_back({x, y, 0.15});
        set.normals.push_back({0, 0, -1});
    }
    std::vector<std::uint32_t> idx(set.points.size());
    for (std::uint32_t i = 0; i < idx.size(); ++i) idx[i] = i;
    auto fitted = fit_cell(set, idx, box_of({0, 0, 0}, {0.25, 0.25, 0.25}), {});
    REQUIRE(fitted.size() == 1);
    CHECK(fitted[0].degenerate);
    CHECK(std::abs(std::abs(fitted[0].normal.z) - 1.0) <= 1e-9);  // covariance axis

    // Below min_samples_per_cell: first sample's normal and rank-1 quadric.
    SurfaceSampleSet two = planar_patch(2, 0.1, {0, 0, 1}, 24);
    std::vector<std::uint32_t> idx2{0, 1};
    auto thin = fit_cell(two, idx2, box_of({0, 0, 0}, {0.25, 0.25, 0.25}), {});
    REQUIRE(thin.size() == 1);
    CHECK(thin[0].degenerate);
    CHECK(thin[0].normal == two.normals[0]);
    auto ev = quadric_eigenvalues(thin[0].quadric);
    CHECK(std::abs(ev[2]) < 1e-12);
}

TEST_CASE("fit_cell local minimality probe") {
    // Random curved cells: perturbing the fitted parameters never lowers the
    // matching loss term beyond tolerance.
    Rng rng(25);
    for (int trial = 0; trial < 10; ++trial) {
        // Sphere cap samples inside one cell.
        double radius = rng.uniform(0.25, 0.45);
        SurfaceSampleSet set;
        for (int i = 0; i < 200; ++i) {
            Vec3 dir = normalized({rng.uniform(0.5, 1.0), rng.normal() * 0.2, rng.normal() * 0.2});
            set.points.push_back(dir * radius);
            set.normals.push_back(dir);
        }
        std::vector<std::uint32_t> idx(set.points.size());
        for (std::uint32_t i = 0; i < idx.size(); ++i) idx[i] = i;
        Aabb cell = box_of({radius - 0.3, -0.3, -0.3}, {radius + 0.3, 0.3, 0.3});
        auto fitted = fit_cell(set, idx, cell, {});
        REQUIRE(fitted.size() == 1);
        const PoNQSample& s = fitted[0];

        auto loss_point = [&](const Vec3& v) {
            double sum = 0.0;
            for (std::size_t j = 0; j < set.points.size(); ++j) {
                double d = plane_from_sample(set.points[j], set.normals[j]).eval(v);
                sum += d * d;
            }
            return sum;
        };
        auto loss_normal = [&](const Vec3& n) {
            double sum = 0.0;
            for (const Vec3& nj : set.normals) sum += dist2(n, nj);
            return sum;
        };
        auto loss_quadric = [&](const Quadric& q) {
            double sum = 0.0;
            for (std::size_t j = 0; j < set.points.size(); ++j)
                sum += quadric_frobenius2(
                    q, quadric_from_plane(plane_from_sample(set.points[j], set.normals[j])));
            return sum;
        };

        double lv = loss_point(s.point), ln = loss_normal(s.normal), lq = loss_quadric(s.quadric);
        for (int p = 0; p < 20; ++p) {
            Vec3 dv = normalized({rng.normal(), rng.normal(), rng.normal()}) * 1e-3;
            CHECK(loss_point(s.point + dv) >= lv - 1e-9);
            CHECK(loss_normal(normalized(s.normal + dv)) >= ln - 1e-9);
            Quadric dq = s.quadric;
            for (double& m : dq.m) m += rng.normal() * 1e-3;
            CHECK(loss_quadric(dq) >= lq - 1e-9);
        }
    }
}

TEST_CASE("losses vanish at exact fits and rank the fitted grid best") {
    TriangleMesh sphere = make_sphere(0.45, 32, 16);
    EncodeResult enc = encode_mesh(sphere, 8, 1, 20000, 17, {});

    // Fitted grid beats random perturbations of itself on every term.
    double lv = loss_v(enc.grid, enc.bins, enc.samples);
    double ln = loss_n(enc.grid, enc.bins, enc.samples);
    double lq = loss_q(enc.grid, enc.bins, enc.samples);
    FitConfig fc;
    CHECK(loss_feat(enc.grid, enc.bins, enc.samples, fc) ==
          doctest::Approx(lv + ln + lq).epsilon(1e-12));
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        PoNQGrid perturbed = enc.grid;
        for (auto& [cell, list] : perturbed.cells)
            for (PoNQSample& s : list) {
                s.point += Vec3{rng.normal(), rng.normal(), rng.normal()} * 1e-3;
                s.normal = normalized(s.normal + Vec3{rng.normal(), rng.normal(), rng.normal()} *
                                                     1e-3);
                for (double& m : s.quadric.m) m += rng.normal() * 1e-3;
            }
        CHECK(loss_v(perturbed, enc.bins, enc.samples) >= lv - 1e-12);
        CHECK(loss_n(perturbed, enc.bins, enc.samples) >= ln - 1e-12);
        CHECK(loss_q(perturbed, enc.bins, enc.samples) >= lq - 1e-12);
    }

    // Hand-built exact fit: all losses zero.
    SurfaceSampleSet planar = planar_patch(50, -0.3, {0, 0, 1}, 32, -0.45, -0.2);
    CellBins bins = bin_samples(planar, unit_grid_bounds(), 2);
    PoNQGrid grid = fit_bins(planar, bins, 1, {});
    CHECK(loss_n(grid, bins, planar) <= 1e-18);
    CHECK(loss_v(grid, bins, planar) <= 1e-18);

    CellBins wrong = bins;
    wrong.n = 3;
    CHECK_THROWS_AS(loss_v(grid, wrong, planar), geometry_error);
}

TEST_CASE("quadric sum toggle does not move the fitted point") {
    TriangleMesh sphere = make_sphere(0.45, 24, 12);
    FitConfig mean_cfg;
    FitConfig sum_cfg;
    sum_cfg.quadric_sum_convention = true;
    EncodeResult a = encode_mesh(sphere, 8, 1, 20000, 4, mean_cfg);
    EncodeResult b = encode_mesh(sphere, 8, 1, 20000, 4, sum_cfg);
    REQUIRE(a.grid.cells.size() == b.grid.cells.size());
    for (const auto& [cell, list] : a.grid.cells) {
        const auto& other = b.grid.cells.at(cell);
        REQUIRE(list.size() == other.size());
        for (std::size_t i = 0; i < list.size(); ++i)
            CHECK(dist(list[i].point, other[i].point) <= 1e-9);
    }
}

TEST_CASE("encode_mesh occupies exactly the crust cells of the normalized cube") {
    TriangleMesh cube = make_cube(1.0);
    EncodeResult enc = encode_mesh(cube, 4, 1, 200000, 9, {});
    TriangleMesh normalized = apply_transform(cube, enc.transform);
    OccupancyGrid crust = serial::occupancy_from_mesh(normalized, 4, unit_grid_bounds());
    CHECK(crust.true_count() == 56);  // 4^3 minus the 2^3 interior
    // Occupied cells == crust cells (dense sampling hits every crust cell).
    CHECK(enc.grid.cells.size() == crust.true_count());
    for (const auto& [cell, list] : enc.grid.cells) CHECK(crust.at_index(cell));
}

TEST_CASE("encode_mesh on a plane patch gives a single cell with the plane normal") {
    TriangleMesh patch;
    patch.vertices = {{-0.05, -0.05, 0.0}, {0.05, -0.05, 0.0}, {0.05, 0.05, 0.0},
                      {-0.05, 0.05, 0.0}};
    patch.faces = {{0, 1, 2}, {0, 2, 3}};
    EncodeResult enc = encode_mesh(patch, 1, 1, 500, 13, {});
    REQUIRE(enc.grid.cells.size() == 1);
    const PoNQSample& s = enc.grid.cells.begin()->second.at(0);
    CHECK(std::abs(std::abs(s.normal.z) - 1.0) <= 1e-9);
}

TEST_CASE("encode_mesh keeps sphere points within a cell diagonal of the surface") {
    TriangleMesh sphere = make_sphere(0.45, 64, 32);
    EncodeResult enc = encode_mesh(sphere, 32, 1, 300000, 5, {});
    double diag = norm(enc.grid.spacing());
    for (const auto& [cell, list] : enc.grid.cells)
        for (const PoNQSample& s : list)
            CHECK(std::abs(norm(s.point) - 0.45) <= diag);
}

TEST_CASE("encode_mesh at N=64 keeps loss_v under the cell-diagonal bound") {
    TriangleMesh sphere = make_sphere(0.45, 96, 48);
    EncodeResult enc = encode_mesh(sphere, 64, 1, 500000, 6, {});
    double diag = norm(enc.grid.spacing());
    CHECK(loss_v(enc.grid, enc.bins, enc.samples) < diag * diag);
    // Every fitted point stays within its cell box expanded by half a cell.
    for (const auto& [cell, list] : enc.grid.cells) {
        Aabb box = enc.grid.cell_box(cell);
        Vec3 h = box.extent();
        box.lo -= h * 0.5;
        box.hi += h * 0.5;
        for (const PoNQSample& s : list) CHECK(box.contains(s.point));
    }
}

TEST_CASE("encode_mesh is equivariant under axis-aligned 90-degree rotations") {
    TriangleMesh sphere = make_sphere(0.45, 24, 12, {0.05, -0.03, 0.08});
    const std::uint32_t n = 8;
    EncodeResult enc = encode_mesh(sphere, n, 1, 50000, 19, {});

    // Rotate 90 degrees about z: (x, y, z) -> (-y, x, z).
    TriangleMesh rotated = sphere;
    for (Vec3& v : rotated.vertices) v = {-v.y, v.x, v.z};
    EncodeResult renc = encode_mesh(rotated, n, 1, 50000, 19, {});

    auto rotate_cell = [&](std::uint32_t cell) {
        std::uint32_t ix = cell % n, iy = (cell / n) % n, iz = cell / (n * n);
        std::uint32_t rx = n - 1 - iy, ry = ix;
        return (iz * n + ry) * n + rx;
    };
    REQUIRE(enc.grid.cells.size() == renc.grid.cells.size());
    for (const auto& [cell, list] : enc.grid.cells) {
        auto it = renc.grid.cells.find(rotate_cell(cell));
        REQUIRE(it != renc.grid.cells.end());
        REQUIRE(it->second.size() == list.size());
        const PoNQSample& a = list[0];
        const PoNQSample& b = it->second[0];
        CHECK(dist(Vec3{-a.point.y, a.point.x, a.point.z}, b.point) <= 1e-9);
        CHECK(dist(Vec3{-a.normal.y, a.normal.x, a.normal.z}, b.normal) <= 1e-9);
        // Q transforms as R Q R^T with the homogeneous rotation.
        const double r[4][4] = {{0, -1, 0, 0}, {1, 0, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
        for (int i = 0; i < 4; ++i)
            for (int j = i; j < 4; ++j) {
                double expect = 0.0;
                for (int k = 0; k < 4; ++k)
                    for (int l = 0; l < 4; ++l) expect += r[i][k] * a.quadric.at(k, l) * r[j][l];
                CHECK(b.quadric.at(i, j) == doctest::Approx(expect).epsilon(1e-9));
            }
    }
}

TEST_CASE("parallel and serial fit drivers match bitwise") {
    TriangleMesh sphere = make_sphere(0.45, 24, 12);
    SurfaceSampleSet set = sample_surface(sphere, 50000, 77);
    CellBins bins = bin_samples(set, unit_grid_bounds(), 12);
    PoNQGrid a = fit_bins(set, bins, 1, {});
    PoNQGrid b = serial::fit_bins(set, bins, 1, {});
    REQUIRE(a.cells.size() == b.cells.size());
    CHECK(write_ponq(a) == write_ponq(b));
}

TEST_CASE("k-means splits a two-cluster cell when K=2") {
    SurfaceSampleSet set;
    Rng rng(41);
    for (int i = 0; i < 100; ++i) {
        set.points.push_back({rng.uniform(0.00, 0.05), rng.uniform(0, 0.05), 0.01});
        set.normals.push_back({0, 0, 1});
        set.points.push_back({rng.uniform(0.20, 0.25), rng.uniform(0, 0.05), 0.24});
        set.normals.push_back({0, 0, 1});
    }
    std::vector<std::uint32_t> idx(set.points.size());
    for (std::uint32_t i = 0; i < idx.size(); ++i) idx[i] = i;
    FitConfig config;
    config.k = 2;
    auto fitted = fit_cell(set, idx, box_of({0, 0, 0}, {0.25, 0.25, 0.25}), config);
    REQUIRE(fitted.size() == 2);
    // One representative per blob.
    std::vector<double> zs{fitted[0].point.z, fitted[1].point.z};
    std::sort(zs.begin(), zs.end());
    CHECK(std::abs(zs[0] - 0.01) <= 1e-6);
    CHECK(std::abs(zs[1] - 0.24) <= 1e-6);
}

TEST_CASE("anchor policy moves only the truncated directions") {
    // Planar patch: z is pinned by the plane, x/y come from the anchor.
    SurfaceSampleSet set = planar_patch(100, 0.125, {0, 0, 1}, 71);
    std::vector<std::uint32_t> idx(set.points.size());
    for (std::uint32_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Aabb cell = box_of({0, 0, 0}, {0.25, 0.25, 0.25});

    FitConfig centroid_cfg;
    FitConfig center_cfg;
    center_cfg.qem.anchor = AnchorPolicy::cell_center;
    auto a = fit_cell(set, idx, cell, centroid_cfg);
    auto b = fit_cell(set, idx, cell, center_cfg);
    CHECK(std::abs(a[0].point.z - 0.125) <= 1e-9);
    CHECK(std::abs(b[0].point.z - 0.125) <= 1e-9);
    CHECK(b[0].point.x == doctest::Approx(0.125).epsilon(1e-9));  // cell center
    CHECK(b[0].point.y == doctest::Approx(0.125).epsilon(1e-9));
}

TEST_CASE("K=2 losses charge samples to their nearest fitted point") {
    SurfaceSampleSet set;
    Rng rng(72);
    for (int i = 0; i < 80; ++i) {
        set.points.push_back({rng.uniform(0.00, 0.05), rng.uniform(0, 0.05), 0.01});
        set.normals.push_back({0, 0, 1});
        set.points.push_back({rng.uniform(0.20, 0.25), rng.uniform(0, 0.05), 0.24});
        set.normals.push_back({0, 0, 1});
    }
    CellBins bins;
    bins.n = 1;
    bins.bounds = box_of({0, 0, 0}, {0.25, 0.25, 0.25});
    std::vector<std::uint32_t> idx(set.points.size());
    for (std::uint32_t i = 0; i < idx.size(); ++i) idx[i] = i;
    bins.cells[0] = idx;
    FitConfig config;
    config.k = 2;
    PoNQGrid two = fit_bins(set, bins, 2, config);
    PoNQGrid one = fit_bins(set, bins, 1, config);
    REQUIRE(two.cells.at(0).size() == 2);
    // Charging each sample to its nearest representative beats one blended fit.
    CHECK(loss_v(two, bins, set) <= loss_v(one, bins, set) + 1e-12);
    CHECK(loss_n(two, bins, set) <= loss_n(one, bins, set) + 1e-12);
}

TEST_CASE("PONQ serialization round-trips bit-exactly, including fuzzed grids") {
    // Empty grid.
    PoNQGrid empty;
    empty.n = 4;
    empty.k = 1;
    empty.bounds = unit_grid_bounds();
    auto empty_bytes = write_ponq(empty);
    PoNQGrid empty_back = read_ponq(empty_bytes);
    CHECK(empty_back.cells.empty());
    CHECK(write_ponq(empty_back) == empty_bytes);

    // Corrupted magic fails without a partial object.
    auto corrupted = empty_bytes;
    corrupted[0] = 'X';
    CHECK_THROWS_AS(read_ponq(corrupted), format_error);

    // Seeded fuzz: 1000 random grids round trip bitwise.
    Rng rng(51);
    for (int trial = 0; trial < 1000; ++trial) {
        PoNQGrid g;
        g.n = 1 + std::uint32_t(rng.uniform_index(64));
        g.k = 1 + std::uint32_t(rng.uniform_index(4));
        g.bounds = unit_grid_bounds();
        std::uint64_t cells = rng.uniform_index(24);
        for (std::uint64_t c = 0; c < cells; ++c) {
            auto idx = std::uint32_t(rng.uniform_index(std::uint64_t(g.n) * g.n * g.n));
            auto& list = g.cells[idx];
            if (!list.empty()) continue;
            std::size_t k = 1 + rng.uniform_index(g.k);
            for (std::size_t s = 0; s < k; ++s) {
                PoNQSample ps;
                ps.point = {rng.normal(), rng.normal(), rng.normal()};
                ps.normal = normalized({rng.normal(), rng.normal(), rng.normal()});
                for (double& m : ps.quadric.m) m = rng.normal();
                list.push_back(ps);
            }
        }
        auto bytes = write_ponq(g);
        PoNQGrid back = read_ponq(bytes);
        CHECK(write_ponq(back) == bytes);
    }

    // Truncation errors.
    TriangleMesh sphere = make_sphere(0.45, 16, 8);
    auto bytes = write_ponq(encode_mesh(sphere, 8, 1, 10000, 1, {}).grid);
    auto truncated = bytes;
    truncated.resize(truncated.size() / 2);
    CHECK_THROWS_AS(read_ponq(truncated), format_error);
}
