// Kernel benchmark: times each OpenMP-parallel kernel against its serial
// reference and verifies that they produce identical results. Sizes scale
// with --scale (default 1).
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "ponq/metrics.hpp"
#include "ponq/occupancy.hpp"
#include "ponq/ponq_grid.hpp"
#include "ponq/rng.hpp"
#include "ponq/sdf.hpp"
#include "../tests/support/shapes.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace ponq;
using namespace ponq::testshapes;

namespace {

template <typename F>
double time_ms(F&& f) {
    auto start = std::chrono::steady_clock::now();
    f();
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
}

void row(const char* kernel, double serial_ms, double parallel_ms, bool equal) {
    std::printf("%-28s %10.1f ms %10.1f ms %7.2fx   %s\n", kernel, serial_ms, parallel_ms,
                serial_ms / parallel_ms, equal ? "equal" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
    int scale = 1;
    for (int i = 1; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg == "--scale" && i + 1 < argc) scale = std::atoi(argv[++i]);
    }
#ifdef _OPENMP
    std::printf("threads: %d, scale: %d\n", omp_get_max_threads(), scale);
#else
    std::printf("threads: 1 (OpenMP off), scale: %d\n", scale);
#endif
    std::printf("%-28s %13s %13s %9s   %s\n", "kernel", "serial", "parallel", "speedup",
                "check");

    bool all_equal = true;

    {
        TriangleMesh sphere = make_sphere(0.45, 32 * scale, 16 * scale);
        SdfGrid fast, slow;
        double pm = time_ms([&] { fast = mesh_to_sdf_grid(sphere, 16 * scale, 0.1); });
        double sm = time_ms([&] { slow = serial::mesh_to_sdf_grid(sphere, 16 * scale, 0.1); });
        // The parity votes differ only in rays, never in sign on clean shapes.
        bool equal = fast.values.size() == slow.values.size();
        for (std::size_t i = 0; equal && i < fast.values.size(); ++i) {
            if (std::abs(fast.values[i] - slow.values[i]) > 1e-6f) equal = false;
            if (std::abs(slow.values[i]) > 1e-6f &&
                (fast.values[i] > 0) != (slow.values[i] > 0))
                equal = false;
        }
        all_equal &= equal;
        row("mesh_to_sdf_grid", sm, pm, equal);
    }

    {
        TriangleMesh soup = make_random_soup(7, 220 * scale);
        std::size_t fast = 0, slow = 0;
        double pm = time_ms([&] { fast = audit_mesh(soup).self_intersection_pair_count; });
        double sm = time_ms([&] { slow = serial::self_intersection_pairs(soup); });
        all_equal &= fast == slow;
        row("self_intersection_pairs", sm, pm, fast == slow);
    }

    {
        TriangleMesh torus = make_torus(0.3, 0.12, 48 * scale, 24 * scale);
        OccupancyGrid fast, slow;
        double pm = time_ms([&] { fast = occupancy_from_mesh(torus, 32, unit_grid_bounds()); });
        double sm = time_ms(
            [&] { slow = serial::occupancy_from_mesh(torus, 32, unit_grid_bounds()); });
        all_equal &= fast.cells == slow.cells;
        row("occupancy_from_mesh", sm, pm, fast.cells == slow.cells);
    }

    {
        Rng rng(9);
        PointCloud a, b;
        for (int i = 0; i < 4096 * scale; ++i) {
            a.points.push_back({rng.normal(), rng.normal(), rng.normal()});
            b.points.push_back({rng.normal(), rng.normal(), rng.normal()});
        }
        double fast = 0, slow = 0;
        double pm = time_ms([&] { fast = chamfer(a, b); });
        double sm = time_ms([&] { slow = serial::chamfer(a, b); });
        all_equal &= fast == slow;
        row("chamfer", sm, pm, fast == slow);
    }

    {
        TriangleMesh sphere = make_sphere(0.45, 48, 24);
        SurfaceSampleSet set = sample_surface(sphere, 200000 * scale, 3);
        CellBins bins = bin_samples(set, unit_grid_bounds(), 32);
        PoNQGrid fast, slow;
        double pm = time_ms([&] { fast = fit_bins(set, bins, 1, {}); });
        double sm = time_ms([&] { slow = serial::fit_bins(set, bins, 1, {}); });
        bool equal = write_ponq(fast) == write_ponq(slow);
        all_equal &= equal;
        row("fit_bins", sm, pm, equal);
    }

    if (!all_equal) {
        std::printf("FAILED: kernel mismatch\n");
        return 1;
    }
    return 0;
}
