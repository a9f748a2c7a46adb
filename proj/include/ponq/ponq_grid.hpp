// The PoNQ voxel-grid shape representation: surface samples binned into an
// N^3 grid, closed-form per-cell (point, normal, quadric) fits minimizing the
// per-cell supervision sums, loss evaluation, and bit-exact serialization.
#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "ponq/mesh.hpp"
#include "ponq/qem.hpp"

namespace ponq {

struct PoNQSample {
    Vec3 point{};    // v-hat, the QEM-optimal representative
    Vec3 normal{};   // unit
    Quadric quadric{};
    bool degenerate = false;  // fitted through a flagged fallback path
};

struct PoNQGrid {
    std::uint32_t n = 0;  // grid resolution per axis
    std::uint32_t k = 1;  // max samples per cell
    Aabb bounds;
    // cell index (x-fastest linearization) -> up to k samples; stored cells
    // are non-empty. Ordered map keeps every iteration deterministic.
    std::map<std::uint32_t, std::vector<PoNQSample>> cells;

    std::uint32_t cell_index(std::uint32_t ix, std::uint32_t iy, std::uint32_t iz) const {
        return (iz * n + iy) * n + ix;
    }
    Vec3 cell_center(std::uint32_t index) const;
    Aabb cell_box(std::uint32_t index) const;
    Vec3 spacing() const;
    std::size_t sample_count() const;
};

struct FitConfig {
    double alpha = 1.0, beta = 1.0, gamma = 1.0;  // loss weights
    std::uint32_t k = 1;
    std::size_t min_samples_per_cell = 3;
    QemMinimizerConfig qem{};
    // Store per-cell quadrics as the sum of sample quadrics instead of the
    // mean. Scaling a quadric does not move its minimizer, so the fitted
    // point is identical either way.
    bool quadric_sum_convention = false;

    void validate() const;
};

struct CellBins {
    std::uint32_t n = 0;
    Aabb bounds;
    std::map<std::uint32_t, std::vector<std::uint32_t>> cells;  // cell -> sample indices

    Vec3 cell_center(std::uint32_t index) const;
};

// floor((p - origin) / spacing) per axis, clamped to [0, N-1].
CellBins bin_samples(const SurfaceSampleSet& samples, const Aabb& bounds, std::uint32_t n);

// Closed-form minimizers of the per-cell supervision sums. K=1: normal =
// normalized mean of sample normals, quadric = mean (or sum) of tangent-plane
// quadrics, point = qem_minimize anchored at the sample centroid and clamped
// to the cell box expanded by half a cell. K>1 partitions by Lloyd k-means
// (farthest-point init, 20 iterations, fixed seed) and fits each cluster.
std::vector<PoNQSample> fit_cell(const SurfaceSampleSet& samples,
                                 const std::vector<std::uint32_t>& cell_sample_indices,
                                 const Aabb& cell_box, const FitConfig& config);

// Per-cell supervision sums, averaged over the number of occupied cells. For
// grids with k > 1 each sample is charged to its nearest fitted sample.
double loss_v(const PoNQGrid& grid, const CellBins& bins, const SurfaceSampleSet& samples);
double loss_n(const PoNQGrid& grid, const CellBins& bins, const SurfaceSampleSet& samples);
double loss_q(const PoNQGrid& grid, const CellBins& bins, const SurfaceSampleSet& samples);
double loss_feat(const PoNQGrid& grid, const CellBins& bins, const SurfaceSampleSet& samples,
                 const FitConfig& config);

struct EncodeResult {
    PoNQGrid grid;
    SurfaceSampleSet samples;      // in normalized coordinates
    CellBins bins;
    NormalizeTransform transform;  // model -> grid coordinates
};

// sample_surface -> bin_samples -> fit_cell per occupied cell, on the mesh
// normalized into [-0.45, 0.45]^3 with grid bounds [-0.5, 0.5]^3.
EncodeResult encode_mesh(const TriangleMesh& mesh, std::uint32_t n, std::uint32_t k,
                         std::size_t sample_count, std::uint64_t seed, const FitConfig& config);

std::vector<unsigned char> write_ponq(const PoNQGrid& grid);
PoNQGrid read_ponq(const std::vector<unsigned char>& bytes);

namespace serial {
// Single-threaded fit over all bins; the parallel driver must match bitwise.
PoNQGrid fit_bins(const SurfaceSampleSet& samples, const CellBins& bins, std::uint32_t k,
                  const FitConfig& config);
}  // namespace serial

// Parallel-over-cells fit driver.
PoNQGrid fit_bins(const SurfaceSampleSet& samples, const CellBins& bins, std::uint32_t k,
                  const FitConfig& config);

}  // namespace ponq
