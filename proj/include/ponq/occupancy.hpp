// Occupancy ground truth, training-point generation, the latent-grid feature
// sampling protocol (trilinear + six neighbors), and mask application.
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ponq/mesh.hpp"
#include "ponq/ponq_grid.hpp"

namespace ponq {

// Crust occupancy: a cell is true iff the surface intersects its closed box.
struct OccupancyGrid {
    std::uint32_t n = 0;
    Aabb bounds;
    std::vector<std::uint8_t> cells;  // x-fastest, 0/1

    bool at(std::uint32_t ix, std::uint32_t iy, std::uint32_t iz) const {
        return cells[(std::size_t(iz) * n + iy) * n + ix] != 0;
    }
    bool at_index(std::uint32_t index) const { return cells[index] != 0; }
    std::size_t true_count() const;
    // Cell containing p (floor rule, clamped); false outside bounds.
    bool contains_point(const Vec3& p) const;
};

OccupancyGrid occupancy_from_mesh(const TriangleMesh& mesh, std::uint32_t n, const Aabb& bounds);

namespace serial {
// Exhaustive cell x triangle SAT sweep, the reference for the parallel kernel.
OccupancyGrid occupancy_from_mesh(const TriangleMesh& mesh, std::uint32_t n, const Aabb& bounds);
}  // namespace serial

struct TrainPoint {
    Vec3 position{};
    bool occupied = false;
};

// Surface samples displaced by an isotropic Gaussian (sigma in cell units),
// clamped into bounds, labeled against the crust grid.
std::vector<TrainPoint> sample_train_points(const TriangleMesh& mesh, std::uint32_t n,
                                            const Aabb& bounds, std::size_t count,
                                            double displacement_sigma_cells, std::uint64_t seed);

// c-channel real grid over an n^3 lattice of cell centers, trilinearly
// sampled with border clamping.
struct LatentGrid {
    std::uint32_t channels = 0;
    std::uint32_t n = 0;
    Aabb bounds;
    std::vector<double> values;  // channel-major, then x-fastest
    bool has_norm_stats = false;
    double norm_min = 0.0, norm_max = 0.0;

    std::size_t index(std::uint32_t c, std::uint32_t ix, std::uint32_t iy, std::uint32_t iz) const {
        return ((std::size_t(c) * n + iz) * n + iy) * n + ix;
    }
    double& at(std::uint32_t c, std::uint32_t ix, std::uint32_t iy, std::uint32_t iz) {
        return values[index(c, ix, iy, iz)];
    }
    double at(std::uint32_t c, std::uint32_t ix, std::uint32_t iy, std::uint32_t iz) const {
        return values[index(c, ix, iy, iz)];
    }
    std::size_t value_count() const { return std::size_t(channels) * n * n * n; }
};

// Trilinear blend of the 8 surrounding cell-center nodes, one value per
// channel. Positions outside the node lattice clamp to the border.
std::vector<double> trilinear_sample(const LatentGrid& latent, const Vec3& position);

// Z = [F(s), F(s +- h e_axis) x6, s_normalized], length 7c + 3. Neighbor
// order: +x, -x, +y, -y, +z, -z; h defaults to one cell spacing; the trailing
// coordinates are bounds-normalized into [0,1]^3.
std::vector<double> gather_feature(const LatentGrid& latent, const Vec3& position, double h);
std::vector<double> gather_feature(const LatentGrid& latent, const Vec3& position);

// Behavioral contract: feature vector -> probability in [0,1].
using OccupancyPredictor = std::function<double(const std::vector<double>&)>;

// Predictor that decodes the query position from the feature vector's
// trailing normalized coordinates and answers from a ground-truth crust grid.
OccupancyPredictor make_mesh_oracle_predictor(OccupancyGrid ground_truth);

// Evaluates the predictor on gather_feature at every cell center of an n^3
// grid; true iff probability >= threshold.
OccupancyGrid predict_mask(const OccupancyPredictor& predictor, const LatentGrid& latent,
                           std::uint32_t n, const Aabb& bounds, double threshold = 0.5);

// Ablation variant: evaluates the predictor at each stored PoNQ sample point
// instead of per cell; a cell survives iff any of its sample points passes.
OccupancyGrid predict_mask_per_point(const OccupancyPredictor& predictor, const LatentGrid& latent,
                                     const PoNQGrid& grid, double threshold = 0.5);

// Drops the grid cells where the mask is false.
PoNQGrid mask_apply(const PoNQGrid& grid, const OccupancyGrid& mask);

// Demo latent surrogate: c=1, +1 inside the crust, -1 outside, smoothed by
// one 6-neighbor averaging pass.
LatentGrid latent_from_occupancy(const OccupancyGrid& occ);

std::vector<unsigned char> write_occupancy(const OccupancyGrid& grid);
OccupancyGrid read_occupancy(const std::vector<unsigned char>& bytes);

std::vector<unsigned char> write_latent(const LatentGrid& latent);
LatentGrid read_latent(const std::vector<unsigned char>& bytes);

}  // namespace ponq
