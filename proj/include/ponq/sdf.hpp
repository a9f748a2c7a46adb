#pragma once

#include <cstdint>
#include <vector>

#include "ponq/mesh.hpp"

namespace ponq {

// Cubic node grid of signed distances. |value| is the exact distance to the
// nearest triangle; sign comes from majority ray-parity voting over the three
// axis directions.
struct SdfGrid {
    std::uint32_t res[3] = {0, 0, 0};  // node counts per axis
    Vec3 origin{};
    double spacing = 0.0;
    std::vector<float> values;  // x-fastest

    std::size_t node_count() const {
        return std::size_t(res[0]) * res[1] * res[2];
    }
    std::size_t index(std::uint32_t i, std::uint32_t j, std::uint32_t k) const {
        return (std::size_t(k) * res[1] + j) * res[0] + i;
    }
    Vec3 node_pos(std::uint32_t i, std::uint32_t j, std::uint32_t k) const {
        return origin + Vec3{i * spacing, j * spacing, k * spacing};
    }
};

// `resolution` is the node count per axis; the grid covers the mesh bounds
// expanded by `padding` (model units). Refuses non-watertight input.
SdfGrid mesh_to_sdf_grid(const TriangleMesh& mesh, std::uint32_t resolution, double padding);

// Parity of crossings of the ray from `p` along +axis against every triangle,
// with deterministic origin perturbation on grazing hits. true = odd = inside.
bool ray_parity_inside(const TriangleMesh& mesh, const Vec3& p, int axis);

std::vector<unsigned char> write_sdf_grid(const SdfGrid& grid);
SdfGrid read_sdf_grid(const std::vector<unsigned char>& bytes);

namespace serial {
// Brute-force reference: per-node exhaustive triangle distance and a single
// +x ray parity for the sign.
SdfGrid mesh_to_sdf_grid(const TriangleMesh& mesh, std::uint32_t resolution, double padding);
}  // namespace serial

}  // namespace ponq
