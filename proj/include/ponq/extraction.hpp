// Watertight mesh extraction from a masked PoNQ grid: Delaunay
// tetrahedralization of the optimal points inside a padded box, inside/outside
// labeling from the nearest sample's tangent plane, and emission of the
// boundary faces between inside and outside tets. Closedness is combinatorial
// (boundary of a 3-chain), so every successful extraction has zero boundary
// edges.
#pragma once

#include <array>
#include <vector>

#include "ponq/mesh.hpp"
#include "ponq/ponq_grid.hpp"

namespace ponq {

struct LabeledTetMesh {
    // Deduplicated sample points first, then the 8 padded hull corners.
    std::vector<Vec3> points;
    std::vector<Vec3> normals;  // per sample point; corners carry none
    std::size_t sample_count = 0;
    std::vector<std::array<int, 4>> tets;  // positively oriented
    std::vector<std::uint8_t> inside;

    bool is_corner(int idx) const { return idx >= static_cast<int>(sample_count); }
};

// n_j . (x - v_j) for the nearest sample j by Euclidean distance, ties broken
// by lowest index. Negative means inside.
double signed_side(const Vec3& point, const std::vector<PoNQSample>& samples);

// Delaunay tetrahedralization of `interior` inside `box` (whose 8 corners are
// part of the triangulation). Predicates run on deterministically jittered
// coordinates (magnitude 1e-9 x box diagonal, seeded from point index);
// output vertices keep the original coordinates.
std::vector<std::array<int, 4>> delaunay_in_box(const std::vector<Vec3>& interior,
                                                const Aabb& box);

// Tetrahedralize + label. Corner-incident tets are forced outside.
LabeledTetMesh extract_labeled(const PoNQGrid& masked_grid);

// Boundary faces between inside and outside tets, oriented inside -> outside.
TriangleMesh extract_mesh(const PoNQGrid& masked_grid);
TriangleMesh extract_mesh(const LabeledTetMesh& labeled);

}  // namespace ponq
