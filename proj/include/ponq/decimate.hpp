#pragma once

#include "ponq/mesh.hpp"
#include "ponq/qem.hpp"

namespace ponq {

// Vertex-clustering decimation: vertices binned over the mesh bounds at
// `grid_resolution` cells per axis; each cell collapses to the QEM-optimal
// representative of the summed face-plane quadrics of its vertices, anchored
// at the mean of the cell's vertices. Collapsed faces are dropped.
TriangleMesh cluster_decimate(const TriangleMesh& mesh, std::uint32_t grid_resolution,
                              const QemMinimizerConfig& config = {});

}  // namespace ponq
