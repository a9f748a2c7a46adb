#include "ponq/decimate.hpp"

#include <algorithm>
#include <map>

namespace ponq {

TriangleMesh cluster_decimate(const TriangleMesh& mesh, std::uint32_t grid_resolution,
                              const QemMinimizerConfig& config) {
    if (grid_resolution < 1) throw geometry_error("clustering resolution must be >= 1");
    mesh.validate();
    if (mesh.vertices.empty()) return {};

    Aabb bounds = mesh.bounds();
    Vec3 ext = bounds.extent();
    const std::uint32_t res = grid_resolution;
    Vec3 spacing{ext.x > 0 ? ext.x / res : 1.0, ext.y > 0 ? ext.y / res : 1.0,
                 ext.z > 0 ? ext.z / res : 1.0};

    auto cell_of = [&](const Vec3& p) -> std::uint64_t {
        std::uint64_t idx[3];
        for (int a = 0; a < 3; ++a) {
            double t = (p[a] - bounds.lo[a]) / spacing[a];
            auto c = static_cast<std::int64_t>(std::floor(t));
            c = std::clamp<std::int64_t>(c, 0, static_cast<std::int64_t>(res) - 1);
            idx[a] = static_cast<std::uint64_t>(c);
        }
        return (idx[2] * res + idx[1]) * res + idx[0];
    };

    // Per-vertex quadrics: each face contributes its plane quadric to its
    // three corners.
    std::vector<Quadric> vertex_quadric(mesh.vertices.size());
    for (const auto& f : mesh.faces) {
        const Vec3& a = mesh.vertices[f[0]];
        const Vec3& b = mesh.vertices[f[1]];
        const Vec3& c = mesh.vertices[f[2]];
        Vec3 n = triangle_normal(a, b, c);
        if (stable_norm2(n) == 0.0) continue;
        Quadric k = quadric_from_plane(plane_from_sample(a, n));
        for (int i = 0; i < 3; ++i) vertex_quadric[f[i]] += k;
    }

    struct Cell {
        Quadric q;
        Vec3 centroid_sum{};
        std::size_t count = 0;
        std::int32_t rep = -1;
    };
    std::map<std::uint64_t, Cell> cells;
    std::vector<std::uint64_t> vertex_cell(mesh.vertices.size());
    for (std::size_t vi = 0; vi < mesh.vertices.size(); ++vi) {
        std::uint64_t key = cell_of(mesh.vertices[vi]);
        vertex_cell[vi] = key;
        Cell& cell = cells[key];
        cell.q += vertex_quadric[vi];
        cell.centroid_sum += mesh.vertices[vi];
        ++cell.count;
    }

    TriangleMesh out;
    out.vertices.reserve(cells.size());
    for (auto& [key, cell] : cells) {
        Vec3 anchor = cell.centroid_sum / double(cell.count);
        std::uint64_t iz = key / (std::uint64_t(res) * res);
        std::uint64_t iy = (key / res) % res;
        std::uint64_t ix = key % res;
        Aabb cell_box;
        cell_box.expand(bounds.lo + Vec3{ix * spacing.x, iy * spacing.y, iz * spacing.z});
        cell_box.expand(bounds.lo + Vec3{(ix + 1) * spacing.x, (iy + 1) * spacing.y,
                                         (iz + 1) * spacing.z});
        Vec3 rep = qem_minimize(cell.q, anchor,
                                config.clamp_to_bounds ? std::optional<Aabb>(cell_box)
                                                       : std::nullopt,
                                config)
                       .position;
        cell.rep = static_cast<std::int32_t>(out.vertices.size());
        out.vertices.push_back(rep);
    }

    for (const auto& f : mesh.faces) {
        std::array<std::int32_t, 3> g{cells[vertex_cell[f[0]]].rep, cells[vertex_cell[f[1]]].rep,
                                      cells[vertex_cell[f[2]]].rep};
        if (g[0] == g[1] || g[1] == g[2] || g[0] == g[2]) continue;  // collapsed
        out.faces.push_back(g);
    }
    return out;
}

}  // namespace ponq
