// Triangle-mesh data model, OBJ I/O, surface sampling, and mesh-quality
// audits. All types are immutable after construction and all operations are
// pure functions of their inputs plus explicit seeds, so everything here is
// safe to call concurrently.
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ponq/errors.hpp"
#include "ponq/vec.hpp"

namespace ponq {

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::int32_t, 3>> faces;

    bool empty() const { return faces.empty(); }
    Aabb bounds() const;
    // Throws geometry_error on out-of-range indices or non-finite coordinates.
    void validate() const;
};

Vec3 triangle_normal(const Vec3& a, const Vec3& b, const Vec3& c);  // unit, zero if degenerate
double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);

struct LoadStats {
    std::size_t degenerate_faces_dropped = 0;
};

// OBJ subset: `v`, `f` (fan-triangulated), comments. Normals/texcoords in
// files are ignored. Zero-area faces are dropped and counted in `stats`.
TriangleMesh load_obj(std::string_view text, LoadStats* stats = nullptr);

// Decimal text at 9 significant digits; load_obj(save_obj(m)) reproduces the
// face list exactly and the vertex text idempotently.
std::string save_obj(const TriangleMesh& mesh);

struct SurfaceSampleSet {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;  // unit face normals
    std::uint64_t seed = 0;
};

// Area-proportional triangle choice, uniform barycentric placement, normal =
// face normal. Bit-identical for identical (mesh, count, seed).
SurfaceSampleSet sample_surface(const TriangleMesh& mesh, std::size_t count, std::uint64_t seed);

struct MeshAuditReport {
    std::size_t boundary_edge_count = 0;
    std::size_t non_manifold_edge_count = 0;
    std::size_t self_intersection_pair_count = 0;
    bool watertight = false;  // boundary_edge_count == 0
};

// Boundary edges have face count 1, non-manifold edges >= 3. Self-intersections
// are counted over non-adjacent triangle pairs (pairs sharing a vertex index
// are contact, not intersection) with BVH culling.
MeshAuditReport audit_mesh(const TriangleMesh& mesh);

// Exact triangle-triangle overlap test (Moller), including coplanar overlap.
bool triangles_intersect(const Vec3& a0, const Vec3& a1, const Vec3& a2,
                         const Vec3& b0, const Vec3& b1, const Vec3& b2);

// Closed-box separating-axis test; touching counts as intersecting.
bool triangle_box_overlap(const Vec3& a, const Vec3& b, const Vec3& c,
                          const Vec3& box_center, const Vec3& box_half);

// Exact closest point on triangle to p.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// Static median-split AABB tree over the mesh's triangles. Build order and
// query results are deterministic.
class TriangleBvh {
  public:
    explicit TriangleBvh(const TriangleMesh& mesh);

    // Squared distance to the nearest triangle; `nearest_tri` (optional)
    // receives its face index (lowest index on exact ties).
    double nearest_dist2(const Vec3& p, int* nearest_tri = nullptr) const;

    // Face indices whose AABB overlaps `box`, in ascending order.
    std::vector<int> query_box(const Aabb& box) const;

    const TriangleMesh& mesh() const { return *mesh_; }

  private:
    struct Node {
        Aabb box;
        int left = -1, right = -1;  // children, or -1 for leaves
        int begin = 0, end = 0;     // leaf triangle range in order_
    };
    double node_nearest(int node, const Vec3& p, double best, int* tri) const;
    const TriangleMesh* mesh_;
    std::vector<Node> nodes_;
    std::vector<int> order_;
};

// Uniform translate + scale that maps the mesh into [-0.45, 0.45]^3 with the
// longest bbox axis touching the target exactly. The fixed PoNQ grid bounds
// are [-0.5, 0.5]^3.
struct NormalizeTransform {
    Vec3 center{};     // subtracted first
    double scale = 1;  // then multiplied
    Vec3 apply(const Vec3& p) const { return (p - center) * scale; }
};

NormalizeTransform normalize_transform(const TriangleMesh& mesh);
TriangleMesh apply_transform(const TriangleMesh& mesh, const NormalizeTransform& t);

inline Aabb unit_grid_bounds() {
    Aabb b;
    b.expand(Vec3{-0.5, -0.5, -0.5});
    b.expand(Vec3{0.5, 0.5, 0.5});
    return b;
}

namespace serial {
// Exhaustive O(F^2) pair test, the reference for the BVH-accelerated count.
std::size_t self_intersection_pairs(const TriangleMesh& mesh);
}  // namespace serial

}  // namespace ponq
