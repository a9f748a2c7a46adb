#include "ponq/sdf.hpp"

#include <algorithm>
#include <cmath>

#include "ponq/bin_io.hpp"

namespace ponq {

namespace {

// Crossing of the +axis ray from `origin` with one triangle, projected onto
// the two cross axes. Returns the hit parameter along the ray axis via `t`.
// `grazing` is set when the hit runs within eps of an edge or vertex, or when
// the triangle is parallel to the ray.
bool ray_axis_triangle(const Vec3& origin, int axis, const Vec3& a, const Vec3& b, const Vec3& c,
                       double& t, bool& grazing) {
    int u = (axis + 1) % 3, v = (axis + 2) % 3;
    double pu = origin[u], pv = origin[v];
    double au = a[u] - pu, av = a[v] - pv;
    double bu = b[u] - pu, bv = b[v] - pv;
    double cu = c[u] - pu, cv = c[v] - pv;
    // Signed areas of the projected sub-triangles.
    double d0 = bu * cv - bv * cu;
    double d1 = cu * av - cv * au;
    double d2 = au * bv - av * bu;
    double sum = d0 + d1 + d2;
    if (sum == 0.0) {
        // Triangle parallel to the ray: its projection is a segment. Grazing
        // only if the line passes through (or touches) that segment.
        const double eps = 1e-9;
        double ulo = std::min({au, bu, cu}) - eps, uhi = std::max({au, bu, cu}) + eps;
        double vlo = std::min({av, bv, cv}) - eps, vhi = std::max({av, bv, cv}) + eps;
        if (ulo <= 0.0 && 0.0 <= uhi && vlo <= 0.0 && 0.0 <= vhi) grazing = true;
        return false;
    }
    double w0 = d0 / sum, w1 = d1 / sum, w2 = d2 / sum;
    const double eps_g = 1e-12;
    if (w0 < -eps_g || w1 < -eps_g || w2 < -eps_g) return false;
    if (w0 < eps_g || w1 < eps_g || w2 < eps_g) {
        grazing = true;
        return false;
    }
    t = w0 * a[axis] + w1 * b[axis] + w2 * c[axis];
    return true;
}

// All crossing parameters of the axis line through `origin`, or nullopt-like
// failure (grazing) reported through the flag.
bool line_crossings(const TriangleMesh& mesh, const Vec3& origin, int axis,
                    std::vector<double>& ts) {
    ts.clear();
    for (const auto& f : mesh.faces) {
        double t;
        bool grazing = false;
        if (ray_axis_triangle(origin, axis, mesh.vertices[f[0]], mesh.vertices[f[1]],
                              mesh.vertices[f[2]], t, grazing))
            ts.push_back(t);
        else if (grazing)
            return false;
    }
    std::sort(ts.begin(), ts.end());
    return true;
}

// Deterministic origin perturbations for grazing rays, escalating slightly.
Vec3 perturbed_origin(const Vec3& p, int axis, int attempt) {
    int u = (axis + 1) % 3, v = (axis + 2) % 3;
    const double eps = 1e-9;
    double du = eps * (1.0 + attempt) * ((attempt % 2) ? -1.0 : 1.0);
    double dv = eps * (1.0 + 0.618 * attempt) * ((attempt % 3) ? 1.0 : -1.0);
    Vec3 q = p;
    q[u] += du;
    q[v] += dv;
    return q;
}

}  // namespace

bool ray_parity_inside(const TriangleMesh& mesh, const Vec3& p, int axis) {
    std::vector<double> ts;
    for (int attempt = 0; attempt < 16; ++attempt) {
        Vec3 origin = attempt == 0 ? p : perturbed_origin(p, axis, attempt);
        if (!line_crossings(mesh, origin, axis, ts)) continue;
        std::size_t crossings = ts.end() - std::upper_bound(ts.begin(), ts.end(), p[axis]);
        return (crossings % 2) == 1;
    }
    throw geometry_error("ray parity unresolvable after perturbation attempts");
}

namespace {

SdfGrid make_grid_frame(const TriangleMesh& mesh, std::uint32_t resolution, double padding) {
    if (resolution < 2) throw geometry_error("sdf resolution must be >= 2");
    mesh.validate();
    if (mesh.faces.empty()) throw geometry_error("cannot voxelize an empty mesh");
    Aabb b = mesh.bounds();
    b.pad(padding);
    Vec3 ext = b.extent();
    double longest = std::max({ext.x, ext.y, ext.z});
    SdfGrid grid;
    grid.res[0] = grid.res[1] = grid.res[2] = resolution;
    grid.spacing = longest / double(resolution - 1);
    grid.origin = b.lo;
    grid.values.assign(grid.node_count(), 0.0f);
    return grid;
}

void require_watertight(const TriangleMesh& mesh) {
    MeshAuditReport audit = audit_mesh(mesh);
    if (!audit.watertight)
        throw geometry_error("mesh is not watertight (" +
                             std::to_string(audit.boundary_edge_count) +
                             " boundary edges); refusing signed distance");
}

}  // namespace

SdfGrid mesh_to_sdf_grid(const TriangleMesh& mesh, std::uint32_t resolution, double padding) {
    require_watertight(mesh);
    SdfGrid grid = make_grid_frame(mesh, resolution, padding);
    TriangleBvh bvh(mesh);
    const int n = static_cast<int>(resolution);

    // Unsigned distances, parallel over nodes.
    std::vector<double> dist(grid.node_count());
#pragma omp parallel for schedule(dynamic, 1)
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                Vec3 p = grid.node_pos(i, j, k);
                dist[grid.index(i, j, k)] = std::sqrt(bvh.nearest_dist2(p));
            }

    // Parity votes per axis. One line cast covers a full row of nodes: collect
    // crossings once, then count per node. Failures are flagged and rethrown
    // outside the parallel region.
    std::vector<std::uint8_t> votes(grid.node_count(), 0);
    bool parity_failed = false;
    for (int axis = 0; axis < 3; ++axis) {
        int ua = (axis + 1) % 3, va = (axis + 2) % 3;
#pragma omp parallel for schedule(dynamic, 1)
        for (int b = 0; b < n; ++b) {
            std::vector<double> ts;
            for (int a = 0; a < n; ++a) {
                // Line through lattice positions with cross coords (a, b).
                std::uint32_t idx3[3];
                idx3[ua] = static_cast<std::uint32_t>(a);
                idx3[va] = static_cast<std::uint32_t>(b);
                idx3[axis] = 0;
                Vec3 base = grid.node_pos(idx3[0], idx3[1], idx3[2]);
                bool resolved = false;
                for (int attempt = 0; attempt < 16 && !resolved; ++attempt) {
                    Vec3 origin = attempt == 0 ? base : perturbed_origin(base, axis, attempt);
                    if (!line_crossings(mesh, origin, axis, ts)) continue;
                    // Node coordinates along the axis must stay clear of hits.
                    bool clean = true;
                    for (int c = 0; c < n && clean; ++c) {
                        double nc = grid.origin[axis] + c * grid.spacing;
                        auto it = std::lower_bound(ts.begin(), ts.end(), nc - 1e-9);
                        if (it != ts.end() && *it <= nc + 1e-9) clean = false;
                    }
                    if (!clean && attempt + 1 < 16) continue;
                    for (int c = 0; c < n; ++c) {
                        double nc = grid.origin[axis] + c * grid.spacing;
                        std::size_t crossings = ts.end() - std::upper_bound(ts.begin(), ts.end(), nc);
                        if (crossings % 2 == 1) {
                            idx3[axis] = static_cast<std::uint32_t>(c);
                            ++votes[grid.index(idx3[0], idx3[1], idx3[2])];
                        }
                    }
                    resolved = true;
                }
                if (!resolved) {
#pragma omp atomic write
                    parity_failed = true;
                }
            }
        }
    }
    if (parity_failed) throw geometry_error("sdf parity line unresolvable");

    for (std::size_t idx = 0; idx < grid.node_count(); ++idx) {
        double sign = votes[idx] >= 2 ? -1.0 : 1.0;  // majority of 3 votes
        grid.values[idx] = static_cast<float>(sign * dist[idx]);
    }
    return grid;
}

namespace serial {

SdfGrid mesh_to_sdf_grid(const TriangleMesh& mesh, std::uint32_t resolution, double padding) {
    require_watertight(mesh);
    SdfGrid grid = make_grid_frame(mesh, resolution, padding);
    const int n = static_cast<int>(resolution);
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                Vec3 p = grid.node_pos(i, j, k);
                double best = std::numeric_limits<double>::infinity();
                for (const auto& f : mesh.faces) {
                    Vec3 q = closest_point_on_triangle(p, mesh.vertices[f[0]], mesh.vertices[f[1]],
                                                       mesh.vertices[f[2]]);
                    best = std::min(best, dist2(p, q));
                }
                double sign = ray_parity_inside(mesh, p, 0) ? -1.0 : 1.0;
                grid.values[grid.index(i, j, k)] = static_cast<float>(sign * std::sqrt(best));
            }
    return grid;
}

}  // namespace serial

// SDFG: magic, u32 version=1, u32 res x3, f64 origin x3, f64 spacing,
// f32 values x-fastest, little-endian.
std::vector<unsigned char> write_sdf_grid(const SdfGrid& grid) {
    ByteWriter w;
    w.put_magic("SDFG");
    w.put<std::uint32_t>(1);
    for (int i = 0; i < 3; ++i) w.put<std::uint32_t>(grid.res[i]);
    w.put<double>(grid.origin.x);
    w.put<double>(grid.origin.y);
    w.put<double>(grid.origin.z);
    w.put<double>(grid.spacing);
    for (float v : grid.values) w.put<float>(v);
    return w.take();
}

SdfGrid read_sdf_grid(const std::vector<unsigned char>& bytes) {
    ByteReader r(bytes);
    r.expect_magic("SDFG");
    auto version = r.get<std::uint32_t>();
    if (version != 1) throw format_error("unsupported SDFG version " + std::to_string(version));
    SdfGrid grid;
    for (int i = 0; i < 3; ++i) grid.res[i] = r.get<std::uint32_t>();
    grid.origin.x = r.get<double>();
    grid.origin.y = r.get<double>();
    grid.origin.z = r.get<double>();
    grid.spacing = r.get<double>();
    std::size_t count = grid.node_count();
    if (r.remaining() != count * sizeof(float)) throw format_error("SDFG payload size mismatch");
    grid.values.resize(count);
    r.get_raw(grid.values.data(), count * sizeof(float));
    return grid;
}

}  // namespace ponq
