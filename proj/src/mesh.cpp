#include "ponq/mesh.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>

#include "ponq/bin_io.hpp"
#include "ponq/rng.hpp"

namespace ponq {

// ---------------------------------------------------------------------------
// basic mesh
// ---------------------------------------------------------------------------

Aabb TriangleMesh::bounds() const {
    Aabb b;
    for (const auto& v : vertices) b.expand(v);
    return b;
}

void TriangleMesh::validate() const {
    const auto n = static_cast<std::int32_t>(vertices.size());
    for (const auto& v : vertices)
        if (!is_finite(v)) throw geometry_error("non-finite vertex coordinate");
    for (const auto& f : faces)
        for (int k = 0; k < 3; ++k)
            if (f[k] < 0 || f[k] >= n) throw geometry_error("face index out of range");
}

Vec3 triangle_normal(const Vec3& a, const Vec3& b, const Vec3& c) {
    return normalized(cross(b - a, c - a));
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
    return 0.5 * norm(cross(b - a, c - a));
}

// ---------------------------------------------------------------------------
// OBJ I/O
// ---------------------------------------------------------------------------

namespace {

struct LineScanner {
    std::string_view text;
    std::size_t pos = 0;
    std::size_t line_no = 0;

    bool next(std::string_view& line) {
        if (pos >= text.size()) return false;
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos = end + 1;
        ++line_no;
        return true;
    }
};

void skip_ws(std::string_view& s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
}

bool parse_double(std::string_view& s, double& out) {
    skip_ws(s);
    if (s.empty()) return false;
    const char* begin = s.data();
    char* end = nullptr;
    out = std::strtod(begin, &end);
    if (end == begin) return false;
    s.remove_prefix(static_cast<std::size_t>(end - begin));
    return true;
}

// Parses the leading vertex index of an `f` token, ignoring /vt/vn suffixes.
bool parse_face_index(std::string_view& s, long& out) {
    skip_ws(s);
    if (s.empty()) return false;
    std::size_t i = 0;
    if (s[i] == '-' || s[i] == '+') ++i;
    std::size_t digits_begin = i;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    if (i == digits_begin) return false;
    out = std::strtol(std::string(s.substr(0, i)).c_str(), nullptr, 10);
    // Skip any /vt/vn decoration up to the next whitespace.
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    s.remove_prefix(i);
    return true;
}

}  // namespace

TriangleMesh load_obj(std::string_view text, LoadStats* stats) {
    TriangleMesh mesh;
    LoadStats local;
    LineScanner scan{text};
    std::string_view line;
    while (scan.next(line)) {
        std::string_view s = line;
        skip_ws(s);
        if (s.empty() || s.front() == '#') continue;
        if (s.size() >= 2 && s[0] == 'v' && (s[1] == ' ' || s[1] == '\t')) {
            s.remove_prefix(1);
            Vec3 v;
            if (!parse_double(s, v.x) || !parse_double(s, v.y) || !parse_double(s, v.z))
                throw parse_error("malformed vertex record", scan.line_no);
            if (!is_finite(v)) throw parse_error("non-finite vertex coordinate", scan.line_no);
            mesh.vertices.push_back(v);
        } else if (s.size() >= 2 && s[0] == 'f' && (s[1] == ' ' || s[1] == '\t')) {
            s.remove_prefix(1);
            std::vector<std::int32_t> poly;
            long raw;
            while (parse_face_index(s, raw)) {
                if (raw <= 0 || raw > static_cast<long>(mesh.vertices.size()))
                    throw geometry_error("face index " + std::to_string(raw) +
                                         " out of range at line " + std::to_string(scan.line_no));
                poly.push_back(static_cast<std::int32_t>(raw - 1));
            }
            skip_ws(s);
            if (!s.empty()) throw parse_error("malformed face record", scan.line_no);
            if (poly.size() < 3) throw parse_error("face with fewer than 3 vertices", scan.line_no);
            // Fan triangulation for polygons.
            for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
                std::array<std::int32_t, 3> tri{poly[0], poly[k], poly[k + 1]};
                const Vec3& a = mesh.vertices[tri[0]];
                const Vec3& b = mesh.vertices[tri[1]];
                const Vec3& c = mesh.vertices[tri[2]];
                bool degenerate = tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] ||
                                  stable_norm2(cross(b - a, c - a)) == 0.0;
                if (degenerate)
                    ++local.degenerate_faces_dropped;  // zero-area faces poison normals and sampling
                else
                    mesh.faces.push_back(tri);
            }
        }
        // Other records (vn, vt, usemtl, ...) are outside the supported subset.
    }
    if (stats) *stats = local;
    return mesh;
}

std::string save_obj(const TriangleMesh& mesh) {
    std::string out;
    out.reserve(32 * mesh.vertices.size() + 16 * mesh.faces.size() + 64);
    char buf[128];
    std::snprintf(buf, sizeof buf, "# ponq mesh: %zu vertices, %zu faces\n",
                  mesh.vertices.size(), mesh.faces.size());
    out += buf;
    for (const auto& v : mesh.vertices) {
        std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", v.x, v.y, v.z);
        out += buf;
    }
    for (const auto& f : mesh.faces) {
        std::snprintf(buf, sizeof buf, "f %d %d %d\n", f[0] + 1, f[1] + 1, f[2] + 1);
        out += buf;
    }
    return out;
}

// ---------------------------------------------------------------------------
// surface sampling
// ---------------------------------------------------------------------------

SurfaceSampleSet sample_surface(const TriangleMesh& mesh, std::size_t count, std::uint64_t seed) {
    if (count < 1) throw geometry_error("sample count must be >= 1");
    std::vector<double> cumulative(mesh.faces.size());
    std::vector<Vec3> face_normals(mesh.faces.size());
    double total = 0.0;
    for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
        const auto& f = mesh.faces[i];
        const Vec3& a = mesh.vertices[f[0]];
        const Vec3& b = mesh.vertices[f[1]];
        const Vec3& c = mesh.vertices[f[2]];
        total += triangle_area(a, b, c);
        cumulative[i] = total;
        face_normals[i] = triangle_normal(a, b, c);
    }
    if (!(total > 0.0)) throw geometry_error("all faces degenerate, cannot sample surface");

    SurfaceSampleSet set;
    set.seed = seed;
    set.points.reserve(count);
    set.normals.reserve(count);
    Rng rng(seed);
    for (std::size_t s = 0; s < count; ++s) {
        double r = rng.uniform() * total;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
        std::size_t tri = it == cumulative.end() ? mesh.faces.size() - 1
                                                 : static_cast<std::size_t>(it - cumulative.begin());
        const auto& f = mesh.faces[tri];
        const Vec3& a = mesh.vertices[f[0]];
        const Vec3& b = mesh.vertices[f[1]];
        const Vec3& c = mesh.vertices[f[2]];
        double su = std::sqrt(rng.uniform());
        double v = rng.uniform();
        Vec3 p = a * (1.0 - su) + b * (su * (1.0 - v)) + c * (su * v);
        set.points.push_back(p);
        set.normals.push_back(face_normals[tri]);
    }
    return set;
}

// ---------------------------------------------------------------------------
// triangle primitives
// ---------------------------------------------------------------------------

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    // Ericson, Real-Time Collision Detection, 5.1.5.
    Vec3 ab = b - a, ac = c - a, ap = p - a;
    double d1 = dot(ab, ap), d2 = dot(ac, ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;
    Vec3 bp = p - b;
    double d3 = dot(ab, bp), d4 = dot(ac, bp);
    if (d3 >= 0.0 && d4 <= d3) return b;
    double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        double v = d1 / (d1 - d3);
        return a + ab * v;
    }
    Vec3 cp = p - c;
    double d5 = dot(ab, cp), d6 = dot(ac, cp);
    if (d6 >= 0.0 && d5 <= d6) return c;
    double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        double w = d2 / (d2 - d6);
        return a + ac * w;
    }
    double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    double denom = 1.0 / (va + vb + vc);
    double v = vb * denom, w = vc * denom;
    return a + ab * v + ac * w;
}

bool triangle_box_overlap(const Vec3& a, const Vec3& b, const Vec3& c,
                          const Vec3& box_center, const Vec3& box_half) {
    // 13-axis SAT with closed-box semantics: separation needs a strict gap.
    Vec3 v0 = a - box_center, v1 = b - box_center, v2 = c - box_center;
    const Vec3& h = box_half;

    auto axis_separates = [&](const Vec3& axis) {
        double p0 = dot(v0, axis), p1 = dot(v1, axis), p2 = dot(v2, axis);
        double r = h.x * std::abs(axis.x) + h.y * std::abs(axis.y) + h.z * std::abs(axis.z);
        double lo = std::min({p0, p1, p2}), hi = std::max({p0, p1, p2});
        return lo > r || hi < -r;
    };

    // Box face normals.
    if (std::min({v0.x, v1.x, v2.x}) > h.x || std::max({v0.x, v1.x, v2.x}) < -h.x) return false;
    if (std::min({v0.y, v1.y, v2.y}) > h.y || std::max({v0.y, v1.y, v2.y}) < -h.y) return false;
    if (std::min({v0.z, v1.z, v2.z}) > h.z || std::max({v0.z, v1.z, v2.z}) < -h.z) return false;

    Vec3 e0 = v1 - v0, e1 = v2 - v1, e2 = v0 - v2;
    if (axis_separates(cross(e0, e1))) return false;  // triangle normal

    const Vec3 axes[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    for (const Vec3& u : axes)
        for (const Vec3& e : {e0, e1, e2}) {
            Vec3 ax = cross(u, e);
            if (stable_norm2(ax) < 1e-32) continue;
            if (axis_separates(ax)) return false;
        }
    return true;
}

namespace {

// Interval of the line L(t) = o + t*d covered by the triangle cross-section,
// for Moller's tri-tri test.
bool compute_interval(double proj0, double proj1, double proj2, double dist0, double dist1,
                      double dist2, double& t0, double& t1) {
    // Requires the distances to not all share a strict sign.
    auto edge_cross = [](double pa, double pb, double da, double db, double& t) {
        t = pa + (pb - pa) * da / (da - db);
    };
    int pos = (dist0 > 0) + (dist1 > 0) + (dist2 > 0);
    int neg = (dist0 < 0) + (dist1 < 0) + (dist2 < 0);
    if (pos == 3 || neg == 3) return false;
    // Up to 3 edge crossings plus up to 3 on-plane vertices.
    double ts[6];
    int n = 0;
    if ((dist0 > 0) != (dist1 > 0) && dist0 != dist1 && (dist0 != 0 || dist1 != 0))
        edge_cross(proj0, proj1, dist0, dist1, ts[n]), ++n;
    if ((dist1 > 0) != (dist2 > 0) && dist1 != dist2 && (dist1 != 0 || dist2 != 0))
        edge_cross(proj1, proj2, dist1, dist2, ts[n]), ++n;
    if ((dist2 > 0) != (dist0 > 0) && dist2 != dist0 && (dist2 != 0 || dist0 != 0))
        edge_cross(proj2, proj0, dist2, dist0, ts[n]), ++n;
    if (dist0 == 0) ts[n++] = proj0;
    if (dist1 == 0) ts[n++] = proj1;
    if (dist2 == 0) ts[n++] = proj2;
    if (n < 2) return false;
    t0 = *std::min_element(ts, ts + n);
    t1 = *std::max_element(ts, ts + n);
    return true;
}

// 2D segment intersection / point-in-triangle helpers for the coplanar case.
double orient2d(const double a[2], const double b[2], const double c[2]) {
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
}

bool segments_intersect_2d(const double p1[2], const double p2[2], const double q1[2],
                           const double q2[2]) {
    double d1 = orient2d(q1, q2, p1);
    double d2 = orient2d(q1, q2, p2);
    double d3 = orient2d(p1, p2, q1);
    double d4 = orient2d(p1, p2, q2);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
        return true;
    auto on_segment = [](const double a[2], const double b[2], const double c[2]) {
        return std::min(a[0], b[0]) <= c[0] && c[0] <= std::max(a[0], b[0]) &&
               std::min(a[1], b[1]) <= c[1] && c[1] <= std::max(a[1], b[1]);
    };
    if (d1 == 0 && on_segment(q1, q2, p1)) return true;
    if (d2 == 0 && on_segment(q1, q2, p2)) return true;
    if (d3 == 0 && on_segment(p1, p2, q1)) return true;
    if (d4 == 0 && on_segment(p1, p2, q2)) return true;
    return false;
}

bool point_in_triangle_2d(const double p[2], const double a[2], const double b[2],
                          const double c[2]) {
    double d1 = orient2d(a, b, p);
    double d2 = orient2d(b, c, p);
    double d3 = orient2d(c, a, p);
    bool has_neg = (d1 < 0) || (d2 < 0) || (d3 < 0);
    bool has_pos = (d1 > 0) || (d2 > 0) || (d3 > 0);
    return !(has_neg && has_pos);
}

bool coplanar_triangles_intersect(const Vec3 t1[3], const Vec3 t2[3], const Vec3& n) {
    // Project to the dominant-axis plane.
    int drop = 0;
    double an[3] = {std::abs(n.x), std::abs(n.y), std::abs(n.z)};
    if (an[1] > an[drop]) drop = 1;
    if (an[2] > an[drop]) drop = 2;
    int u = (drop + 1) % 3, v = (drop + 2) % 3;
    double a[3][2], b[3][2];
    for (int i = 0; i < 3; ++i) {
        a[i][0] = t1[i][u];
        a[i][1] = t1[i][v];
        b[i][0] = t2[i][u];
        b[i][1] = t2[i][v];
    }
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (segments_intersect_2d(a[i], a[(i + 1) % 3], b[j], b[(j + 1) % 3])) return true;
    if (point_in_triangle_2d(a[0], b[0], b[1], b[2])) return true;
    if (point_in_triangle_2d(b[0], a[0], a[1], a[2])) return true;
    return false;
}

}  // namespace

bool triangles_intersect(const Vec3& a0, const Vec3& a1, const Vec3& a2,
                         const Vec3& b0, const Vec3& b1, const Vec3& b2) {
    Vec3 t1[3] = {a0, a1, a2};
    Vec3 t2[3] = {b0, b1, b2};

    Vec3 n1 = cross(a1 - a0, a2 - a0);
    double d1 = -dot(n1, a0);
    double db0 = dot(n1, b0) + d1;
    double db1 = dot(n1, b1) + d1;
    double db2 = dot(n1, b2) + d1;
    if ((db0 > 0 && db1 > 0 && db2 > 0) || (db0 < 0 && db1 < 0 && db2 < 0)) return false;

    Vec3 n2 = cross(b1 - b0, b2 - b0);
    double d2 = -dot(n2, b0);
    double da0 = dot(n2, a0) + d2;
    double da1 = dot(n2, a1) + d2;
    double da2 = dot(n2, a2) + d2;
    if ((da0 > 0 && da1 > 0 && da2 > 0) || (da0 < 0 && da1 < 0 && da2 < 0)) return false;

    // Near-coplanar pairs: the homogeneous distances are rounding noise with
    // arbitrary signs, which derails the interval path. Route anything within
    // the noise floor of either plane through the exact 2D overlap test.
    double scale_b = norm(n1) * std::max({dist(b0, a0), dist(b1, a0), dist(b2, a0)});
    double scale_a = norm(n2) * std::max({dist(a0, b0), dist(a1, b0), dist(a2, b0)});
    double mag_db = std::max({std::abs(db0), std::abs(db1), std::abs(db2)});
    double mag_da = std::max({std::abs(da0), std::abs(da1), std::abs(da2)});
    if (mag_db <= 1e-12 * scale_b || mag_da <= 1e-12 * scale_a)
        return coplanar_triangles_intersect(t1, t2, n1);

    Vec3 dir = cross(n1, n2);
    int axis = 0;
    double ad[3] = {std::abs(dir.x), std::abs(dir.y), std::abs(dir.z)};
    if (ad[1] > ad[axis]) axis = 1;
    if (ad[2] > ad[axis]) axis = 2;

    double pa0 = a0[axis], pa1 = a1[axis], pa2 = a2[axis];
    double pb0 = b0[axis], pb1 = b1[axis], pb2 = b2[axis];

    double s0, s1, u0, u1;
    if (!compute_interval(pa0, pa1, pa2, da0, da1, da2, s0, s1)) return false;
    if (!compute_interval(pb0, pb1, pb2, db0, db1, db2, u0, u1)) return false;
    // Interior intersection requires an overlap of positive measure; single
    // point contact between passing edges is not an intersection.
    double eps = 1e-9 * std::max({std::abs(s0), std::abs(s1), std::abs(u0), std::abs(u1), 1e-30});
    return s1 > u0 + eps && u1 > s0 + eps;
}

// ---------------------------------------------------------------------------
// BVH
// ---------------------------------------------------------------------------

namespace {
Aabb triangle_aabb(const TriangleMesh& m, int f) {
    Aabb b;
    for (int k = 0; k < 3; ++k) b.expand(m.vertices[m.faces[f][k]]);
    return b;
}
}  // namespace

TriangleBvh::TriangleBvh(const TriangleMesh& mesh) : mesh_(&mesh) {
    order_.resize(mesh.faces.size());
    std::iota(order_.begin(), order_.end(), 0);
    if (order_.empty()) return;
    nodes_.reserve(2 * order_.size());

    struct Item {
        int node;
        int begin, end;
    };
    nodes_.push_back({});
    std::vector<Item> stack{{0, 0, static_cast<int>(order_.size())}};
    std::vector<Vec3> centroids(mesh.faces.size());
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& fc = mesh.faces[f];
        centroids[f] = (mesh.vertices[fc[0]] + mesh.vertices[fc[1]] + mesh.vertices[fc[2]]) / 3.0;
    }
    while (!stack.empty()) {
        Item it = stack.back();
        stack.pop_back();
        Node& node = nodes_[it.node];
        Aabb box;
        for (int i = it.begin; i < it.end; ++i) box.expand(triangle_aabb(mesh, order_[i]));
        node.box = box;
        int count = it.end - it.begin;
        if (count <= 4) {
            node.begin = it.begin;
            node.end = it.end;
            continue;
        }
        Vec3 ext = box.extent();
        int axis = 0;
        if (ext.y > ext[axis]) axis = 1;
        if (ext.z > ext[axis]) axis = 2;
        int mid = it.begin + count / 2;
        std::nth_element(order_.begin() + it.begin, order_.begin() + mid, order_.begin() + it.end,
                         [&](int a, int b) {
                             double ca = centroids[a][axis], cb = centroids[b][axis];
                             if (ca != cb) return ca < cb;
                             return a < b;  // deterministic tie-break
                         });
        int left = static_cast<int>(nodes_.size());
        nodes_.push_back({});
        nodes_.push_back({});
        nodes_[it.node].left = left;
        nodes_[it.node].right = left + 1;
        stack.push_back({left, it.begin, mid});
        stack.push_back({left + 1, mid, it.end});
    }
}

double TriangleBvh::node_nearest(int ni, const Vec3& p, double best, int* tri) const {
    const Node& node = nodes_[ni];
    if (node.box.dist2(p) >= best) return best;
    if (node.left < 0) {
        for (int i = node.begin; i < node.end; ++i) {
            int f = order_[i];
            const auto& fc = mesh_->faces[f];
            Vec3 q = closest_point_on_triangle(p, mesh_->vertices[fc[0]], mesh_->vertices[fc[1]],
                                               mesh_->vertices[fc[2]]);
            double d2 = dist2(p, q);
            if (d2 < best || (d2 == best && tri && f < *tri)) {
                best = d2;
                if (tri) *tri = f;
            }
        }
        return best;
    }
    double dl = nodes_[node.left].box.dist2(p);
    double dr = nodes_[node.right].box.dist2(p);
    int first = node.left, second = node.right;
    if (dr < dl) std::swap(first, second);
    best = node_nearest(first, p, best, tri);
    best = node_nearest(second, p, best, tri);
    return best;
}

double TriangleBvh::nearest_dist2(const Vec3& p, int* nearest_tri) const {
    if (nodes_.empty()) throw geometry_error("nearest query on empty mesh");
    int tri = std::numeric_limits<int>::max();
    double best = node_nearest(0, p, std::numeric_limits<double>::infinity(), &tri);
    if (nearest_tri) *nearest_tri = tri;
    return best;
}

std::vector<int> TriangleBvh::query_box(const Aabb& box) const {
    std::vector<int> out;
    if (nodes_.empty()) return out;
    std::vector<int> stack{0};
    while (!stack.empty()) {
        int ni = stack.back();
        stack.pop_back();
        const Node& node = nodes_[ni];
        if (!node.box.overlaps(box)) continue;
        if (node.left < 0) {
            for (int i = node.begin; i < node.end; ++i) {
                int f = order_[i];
                if (triangle_aabb(*mesh_, f).overlaps(box)) out.push_back(f);
            }
        } else {
            stack.push_back(node.left);
            stack.push_back(node.right);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// audits
// ---------------------------------------------------------------------------

namespace {

bool share_vertex(const std::array<std::int32_t, 3>& a, const std::array<std::int32_t, 3>& b) {
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (a[i] == b[j]) return true;
    return false;
}

bool faces_intersect(const TriangleMesh& m, int i, int j) {
    const auto& fa = m.faces[i];
    const auto& fb = m.faces[j];
    if (share_vertex(fa, fb)) return false;  // contact along shared simplices is not intersection
    return triangles_intersect(m.vertices[fa[0]], m.vertices[fa[1]], m.vertices[fa[2]],
                               m.vertices[fb[0]], m.vertices[fb[1]], m.vertices[fb[2]]);
}

}  // namespace

MeshAuditReport audit_mesh(const TriangleMesh& mesh) {
    MeshAuditReport report;

    std::map<std::pair<std::int32_t, std::int32_t>, int> edge_count;
    for (const auto& f : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            std::int32_t a = f[k], b = f[(k + 1) % 3];
            if (a > b) std::swap(a, b);
            ++edge_count[{a, b}];
        }
    }
    for (const auto& [edge, count] : edge_count) {
        if (count == 1) ++report.boundary_edge_count;
        if (count >= 3) ++report.non_manifold_edge_count;
    }
    report.watertight = !mesh.faces.empty() && report.boundary_edge_count == 0;

    if (!mesh.faces.empty()) {
        TriangleBvh bvh(mesh);
        const int n = static_cast<int>(mesh.faces.size());
        std::vector<std::size_t> per_face(n, 0);
#pragma omp parallel for schedule(dynamic, 16)
        for (int i = 0; i < n; ++i) {
            Aabb box = triangle_aabb(mesh, i);
            std::size_t local = 0;
            for (int j : bvh.query_box(box))
                if (j > i && faces_intersect(mesh, i, j)) ++local;
            per_face[i] = local;
        }
        // Fixed-order reduction keeps the count independent of thread schedule.
        std::size_t total = 0;
        for (int i = 0; i < n; ++i) total += per_face[i];
        report.self_intersection_pair_count = total;
    }
    return report;
}

namespace serial {

std::size_t self_intersection_pairs(const TriangleMesh& mesh) {
    const int n = static_cast<int>(mesh.faces.size());
    std::size_t total = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (faces_intersect(mesh, i, j)) ++total;
    return total;
}

}  // namespace serial

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

NormalizeTransform normalize_transform(const TriangleMesh& mesh) {
    if (mesh.vertices.empty()) throw geometry_error("cannot normalize an empty mesh");
    Aabb b = mesh.bounds();
    Vec3 ext = b.extent();
    double longest = std::max({ext.x, ext.y, ext.z});
    NormalizeTransform t;
    t.center = b.center();
    t.scale = longest > 0.0 ? 0.9 / longest : 1.0;
    return t;
}

TriangleMesh apply_transform(const TriangleMesh& mesh, const NormalizeTransform& t) {
    TriangleMesh out;
    out.vertices.reserve(mesh.vertices.size());
    for (const auto& v : mesh.vertices) out.vertices.push_back(t.apply(v));
    out.faces = mesh.faces;
    return out;
}

// ---------------------------------------------------------------------------
// file helpers
// ---------------------------------------------------------------------------

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw io_error("write failed for " + path);
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw io_error("write failed for " + path);
}

}  // namespace ponq
