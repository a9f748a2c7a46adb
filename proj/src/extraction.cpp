#include "ponq/extraction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_map>

#include "ponq/rng.hpp"

namespace ponq {

// ---------------------------------------------------------------------------
// signed side
// ---------------------------------------------------------------------------

double signed_side(const Vec3& point, const std::vector<PoNQSample>& samples) {
    if (samples.empty()) throw geometry_error("signed_side needs at least one sample");
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        double d2 = dist2(point, samples[i].point);
        if (d2 < best_d2) {
            best_d2 = d2;
            best = i;
        }
    }
    return dot(samples[best].normal, point - samples[best].point);
}

namespace {

// Uniform grid over a point set for exact nearest-neighbor queries with the
// lowest-index tie-break.
class PointGridNn {
  public:
    PointGridNn(const std::vector<Vec3>& pts, const Aabb& bounds) : pts_(&pts), bounds_(bounds) {
        res_ = std::max<std::uint32_t>(
            1, static_cast<std::uint32_t>(std::cbrt(double(std::max<std::size_t>(pts.size(), 1)))));
        res_ = std::min<std::uint32_t>(res_, 64);
        Vec3 ext = bounds_.extent();
        cell_ = std::max({ext.x, ext.y, ext.z, 1e-30}) / res_;
        cells_.resize(std::size_t(res_) * res_ * res_);
        for (std::size_t i = 0; i < pts.size(); ++i) cells_[cell_of(pts[i])].push_back(i);
    }

    std::size_t nearest(const Vec3& q) const {
        std::size_t best = 0;
        double best_d2 = std::numeric_limits<double>::infinity();
        std::int64_t cx, cy, cz;
        coords_of(q, cx, cy, cz);
        for (std::int64_t ring = 0;; ++ring) {
            bool any_cell = false;
            for (std::int64_t z = cz - ring; z <= cz + ring; ++z)
                for (std::int64_t y = cy - ring; y <= cy + ring; ++y)
                    for (std::int64_t x = cx - ring; x <= cx + ring; ++x) {
                        if (std::max({std::abs(x - cx), std::abs(y - cy), std::abs(z - cz)}) != ring)
                            continue;  // shell only
                        if (x < 0 || y < 0 || z < 0 || x >= res_ || y >= res_ || z >= res_)
                            continue;
                        any_cell = true;
                        for (std::size_t i :
                             cells_[(std::size_t(z) * res_ + y) * res_ + x]) {
                            double d2 = dist2(q, (*pts_)[i]);
                            if (d2 < best_d2 || (d2 == best_d2 && i < best)) {
                                best_d2 = d2;
                                best = i;
                            }
                        }
                    }
            // A point in a farther shell is at least (ring)*cell away.
            if (best_d2 < std::numeric_limits<double>::infinity() &&
                double(ring) * cell_ > std::sqrt(best_d2))
                break;
            if (!any_cell && ring > std::int64_t(res_) * 2) break;  // grid exhausted
        }
        return best;
    }

  private:
    std::size_t cell_of(const Vec3& p) const {
        std::int64_t x, y, z;
        coords_of(p, x, y, z);
        return (std::size_t(z) * res_ + y) * res_ + x;
    }
    void coords_of(const Vec3& p, std::int64_t& x, std::int64_t& y, std::int64_t& z) const {
        auto clamp_axis = [&](double v, double lo) {
            auto c = static_cast<std::int64_t>(std::floor((v - lo) / cell_));
            return std::clamp<std::int64_t>(c, 0, std::int64_t(res_) - 1);
        };
        x = clamp_axis(p.x, bounds_.lo.x);
        y = clamp_axis(p.y, bounds_.lo.y);
        z = clamp_axis(p.z, bounds_.lo.z);
    }
    const std::vector<Vec3>* pts_;
    Aabb bounds_;
    std::uint32_t res_ = 1;
    double cell_ = 1.0;
    std::vector<std::vector<std::size_t>> cells_;
};

// ---------------------------------------------------------------------------
// Delaunay (Bowyer-Watson seeded from a 6-tet box split)
// ---------------------------------------------------------------------------

long double det3(long double a0, long double a1, long double a2, long double b0, long double b1,
                 long double b2, long double c0, long double c1, long double c2) {
    return a0 * (b1 * c2 - b2 * c1) - a1 * (b0 * c2 - b2 * c0) + a2 * (b0 * c1 - b1 * c0);
}

class BoxDelaunay {
  public:
    BoxDelaunay(const std::vector<Vec3>& interior, const Aabb& box) {
        const std::size_t n = interior.size();
        pts_ = interior;
        for (int m = 0; m < 8; ++m)
            pts_.push_back({m & 1 ? box.hi.x : box.lo.x, m & 2 ? box.hi.y : box.lo.y,
                            m & 4 ? box.hi.z : box.lo.z});
        // Deterministic symbolic perturbation: predicates see jittered copies,
        // output keeps the true coordinates.
        double diag = norm(box.extent());
        jit_ = pts_;
        for (std::size_t i = 0; i < jit_.size(); ++i) {
            std::uint64_t h = derive_seed(0x9e3779b97f4a7c15ull + i, "delaunay-jitter");
            Rng rng(h);
            for (int a = 0; a < 3; ++a) jit_[i][a] += (rng.uniform() - 0.5) * 2e-9 * diag;
        }

        auto c = [&](int m) { return static_cast<int>(n) + m; };
        const int seed_tets[6][4] = {{c(0), c(1), c(3), c(7)}, {c(0), c(1), c(5), c(7)},
                                     {c(0), c(2), c(3), c(7)}, {c(0), c(2), c(6), c(7)},
                                     {c(0), c(4), c(5), c(7)}, {c(0), c(4), c(6), c(7)}};
        for (const auto& t : seed_tets) {
            Tet tet;
            for (int i = 0; i < 4; ++i) tet.v[i] = t[i];
            if (orient(tet.v[0], tet.v[1], tet.v[2], tet.v[3]) < 0) std::swap(tet.v[0], tet.v[1]);
            tet.alive = true;
            tets_.push_back(tet);
        }
        rebuild_adjacency();
        hint_ = 0;
        mark_.assign(tets_.size(), 0);
        for (std::size_t i = 0; i < n; ++i) insert(static_cast<int>(i));
    }

    std::vector<std::array<int, 4>> alive_tets() const {
        std::vector<std::array<int, 4>> out;
        for (const Tet& t : tets_)
            if (t.alive) out.push_back({t.v[0], t.v[1], t.v[2], t.v[3]});
        return out;
    }

    const std::vector<Vec3>& points() const { return pts_; }

  private:
    struct Tet {
        int v[4];
        int nbr[4] = {-1, -1, -1, -1};  // nbr[i] across the face opposite v[i]
        bool alive = false;
    };

    // Outward-oriented face opposite local vertex i of a positively oriented tet.
    static void face_of(const Tet& t, int i, int& a, int& b, int& c) {
        switch (i) {
            case 0: a = t.v[1]; b = t.v[2]; c = t.v[3]; return;
            case 1: a = t.v[0]; b = t.v[3]; c = t.v[2]; return;
            case 2: a = t.v[0]; b = t.v[1]; c = t.v[3]; return;
            default: a = t.v[0]; b = t.v[2]; c = t.v[1]; return;
        }
    }

    long double orient(int a, int b, int c, int d) const {
        const Vec3 &pa = jit_[a], &pb = jit_[b], &pc = jit_[c], &pd = jit_[d];
        return det3((long double)pb.x - pa.x, (long double)pb.y - pa.y, (long double)pb.z - pa.z,
                    (long double)pc.x - pa.x, (long double)pc.y - pa.y, (long double)pc.z - pa.z,
                    (long double)pd.x - pa.x, (long double)pd.y - pa.y, (long double)pd.z - pa.z);
    }

    // > 0 iff p lies inside the circumsphere of the positively oriented tet.
    long double insphere(const Tet& t, int p) const {
        long double m[4][4];
        for (int r = 0; r < 4; ++r) {
            const Vec3& q = jit_[t.v[r]];
            const Vec3& pp = jit_[p];
            m[r][0] = (long double)q.x - pp.x;
            m[r][1] = (long double)q.y - pp.y;
            m[r][2] = (long double)q.z - pp.z;
            m[r][3] = m[r][0] * m[r][0] + m[r][1] * m[r][1] + m[r][2] * m[r][2];
        }
        long double det = 0.0L;
        for (int r = 0; r < 4; ++r) {
            int rows[3], k = 0;
            for (int rr = 0; rr < 4; ++rr)
                if (rr != r) rows[k++] = rr;
            long double minor =
                det3(m[rows[0]][0], m[rows[0]][1], m[rows[0]][2], m[rows[1]][0], m[rows[1]][1],
                     m[rows[1]][2], m[rows[2]][0], m[rows[2]][1], m[rows[2]][2]);
            det += ((r % 2) ? -1.0L : 1.0L) * m[r][3] * minor;
        }
        // Positive when p lies inside (checked against the unit-tet centroid
        // and circumcenter).
        return det;
    }

    int locate(int p) const {
        int t = hint_;
        if (t < 0 || !tets_[t].alive) t = first_alive();
        std::size_t steps = 0;
        const std::size_t max_steps = 8 * tets_.size() + 64;
        while (true) {
            int best_face = -1;
            long double best_o = 0.0L;
            for (int i = 0; i < 4; ++i) {
                int a, b, c;
                face_of(tets_[t], i, a, b, c);
                long double o = orient(a, b, c, p);
                if (o > best_o) {
                    best_o = o;
                    best_face = i;
                }
            }
            if (best_face < 0) return t;
            int next = tets_[t].nbr[best_face];
            if (next < 0 || !tets_[next].alive || ++steps > max_steps) return brute_locate(p);
            t = next;
        }
    }

    int brute_locate(int p) const {
        int fallback = -1;
        long double fallback_worst = std::numeric_limits<long double>::max();
        for (std::size_t t = 0; t < tets_.size(); ++t) {
            if (!tets_[t].alive) continue;
            long double worst = 0.0L;
            for (int i = 0; i < 4; ++i) {
                int a, b, c;
                face_of(tets_[t], i, a, b, c);
                worst = std::max(worst, orient(a, b, c, p));
            }
            if (worst <= 0.0L) return static_cast<int>(t);
            if (worst < fallback_worst) {
                fallback_worst = worst;
                fallback = static_cast<int>(t);
            }
        }
        if (fallback < 0) throw extraction_error("point location failed: no live tets");
        return fallback;
    }

    int first_alive() const {
        for (std::size_t t = 0; t < tets_.size(); ++t)
            if (tets_[t].alive) return static_cast<int>(t);
        throw extraction_error("triangulation has no live tets");
    }

    void insert(int p) {
        int t0 = locate(p);
        ++epoch_;
        mark_.resize(tets_.size(), 0);

        std::vector<int> cavity{t0};
        mark_[t0] = epoch_;
        for (std::size_t head = 0; head < cavity.size(); ++head) {
            const Tet& u = tets_[cavity[head]];
            for (int i = 0; i < 4; ++i) {
                int v = u.nbr[i];
                if (v < 0 || mark_[v] == epoch_ || !tets_[v].alive) continue;
                if (insphere(tets_[v], p) > 0.0L) {
                    mark_[v] = epoch_;
                    cavity.push_back(v);
                }
            }
        }

        // Boundary faces, with star-shapedness repair: any face the new point
        // cannot see pulls its outer tet into the cavity.
        struct BFace {
            int a, b, c;  // outward from the cavity
            int outside;  // neighbor tet beyond the face, or -1
        };
        std::vector<BFace> boundary;
        for (int guard = 0;; ++guard) {
            if (guard > static_cast<int>(tets_.size()) + 16)
                throw extraction_error("cavity repair did not converge");
            boundary.clear();
            bool grew = false;
            for (std::size_t ci = 0; ci < cavity.size(); ++ci) {
                const Tet& u = tets_[cavity[ci]];
                for (int i = 0; i < 4; ++i) {
                    int v = u.nbr[i];
                    if (v >= 0 && mark_[v] == epoch_) continue;
                    int a, b, c;
                    face_of(u, i, a, b, c);
                    if (orient(a, b, c, p) >= 0.0L) {
                        if (v < 0) throw extraction_error("cavity reached the hull");
                        mark_[v] = epoch_;
                        cavity.push_back(v);
                        grew = true;
                        break;
                    }
                    boundary.push_back({a, b, c, v});
                }
                if (grew) break;
            }
            if (!grew) break;
        }

        for (int t : cavity) tets_[t].alive = false;

        // New tets: (a, c, b, p) is positively oriented because the boundary
        // face is outward and p sees it from inside.
        std::map<std::pair<int, int>, std::pair<int, int>> open_edges;  // edge -> (tet, face)
        int last_created = -1;
        for (const BFace& f : boundary) {
            Tet nt;
            nt.v[0] = f.a;
            nt.v[1] = f.c;
            nt.v[2] = f.b;
            nt.v[3] = p;
            nt.alive = true;
            int nti = static_cast<int>(tets_.size());
            nt.nbr[3] = f.outside;
            tets_.push_back(nt);
            mark_.push_back(0);
            last_created = nti;

            if (f.outside >= 0) {
                Tet& out_tet = tets_[f.outside];
                for (int i = 0; i < 4; ++i) {
                    int a, b, c;
                    face_of(out_tet, i, a, b, c);
                    int lo = std::min({a, b, c}), hi = std::max({a, b, c});
                    int mid = a + b + c - lo - hi;
                    int flo = std::min({f.a, f.b, f.c}), fhi = std::max({f.a, f.b, f.c});
                    int fmid = f.a + f.b + f.c - flo - fhi;
                    if (lo == flo && mid == fmid && hi == fhi) {
                        out_tet.nbr[i] = nti;
                        break;
                    }
                }
            }

            // Lateral faces pair along the boundary-face edges.
            const std::pair<std::pair<int, int>, int> laterals[3] = {
                {{std::min(f.b, f.c), std::max(f.b, f.c)}, 0},  // face opposite v0=a
                {{std::min(f.a, f.b), std::max(f.a, f.b)}, 1},  // opposite v1=c
                {{std::min(f.a, f.c), std::max(f.a, f.c)}, 2},  // opposite v2=b
            };
            for (const auto& [edge, face] : laterals) {
                auto it = open_edges.find(edge);
                if (it == open_edges.end()) {
                    open_edges.emplace(edge, std::make_pair(nti, face));
                } else {
                    tets_[nti].nbr[face] = it->second.first;
                    tets_[it->second.first].nbr[it->second.second] = nti;
                    open_edges.erase(it);
                }
            }
        }
        if (!open_edges.empty()) throw extraction_error("cavity boundary was not a closed shell");
        hint_ = last_created;
    }

    void rebuild_adjacency() {
        std::map<std::array<int, 3>, std::pair<int, int>> face_map;
        for (std::size_t t = 0; t < tets_.size(); ++t) {
            for (int i = 0; i < 4; ++i) {
                int a, b, c;
                face_of(tets_[t], i, a, b, c);
                std::array<int, 3> key{a, b, c};
                std::sort(key.begin(), key.end());
                auto it = face_map.find(key);
                if (it == face_map.end()) {
                    face_map.emplace(key, std::make_pair(static_cast<int>(t), i));
                } else {
                    tets_[t].nbr[i] = it->second.first;
                    tets_[it->second.first].nbr[it->second.second] = static_cast<int>(t);
                    face_map.erase(it);
                }
            }
        }
    }

    std::vector<Vec3> pts_;
    std::vector<Vec3> jit_;
    std::vector<Tet> tets_;
    std::vector<int> mark_;
    int epoch_ = 0;
    int hint_ = 0;
};

// Merge points closer than `tol`; returns kept points (lowest contributing
// original index wins, original order preserved) and the map old -> kept slot.
std::vector<std::size_t> dedup_points(const std::vector<Vec3>& pts, double tol,
                                      std::vector<Vec3>& kept) {
    std::vector<std::size_t> order(pts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const Vec3 &pa = pts[a], &pb = pts[b];
        if (pa.x != pb.x) return pa.x < pb.x;
        if (pa.y != pb.y) return pa.y < pb.y;
        if (pa.z != pb.z) return pa.z < pb.z;
        return a < b;
    });
    std::vector<std::size_t> group(pts.size());
    std::vector<std::size_t> root(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) root[i] = i;
    // Sweep along x; any pair within tol has |dx| <= tol.
    for (std::size_t i = 0; i < order.size(); ++i) {
        for (std::size_t j = i + 1; j < order.size(); ++j) {
            if (pts[order[j]].x - pts[order[i]].x > tol) break;
            if (dist(pts[order[i]], pts[order[j]]) <= tol) {
                std::size_t a = root[order[i]], b = root[order[j]];
                std::size_t keep = std::min(a, b);
                root[order[i]] = root[order[j]] = keep;
                root[a] = root[b] = keep;
            }
        }
    }
    // Path-compress through one pass (chains are short at this tolerance).
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::size_t r = i;
        while (root[r] != r) r = root[r];
        root[i] = r;
    }
    kept.clear();
    std::vector<std::size_t> slot(pts.size(), SIZE_MAX);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (root[i] == i) {
            slot[i] = kept.size();
            kept.push_back(pts[i]);
        }
    }
    for (std::size_t i = 0; i < pts.size(); ++i) group[i] = slot[root[i]];
    return group;
}

}  // namespace

std::vector<std::array<int, 4>> delaunay_in_box(const std::vector<Vec3>& interior,
                                                const Aabb& box) {
    for (const Vec3& p : interior)
        if (!box.contains(p)) throw extraction_error("point outside the triangulation box");
    BoxDelaunay dt(interior, box);
    return dt.alive_tets();
}

LabeledTetMesh extract_labeled(const PoNQGrid& masked_grid) {
    std::vector<Vec3> raw_points;
    std::vector<Vec3> raw_normals;
    for (const auto& [index, list] : masked_grid.cells) {
        for (const PoNQSample& s : list) {
            raw_points.push_back(s.point);
            raw_normals.push_back(s.normal);
        }
    }
    if (raw_points.size() < 4)
        throw extraction_error("<4 points after masking (" + std::to_string(raw_points.size()) +
                               ")");

    std::vector<Vec3> points;
    std::vector<std::size_t> group = dedup_points(raw_points, 1e-7, points);
    std::vector<Vec3> normals(points.size());
    {
        std::vector<std::size_t> first(points.size(), SIZE_MAX);
        for (std::size_t i = 0; i < raw_points.size(); ++i)
            if (first[group[i]] == SIZE_MAX) {
                first[group[i]] = i;
                normals[group[i]] = raw_normals[i];
            }
    }
    if (points.size() < 4)
        throw extraction_error("<4 distinct points after masking (" +
                               std::to_string(points.size()) + ")");

    // Coplanarity check on the true coordinates.
    {
        double scale = norm(masked_grid.bounds.extent());
        bool non_coplanar = false;
        std::size_t i1 = SIZE_MAX, i2 = SIZE_MAX;
        for (std::size_t i = 1; i < points.size() && i1 == SIZE_MAX; ++i)
            if (dist(points[i], points[0]) > 1e-9 * scale) i1 = i;
        if (i1 != SIZE_MAX)
            for (std::size_t i = i1 + 1; i < points.size() && i2 == SIZE_MAX; ++i)
                if (norm(cross(points[i1] - points[0], points[i] - points[0])) >
                    1e-12 * scale * scale)
                    i2 = i;
        if (i2 != SIZE_MAX) {
            Vec3 n = cross(points[i1] - points[0], points[i2] - points[0]);
            for (std::size_t i = 0; i < points.size(); ++i)
                if (std::abs(dot(n, points[i] - points[0])) > 1e-9 * scale * norm(n)) {
                    non_coplanar = true;
                    break;
                }
        }
        if (!non_coplanar)
            throw extraction_error("all points collinear or coplanar after perturbation");
    }

    // Padded box: grid bounds scaled by 1.5 about their center.
    Aabb box;
    {
        Vec3 c = masked_grid.bounds.center();
        Vec3 half = masked_grid.bounds.extent() * 0.75;  // 1.5x bounds
        box.expand(c - half);
        box.expand(c + half);
    }

    LabeledTetMesh out;
    out.sample_count = points.size();
    out.normals = normals;
    out.tets = delaunay_in_box(points, box);
    out.points = points;
    for (int m = 0; m < 8; ++m)
        out.points.push_back({m & 1 ? box.hi.x : box.lo.x, m & 2 ? box.hi.y : box.lo.y,
                              m & 4 ? box.hi.z : box.lo.z});

    // Label: corner-incident tets are outside; everything else follows the
    // nearest sample's tangent plane at the tet centroid.
    PointGridNn nn(points, masked_grid.bounds);
    const auto tet_count = static_cast<std::int64_t>(out.tets.size());
    out.inside.assign(out.tets.size(), 0);
#pragma omp parallel for schedule(static)
    for (std::int64_t t = 0; t < tet_count; ++t) {
        const auto& tet = out.tets[t];
        bool corner = false;
        for (int i = 0; i < 4; ++i)
            if (out.is_corner(tet[i])) corner = true;
        if (corner) continue;
        Vec3 centroid = (out.points[tet[0]] + out.points[tet[1]] + out.points[tet[2]] +
                         out.points[tet[3]]) /
                        4.0;
        std::size_t j = nn.nearest(centroid);
        double side = dot(normals[j], centroid - points[j]);
        out.inside[t] = side < 0.0 ? 1 : 0;
    }
    return out;
}

TriangleMesh extract_mesh(const LabeledTetMesh& labeled) {
    // Face adjacency between tets via a sorted-face map.
    std::map<std::array<int, 3>, std::pair<int, int>> face_map;
    struct Emit {
        std::array<int, 3> face;
    };
    std::vector<std::array<int, 3>> emitted;

    auto outward_face = [&](const std::array<int, 4>& tet, int i) -> std::array<int, 3> {
        switch (i) {
            case 0: return {tet[1], tet[2], tet[3]};
            case 1: return {tet[0], tet[3], tet[2]};
            case 2: return {tet[0], tet[1], tet[3]};
            default: return {tet[0], tet[2], tet[1]};
        }
    };

    // Record which tet is on each side of every face.
    struct Side {
        int tet = -1;
        std::array<int, 3> oriented{};
    };
    std::map<std::array<int, 3>, std::vector<Side>> sides;
    for (std::size_t t = 0; t < labeled.tets.size(); ++t) {
        for (int i = 0; i < 4; ++i) {
            std::array<int, 3> f = outward_face(labeled.tets[t], i);
            std::array<int, 3> key = f;
            std::sort(key.begin(), key.end());
            sides[key].push_back({static_cast<int>(t), f});
        }
    }

    for (const auto& [key, list] : sides) {
        if (list.size() == 2) {
            bool in0 = labeled.inside[list[0].tet] != 0;
            bool in1 = labeled.inside[list[1].tet] != 0;
            if (in0 == in1) continue;
            const Side& inside_side = in0 ? list[0] : list[1];
            emitted.push_back(inside_side.oriented);  // outward from the inside tet
        } else if (list.size() == 1) {
            // Hull face of the box; its tet is corner-incident, hence outside.
            if (labeled.inside[list[0].tet] != 0) emitted.push_back(list[0].oriented);
        }
    }

    if (emitted.empty()) throw extraction_error("labeling produced an empty solid");

    // Compact the used vertices, ascending original index.
    std::vector<int> remap(labeled.points.size(), -1);
    TriangleMesh mesh;
    std::vector<int> used;
    for (const auto& f : emitted)
        for (int v : f) used.push_back(v);
    std::sort(used.begin(), used.end());
    used.erase(std::unique(used.begin(), used.end()), used.end());
    for (int v : used) {
        remap[v] = static_cast<int>(mesh.vertices.size());
        mesh.vertices.push_back(labeled.points[v]);
    }
    for (const auto& f : emitted)
        mesh.faces.push_back({remap[f[0]], remap[f[1]], remap[f[2]]});
    return mesh;
}

TriangleMesh extract_mesh(const PoNQGrid& masked_grid) {
    return extract_mesh(extract_labeled(masked_grid));
}

}  // namespace ponq
