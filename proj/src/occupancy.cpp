#include "ponq/occupancy.hpp"

#include <algorithm>
#include <cmath>

#include "ponq/bin_io.hpp"
#include "ponq/rng.hpp"

namespace ponq {

// ---------------------------------------------------------------------------
// crust occupancy
// ---------------------------------------------------------------------------

std::size_t OccupancyGrid::true_count() const {
    std::size_t total = 0;
    for (std::uint8_t c : cells) total += c != 0;
    return total;
}

bool OccupancyGrid::contains_point(const Vec3& p) const {
    if (!bounds.contains(p)) return false;
    Vec3 ext = bounds.extent();
    std::uint32_t idx3[3];
    for (int a = 0; a < 3; ++a) {
        double h = ext[a] / n;
        auto c = static_cast<std::int64_t>(std::floor((p[a] - bounds.lo[a]) / h));
        c = std::clamp<std::int64_t>(c, 0, static_cast<std::int64_t>(n) - 1);
        idx3[a] = static_cast<std::uint32_t>(c);
    }
    return at(idx3[0], idx3[1], idx3[2]);
}

namespace {

OccupancyGrid empty_grid(std::uint32_t n, const Aabb& bounds) {
    if (n < 1) throw geometry_error("occupancy resolution must be >= 1");
    OccupancyGrid grid;
    grid.n = n;
    grid.bounds = bounds;
    grid.cells.assign(std::size_t(n) * n * n, 0);
    return grid;
}

}  // namespace

OccupancyGrid occupancy_from_mesh(const TriangleMesh& mesh, std::uint32_t n, const Aabb& bounds) {
    OccupancyGrid grid = empty_grid(n, bounds);
    Vec3 ext = bounds.extent();
    Vec3 h{ext.x / n, ext.y / n, ext.z / n};
    Vec3 half = h * 0.5;
    const auto faces = static_cast<std::int64_t>(mesh.faces.size());

    // Each triangle marks the cells of its own AABB range; only `true` is ever
    // written, so the result is independent of thread interleaving.
#pragma omp parallel for schedule(dynamic, 64)
    for (std::int64_t fi = 0; fi < faces; ++fi) {
        const auto& f = mesh.faces[fi];
        const Vec3& a = mesh.vertices[f[0]];
        const Vec3& b = mesh.vertices[f[1]];
        const Vec3& c = mesh.vertices[f[2]];
        Aabb tb;
        tb.expand(a);
        tb.expand(b);
        tb.expand(c);
        std::int64_t lo[3], hi[3];
        for (int axis = 0; axis < 3; ++axis) {
            lo[axis] = std::clamp<std::int64_t>(
                static_cast<std::int64_t>(std::floor((tb.lo[axis] - bounds.lo[axis]) / h[axis])), 0,
                n - 1);
            hi[axis] = std::clamp<std::int64_t>(
                static_cast<std::int64_t>(std::floor((tb.hi[axis] - bounds.lo[axis]) / h[axis])), 0,
                n - 1);
        }
        for (std::int64_t iz = lo[2]; iz <= hi[2]; ++iz)
            for (std::int64_t iy = lo[1]; iy <= hi[1]; ++iy)
                for (std::int64_t ix = lo[0]; ix <= hi[0]; ++ix) {
                    Vec3 center = bounds.lo + Vec3{(ix + 0.5) * h.x, (iy + 0.5) * h.y,
                                                   (iz + 0.5) * h.z};
                    if (triangle_box_overlap(a, b, c, center, half)) {
                        std::uint8_t& cell = grid.cells[(std::size_t(iz) * n + iy) * n + ix];
#pragma omp atomic write
                        cell = 1;
                    }
                }
    }
    return grid;
}

namespace serial {

OccupancyGrid occupancy_from_mesh(const TriangleMesh& mesh, std::uint32_t n, const Aabb& bounds) {
    OccupancyGrid grid = empty_grid(n, bounds);
    Vec3 ext = bounds.extent();
    Vec3 h{ext.x / n, ext.y / n, ext.z / n};
    Vec3 half = h * 0.5;
    for (std::uint32_t iz = 0; iz < n; ++iz)
        for (std::uint32_t iy = 0; iy < n; ++iy)
            for (std::uint32_t ix = 0; ix < n; ++ix) {
                Vec3 center = bounds.lo +
                              Vec3{(ix + 0.5) * h.x, (iy + 0.5) * h.y, (iz + 0.5) * h.z};
                for (const auto& f : mesh.faces) {
                    if (triangle_box_overlap(mesh.vertices[f[0]], mesh.vertices[f[1]],
                                             mesh.vertices[f[2]], center, half)) {
                        grid.cells[(std::size_t(iz) * n + iy) * n + ix] = 1;
                        break;
                    }
                }
            }
    return grid;
}

}  // namespace serial

// ---------------------------------------------------------------------------
// training points
// ---------------------------------------------------------------------------

std::vector<TrainPoint> sample_train_points(const TriangleMesh& mesh, std::uint32_t n,
                                            const Aabb& bounds, std::size_t count,
                                            double displacement_sigma_cells, std::uint64_t seed) {
    if (count < 1) throw geometry_error("train point count must be >= 1");
    OccupancyGrid gt = occupancy_from_mesh(mesh, n, bounds);
    SurfaceSampleSet surface = sample_surface(mesh, count, derive_seed(seed, "train-surface"));
    double cell = std::max({bounds.extent().x, bounds.extent().y, bounds.extent().z}) / n;
    double sigma = displacement_sigma_cells * cell;

    Rng rng(derive_seed(seed, "train-displace"));
    std::vector<TrainPoint> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Vec3 d{rng.normal() * sigma, rng.normal() * sigma, rng.normal() * sigma};
        TrainPoint tp;
        tp.position = bounds.clamp(surface.points[i] + d);
        tp.occupied = gt.contains_point(tp.position);
        out.push_back(tp);
    }
    return out;
}

// ---------------------------------------------------------------------------
// latent sampling
// ---------------------------------------------------------------------------

std::vector<double> trilinear_sample(const LatentGrid& latent, const Vec3& position) {
    if (!is_finite(position)) throw geometry_error("non-finite sample position");
    if (latent.n < 1 || latent.channels < 1) throw geometry_error("empty latent grid");
    const std::uint32_t n = latent.n;
    Vec3 ext = latent.bounds.extent();
    Vec3 h{ext.x / n, ext.y / n, ext.z / n};

    // Nodes sit at cell centers; clamp into the node lattice.
    double fx = (position.x - latent.bounds.lo.x) / h.x - 0.5;
    double fy = (position.y - latent.bounds.lo.y) / h.y - 0.5;
    double fz = (position.z - latent.bounds.lo.z) / h.z - 0.5;
    auto split = [&](double f, std::uint32_t& i0, std::uint32_t& i1, double& w) {
        if (f <= 0.0) {
            i0 = i1 = 0;
            w = 0.0;
            return;
        }
        if (f >= double(n - 1)) {
            i0 = i1 = n - 1;
            w = 0.0;
            return;
        }
        double fl = std::floor(f);
        i0 = static_cast<std::uint32_t>(fl);
        i1 = i0 + 1;
        w = f - fl;
    };
    std::uint32_t x0, x1, y0, y1, z0, z1;
    double wx, wy, wz;
    split(fx, x0, x1, wx);
    split(fy, y0, y1, wy);
    split(fz, z0, z1, wz);

    std::vector<double> out(latent.channels);
    for (std::uint32_t c = 0; c < latent.channels; ++c) {
        double c00 = latent.at(c, x0, y0, z0) * (1 - wx) + latent.at(c, x1, y0, z0) * wx;
        double c10 = latent.at(c, x0, y1, z0) * (1 - wx) + latent.at(c, x1, y1, z0) * wx;
        double c01 = latent.at(c, x0, y0, z1) * (1 - wx) + latent.at(c, x1, y0, z1) * wx;
        double c11 = latent.at(c, x0, y1, z1) * (1 - wx) + latent.at(c, x1, y1, z1) * wx;
        double c0 = c00 * (1 - wy) + c10 * wy;
        double c1 = c01 * (1 - wy) + c11 * wy;
        out[c] = c0 * (1 - wz) + c1 * wz;
    }
    return out;
}

std::vector<double> gather_feature(const LatentGrid& latent, const Vec3& position, double h) {
    std::vector<double> z;
    z.reserve(7 * latent.channels + 3);
    auto append = [&z](const std::vector<double>& f) { z.insert(z.end(), f.begin(), f.end()); };
    append(trilinear_sample(latent, position));
    static const Vec3 axes[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    for (int a = 0; a < 3; ++a) {
        append(trilinear_sample(latent, position + axes[a] * h));
        append(trilinear_sample(latent, position - axes[a] * h));
    }
    Vec3 ext = latent.bounds.extent();
    z.push_back((position.x - latent.bounds.lo.x) / ext.x);
    z.push_back((position.y - latent.bounds.lo.y) / ext.y);
    z.push_back((position.z - latent.bounds.lo.z) / ext.z);
    return z;
}

std::vector<double> gather_feature(const LatentGrid& latent, const Vec3& position) {
    Vec3 ext = latent.bounds.extent();
    double h = std::max({ext.x, ext.y, ext.z}) / latent.n;  // one cell spacing
    return gather_feature(latent, position, h);
}

// ---------------------------------------------------------------------------
// masks
// ---------------------------------------------------------------------------

OccupancyPredictor make_mesh_oracle_predictor(OccupancyGrid ground_truth) {
    return [gt = std::move(ground_truth)](const std::vector<double>& z) -> double {
        if (z.size() < 3) throw geometry_error("feature vector too short");
        Vec3 ext = gt.bounds.extent();
        Vec3 p{gt.bounds.lo.x + z[z.size() - 3] * ext.x,
               gt.bounds.lo.y + z[z.size() - 2] * ext.y,
               gt.bounds.lo.z + z[z.size() - 1] * ext.z};
        return gt.contains_point(p) ? 1.0 : 0.0;
    };
}

OccupancyGrid predict_mask(const OccupancyPredictor& predictor, const LatentGrid& latent,
                           std::uint32_t n, const Aabb& bounds, double threshold) {
    OccupancyGrid mask = empty_grid(n, bounds);
    Vec3 ext = bounds.extent();
    Vec3 h{ext.x / n, ext.y / n, ext.z / n};
    const auto total = static_cast<std::int64_t>(std::size_t(n) * n * n);
    std::exception_ptr first_error;
#pragma omp parallel for schedule(dynamic, 256)
    for (std::int64_t idx = 0; idx < total; ++idx) {
        try {
            std::uint32_t ix = idx % n;
            std::uint32_t iy = (idx / n) % n;
            std::uint32_t iz = static_cast<std::uint32_t>(idx / (std::int64_t(n) * n));
            Vec3 center = bounds.lo + Vec3{(ix + 0.5) * h.x, (iy + 0.5) * h.y, (iz + 0.5) * h.z};
            double p = predictor(gather_feature(latent, center));
            mask.cells[idx] = p >= threshold ? 1 : 0;
        } catch (...) {
#pragma omp critical(ponq_mask_error)
            if (!first_error) first_error = std::current_exception();
        }
    }
    if (first_error) std::rethrow_exception(first_error);
    return mask;
}

OccupancyGrid predict_mask_per_point(const OccupancyPredictor& predictor, const LatentGrid& latent,
                                     const PoNQGrid& grid, double threshold) {
    OccupancyGrid mask = empty_grid(grid.n, grid.bounds);
    for (const auto& [index, list] : grid.cells) {
        bool any = false;
        for (const PoNQSample& s : list)
            if (predictor(gather_feature(latent, s.point)) >= threshold) {
                any = true;
                break;
            }
        mask.cells[index] = any ? 1 : 0;
    }
    return mask;
}

PoNQGrid mask_apply(const PoNQGrid& grid, const OccupancyGrid& mask) {
    if (grid.n != mask.n) throw geometry_error("mask/grid resolution mismatch");
    PoNQGrid out;
    out.n = grid.n;
    out.k = grid.k;
    out.bounds = grid.bounds;
    for (const auto& [index, list] : grid.cells)
        if (mask.at_index(index)) out.cells.emplace(index, list);
    return out;
}

LatentGrid latent_from_occupancy(const OccupancyGrid& occ) {
    LatentGrid latent;
    latent.channels = 1;
    latent.n = occ.n;
    latent.bounds = occ.bounds;
    const std::uint32_t n = occ.n;
    latent.values.assign(std::size_t(n) * n * n, 0.0);
    std::vector<double> base(latent.values.size());
    for (std::size_t i = 0; i < base.size(); ++i) base[i] = occ.cells[i] ? 1.0 : -1.0;
    // One 6-neighbor averaging pass (border-clamped) softens the indicator.
    auto at = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
        x = std::clamp<std::int64_t>(x, 0, n - 1);
        y = std::clamp<std::int64_t>(y, 0, n - 1);
        z = std::clamp<std::int64_t>(z, 0, n - 1);
        return base[(std::size_t(z) * n + y) * n + x];
    };
    for (std::uint32_t z = 0; z < n; ++z)
        for (std::uint32_t y = 0; y < n; ++y)
            for (std::uint32_t x = 0; x < n; ++x) {
                double sum = at(x, y, z) + at(x + 1, y, z) + at(std::int64_t(x) - 1, y, z) +
                             at(x, y + 1, z) + at(x, std::int64_t(y) - 1, z) + at(x, y, z + 1) +
                             at(x, y, std::int64_t(z) - 1);
                latent.values[(std::size_t(z) * n + y) * n + x] = sum / 7.0;
            }
    return latent;
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

// OCCG: magic, u32 version=1, u32 N, bit-packed cells x-fastest (LSB-first
// within each byte). The file carries no bounds; readers assume the fixed
// [-0.5, 0.5]^3 grid frame.
std::vector<unsigned char> write_occupancy(const OccupancyGrid& grid) {
    ByteWriter w;
    w.put_magic("OCCG");
    w.put<std::uint32_t>(1);
    w.put<std::uint32_t>(grid.n);
    std::size_t total = grid.cells.size();
    std::vector<unsigned char> packed((total + 7) / 8, 0);
    for (std::size_t i = 0; i < total; ++i)
        if (grid.cells[i]) packed[i / 8] |= static_cast<unsigned char>(1u << (i % 8));
    w.put_raw(packed.data(), packed.size());
    return w.take();
}

OccupancyGrid read_occupancy(const std::vector<unsigned char>& bytes) {
    ByteReader r(bytes);
    r.expect_magic("OCCG");
    auto version = r.get<std::uint32_t>();
    if (version != 1) throw format_error("unsupported OCCG version " + std::to_string(version));
    OccupancyGrid grid;
    grid.n = r.get<std::uint32_t>();
    if (grid.n < 1) throw format_error("invalid OCCG resolution");
    grid.bounds = unit_grid_bounds();
    std::size_t total = std::size_t(grid.n) * grid.n * grid.n;
    std::vector<unsigned char> packed((total + 7) / 8);
    if (r.remaining() != packed.size()) throw format_error("OCCG payload size mismatch");
    r.get_raw(packed.data(), packed.size());
    grid.cells.assign(total, 0);
    for (std::size_t i = 0; i < total; ++i)
        grid.cells[i] = (packed[i / 8] >> (i % 8)) & 1u;
    return grid;
}

// LATG v1: magic, u32 version, u32 c, u32 n, f64 bounds x6, f32 values
// channel-major then x-fastest. v2 appends f64 norm_min, norm_max to the
// header for grids carrying normalization stats.
std::vector<unsigned char> write_latent(const LatentGrid& latent) {
    ByteWriter w;
    w.put_magic("LATG");
    w.put<std::uint32_t>(latent.has_norm_stats ? 2 : 1);
    w.put<std::uint32_t>(latent.channels);
    w.put<std::uint32_t>(latent.n);
    for (int i = 0; i < 3; ++i) w.put<double>(latent.bounds.lo[i]);
    for (int i = 0; i < 3; ++i) w.put<double>(latent.bounds.hi[i]);
    if (latent.has_norm_stats) {
        w.put<double>(latent.norm_min);
        w.put<double>(latent.norm_max);
    }
    for (double v : latent.values) w.put<float>(static_cast<float>(v));
    return w.take();
}

LatentGrid read_latent(const std::vector<unsigned char>& bytes) {
    ByteReader r(bytes);
    r.expect_magic("LATG");
    auto version = r.get<std::uint32_t>();
    if (version != 1 && version != 2)
        throw format_error("unsupported LATG version " + std::to_string(version));
    LatentGrid latent;
    latent.channels = r.get<std::uint32_t>();
    latent.n = r.get<std::uint32_t>();
    if (latent.channels < 1 || latent.n < 1) throw format_error("invalid LATG dimensions");
    for (int i = 0; i < 3; ++i) latent.bounds.lo[i] = r.get<double>();
    for (int i = 0; i < 3; ++i) latent.bounds.hi[i] = r.get<double>();
    if (version == 2) {
        latent.has_norm_stats = true;
        latent.norm_min = r.get<double>();
        latent.norm_max = r.get<double>();
    }
    std::size_t count = latent.value_count();
    if (r.remaining() != count * sizeof(float)) throw format_error("LATG payload size mismatch");
    latent.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) latent.values[i] = r.get<float>();
    return latent;
}

}  // namespace ponq
