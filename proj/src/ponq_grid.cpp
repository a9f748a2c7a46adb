#include "ponq/ponq_grid.hpp"

#include <algorithm>
#include <cmath>

#include "ponq/bin_io.hpp"
#include "ponq/rng.hpp"

namespace ponq {

// ---------------------------------------------------------------------------
// grid geometry
// ---------------------------------------------------------------------------

namespace {

Vec3 grid_spacing(const Aabb& bounds, std::uint32_t n) {
    Vec3 ext = bounds.extent();
    return {ext.x / n, ext.y / n, ext.z / n};
}

Vec3 cell_center_of(const Aabb& bounds, std::uint32_t n, std::uint32_t index) {
    Vec3 h = grid_spacing(bounds, n);
    std::uint32_t ix = index % n;
    std::uint32_t iy = (index / n) % n;
    std::uint32_t iz = index / (n * n);
    return bounds.lo + Vec3{(ix + 0.5) * h.x, (iy + 0.5) * h.y, (iz + 0.5) * h.z};
}

Aabb cell_box_of(const Aabb& bounds, std::uint32_t n, std::uint32_t index) {
    Vec3 h = grid_spacing(bounds, n);
    std::uint32_t ix = index % n;
    std::uint32_t iy = (index / n) % n;
    std::uint32_t iz = index / (n * n);
    Aabb box;
    box.expand(bounds.lo + Vec3{ix * h.x, iy * h.y, iz * h.z});
    box.expand(bounds.lo + Vec3{(ix + 1) * h.x, (iy + 1) * h.y, (iz + 1) * h.z});
    return box;
}

}  // namespace

Vec3 PoNQGrid::cell_center(std::uint32_t index) const { return cell_center_of(bounds, n, index); }
Aabb PoNQGrid::cell_box(std::uint32_t index) const { return cell_box_of(bounds, n, index); }
Vec3 PoNQGrid::spacing() const { return grid_spacing(bounds, n); }

std::size_t PoNQGrid::sample_count() const {
    std::size_t total = 0;
    for (const auto& [idx, list] : cells) total += list.size();
    return total;
}

Vec3 CellBins::cell_center(std::uint32_t index) const { return cell_center_of(bounds, n, index); }

void FitConfig::validate() const {
    if (!(alpha >= 0 && beta >= 0 && gamma >= 0 && alpha + beta + gamma > 0))
        throw geometry_error("loss weights must be non-negative with a positive sum");
    if (k < 1) throw geometry_error("K must be >= 1");
    if (min_samples_per_cell < 1) throw geometry_error("min_samples_per_cell must be >= 1");
}

// ---------------------------------------------------------------------------
// binning
// ---------------------------------------------------------------------------

CellBins bin_samples(const SurfaceSampleSet& samples, const Aabb& bounds, std::uint32_t n) {
    if (samples.points.empty()) throw geometry_error("cannot bin an empty sample set");
    if (n < 1) throw geometry_error("grid resolution must be >= 1");
    CellBins bins;
    bins.n = n;
    bins.bounds = bounds;
    Vec3 h = grid_spacing(bounds, n);
    for (std::uint32_t si = 0; si < samples.points.size(); ++si) {
        const Vec3& p = samples.points[si];
        if (!bounds.contains(p)) throw geometry_error("sample outside grid bounds");
        std::uint32_t idx3[3];
        for (int a = 0; a < 3; ++a) {
            auto c = static_cast<std::int64_t>(std::floor((p[a] - bounds.lo[a]) / h[a]));
            c = std::clamp<std::int64_t>(c, 0, static_cast<std::int64_t>(n) - 1);
            idx3[a] = static_cast<std::uint32_t>(c);
        }
        bins.cells[(idx3[2] * n + idx3[1]) * n + idx3[0]].push_back(si);
    }
    return bins;
}

// ---------------------------------------------------------------------------
// per-cell fitting
// ---------------------------------------------------------------------------

namespace {

// Minimizer of sum ||n_i - n(s_j)||^2 under the unit constraint: normalized
// mean. Falls back to the dominant covariance eigenvector when the normals
// cancel, with the sign chosen by majority dot product.
Vec3 fit_normal(const SurfaceSampleSet& samples, const std::vector<std::uint32_t>& idx,
                bool* degenerate) {
    Vec3 mean{};
    for (std::uint32_t j : idx) mean += samples.normals[j];
    mean = mean / double(idx.size());
    double len = norm(mean);
    if (len > 1e-9) return mean / len;

    if (degenerate) *degenerate = true;
    std::array<std::array<double, 3>, 3> cov{};
    for (std::uint32_t j : idx) {
        const Vec3& nj = samples.normals[j];
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) cov[r][c] += nj[r] * nj[c];
    }
    SymEig<3> eig = sym_eigen<3>(cov);
    Vec3 dir{eig.vecs[0][2], eig.vecs[1][2], eig.vecs[2][2]};  // largest eigenvalue
    int pos = 0, neg = 0;
    for (std::uint32_t j : idx) (dot(samples.normals[j], dir) >= 0.0 ? pos : neg)++;
    return normalized(pos >= neg ? dir : -dir);
}

PoNQSample fit_single(const SurfaceSampleSet& samples, const std::vector<std::uint32_t>& idx,
                      const Aabb& cell_box, const FitConfig& config) {
    PoNQSample out;
    Vec3 centroid{};
    for (std::uint32_t j : idx) centroid += samples.points[j];
    centroid = centroid / double(idx.size());

    if (idx.size() < config.min_samples_per_cell) {
        // Thin cell: single-sample normal and rank-1 quadric, flagged.
        out.degenerate = true;
        out.normal = samples.normals[idx[0]];
        out.quadric = quadric_from_plane(plane_from_sample(samples.points[idx[0]], out.normal));
    } else {
        out.normal = fit_normal(samples, idx, &out.degenerate);
        Quadric sum;
        for (std::uint32_t j : idx)
            sum += quadric_from_plane(plane_from_sample(samples.points[j], samples.normals[j]));
        out.quadric = config.quadric_sum_convention ? sum : sum * (1.0 / double(idx.size()));
    }

    Aabb expanded = cell_box;
    Vec3 h = expanded.extent();
    expanded.lo -= h * 0.5;
    expanded.hi += h * 0.5;
    Vec3 anchor = config.qem.anchor == AnchorPolicy::cell_center ? cell_box.center() : centroid;
    out.point = qem_minimize(out.quadric, anchor, expanded, config.qem).position;
    return out;
}

// Lloyd k-means on positions with farthest-point initialization. Determinism:
// fixed iteration count, fixed seed, ties to the lowest cluster index.
std::vector<std::vector<std::uint32_t>> kmeans_partition(const SurfaceSampleSet& samples,
                                                         const std::vector<std::uint32_t>& idx,
                                                         std::uint32_t k) {
    const std::size_t m = idx.size();
    std::size_t clusters = std::min<std::size_t>(k, m);
    std::vector<Vec3> centers;
    centers.reserve(clusters);
    centers.push_back(samples.points[idx[0]]);
    std::vector<double> best_d2(m, std::numeric_limits<double>::infinity());
    while (centers.size() < clusters) {
        std::size_t far_i = 0;
        double far_d2 = -1.0;
        for (std::size_t i = 0; i < m; ++i) {
            best_d2[i] = std::min(best_d2[i], dist2(samples.points[idx[i]], centers.back()));
            if (best_d2[i] > far_d2) {
                far_d2 = best_d2[i];
                far_i = i;
            }
        }
        centers.push_back(samples.points[idx[far_i]]);
    }

    std::vector<int> assignment(m, 0);
    for (int iter = 0; iter < 20; ++iter) {
        for (std::size_t i = 0; i < m; ++i) {
            int best = 0;
            double best_dist = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < centers.size(); ++c) {
                double d2 = dist2(samples.points[idx[i]], centers[c]);
                if (d2 < best_dist) {
                    best_dist = d2;
                    best = static_cast<int>(c);
                }
            }
            assignment[i] = best;
        }
        std::vector<Vec3> sums(centers.size());
        std::vector<std::size_t> counts(centers.size(), 0);
        for (std::size_t i = 0; i < m; ++i) {
            sums[assignment[i]] += samples.points[idx[i]];
            ++counts[assignment[i]];
        }
        for (std::size_t c = 0; c < centers.size(); ++c)
            if (counts[c] > 0) centers[c] = sums[c] / double(counts[c]);
    }

    std::vector<std::vector<std::uint32_t>> parts(centers.size());
    for (std::size_t i = 0; i < m; ++i) parts[assignment[i]].push_back(idx[i]);
    parts.erase(std::remove_if(parts.begin(), parts.end(),
                               [](const auto& p) { return p.empty(); }),
                parts.end());
    return parts;
}

}  // namespace

std::vector<PoNQSample> fit_cell(const SurfaceSampleSet& samples,
                                 const std::vector<std::uint32_t>& cell_sample_indices,
                                 const Aabb& cell_box, const FitConfig& config) {
    config.validate();
    if (cell_sample_indices.empty()) throw geometry_error("fit_cell on an empty cell");
    if (config.k == 1) return {fit_single(samples, cell_sample_indices, cell_box, config)};
    auto parts = kmeans_partition(samples, cell_sample_indices, config.k);
    std::vector<PoNQSample> out;
    out.reserve(parts.size());
    for (const auto& part : parts) out.push_back(fit_single(samples, part, cell_box, config));
    return out;
}

PoNQGrid fit_bins(const SurfaceSampleSet& samples, const CellBins& bins, std::uint32_t k,
                  const FitConfig& config) {
    PoNQGrid grid;
    grid.n = bins.n;
    grid.k = k;
    grid.bounds = bins.bounds;

    std::vector<std::uint32_t> indices;
    indices.reserve(bins.cells.size());
    for (const auto& [idx, list] : bins.cells) indices.push_back(idx);
    std::vector<std::vector<PoNQSample>> fitted(indices.size());

    FitConfig cfg = config;
    cfg.k = k;
    const auto count = static_cast<std::int64_t>(indices.size());
    std::exception_ptr first_error;
#pragma omp parallel for schedule(dynamic, 8)
    for (std::int64_t i = 0; i < count; ++i) {
        try {
            std::uint32_t cell = indices[i];
            fitted[i] = fit_cell(samples, bins.cells.at(cell),
                                 cell_box_of(bins.bounds, bins.n, cell), cfg);
        } catch (...) {
#pragma omp critical(ponq_fit_error)
            if (!first_error) first_error = std::current_exception();
        }
    }
    if (first_error) std::rethrow_exception(first_error);
    for (std::size_t i = 0; i < indices.size(); ++i) grid.cells[indices[i]] = std::move(fitted[i]);
    return grid;
}

namespace serial {

PoNQGrid fit_bins(const SurfaceSampleSet& samples, const CellBins& bins, std::uint32_t k,
                  const FitConfig& config) {
    PoNQGrid grid;
    grid.n = bins.n;
    grid.k = k;
    grid.bounds = bins.bounds;
    FitConfig cfg = config;
    cfg.k = k;
    for (const auto& [cell, idx] : bins.cells)
        grid.cells[cell] = fit_cell(samples, idx, cell_box_of(bins.bounds, bins.n, cell), cfg);
    return grid;
}

}  // namespace serial

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

namespace {

void check_alignment(const PoNQGrid& grid, const CellBins& bins) {
    if (grid.n != bins.n) throw geometry_error("grid/bins resolution mismatch");
    for (const auto& [cell, list] : grid.cells)
        if (bins.cells.find(cell) == bins.cells.end())
            throw geometry_error("grid cell without matching bin");
}

// Index of the fitted sample a surface sample is charged to (nearest point).
std::size_t charge_of(const std::vector<PoNQSample>& fitted, const Vec3& p) {
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < fitted.size(); ++i) {
        double d2 = dist2(fitted[i].point, p);
        if (d2 < best_d2) {
            best_d2 = d2;
            best = i;
        }
    }
    return best;
}

template <typename PerSample>
double cell_mean_loss(const PoNQGrid& grid, const CellBins& bins, const SurfaceSampleSet& samples,
                      PerSample&& per_sample) {
    check_alignment(grid, bins);
    if (grid.cells.empty()) throw geometry_error("loss of an empty grid");
    double total = 0.0;
    for (const auto& [cell, fitted] : grid.cells) {
        const auto& idx = bins.cells.at(cell);
        for (std::uint32_t j : idx) {
            const PoNQSample& target = fitted.size() == 1
                                           ? fitted[0]
                                           : fitted[charge_of(fitted, samples.points[j])];
            total += per_sample(target, j);
        }
    }
    return total / double(grid.cells.size());
}

}  // namespace

double loss_v(const PoNQGrid& grid, const CellBins& bins, const SurfaceSampleSet& samples) {
    return cell_mean_loss(grid, bins, samples, [&](const PoNQSample& s, std::uint32_t j) {
        // Homogeneous v-hat against the sample's homogeneous tangent plane.
        HPlane plane = plane_from_sample(samples.points[j], samples.normals[j]);
        double d = plane.eval(s.point);
        return d * d;
    });
}

double loss_n(const PoNQGrid& grid, const CellBins& bins, const SurfaceSampleSet& samples) {
    return cell_mean_loss(grid, bins, samples, [&](const PoNQSample& s, std::uint32_t j) {
        return dist2(s.normal, samples.normals[j]);
    });
}

double loss_q(const PoNQGrid& grid, const CellBins& bins, const SurfaceSampleSet& samples) {
    return cell_mean_loss(grid, bins, samples, [&](const PoNQSample& s, std::uint32_t j) {
        Quadric kj = quadric_from_plane(plane_from_sample(samples.points[j], samples.normals[j]));
        return quadric_frobenius2(s.quadric, kj);
    });
}

double loss_feat(const PoNQGrid& grid, const CellBins& bins, const SurfaceSampleSet& samples,
                 const FitConfig& config) {
    config.validate();
    return config.alpha * loss_v(grid, bins, samples) + config.beta * loss_n(grid, bins, samples) +
           config.gamma * loss_q(grid, bins, samples);
}

// ---------------------------------------------------------------------------
// encode
// ---------------------------------------------------------------------------

EncodeResult encode_mesh(const TriangleMesh& mesh, std::uint32_t n, std::uint32_t k,
                         std::size_t sample_count, std::uint64_t seed, const FitConfig& config) {
    if (n < 1) throw geometry_error("grid resolution must be >= 1");
    config.validate();
    mesh.validate();

    EncodeResult result;
    result.transform = normalize_transform(mesh);
    TriangleMesh normalized = apply_transform(mesh, result.transform);
    result.samples = sample_surface(normalized, sample_count, derive_seed(seed, "sample-surface"));
    result.bins = bin_samples(result.samples, unit_grid_bounds(), n);
    result.grid = fit_bins(result.samples, result.bins, k, config);
    return result;
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

// PONQ: magic, u32 version=1, u32 N, u32 K, f64 bounds x6, u64 cell count;
// per cell ascending: u32 index, u8 k, k x [f64 point x3, f64 normal x3,
// f64 quadric upper-tri x10]. Little-endian.
std::vector<unsigned char> write_ponq(const PoNQGrid& grid) {
    ByteWriter w;
    w.put_magic("PONQ");
    w.put<std::uint32_t>(1);
    w.put<std::uint32_t>(grid.n);
    w.put<std::uint32_t>(grid.k);
    for (int i = 0; i < 3; ++i) w.put<double>(grid.bounds.lo[i]);
    for (int i = 0; i < 3; ++i) w.put<double>(grid.bounds.hi[i]);
    w.put<std::uint64_t>(grid.cells.size());
    for (const auto& [index, list] : grid.cells) {
        w.put<std::uint32_t>(index);
        w.put<std::uint8_t>(static_cast<std::uint8_t>(list.size()));
        for (const PoNQSample& s : list) {
            for (int i = 0; i < 3; ++i) w.put<double>(s.point[i]);
            for (int i = 0; i < 3; ++i) w.put<double>(s.normal[i]);
            for (double q : s.quadric.m) w.put<double>(q);
        }
    }
    return w.take();
}

PoNQGrid read_ponq(const std::vector<unsigned char>& bytes) {
    ByteReader r(bytes);
    r.expect_magic("PONQ");
    auto version = r.get<std::uint32_t>();
    if (version != 1) throw format_error("unsupported PONQ version " + std::to_string(version));
    PoNQGrid grid;
    grid.n = r.get<std::uint32_t>();
    grid.k = r.get<std::uint32_t>();
    if (grid.n < 1 || grid.k < 1) throw format_error("invalid PONQ dimensions");
    for (int i = 0; i < 3; ++i) grid.bounds.lo[i] = r.get<double>();
    for (int i = 0; i < 3; ++i) grid.bounds.hi[i] = r.get<double>();
    auto cell_count = r.get<std::uint64_t>();
    const std::uint64_t max_cells = std::uint64_t(grid.n) * grid.n * grid.n;
    for (std::uint64_t cc = 0; cc < cell_count; ++cc) {
        auto index = r.get<std::uint32_t>();
        if (index >= max_cells) throw format_error("PONQ cell index out of range");
        auto k = r.get<std::uint8_t>();
        if (k < 1 || k > grid.k) throw format_error("PONQ per-cell sample count out of range");
        std::vector<PoNQSample> list(k);
        for (auto& s : list) {
            for (int i = 0; i < 3; ++i) s.point[i] = r.get<double>();
            for (int i = 0; i < 3; ++i) s.normal[i] = r.get<double>();
            for (double& q : s.quadric.m) q = r.get<double>();
        }
        if (!grid.cells.emplace(index, std::move(list)).second)
            throw format_error("duplicate PONQ cell index");
    }
    if (!r.at_end()) throw format_error("trailing bytes after PONQ payload");
    return grid;
}

}  // namespace ponq
