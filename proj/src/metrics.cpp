#include "ponq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "ponq/rng.hpp"

namespace ponq {

// ---------------------------------------------------------------------------
// pairwise distances
// ---------------------------------------------------------------------------

namespace {

void check_cloud(const PointCloud& c, const char* what) {
    if (c.points.empty()) throw geometry_error(std::string(what) + ": empty point cloud");
    for (const Vec3& p : c.points)
        if (!is_finite(p)) throw geometry_error(std::string(what) + ": non-finite point");
}

double nearest_d2(const Vec3& p, const std::vector<Vec3>& pts) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& q : pts) best = std::min(best, dist2(p, q));
    return best;
}

double directed_mean_sq(const PointCloud& a, const PointCloud& b, bool parallel) {
    std::vector<double> d(a.points.size());
    const auto n = static_cast<std::int64_t>(a.points.size());
    if (parallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) d[i] = nearest_d2(a.points[i], b.points);
    } else {
        for (std::int64_t i = 0; i < n; ++i) d[i] = nearest_d2(a.points[i], b.points);
    }
    double sum = 0.0;
    for (double v : d) sum += v;  // fixed order
    return sum / double(a.points.size());
}

double chamfer_impl(const PointCloud& a, const PointCloud& b, bool parallel) {
    check_cloud(a, "chamfer");
    check_cloud(b, "chamfer");
    return 0.5 * (directed_mean_sq(a, b, parallel) + directed_mean_sq(b, a, parallel));
}

}  // namespace

double chamfer(const PointCloud& a, const PointCloud& b) { return chamfer_impl(a, b, true); }

namespace serial {
double chamfer(const PointCloud& a, const PointCloud& b) { return chamfer_impl(a, b, false); }
}  // namespace serial

double emd_hungarian(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    if (n == 0) throw geometry_error("empty cost matrix");
    const double inf = std::numeric_limits<double>::infinity();
    // Shortest-augmenting-path assignment with potentials, O(n^3).
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    double total = 0.0;
    for (int j = 1; j <= n; ++j) total += cost[p[j] - 1][j - 1];
    return total;
}

double emd_auction(const std::vector<std::vector<double>>& cost, double rel_tol) {
    const int n = static_cast<int>(cost.size());
    if (n == 0) throw geometry_error("empty cost matrix");
    double max_cost = 0.0;
    for (const auto& row : cost)
        for (double c : row) max_cost = std::max(max_cost, std::abs(c));
    // Total cost ends within n * eps_final <= rel_tol * max(1, max_cost) of
    // the optimum.
    double eps_final = rel_tol * std::max(1.0, max_cost) / double(n);
    double eps = std::max(max_cost / 4.0, eps_final);

    std::vector<double> price(n, 0.0);
    std::vector<int> owner(n, -1);        // object -> person
    std::vector<int> assigned(n, -1);     // person -> object
    while (true) {
        std::fill(owner.begin(), owner.end(), -1);
        std::fill(assigned.begin(), assigned.end(), -1);
        std::vector<int> queue;
        queue.reserve(n);
        for (int i = 0; i < n; ++i) queue.push_back(i);
        while (!queue.empty()) {
            int person = queue.back();
            queue.pop_back();
            // Best and second-best values of -cost - price.
            int best_j = -1;
            double best_v = -std::numeric_limits<double>::infinity();
            double second_v = -std::numeric_limits<double>::infinity();
            const auto& row = cost[person];
            for (int j = 0; j < n; ++j) {
                double value = -row[j] - price[j];
                if (value > best_v) {
                    second_v = best_v;
                    best_v = value;
                    best_j = j;
                } else if (value > second_v) {
                    second_v = value;
                }
            }
            double increment = (n == 1 ? 0.0 : best_v - second_v) + eps;
            price[best_j] += increment;
            int displaced = owner[best_j];
            owner[best_j] = person;
            assigned[person] = best_j;
            if (displaced >= 0) {
                assigned[displaced] = -1;
                queue.push_back(displaced);
            }
        }
        if (eps <= eps_final) break;
        eps = std::max(eps / 5.0, eps_final);
    }
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += cost[i][assigned[i]];
    return total;
}

double emd(const PointCloud& a, const PointCloud& b) {
    check_cloud(a, "emd");
    check_cloud(b, "emd");
    if (a.points.size() != b.points.size())
        throw geometry_error("emd requires equal-size clouds (" +
                             std::to_string(a.points.size()) + " vs " +
                             std::to_string(b.points.size()) + ")");
    const std::size_t n = a.points.size();
    std::vector<std::vector<double>> cost(n, std::vector<double>(n));
    const auto rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < n; ++j) cost[i][j] = dist(a.points[i], b.points[j]);
    double total = n <= 512 ? emd_hungarian(cost) : emd_auction(cost);
    return total / double(n);
}

// ---------------------------------------------------------------------------
// set metrics
// ---------------------------------------------------------------------------

namespace {

double cloud_distance(const PointCloud& a, const PointCloud& b, PairMetric metric) {
    return metric == PairMetric::cd ? serial::chamfer(a, b) : emd(a, b);
}

void check_sets(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref) {
    if (gen.empty() || ref.empty()) throw geometry_error("metric sets must be non-empty");
}

}  // namespace

DistanceMatrix compute_distance_matrix(const std::vector<PointCloud>& gen,
                                       const std::vector<PointCloud>& ref, PairMetric metric) {
    check_sets(gen, ref);
    DistanceMatrix m;
    m.metric = metric;
    m.rows = gen.size();
    m.cols = ref.size();
    m.values.assign(m.rows * m.cols, 0.0);
    const auto total = static_cast<std::int64_t>(m.rows * m.cols);
    std::exception_ptr first_error;
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t e = 0; e < total; ++e) {
        try {
            std::size_t r = static_cast<std::size_t>(e) / m.cols;
            std::size_t c = static_cast<std::size_t>(e) % m.cols;
            m.values[e] = cloud_distance(gen[r], ref[c], metric);
        } catch (...) {
#pragma omp critical(ponq_matrix_error)
            if (!first_error) first_error = std::current_exception();
        }
    }
    if (first_error) std::rethrow_exception(first_error);
    return m;
}

double mmd_from_matrix(const DistanceMatrix& m) {
    double sum = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < m.rows; ++r) best = std::min(best, m.at(r, c));
        sum += best;
    }
    return sum / double(m.cols);
}

double coverage_from_matrix(const DistanceMatrix& m) {
    std::set<std::size_t> matched;
    for (std::size_t r = 0; r < m.rows; ++r) {
        std::size_t arg = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < m.cols; ++c) {
            if (m.at(r, c) < best) {  // ties keep the lowest index
                best = m.at(r, c);
                arg = c;
            }
        }
        matched.insert(arg);
    }
    return 100.0 * double(matched.size()) / double(m.cols);
}

double one_nna_from_pooled_matrix(const DistanceMatrix& pooled, std::size_t gen_count) {
    const std::size_t total = pooled.rows;
    if (pooled.rows != pooled.cols || gen_count >= total)
        throw geometry_error("pooled 1-NNA matrix must be square over gen ++ ref");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < total; ++i) {
        bool own_gen = i < gen_count;
        double best = std::numeric_limits<double>::infinity();
        bool best_same_set = false;
        bool found = false;
        for (std::size_t j = 0; j < total; ++j) {
            if (j == i) continue;
            double d = pooled.at(i, j);
            bool same = (j < gen_count) == own_gen;
            // Strictly smaller wins; exact ties go cross-set.
            if (!found || d < best || (d == best && best_same_set && !same)) {
                best = d;
                best_same_set = same;
                found = true;
            }
        }
        if (best_same_set) ++correct;
    }
    return 100.0 * double(correct) / double(total);
}

double mmd(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref,
           PairMetric metric) {
    return mmd_from_matrix(compute_distance_matrix(gen, ref, metric));
}

double coverage(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref,
                PairMetric metric) {
    return coverage_from_matrix(compute_distance_matrix(gen, ref, metric));
}

double one_nna(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref,
               PairMetric metric) {
    check_sets(gen, ref);
    std::vector<PointCloud> pooled;
    pooled.reserve(gen.size() + ref.size());
    pooled.insert(pooled.end(), gen.begin(), gen.end());
    pooled.insert(pooled.end(), ref.begin(), ref.end());
    return one_nna_from_pooled_matrix(compute_distance_matrix(pooled, pooled, metric),
                                      gen.size());
}

double jsd(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref,
           std::uint32_t resolution) {
    check_sets(gen, ref);
    if (resolution < 1) throw geometry_error("jsd resolution must be >= 1");
    const std::size_t bins = std::size_t(resolution) * resolution * resolution;
    auto histogram = [&](const std::vector<PointCloud>& set) {
        std::vector<double> h(bins, 0.0);
        double total = 0.0;
        for (const PointCloud& cloud : set) {
            for (const Vec3& p : cloud.points) {
                std::size_t idx3[3];
                for (int a = 0; a < 3; ++a) {
                    double t = (p[a] + 0.5) * resolution;  // fixed [-0.5, 0.5]^3 frame
                    auto c = static_cast<std::int64_t>(std::floor(t));
                    c = std::clamp<std::int64_t>(c, 0, std::int64_t(resolution) - 1);
                    idx3[a] = static_cast<std::size_t>(c);
                }
                h[(idx3[2] * resolution + idx3[1]) * resolution + idx3[0]] += 1.0;
                total += 1.0;
            }
        }
        for (double& v : h) v /= total;
        return h;
    };
    std::vector<double> p = histogram(gen);
    std::vector<double> q = histogram(ref);
    double js = 0.0;
    for (std::size_t i = 0; i < bins; ++i) {
        double m = 0.5 * (p[i] + q[i]);
        if (p[i] > 0.0) js += 0.5 * p[i] * std::log(p[i] / m);
        if (q[i] > 0.0) js += 0.5 * q[i] * std::log(q[i] / m);
    }
    return js;
}

// ---------------------------------------------------------------------------
// full evaluation
// ---------------------------------------------------------------------------

PointCloud cloud_from_mesh(const TriangleMesh& mesh, const std::string& name,
                           const EvalConfig& config) {
    SurfaceSampleSet samples =
        sample_surface(mesh, config.points_per_mesh, derive_seed(config.seed, "eval-" + name));
    PointCloud cloud;
    cloud.points = std::move(samples.points);
    cloud.source = name;
    return cloud;
}

GenEvalReport evaluate_generation(const std::vector<NamedMesh>& gen,
                                  const std::vector<NamedMesh>& ref, const EvalConfig& config) {
    if (gen.empty() || ref.empty()) throw geometry_error("evaluation needs non-empty mesh sets");
    std::vector<PointCloud> gen_clouds, ref_clouds;
    gen_clouds.reserve(gen.size());
    ref_clouds.reserve(ref.size());
    for (const NamedMesh& m : gen) gen_clouds.push_back(cloud_from_mesh(m.mesh, m.name, config));
    for (const NamedMesh& m : ref) ref_clouds.push_back(cloud_from_mesh(m.mesh, m.name, config));

    GenEvalReport report;
    report.gen_count = gen.size();
    report.ref_count = ref.size();

    DistanceMatrix cd = compute_distance_matrix(gen_clouds, ref_clouds, PairMetric::cd);
    DistanceMatrix em = compute_distance_matrix(gen_clouds, ref_clouds, PairMetric::emd);
    report.mmd_cd = mmd_from_matrix(cd);
    report.mmd_emd = mmd_from_matrix(em);
    report.cov_cd = coverage_from_matrix(cd);
    report.cov_emd = coverage_from_matrix(em);
    report.nna_cd = one_nna(gen_clouds, ref_clouds, PairMetric::cd);
    report.nna_emd = one_nna(gen_clouds, ref_clouds, PairMetric::emd);
    report.jsd = jsd(gen_clouds, ref_clouds, config.jsd_resolution);

    std::size_t watertight = 0, self_intersecting = 0;
    for (const NamedMesh& m : gen) {
        MeshAuditReport audit = audit_mesh(m.mesh);
        if (audit.watertight) ++watertight;
        if (audit.self_intersection_pair_count > 0) ++self_intersecting;
    }
    report.watertight_rate = 100.0 * double(watertight) / double(gen.size());
    report.self_intersection_rate = 100.0 * double(self_intersecting) / double(gen.size());
    return report;
}

}  // namespace ponq
