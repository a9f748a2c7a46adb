// Generation-evaluation suite: CD, EMD, MMD, COV, 1-NNA, JSD, and mesh
// quality rates. Conventions (the literature leaves them open): CD is the
// symmetric mean of squared nearest-neighbor distances, averaged over the two
// directions; EMD is the minimum mean Euclidean cost over bijections, exact
// Hungarian for n <= 512 and an epsilon-scaled auction above (total cost
// within 1e-4 x max pair distance of optimal).
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ponq/mesh.hpp"

namespace ponq {

struct PointCloud {
    std::vector<Vec3> points;
    std::string source;  // optional mesh id
};

enum class PairMetric { cd, emd };

double chamfer(const PointCloud& a, const PointCloud& b);
double emd(const PointCloud& a, const PointCloud& b);

namespace serial {
double chamfer(const PointCloud& a, const PointCloud& b);
}  // namespace serial

// Exact solver, exposed for the oracle tests; O(n^3).
double emd_hungarian(const std::vector<std::vector<double>>& cost);
// Approximate solver with documented gap; exposed to test the gap bound.
double emd_auction(const std::vector<std::vector<double>>& cost, double rel_tol = 1e-4);

struct DistanceMatrix {
    PairMetric metric = PairMetric::cd;
    std::size_t rows = 0, cols = 0;  // rows = gen, cols = ref
    std::vector<double> values;      // row-major

    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

DistanceMatrix compute_distance_matrix(const std::vector<PointCloud>& gen,
                                       const std::vector<PointCloud>& ref, PairMetric metric);

// Set-level metrics; the *_from_matrix forms are exact equals of the
// streaming ones.
double mmd(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref,
           PairMetric metric);
double coverage(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref,
                PairMetric metric);
double one_nna(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref,
               PairMetric metric);
double mmd_from_matrix(const DistanceMatrix& m);
double coverage_from_matrix(const DistanceMatrix& m);
// Needs the pooled square matrix over gen ++ ref.
double one_nna_from_pooled_matrix(const DistanceMatrix& pooled, std::size_t gen_count);

// Pooled occupancy-histogram Jensen-Shannon divergence over resolution^3
// cells in [-0.5, 0.5]^3, natural log; in [0, ln 2].
double jsd(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref,
           std::uint32_t resolution = 28);

struct GenEvalReport {
    double mmd_cd = 0, mmd_emd = 0;
    double cov_cd = 0, cov_emd = 0;   // percent
    double nna_cd = 0, nna_emd = 0;   // percent
    double jsd = 0;
    double watertight_rate = 0;          // percent of gen meshes
    double self_intersection_rate = 0;   // percent of gen meshes
    std::size_t gen_count = 0, ref_count = 0;
};

struct EvalConfig {
    std::size_t points_per_mesh = 2048;
    std::uint64_t seed = 0;
    std::uint32_t jsd_resolution = 28;
};

struct NamedMesh {
    TriangleMesh mesh;
    std::string name;
};

// Samples points_per_mesh per mesh (seed derived per name), computes the full
// metric suite, and audits the generated meshes.
GenEvalReport evaluate_generation(const std::vector<NamedMesh>& gen,
                                  const std::vector<NamedMesh>& ref, const EvalConfig& config);

// Point clouds used by evaluate_generation, exposed for tests.
PointCloud cloud_from_mesh(const TriangleMesh& mesh, const std::string& name,
                           const EvalConfig& config);

}  // namespace ponq
