// ponq: file-based CLI over the PoNQ pipeline. Deterministic per --seed; all
// diagnostics go to stderr, data goes to files (check/info print their report
// to stdout). Exit codes: 0 ok, 2 I/O, 3 geometry, 4 extraction, 5 format.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "ponq/bin_io.hpp"
#include "ponq/decimate.hpp"
#include "ponq/diffusion.hpp"
#include "ponq/extraction.hpp"
#include "ponq/metrics.hpp"
#include "ponq/occupancy.hpp"
#include "ponq/ponq_grid.hpp"
#include "ponq/rng.hpp"
#include "ponq/sdf.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 2;
constexpr int kExitGeometry = 3;
constexpr int kExitExtraction = 4;
constexpr int kExitFormat = 5;

std::string read_text_file(const std::string& path) {
    auto bytes = ponq::read_file(path);
    return std::string(bytes.begin(), bytes.end());
}

ponq::TriangleMesh load_mesh_file(const std::string& path) {
    ponq::LoadStats stats;
    ponq::TriangleMesh mesh = ponq::load_obj(read_text_file(path), &stats);
    if (stats.degenerate_faces_dropped > 0)
        std::cerr << "warning: dropped " << stats.degenerate_faces_dropped
                  << " degenerate faces from " << path << "\n";
    return mesh;
}

struct EncodeArgs {
    std::string input, out;
    std::uint32_t n = 64;
    std::uint32_t k = 1;
    std::size_t samples = 500000;
    std::uint64_t seed = 0;
    std::size_t min_cell_samples = 3;
    double tau = 1e-3;
};

int cmd_encode(const EncodeArgs& args) {
    ponq::TriangleMesh mesh = load_mesh_file(args.input);
    ponq::FitConfig config;
    config.min_samples_per_cell = args.min_cell_samples;
    config.qem.tau = args.tau;
    ponq::EncodeResult enc =
        ponq::encode_mesh(mesh, args.n, args.k, args.samples, args.seed, config);
    ponq::write_file(args.out, ponq::write_ponq(enc.grid));
    std::cerr << "encoded " << args.input << ": N=" << args.n << " K=" << args.k << " occupied="
              << enc.grid.cells.size() << " samples=" << enc.samples.points.size() << "\n";
    std::cerr << "  normalize: center=(" << enc.transform.center.x << ", "
              << enc.transform.center.y << ", " << enc.transform.center.z
              << ") scale=" << enc.transform.scale << "\n";
    std::cerr << "  loss_v=" << ponq::loss_v(enc.grid, enc.bins, enc.samples)
              << " loss_n=" << ponq::loss_n(enc.grid, enc.bins, enc.samples)
              << " loss_q=" << ponq::loss_q(enc.grid, enc.bins, enc.samples) << "\n";
    return kExitOk;
}

struct ExtractArgs {
    std::string input, out, mask;
};

int cmd_extract(const ExtractArgs& args) {
    ponq::PoNQGrid grid = ponq::read_ponq(ponq::read_file(args.input));
    if (!args.mask.empty()) {
        ponq::OccupancyGrid mask = ponq::read_occupancy(ponq::read_file(args.mask));
        grid = ponq::mask_apply(grid, mask);
    }
    ponq::TriangleMesh mesh = ponq::extract_mesh(grid);
    ponq::write_file(args.out, ponq::save_obj(mesh));
    ponq::MeshAuditReport audit = ponq::audit_mesh(mesh);
    std::cerr << "extracted " << mesh.vertices.size() << " vertices, " << mesh.faces.size()
              << " faces; watertight=" << (audit.watertight ? "true" : "false")
              << " boundary_edges=" << audit.boundary_edge_count
              << " self_intersections=" << audit.self_intersection_pair_count << "\n";
    return kExitOk;
}

int cmd_decimate(const std::string& input, const std::string& out, std::uint32_t resolution) {
    ponq::TriangleMesh mesh = load_mesh_file(input);
    ponq::TriangleMesh dec = ponq::cluster_decimate(mesh, resolution);
    ponq::write_file(out, ponq::save_obj(dec));
    std::cerr << "decimated " << mesh.vertices.size() << " -> " << dec.vertices.size()
              << " vertices, " << mesh.faces.size() << " -> " << dec.faces.size() << " faces\n";
    return kExitOk;
}

int cmd_occupancy(const std::string& input, const std::string& out, std::uint32_t n) {
    ponq::TriangleMesh mesh = load_mesh_file(input);
    // Same normalization as encode so the mask pairs with PONQ grids.
    ponq::TriangleMesh normalized = ponq::apply_transform(mesh, ponq::normalize_transform(mesh));
    ponq::OccupancyGrid grid = ponq::occupancy_from_mesh(normalized, n, ponq::unit_grid_bounds());
    ponq::write_file(out, ponq::write_occupancy(grid));
    std::cerr << "occupancy " << input << ": N=" << n << " true_cells=" << grid.true_count()
              << "\n";
    return kExitOk;
}

int cmd_check(const std::string& input) {
    ponq::TriangleMesh mesh = load_mesh_file(input);
    ponq::MeshAuditReport audit = ponq::audit_mesh(mesh);
    std::printf("vertices: %zu\n", mesh.vertices.size());
    std::printf("faces: %zu\n", mesh.faces.size());
    std::printf("boundary_edges: %zu\n", audit.boundary_edge_count);
    std::printf("non_manifold_edges: %zu\n", audit.non_manifold_edge_count);
    std::printf("self_intersections: %zu\n", audit.self_intersection_pair_count);
    std::printf("watertight: %s\n", audit.watertight ? "true" : "false");
    return kExitOk;
}

struct DiffuseArgs {
    std::string library, out;
    std::size_t steps = 1000;
    std::uint64_t seed = 0;
};

int cmd_diffuse_demo(const DiffuseArgs& args) {
    std::vector<std::string> files;
    if (!fs::is_directory(args.library)) throw ponq::io_error(args.library + " is not a directory");
    for (const auto& entry : fs::directory_iterator(args.library)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        if (ext == ".latg" || ext == ".occg") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ponq::io_error("no .latg or .occg files in " + args.library);

    std::vector<ponq::LatentGrid> normalized_library;
    std::vector<ponq::NormStats> stats;
    for (const std::string& path : files) {
        ponq::LatentGrid latent;
        if (fs::path(path).extension() == ".occg")
            latent = ponq::latent_from_occupancy(ponq::read_occupancy(ponq::read_file(path)));
        else
            latent = ponq::read_latent(ponq::read_file(path));
        auto [norm, st] = ponq::normalize(latent);
        normalized_library.push_back(std::move(norm));
        stats.push_back(st);
    }

    ponq::NoiseSchedule schedule = ponq::make_linear_schedule(args.steps);
    ponq::Denoiser denoiser = ponq::make_dataset_nearest_denoiser(normalized_library, schedule);
    ponq::LatentGrid z0 = ponq::sample(denoiser, normalized_library[0], schedule, args.seed);

    // Denormalize with the stats of the nearest library member.
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < normalized_library.size(); ++k) {
        double d2 = 0.0;
        for (std::size_t i = 0; i < z0.values.size(); ++i) {
            double d = z0.values[i] - normalized_library[k].values[i];
            d2 += d * d;
        }
        if (d2 < best_d2) {
            best_d2 = d2;
            best = k;
        }
    }
    ponq::LatentGrid out = ponq::denormalize(z0, stats[best]);
    out.has_norm_stats = true;
    out.norm_min = stats[best].min;
    out.norm_max = stats[best].max;
    ponq::write_file(args.out, ponq::write_latent(out));
    std::cerr << "diffuse-demo: library=" << files.size() << " steps=" << args.steps
              << " nearest=" << files[best] << "\n";
    return kExitOk;
}

struct EvalArgs {
    std::string gen_dir, ref_dir, out_json;
    std::uint64_t seed = 0;
    std::size_t points = 2048;
    std::uint32_t jsd_res = 28;
};

std::vector<ponq::NamedMesh> load_mesh_dir(const std::string& dir,
                                           std::vector<std::string>& errors) {
    if (!fs::is_directory(dir)) throw ponq::io_error(dir + " is not a directory");
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".obj")
            files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    std::vector<ponq::NamedMesh> meshes;
    for (const std::string& path : files) {
        try {
            ponq::NamedMesh nm;
            nm.mesh = load_mesh_file(path);
            nm.name = fs::path(path).filename().string();
            if (nm.mesh.faces.empty()) throw ponq::geometry_error("mesh has no faces");
            meshes.push_back(std::move(nm));
        } catch (const ponq::error& e) {
            errors.push_back(path + ": " + e.what());
        }
    }
    return meshes;
}

int cmd_eval_gen(const EvalArgs& args) {
    std::vector<std::string> errors;
    std::vector<ponq::NamedMesh> gen = load_mesh_dir(args.gen_dir, errors);
    std::vector<ponq::NamedMesh> ref = load_mesh_dir(args.ref_dir, errors);
    for (const std::string& e : errors) std::cerr << "error: " << e << "\n";
    if (gen.empty() || ref.empty()) throw ponq::io_error("no evaluable mesh pairs");

    ponq::EvalConfig config;
    config.points_per_mesh = args.points;
    config.seed = args.seed;
    config.jsd_resolution = args.jsd_res;
    ponq::GenEvalReport r = ponq::evaluate_generation(gen, ref, config);

    json j;
    j["MMD-CD"] = r.mmd_cd;
    j["MMD-EMD"] = r.mmd_emd;
    j["COV-CD"] = r.cov_cd;
    j["COV-EMD"] = r.cov_emd;
    j["1NNA-CD"] = r.nna_cd;
    j["1NNA-EMD"] = r.nna_emd;
    j["JSD"] = r.jsd;
    j["watertight_rate"] = r.watertight_rate;
    j["self_intersection_rate"] = r.self_intersection_rate;
    j["gen_count"] = r.gen_count;
    j["ref_count"] = r.ref_count;
    ponq::write_file(args.out_json, j.dump(2) + "\n");

    // Plain-text table mirroring the paper-style columns; CD scaled by 1e3,
    // EMD by 10 in the display only.
    std::printf("%-6s %11s %11s %8s %8s %9s %9s %9s %12s %10s\n", "set", "MMD-CD*1e3",
                "MMD-EMD*10", "COV-CD", "COV-EMD", "1NNA-CD", "1NNA-EMD", "JSD*1e3",
                "Watertight%", "Self-int%");
    std::printf("%-6s %11.4f %11.4f %8.2f %8.2f %9.2f %9.2f %9.4f %12.2f %10.2f\n", "gen",
                r.mmd_cd * 1e3, r.mmd_emd * 10.0, r.cov_cd, r.cov_emd, r.nna_cd, r.nna_emd,
                r.jsd * 1e3, r.watertight_rate, r.self_intersection_rate);
    return kExitOk;
}

int cmd_info(const std::string& input) {
    auto bytes = ponq::read_file(input);
    if (bytes.size() < 4) throw ponq::format_error("file too small to carry a magic");
    std::string magic(bytes.begin(), bytes.begin() + 4);
    if (magic == "PONQ") {
        ponq::PoNQGrid grid = ponq::read_ponq(bytes);
        std::printf("magic: PONQ\nversion: 1\nN: %u\nK: %u\noccupied_cells: %zu\nsamples: %zu\n",
                    grid.n, grid.k, grid.cells.size(), grid.sample_count());
        std::printf("bounds: [%g, %g, %g] .. [%g, %g, %g]\n", grid.bounds.lo.x, grid.bounds.lo.y,
                    grid.bounds.lo.z, grid.bounds.hi.x, grid.bounds.hi.y, grid.bounds.hi.z);
    } else if (magic == "OCCG") {
        ponq::OccupancyGrid grid = ponq::read_occupancy(bytes);
        std::printf("magic: OCCG\nversion: 1\nN: %u\ntrue_cells: %zu\n", grid.n,
                    grid.true_count());
    } else if (magic == "LATG") {
        ponq::LatentGrid latent = ponq::read_latent(bytes);
        double lo = 1e300, hi = -1e300;
        for (double v : latent.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        std::printf("magic: LATG\nversion: %d\nchannels: %u\nn: %u\nvalue_range: [%g, %g]\n",
                    latent.has_norm_stats ? 2 : 1, latent.channels, latent.n, lo, hi);
        if (latent.has_norm_stats)
            std::printf("norm_stats: min=%g max=%g\n", latent.norm_min, latent.norm_max);
    } else if (magic == "SDFG") {
        ponq::SdfGrid grid = ponq::read_sdf_grid(bytes);
        float lo = 1e30f, hi = -1e30f;
        std::size_t negative = 0;
        for (float v : grid.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            negative += v < 0.0f;
        }
        std::printf("magic: SDFG\nversion: 1\nresolution: %u x %u x %u\nspacing: %g\n",
                    grid.res[0], grid.res[1], grid.res[2], grid.spacing);
        std::printf("value_range: [%g, %g]\ninside_nodes: %zu\n", double(lo), double(hi),
                    negative);
    } else {
        throw ponq::format_error("unknown magic \"" + magic + "\"");
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PoNQ mesh representation pipeline"};
    app.require_subcommand(1);
    app.set_config("--config");

    EncodeArgs encode_args;
    auto* encode = app.add_subcommand("encode", "Encode an OBJ mesh into a PONQ grid");
    encode->fallthrough();
    encode->add_option("input", encode_args.input, "input OBJ")->required();
    encode->add_option("--out", encode_args.out, "output PONQ file")->required();
    encode->add_option("--n", encode_args.n, "grid resolution")->check(CLI::Range(2u, 1024u));
    encode->add_option("--k", encode_args.k, "max samples per cell")->check(CLI::Range(1u, 64u));
    encode->add_option("--samples", encode_args.samples, "surface sample count");
    encode->add_option("--seed", encode_args.seed, "run seed");
    encode->add_option("--min-cell-samples", encode_args.min_cell_samples,
                       "degenerate-fit threshold");
    encode->add_option("--tau", encode_args.tau, "QEM eigenvalue cutoff ratio");

    ExtractArgs extract_args;
    auto* extract = app.add_subcommand("extract", "Extract a watertight OBJ from a PONQ grid");
    extract->fallthrough();
    extract->add_option("input", extract_args.input, "input PONQ")->required();
    extract->add_option("--out", extract_args.out, "output OBJ")->required();
    extract->add_option("--mask", extract_args.mask, "OCCG mask to apply first");

    std::string dec_input, dec_out;
    std::uint32_t dec_resolution = 16;
    auto* decimate = app.add_subcommand("decimate", "Vertex-clustering decimation");
    decimate->fallthrough();
    decimate->add_option("input", dec_input, "input OBJ")->required();
    decimate->add_option("--out", dec_out, "output OBJ")->required();
    decimate->add_option("--resolution", dec_resolution, "clustering grid resolution")
        ->check(CLI::Range(1u, 4096u));

    std::string occ_input, occ_out;
    std::uint32_t occ_n = 64;
    auto* occupancy = app.add_subcommand("occupancy", "Ground-truth crust occupancy grid");
    occupancy->fallthrough();
    occupancy->add_option("input", occ_input, "input OBJ")->required();
    occupancy->add_option("--out", occ_out, "output OCCG file")->required();
    occupancy->add_option("--n", occ_n, "grid resolution")->check(CLI::Range(2u, 1024u));

    DiffuseArgs diffuse_args;
    auto* diffuse = app.add_subcommand("diffuse-demo", "Ancestral sampling over a latent library");
    diffuse->fallthrough();
    diffuse->add_option("--library", diffuse_args.library, "directory of .latg/.occg files")
        ->required();
    diffuse->add_option("--out", diffuse_args.out, "output LATG file")->required();
    diffuse->add_option("--steps", diffuse_args.steps, "diffusion steps");
    diffuse->add_option("--seed", diffuse_args.seed, "run seed");

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval-gen", "Generation metrics between OBJ directories");
    eval->fallthrough();
    eval->add_option("gen_dir", eval_args.gen_dir, "generated meshes")->required();
    eval->add_option("ref_dir", eval_args.ref_dir, "reference meshes")->required();
    eval->add_option("--out", eval_args.out_json, "output JSON report")->required();
    eval->add_option("--seed", eval_args.seed, "run seed");
    eval->add_option("--points", eval_args.points, "sample points per mesh");
    eval->add_option("--jsd-res", eval_args.jsd_res, "JSD histogram resolution");

    std::string check_input;
    auto* check = app.add_subcommand("check", "Audit an OBJ mesh");
    check->fallthrough();
    check->add_option("input", check_input, "input OBJ")->required();

    std::string info_input;
    auto* info = app.add_subcommand("info", "Describe any pipeline file");
    info->fallthrough();
    info->add_option("input", info_input, "PONQ/OCCG/LATG/SDFG file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (encode->parsed()) return cmd_encode(encode_args);
        if (extract->parsed()) return cmd_extract(extract_args);
        if (decimate->parsed()) return cmd_decimate(dec_input, dec_out, dec_resolution);
        if (occupancy->parsed()) return cmd_occupancy(occ_input, occ_out, occ_n);
        if (diffuse->parsed()) return cmd_diffuse_demo(diffuse_args);
        if (eval->parsed()) return cmd_eval_gen(eval_args);
        if (check->parsed()) return cmd_check(check_input);
        if (info->parsed()) return cmd_info(info_input);
    } catch (const ponq::extraction_error& e) {
        std::cerr << "extraction error: " << e.what() << "\n";
        return kExitExtraction;
    } catch (const ponq::format_error& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const ponq::parse_error& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitIo;
    } catch (const ponq::io_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const ponq::geometry_error& e) {
        std::cerr << "geometry error: " << e.what() << "\n";
        return kExitGeometry;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitOk;
}
