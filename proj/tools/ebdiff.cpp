// Command-line front end for the EB-Diff-Train laboratory: dataset
// generation, full experiment runs, sampling from finished runs, two-sample
// evaluation, mask distance matrices and combined reports.
//
// Exit codes: 0 success, 1 usage/configuration error, 2 runtime failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ebdiff/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ebdiff;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

ExperimentConfig load_config_checked(const std::string& path) {
    if (!fs::exists(path)) throw UsageError("config file not found: " + path);
    try {
        return ExperimentConfig::load(path);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

int cmd_gen_data(const std::string& name, int n, uint64_t seed, const std::string& out,
                 bool json_out) {
    SampleBatch batch = generate_dataset(name, n, seed);
    save_points_csv(batch.points, out);
    if (json_out)
        std::cout << json{{"dataset", name}, {"n", n}, {"seed", seed}, {"path", out}}.dump() << "\n";
    return 0;
}

int cmd_run(const std::string& config_path, const std::string& mode, const std::string& out_dir,
            std::optional<uint64_t> seed_override, std::optional<std::string> baseline,
            bool sequential, bool json_out) {
    ExperimentConfig cfg = load_config_checked(config_path);
    if (seed_override) cfg.global_seed = *seed_override;
    RunOptions opts;
    opts.mode = mode;
    opts.out_dir = out_dir;
    opts.baseline_dir = baseline;
    opts.parallel = !sequential;
    RunResult res = run_pipeline(cfg, opts);
    if (json_out)
        std::cout << json{{"run_dir", res.run_dir},
                          {"energy_distance", res.metrics.energy_distance},
                          {"sliced_wasserstein", res.metrics.sliced_wasserstein},
                          {"speedup", res.speedup.speedup},
                          {"avg_macs", res.cost.macs},
                          {"avg_params", res.cost.params},
                          {"method_wall_time", res.method_wall_time}}
                         .dump()
                  << "\n";
    return 0;
}

int cmd_sample(const std::string& run_dir, int n, int steps, uint64_t seed,
               const std::string& out, bool json_out) {
    EnsembleModel ensemble = load_ensemble(run_dir);
    ExperimentConfig cfg = ExperimentConfig::load((fs::path(run_dir) / "config.json").string());
    NoiseSchedule sched = build_schedule(cfg.schedule.T, cfg.schedule.beta_min, cfg.schedule.beta_max);
    Rng rng = make_rng(seed, "sampling");
    Matrix pts = ddim_sample(ensemble.ddim_route(), sched, steps > 0 ? steps : cfg.sampling.ddim_steps,
                             n > 0 ? n : cfg.sampling.n_samples, rng);
    save_points_csv(pts, out);
    if (json_out) std::cout << json{{"path", out}, {"n", pts.rows}}.dump() << "\n";
    return 0;
}

int cmd_evaluate(const std::string& generated, const std::string& reference, int projections,
                 uint64_t seed, bool json_out) {
    Matrix a = load_points_csv(generated);
    Matrix b = load_points_csv(reference);
    Rng rng = make_rng(seed, "metrics");
    json out = {{"version", 1},
                {"energy_distance", energy_distance(a, b)},
                {"sliced_wasserstein", sliced_wasserstein(a, b, projections, rng)},
                {"n_generated", a.rows},
                {"n_reference", b.rows},
                {"seed", seed}};
    // Results always go to stdout; --json is accepted for symmetry.
    (void)json_out;
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_distances(const std::vector<std::string>& mask_paths, const std::string& out_base,
                  bool json_out) {
    std::vector<ChannelMask> masks;
    masks.reserve(mask_paths.size());
    for (const auto& p : mask_paths) masks.push_back(load_mask(p));
    DistanceMatrix m = DistanceMatrix::from_masks(masks, std::nullopt);
    export_distance_matrix(m, out_base);
    if (json_out)
        std::cout << json{{"n", m.n},
                          {"csv", out_base + ".csv"},
                          {"pgm", out_base + ".pgm"},
                          {"meta", out_base + ".meta"}}
                         .dump()
                  << "\n";
    return 0;
}

int cmd_report(const std::string& run_dir, std::optional<std::string> baseline, bool json_out) {
    fs::path dir(run_dir);
    json report;
    {
        std::ifstream f(dir / "reports/report.json");
        if (!f) throw std::runtime_error("report: no reports/report.json under " + run_dir);
        f >> report;
    }
    if (baseline) {
        SpeedupReport sp = measure_speedup_from_runs(*baseline, run_dir);
        report["speedup"] = sp.speedup;
        report["baseline_wall_time"] = sp.baseline_wall_time;
        report["method_wall_time"] = sp.method_wall_time;
        report["includes_search_overhead"] = sp.includes_search_overhead;
    }
    std::cout << report.dump(json_out ? -1 : 2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EB-Diff-Train laboratory: early-bird ticket discovery and "
                 "region-parallel training for toy diffusion models"};
    app.require_subcommand(1);
    app.fallthrough();  // lets --json appear after the subcommand
    bool json_out = false;
    app.add_flag("--json", json_out, "machine-readable JSON on stdout");

    auto* gen = app.add_subcommand("gen-data", "generate a 2-D toy dataset CSV");
    std::string gen_name = "gauss8", gen_out = "data.csv";
    int gen_n = 8000;
    uint64_t gen_seed = 1;
    gen->add_option("--name", gen_name, "gauss8|two_moons|swiss_roll|checkerboard");
    gen->add_option("--n", gen_n, "number of points");
    gen->add_option("--seed", gen_seed, "dataset seed");
    gen->add_option("--out", gen_out, "output CSV path")->required();

    auto* run = app.add_subcommand("run", "run a full experiment pipeline");
    std::string run_config, run_mode = "eb", run_out;
    std::string run_baseline;
    uint64_t run_seed = 0;
    bool run_seed_set = false, run_sequential = false;
    run->add_option("--config", run_config, "experiment config JSON")->required();
    run->add_option("--mode", run_mode, "dense|scratch|eb|taeb");
    run->add_option("--out", run_out, "run directory")->required();
    run->add_option("--seed", run_seed, "override global_seed");
    run->add_option("--baseline", run_baseline, "baseline run directory for the speedup ratio");
    run->add_flag("--sequential", run_sequential, "disable region-level parallelism");

    auto* sample = app.add_subcommand("sample", "draw samples from a finished run");
    std::string sample_run, sample_out = "samples.csv";
    int sample_n = 0, sample_steps = 0;
    uint64_t sample_seed = 1;
    sample->add_option("--run", sample_run, "run directory")->required();
    sample->add_option("--n", sample_n, "sample count (default: config value)");
    sample->add_option("--steps", sample_steps, "DDIM steps (default: config value)");
    sample->add_option("--seed", sample_seed, "sampling seed");
    sample->add_option("--out", sample_out, "output CSV path");

    auto* eval = app.add_subcommand("evaluate", "two-sample metrics between point CSVs");
    std::string eval_gen, eval_ref;
    int eval_proj = 100;
    uint64_t eval_seed = 1;
    eval->add_option("--generated", eval_gen, "generated point CSV")->required();
    eval->add_option("--reference", eval_ref, "reference point CSV")->required();
    eval->add_option("--projections", eval_proj, "sliced-Wasserstein projections");
    eval->add_option("--seed", eval_seed, "projection seed");

    auto* dist = app.add_subcommand("distances", "pairwise Hamming matrix from mask files");
    std::vector<std::string> dist_masks;
    std::string dist_out = "distances";
    dist->add_option("--masks", dist_masks, "mask files in interval order")->required()->expected(-1);
    dist->add_option("--out", dist_out, "output base path (.csv/.pgm/.meta added)");

    auto* report = app.add_subcommand("report", "combined report for a finished run");
    std::string report_run, report_baseline;
    report->add_option("--run", report_run, "run directory")->required();
    report->add_option("--baseline", report_baseline, "baseline run for the speedup ratio");

    try {
        app.parse(argc, argv);
        run_seed_set = run->count("--seed") > 0;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 1;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_name, gen_n, gen_seed, gen_out, json_out);
        if (run->parsed())
            return cmd_run(run_config, run_mode, run_out,
                           run_seed_set ? std::optional<uint64_t>(run_seed) : std::nullopt,
                           run_baseline.empty() ? std::nullopt : std::optional<std::string>(run_baseline),
                           run_sequential, json_out);
        if (sample->parsed())
            return cmd_sample(sample_run, sample_n, sample_steps, sample_seed, sample_out, json_out);
        if (eval->parsed()) return cmd_evaluate(eval_gen, eval_ref, eval_proj, eval_seed, json_out);
        if (dist->parsed()) return cmd_distances(dist_masks, dist_out, json_out);
        if (report->parsed())
            return cmd_report(report_run,
                              report_baseline.empty() ? std::nullopt
                                                      : std::optional<std::string>(report_baseline),
                              json_out);
        std::cerr << app.help() << "\n";
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
