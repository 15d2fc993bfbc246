#include "ebdiff/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ebdiff {

namespace fs = std::filesystem;
using nlohmann::json;

void save_points_csv(const Matrix& pts, const std::string& path) {
    if (pts.cols != 2) throw std::invalid_argument("save_points_csv: expected 2-D points");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_points_csv: cannot open " + path);
    f << "x,y\n";
    char buf[64];
    for (int i = 0; i < pts.rows; ++i) {
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g\n", pts(i, 0), pts(i, 1));
        f << buf;
    }
    if (!f) throw std::runtime_error("save_points_csv: write failed for " + path);
}

Matrix load_points_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_points_csv: cannot open " + path);
    std::string line;
    if (!std::getline(f, line) || (line != "x,y" && line != "x,y\r"))
        throw std::runtime_error("load_points_csv: missing x,y header in " + path);
    std::vector<double> vals;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error("load_points_csv: malformed row in " + path);
        vals.push_back(std::stod(line.substr(0, comma)));
        vals.push_back(std::stod(line.substr(comma + 1)));
    }
    Matrix pts(static_cast<int>(vals.size() / 2), 2);
    pts.data = std::move(vals);
    return pts;
}

namespace {

double now_seconds(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json plan_to_json(const RegionPlan& plan) {
    json regions = json::array();
    for (const auto& r : plan.regions)
        regions.push_back({{"core_lo", r.core_lo},
                           {"core_hi", r.core_hi},
                           {"train_lo", r.train_lo},
                           {"train_hi", r.train_hi},
                           {"rate", r.rate},
                           {"iteration_budget", r.iteration_budget},
                           {"seed", r.seed}});
    return json{{"T", plan.T}, {"overlap_frac", plan.overlap_frac}, {"regions", regions}};
}

RegionPlan plan_from_json(const json& j) {
    RegionPlan plan;
    plan.T = j.at("T").get<int>();
    plan.overlap_frac = j.at("overlap_frac").get<double>();
    for (const auto& rj : j.at("regions")) {
        TimestepRegion r;
        r.core_lo = rj.at("core_lo").get<int>();
        r.core_hi = rj.at("core_hi").get<int>();
        r.train_lo = rj.at("train_lo").get<int>();
        r.train_hi = rj.at("train_hi").get<int>();
        r.rate = rj.at("rate").get<double>();
        r.iteration_budget = rj.at("iteration_budget").get<long long>();
        r.seed = rj.at("seed").get<uint64_t>();
        plan.regions.push_back(r);
    }
    return plan;
}

std::string hash_hex(uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_json_file(const json& j, const fs::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    f << j.dump(2) << "\n";
    if (!f) throw std::runtime_error("write failed for " + path.string());
}

json read_json_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("invalid JSON in " + path.string() + ": " + e.what());
    }
    return j;
}

// Accumulates manifest content while stages run; the manifest is flushed on
// both success and failure so a broken run still documents what happened.
struct RunContext {
    const ExperimentConfig& cfg;
    const RunOptions& opts;
    fs::path dir;
    json stages = json::array();
    std::vector<std::string> artifacts;
    json timing = json::object();
    json plan_json;
    std::vector<std::string> region_checkpoints;

    RunContext(const ExperimentConfig& c, const RunOptions& o) : cfg(c), opts(o), dir(o.out_dir) {}

    void add_artifact(const std::string& rel) { artifacts.push_back(rel); }

    void write_manifest(const std::optional<std::pair<std::string, std::string>>& error) {
        json m;
        m["version"] = 1;
        m["mode"] = opts.mode;
        m["config_hash"] = hash_hex(cfg.hash());
        m["global_seed"] = cfg.global_seed;
        if (!plan_json.is_null()) m["plan"] = plan_json;
        if (!region_checkpoints.empty()) m["region_checkpoints"] = region_checkpoints;
        std::sort(artifacts.begin(), artifacts.end());
        m["artifacts"] = artifacts;
        m["stages"] = stages;
        m["timing"] = timing;
        if (error) m["error"] = {{"stage", error->first}, {"message", error->second}};
        write_json_file(m, dir / "manifest.json");
    }

    template <typename Fn>
    void stage(const std::string& name, Fn&& fn) {
        auto t0 = std::chrono::steady_clock::now();
        try {
            fn();
        } catch (const std::exception& e) {
            stages.push_back({{"name", name}, {"status", "failed"}, {"seconds", now_seconds(t0)}});
            write_manifest(std::make_pair(name, std::string(e.what())));
            throw PipelineError(name, e.what());
        }
        stages.push_back({{"name", name}, {"status", "ok"}, {"seconds", now_seconds(t0)}});
    }
};

double train_loop(Denoiser& net, AdamState& adam, const SampleBatch& data,
                  const NoiseSchedule& sched, Rng& rng, TimestepRange range, int batch_size,
                  long long iterations, GradBuffer* acc = nullptr, long long acc_from = -1) {
    auto t0 = std::chrono::steady_clock::now();
    for (long long it = 0; it < iterations; ++it) {
        bool accumulate = acc != nullptr && acc_from >= 0 && it >= acc_from;
        train_step(net, adam, data, sched, rng, range, batch_size, accumulate ? acc : nullptr);
    }
    return now_seconds(t0);
}

void save_region_checkpoint(RunContext& ctx, const std::string& rel, const Denoiser& net,
                            const std::optional<ChannelMask>& mask, const std::string& rng_state) {
    Checkpoint ck;
    ck.net = net;
    ck.mask = mask;
    ck.config_hash = ctx.cfg.hash();
    ck.rng_state = rng_state;
    ck.save((ctx.dir / rel).string());
    ctx.add_artifact(rel);
}

// Sampling, evaluation and report emission shared by every mode.
void finish_run(RunContext& ctx, const EnsembleModel& ensemble, const SampleBatch& eval_set,
                bool includes_search_overhead, double method_wall, RunResult& out) {
    const ExperimentConfig& cfg = ctx.cfg;
    Matrix generated;

    ctx.stage("sampling", [&] {
        NoiseSchedule sched = build_schedule(cfg.schedule.T, cfg.schedule.beta_min, cfg.schedule.beta_max);
        Rng rng = make_rng(cfg.global_seed, "sampling");
        generated = ddim_sample(ensemble.ddim_route(), sched, cfg.sampling.ddim_steps,
                                cfg.sampling.n_samples, rng);
        save_points_csv(generated, (ctx.dir / "samples/generated.csv").string());
        ctx.add_artifact("samples/generated.csv");
        save_points_csv(eval_set.points, (ctx.dir / "samples/reference.csv").string());
        ctx.add_artifact("samples/reference.csv");
    });

    ctx.stage("evaluation", [&] {
        Rng rng = make_rng(cfg.global_seed, "metrics");
        out.metrics.energy_distance = energy_distance(generated, eval_set.points);
        out.metrics.sliced_wasserstein = sliced_wasserstein(generated, eval_set.points, 100, rng);
        out.metrics.n_generated = generated.rows;
        out.metrics.n_reference = eval_set.points.rows;
        out.metrics.seed = cfg.global_seed;
        write_json_file(json{{"version", 1},
                             {"energy_distance", out.metrics.energy_distance},
                             {"sliced_wasserstein", out.metrics.sliced_wasserstein},
                             {"n_generated", out.metrics.n_generated},
                             {"n_reference", out.metrics.n_reference},
                             {"seed", out.metrics.seed}},
                        ctx.dir / "reports/metrics.json");
        ctx.add_artifact("reports/metrics.json");
    });

    ctx.stage("reports", [&] {
        out.cost = weighted_cost(ensemble);
        double baseline_wall = method_wall;
        if (ctx.opts.baseline_dir)
            baseline_wall = manifest_method_wall_time(*ctx.opts.baseline_dir);
        out.speedup = measure_speedup(baseline_wall, method_wall, includes_search_overhead);
        out.method_wall_time = method_wall;
        write_json_file(json{{"version", 1},
                             {"baseline_wall_time", out.speedup.baseline_wall_time},
                             {"method_wall_time", out.speedup.method_wall_time},
                             {"speedup", out.speedup.speedup},
                             {"includes_search_overhead", out.speedup.includes_search_overhead}},
                        ctx.dir / "reports/speedup.json");
        ctx.add_artifact("reports/speedup.json");
        write_json_file(json{{"version", 1},
                             {"energy_distance", out.metrics.energy_distance},
                             {"sliced_wasserstein", out.metrics.sliced_wasserstein},
                             {"speedup", out.speedup.speedup},
                             {"avg_macs", out.cost.macs},
                             {"avg_params", out.cost.params}},
                        ctx.dir / "reports/report.json");
        ctx.add_artifact("reports/report.json");
    });
    ctx.timing["method_wall_time"] = method_wall;
}

EnsembleModel single_net_ensemble(const Denoiser& net, const ChannelMask& mask,
                                  const RegionPlan& plan) {
    EnsembleModel e;
    e.plan = plan;
    EnsembleRegion r;
    r.net = net;
    r.mask = mask;
    r.ticket.mask = mask;
    r.ticket.rate = plan.regions.front().rate;
    e.regions.push_back(std::move(r));
    return e;
}

}  // namespace

RunResult run_pipeline(const ExperimentConfig& cfg, const RunOptions& opts) {
    cfg.validate();
    const std::string& mode = opts.mode;
    if (mode != "dense" && mode != "scratch" && mode != "eb" && mode != "taeb")
        throw std::invalid_argument("run_pipeline: unknown mode \"" + mode + "\"");

    RunContext ctx(cfg, opts);
    fs::create_directories(ctx.dir / "checkpoints");
    fs::create_directories(ctx.dir / "masks");
    fs::create_directories(ctx.dir / "heatmaps");
    fs::create_directories(ctx.dir / "samples");
    fs::create_directories(ctx.dir / "reports");
    {
        std::ofstream f(ctx.dir / "config.json", std::ios::binary);
        f << cfg.to_json() << "\n";
        if (!f) throw std::runtime_error("run_pipeline: cannot write config.json");
        ctx.add_artifact("config.json");
    }

    RunResult out;
    out.run_dir = ctx.dir.string();

    NoiseSchedule sched = build_schedule(cfg.schedule.T, cfg.schedule.beta_min, cfg.schedule.beta_max);
    ModelSpec model{2, cfg.model.time_embed_dim, cfg.model.hidden_dims};
    TrainOpts train_opts{cfg.training.batch_size, cfg.training.learning_rate};
    TimestepRange full_range{1, cfg.schedule.T + 1};

    SampleBatch train_set, eval_set;
    ctx.stage("dataset", [&] {
        train_set = generate_dataset(cfg.dataset.name, cfg.dataset.n_train, cfg.dataset.seed);
        eval_set = generate_dataset(cfg.dataset.name, cfg.dataset.n_eval,
                                    derive_seed(cfg.dataset.seed, "eval"));
    });

    if (mode == "dense" || mode == "scratch") {
        Denoiser net;
        AdamState adam;
        Rng train_rng = make_rng(cfg.global_seed, "dense_train");
        double dense_seconds = 0.0;
        GradBuffer acc;
        bool taylor = cfg.eb.criterion == CriterionKind::taylor;

        ctx.stage("dense_training", [&] {
            Rng init_rng = make_rng(cfg.global_seed, "dense_init");
            net = init_denoiser(model.input_dim, model.time_embed_dim, model.hidden_dims, init_rng);
            adam = AdamState::init(net, train_opts.learning_rate);
            acc = GradBuffer::zeros_like(net);
            long long acc_from = -1;
            if (mode == "scratch" && taylor) {
                long long window = cfg.eb.granularity.iters_per_interval(train_set.points.rows,
                                                                         train_opts.batch_size);
                acc_from = std::max<long long>(0, cfg.training.iterations - window);
            }
            dense_seconds = train_loop(net, adam, train_set, sched, train_rng, full_range,
                                       train_opts.batch_size, cfg.training.iterations,
                                       taylor ? &acc : nullptr, acc_from);
        });
        ctx.timing["train_seconds"] = dense_seconds;

        if (mode == "dense") {
            RegionPlan plan = build_region_plan(cfg.schedule.T, {}, {0.0}, 0.0,
                                                {cfg.training.iterations});
            ctx.plan_json = plan_to_json(plan);
            ctx.stage("checkpoints", [&] {
                save_region_checkpoint(ctx, "checkpoints/dense_final.ebdf", net, std::nullopt,
                                       rng_state_string(train_rng));
                ctx.region_checkpoints = {"checkpoints/dense_final.ebdf"};
            });
            EnsembleModel ensemble = single_net_ensemble(net, ChannelMask::all_kept(net), plan);
            finish_run(ctx, ensemble, eval_set, false, dense_seconds, out);
        } else {  // scratch
            RegionPlan plan = build_region_plan(cfg.schedule.T, {}, {cfg.eb.rate}, 0.0,
                                                {cfg.training.iterations});
            ctx.plan_json = plan_to_json(plan);
            ChannelMask mask;
            Denoiser pruned;
            Rng retrain_rng = make_rng(cfg.global_seed, "scratch_train");
            double retrain_seconds = 0.0;

            ctx.stage("mask_extraction", [&] {
                Rng score_rng = make_rng(cfg.global_seed, "scratch_score");
                auto scores = score_channels(net, cfg.eb.criterion, taylor ? &acc : nullptr, &score_rng);
                mask = extract_mask(scores, cfg.eb.rate);
                save_mask(mask, (ctx.dir / "masks/region_0.ebmask").string());
                ctx.add_artifact("masks/region_0.ebmask");
            });
            ctx.stage("scratch_retraining", [&] {
                // Keep only the connectivity: reinitialize the surviving
                // subnetwork with fresh random weights before retraining.
                Rng reinit_rng = make_rng(cfg.global_seed, "scratch_reinit");
                Denoiser shape = compact(net, mask);
                pruned = init_denoiser(shape.input_dim, shape.time_embed_dim, shape.hidden_dims,
                                       reinit_rng);
                AdamState retrain_adam = AdamState::init(pruned, train_opts.learning_rate);
                retrain_seconds = train_loop(pruned, retrain_adam, train_set, sched, retrain_rng,
                                             full_range, train_opts.batch_size,
                                             cfg.training.iterations);
            });
            ctx.timing["retrain_seconds"] = retrain_seconds;

            ctx.stage("checkpoints", [&] {
                save_region_checkpoint(ctx, "checkpoints/dense_full.ebdf", net, std::nullopt,
                                       rng_state_string(train_rng));
                save_region_checkpoint(ctx, "checkpoints/scratch_final.ebdf", pruned, mask,
                                       rng_state_string(retrain_rng));
                ctx.region_checkpoints = {"checkpoints/scratch_final.ebdf"};
            });
            EnsembleModel ensemble = single_net_ensemble(pruned, mask, plan);
            finish_run(ctx, ensemble, eval_set, false, dense_seconds + retrain_seconds, out);
        }
        ctx.write_manifest(std::nullopt);
        return out;
    }

    // eb and taeb share the ticket pipeline; eb is the single-region plan.
    RegionPlan plan;
    if (mode == "eb") {
        plan = build_region_plan(cfg.schedule.T, {}, {cfg.eb.rate}, cfg.taeb.overlap_frac,
                                 {cfg.training.iterations});
    } else {
        std::vector<long long> budgets = cfg.taeb.budgets;
        if (budgets.empty()) budgets.assign(cfg.taeb.rates.size(), cfg.training.iterations);
        plan = build_region_plan(cfg.schedule.T, cfg.taeb.boundaries, cfg.taeb.rates,
                                 cfg.taeb.overlap_frac, budgets);
    }

    std::vector<EbSearchResult> found;
    double search_phase_wall = 0.0;
    ctx.stage("ticket_search", [&] {
        auto t0 = std::chrono::steady_clock::now();
        found = find_taeb_tickets(plan, model, train_set, sched, cfg.eb, train_opts,
                                  cfg.global_seed, opts.parallel);
        search_phase_wall = now_seconds(t0);

        json search_seconds = json::array();
        json detected = json::array();
        for (size_t i = 0; i < found.size(); ++i) {
            std::string tag = "region_" + std::to_string(i);
            save_mask(found[i].ticket.mask, (ctx.dir / ("masks/" + tag + ".ebmask")).string());
            ctx.add_artifact("masks/" + tag + ".ebmask");
            export_distance_matrix(found[i].distances, (ctx.dir / ("heatmaps/" + tag)).string());
            ctx.add_artifact("heatmaps/" + tag + ".csv");
            ctx.add_artifact("heatmaps/" + tag + ".pgm");
            ctx.add_artifact("heatmaps/" + tag + ".meta");
            save_region_checkpoint(ctx, "checkpoints/" + tag + "_dense_at_detection.ebdf",
                                   found[i].net, found[i].ticket.mask,
                                   found[i].rng_state_at_detection);
            search_seconds.push_back(found[i].search_seconds);
            detected.push_back(found[i].converged ? json(found[i].ticket.found_at_interval)
                                                  : json(nullptr));
        }
        ctx.timing["search_seconds"] = search_seconds;
        ctx.timing["search_phase_wall"] = search_phase_wall;
        ctx.timing["detected_at"] = detected;
        ctx.plan_json = plan_to_json(plan);

        require_all_converged(found);
    });

    RegionTrainResult trained;
    ctx.stage("region_training", [&] {
        trained = train_regions_parallel(plan, found, train_set, sched, train_opts, opts.parallel);
        ctx.timing["train_wall_times"] = trained.wall_times;
        ctx.timing["train_total_wall"] = trained.total_wall_time;
    });

    ctx.stage("checkpoints", [&] {
        for (size_t i = 0; i < trained.ensemble.regions.size(); ++i) {
            std::string rel = "checkpoints/region_" + std::to_string(i) + "_final.ebdf";
            save_region_checkpoint(ctx, rel, trained.ensemble.regions[i].net,
                                   trained.ensemble.regions[i].mask,
                                   rng_state_string(trained.final_rngs[i]));
            ctx.region_checkpoints.push_back(rel);
        }
    });

    double max_search = 0.0, max_train = 0.0;
    for (size_t i = 0; i < found.size(); ++i) {
        max_search = std::max(max_search, found[i].search_seconds);
        max_train = std::max(max_train, trained.wall_times[i]);
    }
    finish_run(ctx, trained.ensemble, eval_set, true, max_search + max_train, out);
    ctx.write_manifest(std::nullopt);
    return out;
}

double manifest_method_wall_time(const std::string& run_dir) {
    json m = read_json_file(fs::path(run_dir) / "manifest.json");
    if (!m.contains("timing") || !m["timing"].contains("method_wall_time"))
        throw std::runtime_error("manifest in " + run_dir + " is missing timing data");
    double v = m["timing"]["method_wall_time"].get<double>();
    if (!(v > 0.0)) throw std::runtime_error("manifest in " + run_dir + " has invalid timing data");
    return v;
}

SpeedupReport measure_speedup_from_runs(const std::string& baseline_dir,
                                        const std::string& method_dir) {
    json m = read_json_file(fs::path(method_dir) / "manifest.json");
    bool with_search = m.contains("mode") && (m["mode"] == "eb" || m["mode"] == "taeb");
    return measure_speedup(manifest_method_wall_time(baseline_dir),
                           manifest_method_wall_time(method_dir), with_search);
}

EnsembleModel load_ensemble(const std::string& run_dir) {
    json m = read_json_file(fs::path(run_dir) / "manifest.json");
    if (!m.contains("plan") || !m.contains("region_checkpoints"))
        throw std::runtime_error("run " + run_dir + " has no sampleable model (plan/checkpoints missing)");
    EnsembleModel e;
    e.plan = plan_from_json(m["plan"]);
    for (const auto& rel : m["region_checkpoints"]) {
        Checkpoint ck = Checkpoint::load((fs::path(run_dir) / rel.get<std::string>()).string());
        EnsembleRegion r;
        r.mask = ck.mask ? *ck.mask : ChannelMask::all_kept(ck.net);
        r.net = std::move(ck.net);
        r.ticket.mask = r.mask;
        e.regions.push_back(std::move(r));
    }
    if (e.regions.size() != e.plan.regions.size())
        throw std::runtime_error("run " + run_dir + ": checkpoint count does not match plan");
    return e;
}

}  // namespace ebdiff
