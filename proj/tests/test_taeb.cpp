#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ebdiff/datasets.hpp"
#include "ebdiff/taeb.hpp"

using namespace ebdiff;

namespace {

bool nets_equal(const Denoiser& a, const Denoiser& b) {
    if (!a.same_architecture(b)) return false;
    for (size_t l = 0; l < a.layers.size(); ++l) {
        if (a.layers[l].weights.data != b.layers[l].weights.data) return false;
        if (a.layers[l].bias != b.layers[l].bias) return false;
    }
    return true;
}

EbConfig quick_cfg() {
    EbConfig cfg;
    cfg.epsilon = 0.25;
    cfg.queue_len = 3;
    cfg.granularity = {Granularity::Kind::pseudo_epoch, 15};
    cfg.criterion = CriterionKind::magnitude;
    cfg.rate = 0.5;
    cfg.max_intervals = 40;
    return cfg;
}

}  // namespace

TEST_CASE("region plan builds the reference overlap bounds") {
    RegionPlan plan = build_region_plan(1000, {240, 440}, {0.3, 0.6, 0.8}, 0.02, {});
    REQUIRE(plan.regions.size() == 3);
    CHECK(plan.regions[0].core_lo == 0);
    CHECK(plan.regions[0].core_hi == 240);
    CHECK(plan.regions[1].core_lo == 240);
    CHECK(plan.regions[1].core_hi == 440);
    CHECK(plan.regions[2].core_lo == 440);
    CHECK(plan.regions[2].core_hi == 1000);

    CHECK(plan.regions[0].train_lo == 0);
    CHECK(plan.regions[0].train_hi == 260);
    CHECK(plan.regions[1].train_lo == 240);
    CHECK(plan.regions[1].train_hi == 460);
    CHECK(plan.regions[2].train_lo == 440);
    CHECK(plan.regions[2].train_hi == 1000);
}

TEST_CASE("zero overlap collapses train bounds onto the cores") {
    RegionPlan plan = build_region_plan(1000, {240, 440}, {0.3, 0.6, 0.8}, 0.0, {});
    for (const auto& r : plan.regions) {
        CHECK(r.train_lo == r.core_lo);
        CHECK(r.train_hi == r.core_hi);
    }
}

TEST_CASE("a single-region plan is the degenerate full range") {
    RegionPlan plan = build_region_plan(1000, {}, {0.5}, 0.02, {});
    REQUIRE(plan.regions.size() == 1);
    CHECK(plan.regions[0].core_lo == 0);
    CHECK(plan.regions[0].core_hi == 1000);
    CHECK(plan.regions[0].train_lo == 0);
    CHECK(plan.regions[0].train_hi == 1000);
    CHECK(plan.regions[0].train_range().lo == 1);
    CHECK(plan.regions[0].train_range().hi == 1001);
}

TEST_CASE("plan validation rejects malformed inputs") {
    CHECK_THROWS_AS(build_region_plan(1000, {440, 240}, {0.3, 0.6, 0.8}, 0.02, {}),
                    std::invalid_argument);
    CHECK_THROWS_AS(build_region_plan(1000, {240, 240}, {0.3, 0.6, 0.8}, 0.02, {}),
                    std::invalid_argument);
    CHECK_THROWS_AS(build_region_plan(1000, {240, 1000}, {0.3, 0.6, 0.8}, 0.02, {}),
                    std::invalid_argument);
    CHECK_THROWS_AS(build_region_plan(1000, {240}, {0.3, 0.6, 0.8}, 0.02, {}),
                    std::invalid_argument);
    CHECK_THROWS_AS(build_region_plan(1000, {240, 440}, {0.3, 0.6, 1.0}, 0.02, {}),
                    std::invalid_argument);
    CHECK_THROWS_AS(build_region_plan(1000, {240, 440}, {0.3, 0.6, 0.8}, 0.02, {100}),
                    std::invalid_argument);
}

TEST_CASE("cores always partition the timestep range") {
    for (auto boundaries : std::vector<std::vector<int>>{{}, {240, 440}, {100, 500, 900}}) {
        std::vector<double> rates(boundaries.size() + 1, 0.5);
        RegionPlan plan = build_region_plan(1000, boundaries, rates, 0.02, {});
        int total = 0, prev_hi = 0;
        for (const auto& r : plan.regions) {
            CHECK(r.core_lo == prev_hi);
            total += r.core_len();
            prev_hi = r.core_hi;
        }
        CHECK(total == 1000);
        CHECK(prev_hi == 1000);
        for (int t : {0, 100, 240, 439, 440, 999})
            CHECK_NOTHROW(plan.region_index_for(t));
        CHECK_THROWS_AS(plan.region_index_for(-1), std::out_of_range);
        CHECK_THROWS_AS(plan.region_index_for(1000), std::out_of_range);
    }
}

TEST_CASE("weighted average rate matches the core-weighted arithmetic") {
    RegionPlan p1 = build_region_plan(1000, {240, 440}, {0.3, 0.6, 0.8}, 0.02, {});
    CHECK(weighted_avg_rate(p1) == doctest::Approx(0.640).epsilon(1e-12));
    RegionPlan p2 = build_region_plan(1000, {240, 440}, {0.3, 0.4, 0.7}, 0.02, {});
    CHECK(weighted_avg_rate(p2) == doctest::Approx(0.544).epsilon(1e-12));
    RegionPlan p3 = build_region_plan(1000, {}, {0.37}, 0.0, {});
    CHECK(weighted_avg_rate(p3) == doctest::Approx(0.37).epsilon(1e-15));
}

TEST_CASE("splitting a region at the same rate leaves the average unchanged") {
    RegionPlan whole = build_region_plan(1000, {300}, {0.3, 0.7}, 0.0, {});
    RegionPlan split = build_region_plan(1000, {150, 300}, {0.3, 0.3, 0.7}, 0.0, {});
    CHECK(weighted_avg_rate(whole) == doctest::Approx(weighted_avg_rate(split)).epsilon(1e-15));
}

TEST_CASE("routing picks the region whose core contains the timestep") {
    RegionPlan plan = build_region_plan(1000, {240, 440}, {0.3, 0.6, 0.8}, 0.02, {0, 0, 0});
    EnsembleModel e;
    e.plan = plan;
    for (int i = 0; i < 3; ++i) {
        Rng rng(static_cast<uint64_t>(i) + 1);
        EnsembleRegion r;
        r.net = init_denoiser(2, 4, {4 + i}, rng);
        r.mask = ChannelMask::all_kept(r.net);
        e.regions.push_back(std::move(r));
    }
    CHECK(e.route(100).hidden_dims[0] == 4);   // t=100 lies in [0,240)
    CHECK(e.route(240).hidden_dims[0] == 5);   // boundary belongs to the upper core
    CHECK(e.route(439).hidden_dims[0] == 5);
    CHECK(e.route(440).hidden_dims[0] == 6);
    CHECK(e.route(999).hidden_dims[0] == 6);

    // The sampler adapter covers every internal timestep and nothing else.
    DdimRoute route = e.ddim_route();
    CHECK(route(1) != nullptr);
    CHECK(route(1000) != nullptr);
    CHECK(route(0) == nullptr);
    CHECK(route(1001) == nullptr);
}

TEST_CASE("one-region search equals a direct ticket search bitwise") {
    SampleBatch data = generate_dataset("gauss8", 512, 31);
    NoiseSchedule sched = build_schedule(200, 1e-4, 0.02);
    EbConfig cfg = quick_cfg();
    ModelSpec model{2, 8, {16, 16}};
    TrainOpts opts{16, 1e-3};
    const uint64_t global_seed = 99;

    RegionPlan plan = build_region_plan(200, {}, {0.5}, 0.02, {50});
    auto results = find_taeb_tickets(plan, model, data, sched, cfg, opts, global_seed);
    REQUIRE(results.size() == 1);
    REQUIRE(results[0].converged);

    // Same derived streams, called directly.
    uint64_t region_seed = derive_seed(global_seed, "region", 0);
    Rng init(derive_seed(region_seed, "init"));
    Rng search(derive_seed(region_seed, "search"));
    Denoiser net = init_denoiser(2, 8, {16, 16}, init);
    AdamState adam = AdamState::init(net, opts.learning_rate);
    EbSearchResult direct = find_eb_ticket(std::move(net), std::move(adam), data, sched, cfg,
                                           {1, 201}, opts, search);
    REQUIRE(direct.converged);
    CHECK(direct.ticket.found_at_interval == results[0].ticket.found_at_interval);
    CHECK(hamming_distance(direct.ticket.mask, results[0].ticket.mask) == 0.0);
    CHECK(nets_equal(direct.net, results[0].net));
}

TEST_CASE("concurrent and sequential region searches are bitwise identical") {
    SampleBatch data = generate_dataset("gauss8", 512, 32);
    NoiseSchedule sched = build_schedule(300, 1e-4, 0.02);
    EbConfig cfg = quick_cfg();
    ModelSpec model{2, 8, {16, 16}};
    TrainOpts opts{16, 1e-3};

    RegionPlan plan_a = build_region_plan(300, {100, 200}, {0.3, 0.5, 0.7}, 0.02, {20, 20, 20});
    RegionPlan plan_b = plan_a;
    auto par = find_taeb_tickets(plan_a, model, data, sched, cfg, opts, 7, true);
    auto seq = find_taeb_tickets(plan_b, model, data, sched, cfg, opts, 7, false);
    REQUIRE(par.size() == 3);
    REQUIRE(seq.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(par[i].converged == seq[i].converged);
        CHECK(par[i].ticket.found_at_interval == seq[i].ticket.found_at_interval);
        CHECK(hamming_distance(par[i].ticket.mask, seq[i].ticket.mask) == 0.0);
        CHECK(nets_equal(par[i].net, seq[i].net));
        CHECK(par[i].distances.d == seq[i].distances.d);
    }

    // Per-region training is equally scheduling-independent.
    auto tp = train_regions_parallel(plan_a, par, data, sched, opts, true);
    auto ts = train_regions_parallel(plan_b, seq, data, sched, opts, false);
    for (size_t i = 0; i < 3; ++i)
        CHECK(nets_equal(tp.ensemble.regions[i].net, ts.ensemble.regions[i].net));
}

TEST_CASE("zero budgets hand back the compacted tickets untouched") {
    SampleBatch data = generate_dataset("gauss8", 256, 33);
    NoiseSchedule sched = build_schedule(150, 1e-4, 0.02);
    EbConfig cfg = quick_cfg();
    ModelSpec model{2, 8, {12}};
    TrainOpts opts{16, 1e-3};

    RegionPlan plan = build_region_plan(150, {75}, {0.4, 0.6}, 0.02, {0, 0});
    auto found = find_taeb_tickets(plan, model, data, sched, cfg, opts, 5);
    require_all_converged(found);
    auto trained = train_regions_parallel(plan, found, data, sched, opts);
    CHECK(trained.total_wall_time >= 0.0);
    for (size_t i = 0; i < 2; ++i) {
        Denoiser expect = compact(found[i].net, found[i].ticket.mask);
        CHECK(nets_equal(trained.ensemble.regions[i].net, expect));
    }
}

TEST_CASE("non-convergence is reported with the region index") {
    SampleBatch data = generate_dataset("gauss8", 256, 34);
    NoiseSchedule sched = build_schedule(150, 1e-4, 0.02);
    EbConfig cfg = quick_cfg();
    cfg.epsilon = 0.0;  // unattainable
    cfg.max_intervals = 4;
    ModelSpec model{2, 8, {12}};
    RegionPlan plan = build_region_plan(150, {75}, {0.4, 0.6}, 0.02, {10, 10});
    auto found = find_taeb_tickets(plan, model, data, sched, cfg, {16, 1e-3}, 5);
    CHECK_FALSE(found[0].converged);
    try {
        require_all_converged(found);
        FAIL("expected non-convergence error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("region 0") != std::string::npos);
    }
}

TEST_CASE("parallel training beats the sequential sum and trains every region") {
    SampleBatch data = generate_dataset("gauss8", 1024, 35);
    NoiseSchedule sched = build_schedule(400, 1e-4, 0.02);
    EbConfig cfg = quick_cfg();
    ModelSpec model{2, 16, {32, 32}};
    TrainOpts opts{32, 1e-3};

    RegionPlan plan = build_region_plan(400, {200}, {0.5, 0.5}, 0.02, {1200, 1200});
    auto found = find_taeb_tickets(plan, model, data, sched, cfg, opts, 6);
    require_all_converged(found);

    auto par = train_regions_parallel(plan, found, data, sched, opts, true);
    double seq_sum = 0.0;
    {
        auto seq = train_regions_parallel(plan, found, data, sched, opts, false);
        for (double w : seq.wall_times) seq_sum += w;
        for (size_t i = 0; i < 2; ++i)
            CHECK(nets_equal(par.ensemble.regions[i].net, seq.ensemble.regions[i].net));
    }
    // Two equal-work regions on a >= 2-core host.
    CHECK(par.total_wall_time < 0.9 * seq_sum);

    // Training made each region strictly better than its untrained ticket on
    // a held-out region-restricted batch.
    for (size_t i = 0; i < 2; ++i) {
        Denoiser before = compact(found[i].net, found[i].ticket.mask);
        Rng r1(100 + i), r2(100 + i);
        TimestepRange range = plan.regions[i].train_range();
        double loss_before = eval_loss(before, data, sched, r1, range, 512);
        double loss_after = eval_loss(par.ensemble.regions[i].net, data, sched, r2, range, 512);
        CHECK(std::isfinite(loss_after));
        CHECK(loss_after < loss_before);
    }
}

TEST_CASE("ensemble sampling with one region equals single-model sampling") {
    SampleBatch data = generate_dataset("gauss8", 512, 36);
    NoiseSchedule sched = build_schedule(200, 1e-4, 0.02);
    EbConfig cfg = quick_cfg();
    ModelSpec model{2, 8, {16}};
    TrainOpts opts{16, 1e-3};

    RegionPlan plan = build_region_plan(200, {}, {0.5}, 0.02, {60});
    auto found = find_taeb_tickets(plan, model, data, sched, cfg, opts, 8);
    require_all_converged(found);
    auto trained = train_regions_parallel(plan, found, data, sched, opts);

    Rng r1(42), r2(42);
    Matrix via_ensemble = ddim_sample(trained.ensemble.ddim_route(), sched, 50, 30, r1);
    const Denoiser& net = trained.ensemble.regions[0].net;
    DdimRoute constant = [&net](int) { return &net; };
    Matrix via_single = ddim_sample(constant, sched, 50, 30, r2);
    REQUIRE(via_ensemble.data.size() == via_single.data.size());
    for (size_t i = 0; i < via_ensemble.data.size(); ++i)
        CHECK(via_ensemble.data[i] == via_single.data[i]);
}
