#pragma once

#include <cstdint>
#include <vector>

#include "ebdiff/earlybird.hpp"

namespace ebdiff {

// Timestep bounds are 0-based and half-open. Core bounds drive inference
// routing; train bounds add the overlap used only for drawing training
// timesteps. The trainer converts to 1-indexed schedule timesteps.
struct TimestepRegion {
    int core_lo = 0;
    int core_hi = 0;
    int train_lo = 0;
    int train_hi = 0;
    double rate = 0.0;
    long long iteration_budget = 0;
    uint64_t seed = 0;  // per-region stream root, derived from the global seed

    int core_len() const { return core_hi - core_lo; }
    TimestepRange train_range() const { return {train_lo + 1, train_hi + 1}; }
};

struct RegionPlan {
    std::vector<TimestepRegion> regions;
    int T = 0;
    double overlap_frac = 0.0;

    int region_index_for(int region_t) const;  // by core containment
};

// Cores are [0,b1), [b1,b2), ..., [bk,T). Each interior boundary gains an
// overlap zone of floor(overlap_frac * T) timesteps on its upper side: the
// region below the boundary trains into that zone while the region above
// keeps the boundary as its train_lo, so adjacent train ranges share exactly
// that zone. budgets may be empty (all zero) or one entry per region.
RegionPlan build_region_plan(int T, const std::vector<int>& core_boundaries,
                             const std::vector<double>& rates, double overlap_frac,
                             const std::vector<long long>& budgets);

// Core-length-weighted average pruning rate.
double weighted_avg_rate(const RegionPlan& plan);

struct ModelSpec {
    int input_dim = 2;
    int time_embed_dim = 32;
    std::vector<int> hidden_dims{128, 128, 128};
};

// Runs one EB ticket search per region, restricted to the region's train
// bounds at the region's rate. Each region gets an independently initialized
// dense network and its own derived random streams, so concurrent and
// sequential execution produce identical results. Non-convergence is left in
// the per-region results for the caller to act on.
std::vector<EbSearchResult> find_taeb_tickets(RegionPlan& plan, const ModelSpec& model,
                                              const SampleBatch& data, const NoiseSchedule& sched,
                                              const EbConfig& eb_cfg, const TrainOpts& opts,
                                              uint64_t global_seed, bool parallel = true);

// Throws if any region failed to converge, naming the region.
void require_all_converged(const std::vector<EbSearchResult>& results);

struct EnsembleRegion {
    Denoiser net;  // compacted subnetwork
    ChannelMask mask;
    TicketRecord ticket;
};

struct EnsembleModel {
    std::vector<EnsembleRegion> regions;
    RegionPlan plan;

    // Network owning 0-based timestep t (core containment).
    const Denoiser& route(int region_t) const;
    // Adapter for the sampler; internal timesteps are 1-indexed.
    DdimRoute ddim_route() const;
};

struct RegionTrainResult {
    EnsembleModel ensemble;
    std::vector<double> wall_times;  // per region, seconds
    double total_wall_time = 0.0;    // launch of first to completion of last
    std::vector<Rng> final_rngs;     // trainer stream state after the budget
};

// Compacts each region's ticket out of its detection-time dense weights and
// trains it for the region's iteration budget on train-bound timesteps.
// Trainers own all their state; regions run concurrently when parallel.
RegionTrainResult train_regions_parallel(const RegionPlan& plan,
                                         const std::vector<EbSearchResult>& tickets,
                                         const SampleBatch& data, const NoiseSchedule& sched,
                                         const TrainOpts& opts, bool parallel = true);

}  // namespace ebdiff
