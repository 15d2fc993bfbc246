#include "ebdiff/taeb.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace ebdiff {

int RegionPlan::region_index_for(int region_t) const {
    for (size_t i = 0; i < regions.size(); ++i)
        if (region_t >= regions[i].core_lo && region_t < regions[i].core_hi)
            return static_cast<int>(i);
    throw std::out_of_range("RegionPlan: timestep " + std::to_string(region_t) +
                            " outside [0, T)");
}

RegionPlan build_region_plan(int T, const std::vector<int>& core_boundaries,
                             const std::vector<double>& rates, double overlap_frac,
                             const std::vector<long long>& budgets) {
    if (T < 2) throw std::invalid_argument("build_region_plan: T must be >= 2");
    if (rates.size() != core_boundaries.size() + 1)
        throw std::invalid_argument("build_region_plan: need one rate per region");
    if (!budgets.empty() && budgets.size() != rates.size())
        throw std::invalid_argument("build_region_plan: need one budget per region");
    if (!(overlap_frac >= 0.0) || overlap_frac >= 1.0)
        throw std::invalid_argument("build_region_plan: overlap_frac must lie in [0, 1)");
    int prev = 0;
    for (int b : core_boundaries) {
        if (b <= prev || b >= T)
            throw std::invalid_argument("build_region_plan: boundaries must be strictly increasing within (0, T)");
        prev = b;
    }
    for (double r : rates)
        if (!(r >= 0.0) || !(r < 1.0))
            throw std::invalid_argument("build_region_plan: rates must lie in [0, 1)");

    int overlap = static_cast<int>(std::floor(overlap_frac * T));
    RegionPlan plan;
    plan.T = T;
    plan.overlap_frac = overlap_frac;

    size_t n = rates.size();
    for (size_t i = 0; i < n; ++i) {
        TimestepRegion r;
        r.core_lo = (i == 0) ? 0 : core_boundaries[i - 1];
        r.core_hi = (i + 1 == n) ? T : core_boundaries[i];
        r.train_lo = r.core_lo;
        r.train_hi = (i + 1 == n) ? T : std::min(r.core_hi + overlap, T);
        r.rate = rates[i];
        r.iteration_budget = budgets.empty() ? 0 : budgets[i];
        r.seed = i;
        plan.regions.push_back(r);
    }
    return plan;
}

double weighted_avg_rate(const RegionPlan& plan) {
    double acc = 0.0;
    for (const auto& r : plan.regions) acc += r.rate * r.core_len();
    return acc / plan.T;
}

namespace {

// One task per region, dispatched to a bounded pool when parallel (capping
// workers at the core count avoids oversubscribed trainers evicting each
// other's working sets). Each task owns all of its state, so results do not
// depend on which worker runs it. Any exception is re-thrown on the caller's
// thread tagged with the region index.
void run_region_tasks(size_t n_regions, bool parallel,
                      const std::function<void(size_t)>& task) {
    std::vector<std::exception_ptr> errors(n_regions);
    if (parallel && n_regions > 1) {
        size_t n_workers = std::min<size_t>(n_regions, std::max(1u, std::thread::hardware_concurrency()));
        std::atomic<size_t> next{0};
        auto worker = [&] {
            for (;;) {
                size_t i = next.fetch_add(1);
                if (i >= n_regions) return;
                try {
                    task(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        };
        std::vector<std::thread> threads;
        threads.reserve(n_workers);
        for (size_t w = 0; w < n_workers; ++w) threads.emplace_back(worker);
        for (auto& th : threads) th.join();
    } else {
        for (size_t i = 0; i < n_regions; ++i) {
            try {
                task(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    }
    for (size_t i = 0; i < n_regions; ++i) {
        if (!errors[i]) continue;
        try {
            std::rethrow_exception(errors[i]);
        } catch (const std::exception& e) {
            throw std::runtime_error("region " + std::to_string(i) + ": " + e.what());
        }
    }
}

}  // namespace

std::vector<EbSearchResult> find_taeb_tickets(RegionPlan& plan, const ModelSpec& model,
                                              const SampleBatch& data, const NoiseSchedule& sched,
                                              const EbConfig& eb_cfg, const TrainOpts& opts,
                                              uint64_t global_seed, bool parallel) {
    size_t n = plan.regions.size();
    if (n == 0) throw std::invalid_argument("find_taeb_tickets: empty plan");
    std::vector<EbSearchResult> results(n);

    for (size_t i = 0; i < n; ++i)
        plan.regions[i].seed = derive_seed(global_seed, "region", i);

    run_region_tasks(n, parallel, [&](size_t i) {
        const TimestepRegion& region = plan.regions[i];
        Rng init_rng(derive_seed(region.seed, "init"));
        Rng search_rng(derive_seed(region.seed, "search"));
        Denoiser net = init_denoiser(model.input_dim, model.time_embed_dim, model.hidden_dims,
                                     init_rng);
        AdamState adam = AdamState::init(net, opts.learning_rate);
        EbConfig cfg = eb_cfg;
        cfg.rate = region.rate;
        results[i] = find_eb_ticket(std::move(net), std::move(adam), data, sched, cfg,
                                    region.train_range(), opts, search_rng);
    });
    return results;
}

void require_all_converged(const std::vector<EbSearchResult>& results) {
    for (size_t i = 0; i < results.size(); ++i)
        if (!results[i].converged)
            throw std::runtime_error("region " + std::to_string(i) +
                                     ": no ticket converged within " +
                                     std::to_string(results[i].intervals_run) + " intervals");
}

const Denoiser& EnsembleModel::route(int region_t) const {
    return regions[static_cast<size_t>(plan.region_index_for(region_t))].net;
}

DdimRoute EnsembleModel::ddim_route() const {
    return [this](int internal_t) -> const Denoiser* {
        int region_t = internal_t - 1;
        if (region_t < 0 || region_t >= plan.T) return nullptr;
        return &route(region_t);
    };
}

RegionTrainResult train_regions_parallel(const RegionPlan& plan,
                                         const std::vector<EbSearchResult>& tickets,
                                         const SampleBatch& data, const NoiseSchedule& sched,
                                         const TrainOpts& opts, bool parallel) {
    size_t n = plan.regions.size();
    if (tickets.size() != n)
        throw std::invalid_argument("train_regions_parallel: one ticket per region required");

    RegionTrainResult out;
    out.ensemble.plan = plan;
    out.ensemble.regions.resize(n);
    out.wall_times.assign(n, 0.0);
    out.final_rngs.assign(n, Rng{});

    auto launch = std::chrono::steady_clock::now();
    run_region_tasks(n, parallel, [&](size_t i) {
        auto t0 = std::chrono::steady_clock::now();
        const TimestepRegion& region = plan.regions[i];
        const EbSearchResult& found = tickets[i];

        EnsembleRegion er;
        er.mask = found.ticket.mask;
        er.ticket = found.ticket;
        er.net = compact(found.net, found.ticket.mask);

        Rng train_rng(derive_seed(region.seed, "train"));
        AdamState adam = AdamState::init(er.net, opts.learning_rate);
        TimestepRange range = region.train_range();
        for (long long it = 0; it < region.iteration_budget; ++it)
            train_step(er.net, adam, data, sched, train_rng, range, opts.batch_size);

        out.ensemble.regions[i] = std::move(er);
        out.final_rngs[i] = train_rng;
        out.wall_times[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    });
    out.total_wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - launch).count();
    return out;
}

}  // namespace ebdiff
