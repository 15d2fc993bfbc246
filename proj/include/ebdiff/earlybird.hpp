#pragma once

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "ebdiff/diffusion.hpp"
#include "ebdiff/pruning.hpp"

namespace ebdiff {

// How many training iterations make up one mask-monitoring interval.
struct Granularity {
    enum class Kind { epoch, pseudo_epoch, iteration };
    Kind kind = Kind::pseudo_epoch;
    int iters = 1000;  // used by pseudo_epoch

    int iters_per_interval(int n_train, int batch_size) const {
        switch (kind) {
            case Kind::epoch: return (n_train + batch_size - 1) / batch_size;
            case Kind::pseudo_epoch: return iters;
            case Kind::iteration: return 1;
        }
        return 1;
    }
};

struct EbConfig {
    double epsilon = 0.1;  // convergence threshold on pairwise mask distance
    int queue_len = 5;
    Granularity granularity{Granularity::Kind::pseudo_epoch, 1000};
    CriterionKind criterion = CriterionKind::magnitude;
    double rate = 0.5;
    int max_intervals = 100;

    void validate() const;
};

// FIFO of recent masks, capacity fixed at construction, strict oldest-first
// eviction.
class MaskQueue {
public:
    explicit MaskQueue(int capacity);

    // Appends the mask (evicting the oldest when full). Returns true iff the
    // queue is at capacity and the maximum pairwise Hamming distance over all
    // queued masks is strictly below epsilon.
    bool push_and_check(const ChannelMask& mask, double epsilon);

    const std::deque<ChannelMask>& contents() const { return masks_; }
    int capacity() const { return capacity_; }

private:
    int capacity_;
    std::deque<ChannelMask> masks_;
};

struct TicketRecord {
    ChannelMask mask;
    int found_at_interval = 0;        // 1-indexed detection interval
    long long found_at_iteration = 0;
    CriterionKind criterion = CriterionKind::magnitude;
    double rate = 0.0;
    double search_wall_time = 0.0;  // seconds
};

// Symmetric zero-diagonal matrix of pairwise mask distances, one row per
// recorded interval. detected_at is the 1-indexed detection interval, or
// nullopt when the search never converged.
struct DistanceMatrix {
    int n = 0;
    std::vector<double> d;  // row-major n x n
    std::optional<int> detected_at;

    double at(int i, int j) const { return d[static_cast<size_t>(i) * n + j]; }
    static DistanceMatrix from_masks(const std::vector<ChannelMask>& masks,
                                     std::optional<int> detected_at);
};

struct TrainOpts {
    int batch_size = 64;
    double learning_rate = 1e-3;
};

// Full outcome of a ticket search. On convergence, net/adam hold the dense
// state snapshotted at detection (ticket training resumes from there); on
// non-convergence they hold the final state and ticket.mask is the last
// extracted mask. The per-interval masks are kept for replay experiments.
struct EbSearchResult {
    bool converged = false;
    TicketRecord ticket;
    DistanceMatrix distances;
    std::vector<ChannelMask> interval_masks;
    Denoiser net;
    AdamState adam;
    std::string rng_state_at_detection;  // search stream state at the snapshot
    int intervals_run = 0;
    double search_seconds = 0.0;
};

// Trains net on timesteps from t_range one interval at a time, extracting a
// mask after each interval and monitoring queue convergence. After detection
// the run continues for queue_len further intervals so the exported distance
// matrix shows the converged block; those extra intervals do not touch the
// returned snapshot or the recorded search time.
EbSearchResult find_eb_ticket(Denoiser net, AdamState adam, const SampleBatch& data,
                              const NoiseSchedule& sched, const EbConfig& cfg,
                              TimestepRange t_range, const TrainOpts& opts, Rng& rng);

// Writes <base>.csv (n x n, 6 decimal places), <base>.pgm (binary P5, one
// pixel per cell, 255*(1-d)) and <base>.meta ("detected_at=<interval>" or
// "detected_at=none"). Matrix invariants are asserted before writing.
void export_distance_matrix(const DistanceMatrix& m, const std::string& base_path);

// Parses a matrix back from the exported CSV.
std::vector<std::vector<double>> load_distance_csv(const std::string& path);

// Detection interval (1-indexed) that a fixed mask sequence would converge
// at for a given threshold, or nullopt. Used to replay recorded sequences
// under different epsilon values without retraining.
std::optional<int> replay_detection(const std::vector<ChannelMask>& masks, double epsilon,
                                    int queue_len);

}  // namespace ebdiff
