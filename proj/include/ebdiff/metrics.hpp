#pragma once

#include "ebdiff/matrix.hpp"
#include "ebdiff/rng.hpp"
#include "ebdiff/taeb.hpp"

namespace ebdiff {

struct MetricReport {
    double energy_distance = 0.0;
    double sliced_wasserstein = 0.0;
    int n_generated = 0;
    int n_reference = 0;
    uint64_t seed = 0;
};

struct SpeedupReport {
    double baseline_wall_time = 0.0;
    double method_wall_time = 0.0;
    double speedup = 0.0;
    bool includes_search_overhead = false;
};

// 2 E||a-b|| - E||a-a'|| - E||b-b'|| over all ordered pairs, exact (no
// subsampling). Refuses point sets above 10^4 points rather than subsample.
double energy_distance(const Matrix& A, const Matrix& B);

// 1-D 2-Wasserstein distance between equal-size samples (sorted matching).
double w2_1d(std::vector<double> a, std::vector<double> b);

// Mean over random unit directions of the 1-D 2-Wasserstein distance of the
// projections. Unequal sizes are padded by resampling the smaller set.
double sliced_wasserstein(const Matrix& A, const Matrix& B, int n_projections, Rng& rng);

struct WeightedCost {
    double macs = 0.0;
    double params = 0.0;
};

// Core-length-weighted average cost of the ensemble's region networks.
WeightedCost weighted_cost(const EnsembleModel& ensemble);

// speedup = baseline / method. Throws when either timing is missing
// (non-positive), so absent measurements cannot silently become infinities.
SpeedupReport measure_speedup(double baseline_seconds, double method_seconds,
                              bool includes_search_overhead);

}  // namespace ebdiff
