#include "ebdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ebdiff {

namespace {

constexpr int kMaxEnergyPoints = 10000;

// Mean Euclidean distance over all ordered pairs of rows. The same loop
// structure is used for all three terms so identical inputs cancel exactly.
double mean_pairwise(const Matrix& X, const Matrix& Y) {
    double acc = 0.0;
    for (int i = 0; i < X.rows; ++i) {
        const double* xr = X.row(i);
        for (int j = 0; j < Y.rows; ++j) {
            const double* yr = Y.row(j);
            double sq = 0.0;
            for (int c = 0; c < X.cols; ++c) {
                double d = xr[c] - yr[c];
                sq += d * d;
            }
            acc += std::sqrt(sq);
        }
    }
    return acc / (static_cast<double>(X.rows) * static_cast<double>(Y.rows));
}

}  // namespace

double energy_distance(const Matrix& A, const Matrix& B) {
    if (A.rows < 1 || B.rows < 1) throw std::invalid_argument("energy_distance: empty point set");
    if (A.cols != B.cols) throw std::invalid_argument("energy_distance: dimension mismatch");
    if (A.rows > kMaxEnergyPoints || B.rows > kMaxEnergyPoints)
        throw std::invalid_argument("energy_distance: more than 10^4 points; refusing to subsample");
    return 2.0 * mean_pairwise(A, B) - mean_pairwise(A, A) - mean_pairwise(B, B);
}

double w2_1d(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || a.size() != b.size())
        throw std::invalid_argument("w2_1d: need equal-size non-empty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(a.size()));
}

double sliced_wasserstein(const Matrix& A, const Matrix& B, int n_projections, Rng& rng) {
    if (A.rows < 1 || B.rows < 1) throw std::invalid_argument("sliced_wasserstein: empty point set");
    if (A.cols != B.cols) throw std::invalid_argument("sliced_wasserstein: dimension mismatch");
    if (n_projections < 1) throw std::invalid_argument("sliced_wasserstein: n_projections must be >= 1");

    // Pad the smaller set by resampling it with replacement.
    const Matrix* pa = &A;
    const Matrix* pb = &B;
    Matrix padded;
    if (A.rows != B.rows) {
        const Matrix& small = A.rows < B.rows ? A : B;
        int target = std::max(A.rows, B.rows);
        padded = Matrix(target, small.cols);
        std::uniform_int_distribution<int> pick(0, small.rows - 1);
        for (int i = 0; i < target; ++i) {
            const double* src = small.row(i < small.rows ? i : pick(rng));
            double* dst = padded.row(i);
            for (int c = 0; c < small.cols; ++c) dst[c] = src[c];
        }
        (A.rows < B.rows ? pa : pb) = &padded;
    }

    int n = pa->rows;
    int d = pa->cols;
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> dir(static_cast<size_t>(d));
    std::vector<double> proj_a(static_cast<size_t>(n)), proj_b(static_cast<size_t>(n));
    double acc = 0.0;
    for (int p = 0; p < n_projections; ++p) {
        double norm = 0.0;
        do {
            norm = 0.0;
            for (double& v : dir) {
                v = gauss(rng);
                norm += v * v;
            }
        } while (norm == 0.0);
        norm = std::sqrt(norm);
        for (double& v : dir) v /= norm;

        for (int i = 0; i < n; ++i) {
            const double* ra = pa->row(i);
            const double* rb = pb->row(i);
            double sa = 0.0, sb = 0.0;
            for (int c = 0; c < d; ++c) {
                sa += ra[c] * dir[static_cast<size_t>(c)];
                sb += rb[c] * dir[static_cast<size_t>(c)];
            }
            proj_a[static_cast<size_t>(i)] = sa;
            proj_b[static_cast<size_t>(i)] = sb;
        }
        acc += w2_1d(proj_a, proj_b);
    }
    return acc / n_projections;
}

WeightedCost weighted_cost(const EnsembleModel& ensemble) {
    WeightedCost wc;
    const RegionPlan& plan = ensemble.plan;
    for (size_t i = 0; i < ensemble.regions.size(); ++i) {
        CostReport c = count_cost(ensemble.regions[i].net);
        double w = static_cast<double>(plan.regions[i].core_len()) / plan.T;
        wc.macs += static_cast<double>(c.macs) * w;
        wc.params += static_cast<double>(c.params) * w;
    }
    return wc;
}

SpeedupReport measure_speedup(double baseline_seconds, double method_seconds,
                              bool includes_search_overhead) {
    if (!(baseline_seconds > 0.0) || !(method_seconds > 0.0))
        throw std::invalid_argument("measure_speedup: missing timing data");
    SpeedupReport r;
    r.baseline_wall_time = baseline_seconds;
    r.method_wall_time = method_seconds;
    r.speedup = baseline_seconds / method_seconds;
    r.includes_search_overhead = includes_search_overhead;
    return r;
}

}  // namespace ebdiff
