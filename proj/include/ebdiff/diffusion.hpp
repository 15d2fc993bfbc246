#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ebdiff/matrix.hpp"
#include "ebdiff/nn.hpp"
#include "ebdiff/rng.hpp"

namespace ebdiff {

// Variance-preserving schedule. Timesteps are 1-indexed 1..T internally;
// alpha/sigma extend to t = 0 with alpha_0 = 1, sigma_0 = 0 for the terminal
// sampling step. alpha_t^2 + sigma_t^2 = 1 for every t.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> betas;      // beta_t, index t-1
    std::vector<double> alpha_bar;  // prod_{s<=t} (1 - beta_s)
    std::vector<double> alpha;      // sqrt(alpha_bar)
    std::vector<double> sigma;      // sqrt(1 - alpha_bar)

    double beta_at(int t) const { return betas[static_cast<size_t>(t - 1)]; }
    double alpha_bar_at(int t) const { return alpha_bar[static_cast<size_t>(t - 1)]; }
    double alpha_at(int t) const { return t == 0 ? 1.0 : alpha[static_cast<size_t>(t - 1)]; }
    double sigma_at(int t) const { return t == 0 ? 0.0 : sigma[static_cast<size_t>(t - 1)]; }
};

struct SampleBatch {
    Matrix points;       // n x 2
    std::string source;  // dataset tag
    uint64_t seed = 0;
};

// Half-open range of internal (1-indexed) timesteps.
struct TimestepRange {
    int lo = 1;
    int hi = 2;
    int width() const { return hi - lo; }
};

NoiseSchedule build_schedule(int T, double beta_min, double beta_max);

// x_t = alpha_t * x0 + sigma_t * eps, rowwise.
Matrix forward_noise(const Matrix& x0, const std::vector<int>& t, const Matrix& eps,
                     const NoiseSchedule& sched);

// count timesteps drawn uniformly from [range.lo, range.hi).
std::vector<int> sample_timesteps(Rng& rng, TimestepRange range, int count);

// One denoising training step: draws a minibatch from data, timesteps from
// range and fresh Gaussian noise (all from rng, in that order), corrupts,
// backpropagates and applies the optimizer. Returns the loss before the
// update. When grad_acc is non-null the step's gradients are accumulated
// into it (used by the Taylor pruning criterion).
double train_step(Denoiser& net, AdamState& adam, const SampleBatch& data,
                  const NoiseSchedule& sched, Rng& rng, TimestepRange range, int batch_size,
                  GradBuffer* grad_acc = nullptr);

// Evaluation loss over a fixed corruption of data (no parameter update).
double eval_loss(const Denoiser& net, const SampleBatch& data, const NoiseSchedule& sched,
                 Rng& rng, TimestepRange range, int batch_size);

// The n_steps visited timesteps: evenly spaced from T down to 1 with both
// endpoints anchored; n_steps = T visits every timestep once, descending.
std::vector<int> ddim_timesteps(int T, int n_steps);

// Maps a visited internal timestep to the network evaluated there. Returning
// nullptr marks the timestep as uncovered and aborts the sampler.
using DdimRoute = std::function<const Denoiser*(int)>;

// Generic noise predictor for the sampler core (x is the current batch, t
// the visited timestep). The route-based overload wraps network evaluation
// in this; tests plug closed-form predictors in directly.
using DenoiseFn = std::function<Matrix(const Matrix&, int)>;

// Deterministic DDIM sampler: from x_T ~ N(0, I), at each visited t with
// predecessor s computes x0_hat = (x_t - sigma_t eps_hat) / alpha_t and
// x_s = alpha_s x0_hat + sigma_s eps_hat. Returns n samples of width dim.
Matrix ddim_sample_with(const DenoiseFn& denoise, const NoiseSchedule& sched, int n_steps,
                        int n, int dim, Rng& rng);

Matrix ddim_sample(const DdimRoute& route, const NoiseSchedule& sched, int n_steps, int n,
                   Rng& rng);

}  // namespace ebdiff
