#include "ebdiff/diffusion.hpp"

#include <cmath>
#include <stdexcept>

namespace ebdiff {

NoiseSchedule build_schedule(int T, double beta_min, double beta_max) {
    if (T < 2) throw std::invalid_argument("build_schedule: T must be >= 2");
    if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0))
        throw std::invalid_argument("build_schedule: require 0 < beta_min <= beta_max < 1");

    NoiseSchedule s;
    s.T = T;
    s.betas.resize(static_cast<size_t>(T));
    s.alpha_bar.resize(static_cast<size_t>(T));
    s.alpha.resize(static_cast<size_t>(T));
    s.sigma.resize(static_cast<size_t>(T));

    double running = 1.0;
    for (int t = 1; t <= T; ++t) {
        double beta = beta_min + (beta_max - beta_min) * static_cast<double>(t - 1) / (T - 1);
        running *= 1.0 - beta;
        size_t i = static_cast<size_t>(t - 1);
        s.betas[i] = beta;
        s.alpha_bar[i] = running;
        s.alpha[i] = std::sqrt(running);
        s.sigma[i] = std::sqrt(1.0 - running);
    }
    for (size_t i = 1; i < s.alpha_bar.size(); ++i)
        if (!(s.alpha_bar[i] < s.alpha_bar[i - 1]))
            throw std::runtime_error("build_schedule: alpha_bar not strictly decreasing");
    return s;
}

Matrix forward_noise(const Matrix& x0, const std::vector<int>& t, const Matrix& eps,
                     const NoiseSchedule& sched) {
    if (!x0.same_shape(eps)) throw std::invalid_argument("forward_noise: eps shape mismatch");
    if (static_cast<int>(t.size()) != x0.rows)
        throw std::invalid_argument("forward_noise: one timestep per row required");
    Matrix xt(x0.rows, x0.cols);
    for (int b = 0; b < x0.rows; ++b) {
        int tb = t[static_cast<size_t>(b)];
        if (tb < 1 || tb > sched.T)
            throw std::out_of_range("forward_noise: timestep out of [1, T]");
        double a = sched.alpha_at(tb);
        double sg = sched.sigma_at(tb);
        const double* xr = x0.row(b);
        const double* er = eps.row(b);
        double* or_ = xt.row(b);
        for (int j = 0; j < x0.cols; ++j) or_[j] = a * xr[j] + sg * er[j];
    }
    return xt;
}

std::vector<int> sample_timesteps(Rng& rng, TimestepRange range, int count) {
    if (range.lo < 1 || range.hi <= range.lo)
        throw std::invalid_argument("sample_timesteps: empty or invalid range");
    std::uniform_int_distribution<int> dist(range.lo, range.hi - 1);
    std::vector<int> out(static_cast<size_t>(count));
    for (int& v : out) v = dist(rng);
    return out;
}

namespace {

Matrix draw_minibatch(const SampleBatch& data, Rng& rng, int batch_size) {
    if (data.points.rows < 1) throw std::invalid_argument("train_step: empty dataset");
    std::uniform_int_distribution<int> pick(0, data.points.rows - 1);
    Matrix mb(batch_size, data.points.cols);
    for (int b = 0; b < batch_size; ++b) {
        const double* src = data.points.row(pick(rng));
        double* dst = mb.row(b);
        for (int j = 0; j < data.points.cols; ++j) dst[j] = src[j];
    }
    return mb;
}

Matrix draw_noise(Rng& rng, int rows, int cols) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix eps(rows, cols);
    for (double& v : eps.data) v = gauss(rng);
    return eps;
}

}  // namespace

double train_step(Denoiser& net, AdamState& adam, const SampleBatch& data,
                  const NoiseSchedule& sched, Rng& rng, TimestepRange range, int batch_size,
                  GradBuffer* grad_acc) {
    if (range.lo < 1 || range.hi > sched.T + 1 || range.lo >= range.hi)
        throw std::invalid_argument("train_step: timestep range must satisfy 1 <= lo < hi <= T+1");
    if (batch_size < 1) throw std::invalid_argument("train_step: batch_size must be >= 1");

    Matrix x0 = draw_minibatch(data, rng, batch_size);
    std::vector<int> t = sample_timesteps(rng, range, batch_size);
    Matrix eps = draw_noise(rng, batch_size, x0.cols);
    Matrix xt = forward_noise(x0, t, eps, sched);

    static thread_local GradBuffer grads;
    double loss = loss_and_gradients(net, xt, t, eps, grads);
    if (grad_acc != nullptr) grad_acc->add(grads);
    adam_step(net, grads, adam);
    return loss;
}

double eval_loss(const Denoiser& net, const SampleBatch& data, const NoiseSchedule& sched,
                 Rng& rng, TimestepRange range, int batch_size) {
    Matrix x0 = draw_minibatch(data, rng, batch_size);
    std::vector<int> t = sample_timesteps(rng, range, batch_size);
    Matrix eps = draw_noise(rng, batch_size, x0.cols);
    Matrix xt = forward_noise(x0, t, eps, sched);
    return loss_only(net, xt, t, eps);
}

std::vector<int> ddim_timesteps(int T, int n_steps) {
    if (n_steps < 1 || n_steps > T)
        throw std::invalid_argument("ddim_timesteps: require 1 <= n_steps <= T");
    std::vector<int> ts(static_cast<size_t>(n_steps));
    if (n_steps == 1) {
        ts[0] = T;
        return ts;
    }
    for (int k = 0; k < n_steps; ++k)
        ts[static_cast<size_t>(k)] =
            T - static_cast<int>((static_cast<long long>(k) * (T - 1)) / (n_steps - 1));
    return ts;
}

Matrix ddim_sample_with(const DenoiseFn& denoise, const NoiseSchedule& sched, int n_steps,
                        int n, int dim, Rng& rng) {
    if (n < 1) throw std::invalid_argument("ddim_sample: need n >= 1 samples");
    std::vector<int> ts = ddim_timesteps(sched.T, n_steps);

    Matrix x = draw_noise(rng, n, dim);
    for (size_t k = 0; k < ts.size(); ++k) {
        int t = ts[k];
        int s = (k + 1 < ts.size()) ? ts[k + 1] : 0;
        Matrix eps_hat = denoise(x, t);
        if (!eps_hat.same_shape(x)) throw std::runtime_error("ddim_sample: predictor shape mismatch");

        double at = sched.alpha_at(t), st = sched.sigma_at(t);
        double as = sched.alpha_at(s), ss = sched.sigma_at(s);
        for (size_t i = 0; i < x.data.size(); ++i) {
            double x0_hat = (x.data[i] - st * eps_hat.data[i]) / at;
            x.data[i] = as * x0_hat + ss * eps_hat.data[i];
        }
    }
    return x;
}

Matrix ddim_sample(const DdimRoute& route, const NoiseSchedule& sched, int n_steps, int n,
                   Rng& rng) {
    std::vector<int> ts = ddim_timesteps(sched.T, n_steps);
    const Denoiser* first = route(ts[0]);
    if (first == nullptr)
        throw std::runtime_error("ddim_sample: route does not cover timestep " +
                                 std::to_string(ts[0]));
    int dim = first->input_dim;

    std::vector<int> t_col;
    DenoiseFn denoise = [&route, &t_col](const Matrix& x, int t) {
        const Denoiser* net = route(t);
        if (net == nullptr)
            throw std::runtime_error("ddim_sample: route does not cover timestep " +
                                     std::to_string(t));
        t_col.assign(static_cast<size_t>(x.rows), t);
        return forward(*net, x, t_col);
    };
    return ddim_sample_with(denoise, sched, n_steps, n, dim, rng);
}

}  // namespace ebdiff
