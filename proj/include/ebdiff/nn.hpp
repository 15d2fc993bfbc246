#pragma once

#include <cstdint>
#include <vector>

#include "ebdiff/matrix.hpp"
#include "ebdiff/rng.hpp"

namespace ebdiff {

enum class Activation { silu, identity };

inline double silu(double x) {
    return x / (1.0 + std::exp(-x));
}

inline double silu_grad(double x) {
    double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

// One fully connected layer: y = act(W x + b), W is out x in row-major.
struct DenseLayer {
    Matrix weights;            // out x in
    std::vector<double> bias;  // out
    Activation activation = Activation::silu;

    int in_dim() const { return weights.cols; }
    int out_dim() const { return weights.rows; }
};

// Small dense noise-prediction network. The first layer consumes the data
// point concatenated with a sinusoidal embedding of the timestep; hidden
// layers use silu, the output layer is linear and maps back to input_dim.
struct Denoiser {
    int input_dim = 2;
    int time_embed_dim = 32;
    std::vector<int> hidden_dims{128, 128, 128};
    std::vector<DenseLayer> layers;

    int n_hidden_layers() const { return static_cast<int>(hidden_dims.size()); }
    long long n_params() const;
    bool same_architecture(const Denoiser& o) const {
        return input_dim == o.input_dim && time_embed_dim == o.time_embed_dim &&
               hidden_dims == o.hidden_dims;
    }
};

// Gradient (or moment) buffer shaped exactly like a Denoiser's parameters.
struct GradBuffer {
    std::vector<Matrix> dw;
    std::vector<std::vector<double>> db;

    static GradBuffer zeros_like(const Denoiser& net);
    void set_zero();
    void add(const GradBuffer& other);  // elementwise accumulate
    bool same_shape(const Denoiser& net) const;
};

struct AdamState {
    GradBuffer m;  // first moment
    GradBuffer v;  // second moment
    long long step = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState init(const Denoiser& net, double learning_rate);
};

// Sinusoidal position embedding: entry 2k = sin(t / 10000^(2k/dim)),
// entry 2k+1 = cos of the same argument. dim must be even.
std::vector<double> time_embedding(double t, int dim);

// Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases.
Denoiser init_denoiser(int input_dim, int time_embed_dim, const std::vector<int>& hidden_dims,
                       Rng& rng);

// Predicted noise for a batch: x is batch x input_dim, t one timestep per row.
Matrix forward(const Denoiser& net, const Matrix& x, const std::vector<int>& t);

// Mean over the batch of the squared L2 error between the prediction and
// eps_target, with exact backpropagated gradients accumulated into grads
// (grads is overwritten, not accumulated).
double loss_and_gradients(const Denoiser& net, const Matrix& x_t, const std::vector<int>& t,
                          const Matrix& eps_target, GradBuffer& grads);

// Loss only, no gradient work.
double loss_only(const Denoiser& net, const Matrix& x_t, const std::vector<int>& t,
                 const Matrix& eps_target);

// Bias-corrected adaptive-moment update applied in place.
void adam_step(Denoiser& net, const GradBuffer& grads, AdamState& state);

}  // namespace ebdiff
