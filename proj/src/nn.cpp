#include "ebdiff/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace ebdiff {

long long Denoiser::n_params() const {
    long long n = 0;
    for (const auto& l : layers) n += static_cast<long long>(l.weights.size()) + static_cast<long long>(l.bias.size());
    return n;
}

GradBuffer GradBuffer::zeros_like(const Denoiser& net) {
    GradBuffer g;
    g.dw.reserve(net.layers.size());
    g.db.reserve(net.layers.size());
    for (const auto& l : net.layers) {
        g.dw.emplace_back(l.weights.rows, l.weights.cols, 0.0);
        g.db.emplace_back(l.bias.size(), 0.0);
    }
    return g;
}

void GradBuffer::set_zero() {
    for (auto& m : dw) m.fill(0.0);
    for (auto& b : db) std::fill(b.begin(), b.end(), 0.0);
}

void GradBuffer::add(const GradBuffer& other) {
    if (dw.size() != other.dw.size()) throw std::invalid_argument("GradBuffer::add: shape mismatch");
    for (size_t l = 0; l < dw.size(); ++l) {
        if (!dw[l].same_shape(other.dw[l]) || db[l].size() != other.db[l].size())
            throw std::invalid_argument("GradBuffer::add: shape mismatch");
        for (size_t i = 0; i < dw[l].data.size(); ++i) dw[l].data[i] += other.dw[l].data[i];
        for (size_t i = 0; i < db[l].size(); ++i) db[l][i] += other.db[l][i];
    }
}

bool GradBuffer::same_shape(const Denoiser& net) const {
    if (dw.size() != net.layers.size()) return false;
    for (size_t l = 0; l < dw.size(); ++l) {
        if (!dw[l].same_shape(net.layers[l].weights)) return false;
        if (db[l].size() != net.layers[l].bias.size()) return false;
    }
    return true;
}

AdamState AdamState::init(const Denoiser& net, double learning_rate) {
    AdamState st;
    st.m = GradBuffer::zeros_like(net);
    st.v = GradBuffer::zeros_like(net);
    st.learning_rate = learning_rate;
    return st;
}

std::vector<double> time_embedding(double t, int dim) {
    if (dim <= 0 || dim % 2 != 0)
        throw std::invalid_argument("time_embedding: dim must be positive and even");
    std::vector<double> e(static_cast<size_t>(dim));
    for (int k = 0; 2 * k < dim; ++k) {
        double freq = std::pow(10000.0, static_cast<double>(2 * k) / dim);
        double arg = t / freq;
        e[2 * k] = std::sin(arg);
        e[2 * k + 1] = std::cos(arg);
    }
    return e;
}

Denoiser init_denoiser(int input_dim, int time_embed_dim, const std::vector<int>& hidden_dims,
                       Rng& rng) {
    if (input_dim < 1) throw std::invalid_argument("init_denoiser: input_dim must be >= 1");
    if (time_embed_dim <= 0 || time_embed_dim % 2 != 0)
        throw std::invalid_argument("init_denoiser: time_embed_dim must be positive and even");
    if (hidden_dims.empty()) throw std::invalid_argument("init_denoiser: need at least one hidden layer");
    for (int h : hidden_dims)
        if (h < 1) throw std::invalid_argument("init_denoiser: hidden width must be >= 1");

    Denoiser net;
    net.input_dim = input_dim;
    net.time_embed_dim = time_embed_dim;
    net.hidden_dims = hidden_dims;

    std::vector<int> dims;
    dims.push_back(input_dim + time_embed_dim);
    for (int h : hidden_dims) dims.push_back(h);
    dims.push_back(input_dim);

    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        DenseLayer layer;
        int in = dims[l];
        int out = dims[l + 1];
        layer.weights = Matrix(out, in);
        layer.bias.assign(static_cast<size_t>(out), 0.0);
        layer.activation = (l + 2 == dims.size()) ? Activation::identity : Activation::silu;
        double bound = std::sqrt(6.0 / (in + out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& w : layer.weights.data) w = dist(rng);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

namespace {

// Forward pass keeping pre-activations and activations for backprop.
// acts[0] is the embedded input, acts[l+1] the output of layer l.
struct ForwardTrace {
    std::vector<Matrix> acts;
    std::vector<Matrix> preacts;
};

Matrix embed_input(const Denoiser& net, const Matrix& x, const std::vector<int>& t) {
    if (x.cols != net.input_dim) throw std::invalid_argument("forward: input width mismatch");
    if (static_cast<int>(t.size()) != x.rows)
        throw std::invalid_argument("forward: one timestep per batch row required");
    int in0 = net.input_dim + net.time_embed_dim;
    Matrix a0(x.rows, in0);
    for (int b = 0; b < x.rows; ++b) {
        double* dst = a0.row(b);
        const double* src = x.row(b);
        for (int j = 0; j < net.input_dim; ++j) dst[j] = src[j];
        auto emb = time_embedding(static_cast<double>(t[b]), net.time_embed_dim);
        for (int j = 0; j < net.time_embed_dim; ++j) dst[net.input_dim + j] = emb[j];
    }
    return a0;
}

// y[b][o] = sum_i x[b][i] * W[o][i] + bias[o]
Matrix linear(const DenseLayer& layer, const Matrix& x) {
    if (x.cols != layer.in_dim()) throw std::invalid_argument("forward: layer shape mismatch");
    Matrix y(x.rows, layer.out_dim());
    for (int b = 0; b < x.rows; ++b) {
        const double* xr = x.row(b);
        double* yr = y.row(b);
        for (int o = 0; o < layer.out_dim(); ++o) {
            const double* wr = layer.weights.row(o);
            double acc = layer.bias[static_cast<size_t>(o)];
            for (int i = 0; i < layer.in_dim(); ++i) acc += xr[i] * wr[i];
            yr[o] = acc;
        }
    }
    return y;
}

void apply_activation(Matrix& z, Activation act) {
    if (act == Activation::identity) return;
    for (double& v : z.data) v = silu(v);
}

ForwardTrace run_forward(const Denoiser& net, const Matrix& x, const std::vector<int>& t,
                         bool keep_trace) {
    ForwardTrace tr;
    Matrix a = embed_input(net, x, t);
    if (keep_trace) tr.acts.push_back(a);
    for (const auto& layer : net.layers) {
        Matrix z = linear(layer, a);
        if (keep_trace) tr.preacts.push_back(z);
        apply_activation(z, layer.activation);
        a = std::move(z);
        if (keep_trace) tr.acts.push_back(a);
    }
    if (!keep_trace) tr.acts.push_back(std::move(a));
    return tr;
}

}  // namespace

Matrix forward(const Denoiser& net, const Matrix& x, const std::vector<int>& t) {
    ForwardTrace tr = run_forward(net, x, t, false);
    return std::move(tr.acts.back());
}

double loss_and_gradients(const Denoiser& net, const Matrix& x_t, const std::vector<int>& t,
                          const Matrix& eps_target, GradBuffer& grads) {
    if (eps_target.rows != x_t.rows || eps_target.cols != net.input_dim)
        throw std::invalid_argument("loss_and_gradients: target shape mismatch");
    if (!grads.same_shape(net)) grads = GradBuffer::zeros_like(net);
    grads.set_zero();

    ForwardTrace tr = run_forward(net, x_t, t, true);
    const Matrix& pred = tr.acts.back();
    int batch = x_t.rows;

    double loss = 0.0;
    Matrix delta(batch, net.input_dim);  // dL/d(prediction)
    for (int b = 0; b < batch; ++b) {
        const double* p = pred.row(b);
        const double* e = eps_target.row(b);
        double* d = delta.row(b);
        for (int j = 0; j < net.input_dim; ++j) {
            double diff = p[j] - e[j];
            loss += diff * diff;
            d[j] = 2.0 * diff / batch;
        }
    }
    loss /= batch;
    if (!std::isfinite(loss)) throw std::runtime_error("loss_and_gradients: non-finite loss");

    // Walk layers back to front. delta holds dL/d(activation of layer l).
    for (int l = static_cast<int>(net.layers.size()) - 1; l >= 0; --l) {
        const DenseLayer& layer = net.layers[static_cast<size_t>(l)];
        const Matrix& z = tr.preacts[static_cast<size_t>(l)];
        const Matrix& a_prev = tr.acts[static_cast<size_t>(l)];

        if (layer.activation == Activation::silu)
            for (size_t i = 0; i < delta.data.size(); ++i)
                delta.data[i] *= silu_grad(z.data[i]);

        Matrix& dw = grads.dw[static_cast<size_t>(l)];
        std::vector<double>& db = grads.db[static_cast<size_t>(l)];
        for (int b = 0; b < batch; ++b) {
            const double* dr = delta.row(b);
            const double* ar = a_prev.row(b);
            for (int o = 0; o < layer.out_dim(); ++o) {
                double d = dr[o];
                if (d == 0.0) continue;
                double* dwr = dw.row(o);
                for (int i = 0; i < layer.in_dim(); ++i) dwr[i] += d * ar[i];
                db[static_cast<size_t>(o)] += d;
            }
        }

        if (l > 0) {
            Matrix prev_delta(batch, layer.in_dim());
            for (int b = 0; b < batch; ++b) {
                const double* dr = delta.row(b);
                double* pr = prev_delta.row(b);
                for (int i = 0; i < layer.in_dim(); ++i) pr[i] = 0.0;
                for (int o = 0; o < layer.out_dim(); ++o) {
                    double d = dr[o];
                    if (d == 0.0) continue;
                    const double* wr = layer.weights.row(o);
                    for (int i = 0; i < layer.in_dim(); ++i) pr[i] += d * wr[i];
                }
            }
            delta = std::move(prev_delta);
        }
    }
    return loss;
}

double loss_only(const Denoiser& net, const Matrix& x_t, const std::vector<int>& t,
                 const Matrix& eps_target) {
    Matrix pred = forward(net, x_t, t);
    double loss = 0.0;
    for (int b = 0; b < x_t.rows; ++b) {
        const double* p = pred.row(b);
        const double* e = eps_target.row(b);
        for (int j = 0; j < pred.cols; ++j) {
            double diff = p[j] - e[j];
            loss += diff * diff;
        }
    }
    loss /= x_t.rows;
    if (!std::isfinite(loss)) throw std::runtime_error("loss_only: non-finite loss");
    return loss;
}

void adam_step(Denoiser& net, const GradBuffer& grads, AdamState& state) {
    if (!grads.same_shape(net) || !state.m.same_shape(net) || !state.v.same_shape(net))
        throw std::invalid_argument("adam_step: shape mismatch");
    state.step += 1;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    auto update = [&](double& param, double g, double& m, double& v) {
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g * g;
        double mhat = m / bc1;
        double vhat = v / bc2;
        param -= state.learning_rate * mhat / (std::sqrt(vhat) + state.eps);
    };
    for (size_t l = 0; l < net.layers.size(); ++l) {
        DenseLayer& layer = net.layers[l];
        const Matrix& gw = grads.dw[l];
        for (size_t i = 0; i < layer.weights.data.size(); ++i)
            update(layer.weights.data[i], gw.data[i], state.m.dw[l].data[i], state.v.dw[l].data[i]);
        for (size_t i = 0; i < layer.bias.size(); ++i)
            update(layer.bias[i], grads.db[l][i], state.m.db[l][i], state.v.db[l][i]);
    }
}

}  // namespace ebdiff
