#include "ebdiff/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace ebdiff {

int ChannelMask::total_units() const {
    int n = 0;
    for (const auto& layer : keep) n += static_cast<int>(layer.size());
    return n;
}

int ChannelMask::kept_units() const {
    int n = 0;
    for (const auto& layer : keep)
        for (uint8_t k : layer) n += (k != 0);
    return n;
}

bool ChannelMask::same_shape(const ChannelMask& o) const {
    if (keep.size() != o.keep.size()) return false;
    for (size_t i = 0; i < keep.size(); ++i)
        if (keep[i].size() != o.keep[i].size()) return false;
    return true;
}

ChannelMask ChannelMask::all_kept(const Denoiser& net) {
    ChannelMask m;
    for (int h : net.hidden_dims) m.keep.emplace_back(static_cast<size_t>(h), uint8_t{1});
    return m;
}

std::string criterion_name(CriterionKind k) {
    switch (k) {
        case CriterionKind::magnitude: return "magnitude";
        case CriterionKind::taylor: return "taylor";
        case CriterionKind::random: return "random";
    }
    throw std::logic_error("criterion_name: bad enum");
}

CriterionKind criterion_from_name(const std::string& name) {
    if (name == "magnitude") return CriterionKind::magnitude;
    if (name == "taylor") return CriterionKind::taylor;
    if (name == "random") return CriterionKind::random;
    throw std::invalid_argument("unknown pruning criterion: " + name);
}

std::vector<std::vector<double>> score_channels(const Denoiser& net, CriterionKind kind,
                                                const GradBuffer* grad_acc, Rng* rng) {
    if (kind == CriterionKind::taylor && grad_acc == nullptr)
        throw std::invalid_argument("score_channels: taylor criterion needs accumulated gradients");
    if (kind == CriterionKind::taylor && !grad_acc->same_shape(net))
        throw std::invalid_argument("score_channels: gradient accumulator shape mismatch");
    if (kind == CriterionKind::random && rng == nullptr)
        throw std::invalid_argument("score_channels: random criterion needs an rng");

    std::vector<std::vector<double>> scores;
    scores.reserve(static_cast<size_t>(net.n_hidden_layers()));
    for (int l = 0; l < net.n_hidden_layers(); ++l) {
        const DenseLayer& layer = net.layers[static_cast<size_t>(l)];
        std::vector<double> s(static_cast<size_t>(layer.out_dim()));
        for (int u = 0; u < layer.out_dim(); ++u) {
            switch (kind) {
                case CriterionKind::magnitude: {
                    const double* wr = layer.weights.row(u);
                    double acc = 0.0;
                    for (int i = 0; i < layer.in_dim(); ++i) acc += wr[i] * wr[i];
                    double b = layer.bias[static_cast<size_t>(u)];
                    s[static_cast<size_t>(u)] = std::sqrt(acc + b * b);
                    break;
                }
                case CriterionKind::taylor: {
                    const double* wr = layer.weights.row(u);
                    const double* gr = grad_acc->dw[static_cast<size_t>(l)].row(u);
                    double acc = 0.0;
                    for (int i = 0; i < layer.in_dim(); ++i) acc += wr[i] * gr[i];
                    acc += layer.bias[static_cast<size_t>(u)] *
                           grad_acc->db[static_cast<size_t>(l)][static_cast<size_t>(u)];
                    s[static_cast<size_t>(u)] = std::fabs(acc);
                    break;
                }
                case CriterionKind::random:
                    s[static_cast<size_t>(u)] = draw_uniform(*rng);
                    break;
            }
        }
        scores.push_back(std::move(s));
    }
    return scores;
}

ChannelMask extract_mask(const std::vector<std::vector<double>>& scores, double rate) {
    if (!(rate >= 0.0) || !(rate < 1.0))
        throw std::invalid_argument("extract_mask: rate must lie in [0, 1)");
    ChannelMask mask;
    for (const auto& layer_scores : scores) {
        int width = static_cast<int>(layer_scores.size());
        int n_prune = static_cast<int>(std::floor(rate * width));
        n_prune = std::min(n_prune, width - 1);  // keep at least one unit
        std::vector<int> order(static_cast<size_t>(width));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return layer_scores[static_cast<size_t>(a)] < layer_scores[static_cast<size_t>(b)];
        });
        std::vector<uint8_t> keep(static_cast<size_t>(width), uint8_t{1});
        for (int i = 0; i < n_prune; ++i) keep[static_cast<size_t>(order[static_cast<size_t>(i)])] = 0;
        mask.keep.push_back(std::move(keep));
    }
    return mask;
}

namespace {

void require_mask_matches(const Denoiser& net, const ChannelMask& mask, const char* what) {
    if (static_cast<int>(mask.keep.size()) != net.n_hidden_layers())
        throw std::invalid_argument(std::string(what) + ": mask layer count mismatch");
    for (int l = 0; l < net.n_hidden_layers(); ++l)
        if (static_cast<int>(mask.keep[static_cast<size_t>(l)].size()) !=
            net.hidden_dims[static_cast<size_t>(l)])
            throw std::invalid_argument(std::string(what) + ": mask width mismatch");
}

}  // namespace

Denoiser apply_mask(const Denoiser& net, const ChannelMask& mask) {
    require_mask_matches(net, mask, "apply_mask");
    Denoiser out = net;
    for (int l = 0; l < net.n_hidden_layers(); ++l) {
        const auto& keep = mask.keep[static_cast<size_t>(l)];
        DenseLayer& layer = out.layers[static_cast<size_t>(l)];
        DenseLayer& next = out.layers[static_cast<size_t>(l) + 1];
        for (int u = 0; u < layer.out_dim(); ++u) {
            if (keep[static_cast<size_t>(u)]) continue;
            double* wr = layer.weights.row(u);
            for (int i = 0; i < layer.in_dim(); ++i) wr[i] = 0.0;
            layer.bias[static_cast<size_t>(u)] = 0.0;
            for (int o = 0; o < next.out_dim(); ++o) next.weights(o, u) = 0.0;
        }
    }
    return out;
}

Denoiser compact(const Denoiser& net, const ChannelMask& mask) {
    require_mask_matches(net, mask, "compact");
    std::vector<std::vector<int>> kept_idx;
    for (const auto& keep : mask.keep) {
        std::vector<int> idx;
        for (int u = 0; u < static_cast<int>(keep.size()); ++u)
            if (keep[static_cast<size_t>(u)]) idx.push_back(u);
        if (idx.empty()) throw std::invalid_argument("compact: a layer lost all units");
        kept_idx.push_back(std::move(idx));
    }

    Denoiser out;
    out.input_dim = net.input_dim;
    out.time_embed_dim = net.time_embed_dim;
    out.hidden_dims.clear();
    for (const auto& idx : kept_idx) out.hidden_dims.push_back(static_cast<int>(idx.size()));

    int n_layers = static_cast<int>(net.layers.size());
    for (int l = 0; l < n_layers; ++l) {
        const DenseLayer& src = net.layers[static_cast<size_t>(l)];
        bool rows_masked = l < net.n_hidden_layers();
        bool cols_masked = l > 0;
        const std::vector<int>* row_idx = rows_masked ? &kept_idx[static_cast<size_t>(l)] : nullptr;
        const std::vector<int>* col_idx = cols_masked ? &kept_idx[static_cast<size_t>(l) - 1] : nullptr;
        int out_rows = rows_masked ? static_cast<int>(row_idx->size()) : src.out_dim();
        int out_cols = cols_masked ? static_cast<int>(col_idx->size()) : src.in_dim();

        DenseLayer dst;
        dst.activation = src.activation;
        dst.weights = Matrix(out_rows, out_cols);
        dst.bias.resize(static_cast<size_t>(out_rows));
        for (int r = 0; r < out_rows; ++r) {
            int sr = rows_masked ? (*row_idx)[static_cast<size_t>(r)] : r;
            dst.bias[static_cast<size_t>(r)] = src.bias[static_cast<size_t>(sr)];
            for (int c = 0; c < out_cols; ++c) {
                int sc = cols_masked ? (*col_idx)[static_cast<size_t>(c)] : c;
                dst.weights(r, c) = src.weights(sr, sc);
            }
        }
        out.layers.push_back(std::move(dst));
    }
    return out;
}

CostReport count_cost(const Denoiser& net) {
    std::vector<std::pair<int, int>> shapes;
    for (const auto& l : net.layers) shapes.emplace_back(l.in_dim(), l.out_dim());
    return count_cost_shape(shapes);
}

CostReport count_cost_shape(const std::vector<std::pair<int, int>>& layer_shapes) {
    CostReport r;
    for (auto [in, out] : layer_shapes) {
        if (in < 0 || out < 0) throw std::invalid_argument("count_cost: negative dimension");
        r.params += static_cast<long long>(in) * out + out;
        r.macs += static_cast<long long>(in) * out;
    }
    return r;
}

double hamming_distance(const ChannelMask& a, const ChannelMask& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("hamming_distance: mask shape mismatch");
    int total = a.total_units();
    if (total == 0) throw std::invalid_argument("hamming_distance: empty masks");
    int diff = 0;
    for (size_t l = 0; l < a.keep.size(); ++l)
        for (size_t u = 0; u < a.keep[l].size(); ++u)
            diff += ((a.keep[l][u] != 0) != (b.keep[l][u] != 0));
    return static_cast<double>(diff) / total;
}

void save_mask(const ChannelMask& mask, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_mask: cannot open " + path);
    f << "EBMASK v1 " << mask.keep.size() << "\n";
    for (const auto& layer : mask.keep) {
        for (uint8_t k : layer) f << (k ? '1' : '0');
        f << "\n";
    }
    if (!f) throw std::runtime_error("save_mask: write failed for " + path);
}

ChannelMask load_mask(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_mask: cannot open " + path);
    std::string magic, version;
    size_t n_layers = 0;
    if (!(f >> magic >> version >> n_layers) || magic != "EBMASK" || version != "v1")
        throw std::runtime_error("load_mask: bad header in " + path);
    ChannelMask mask;
    for (size_t l = 0; l < n_layers; ++l) {
        std::string line;
        if (!(f >> line)) throw std::runtime_error("load_mask: truncated mask file " + path);
        std::vector<uint8_t> keep;
        keep.reserve(line.size());
        for (char c : line) {
            if (c != '0' && c != '1')
                throw std::runtime_error("load_mask: invalid mask character in " + path);
            keep.push_back(c == '1' ? 1 : 0);
        }
        mask.keep.push_back(std::move(keep));
    }
    return mask;
}

}  // namespace ebdiff
