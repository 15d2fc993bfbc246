#pragma once

#include <string>
#include <vector>

#include "ebdiff/nn.hpp"
#include "ebdiff/rng.hpp"

namespace ebdiff {

// Structural keep-mask over the hidden units of a Denoiser. Input and output
// layers are never masked. Canonical order for serialization and Hamming
// distances is layer-major, unit-minor.
struct ChannelMask {
    std::vector<std::vector<uint8_t>> keep;  // keep[layer][unit], 1 = kept

    int total_units() const;
    int kept_units() const;
    bool same_shape(const ChannelMask& o) const;
    static ChannelMask all_kept(const Denoiser& net);
};

enum class CriterionKind { magnitude, taylor, random };

std::string criterion_name(CriterionKind k);
CriterionKind criterion_from_name(const std::string& name);

struct CostReport {
    long long params = 0;
    long long macs = 0;  // multiply-accumulates per network evaluation per sample
};

// Per-hidden-unit importance scores, one vector per hidden layer.
//   magnitude: L2 norm over the unit's incoming weight row and its bias.
//   taylor:    |sum over the unit's incoming parameters of weight * accumulated gradient|.
//   random:    i.i.d. uniform draws from rng.
std::vector<std::vector<double>> score_channels(const Denoiser& net, CriterionKind kind,
                                                const GradBuffer* grad_acc = nullptr,
                                                Rng* rng = nullptr);

// Per layer, prunes the floor(rate * width) lowest-scoring units; ties are
// broken by pruning the lower unit index first; at least one unit survives.
ChannelMask extract_mask(const std::vector<std::vector<double>>& scores, double rate);

// Masked view of the network: pruned units have their incoming row, bias and
// outgoing columns zeroed, so they contribute exactly zero downstream and
// receive exactly zero gradient and optimizer movement.
Denoiser apply_mask(const Denoiser& net, const ChannelMask& mask);

// Physically removes pruned rows/columns, yielding the smaller architecture.
Denoiser compact(const Denoiser& net, const ChannelMask& mask);

CostReport count_cost(const Denoiser& net);
// Shapes given as (in, out) per dense layer.
CostReport count_cost_shape(const std::vector<std::pair<int, int>>& layer_shapes);

// Fraction of keep-bits that differ, in [0, 1].
double hamming_distance(const ChannelMask& a, const ChannelMask& b);

// Mask file format: header "EBMASK v1 <n_layers>", then one line of 0/1
// characters per layer. Round-trips bit-exactly.
void save_mask(const ChannelMask& mask, const std::string& path);
ChannelMask load_mask(const std::string& path);

}  // namespace ebdiff
