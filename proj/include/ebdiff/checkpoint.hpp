#pragma once

#include <optional>
#include <string>

#include "ebdiff/nn.hpp"
#include "ebdiff/pruning.hpp"

namespace ebdiff {

// Binary model checkpoint. Layout (all integers little-endian):
//   magic "EBDF", u32 version,
//   architecture descriptor (input_dim, time_embed_dim, hidden widths),
//   optional channel mask, u64 config hash, RNG state (textual engine
//   state, length-prefixed), then the flat f64 parameter payload in layer
//   order (weights row-major, then bias).
// save -> load -> save round-trips byte-identically.
struct Checkpoint {
    Denoiser net;
    std::optional<ChannelMask> mask;
    uint64_t config_hash = 0;
    std::string rng_state;  // stream representation of the owning stage's engine

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

    // Loads and checks the architecture descriptor against expected; throws
    // with a descriptive message when they differ.
    static Checkpoint load_expecting(const std::string& path, const Denoiser& expected);
};

}  // namespace ebdiff
