#include "ebdiff/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ebdiff {

namespace {

constexpr char kMagic[4] = {'E', 'B', 'D', 'F'};
constexpr uint32_t kVersion = 1;

void wr_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void wr_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

void wr_f64(std::ostream& os, double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    wr_u64(os, bits);
}

uint32_t rd_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t rd_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

double rd_f64(std::istream& is) {
    uint64_t bits = rd_u64(is);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");

    f.write(kMagic, 4);
    wr_u32(f, kVersion);
    wr_u32(f, static_cast<uint32_t>(net.input_dim));
    wr_u32(f, static_cast<uint32_t>(net.time_embed_dim));
    wr_u32(f, static_cast<uint32_t>(net.hidden_dims.size()));
    for (int h : net.hidden_dims) wr_u32(f, static_cast<uint32_t>(h));

    f.put(mask.has_value() ? 1 : 0);
    if (mask.has_value()) {
        wr_u32(f, static_cast<uint32_t>(mask->keep.size()));
        for (const auto& layer : mask->keep) {
            wr_u32(f, static_cast<uint32_t>(layer.size()));
            for (uint8_t k : layer) f.put(k ? 1 : 0);
        }
    }

    wr_u64(f, config_hash);
    wr_u32(f, static_cast<uint32_t>(rng_state.size()));
    f.write(rng_state.data(), static_cast<std::streamsize>(rng_state.size()));

    wr_u64(f, static_cast<uint64_t>(net.n_params()));
    for (const auto& layer : net.layers) {
        for (double w : layer.weights.data) wr_f64(f, w);
        for (double b : layer.bias) wr_f64(f, b);
    }
    if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);

    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    uint32_t version = rd_u32(f);
    if (version != kVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

    Checkpoint ck;
    int input_dim = static_cast<int>(rd_u32(f));
    int time_embed_dim = static_cast<int>(rd_u32(f));
    uint32_t n_hidden = rd_u32(f);
    std::vector<int> hidden;
    for (uint32_t i = 0; i < n_hidden; ++i) hidden.push_back(static_cast<int>(rd_u32(f)));

    int has_mask = f.get();
    if (has_mask == 1) {
        ChannelMask m;
        uint32_t n_layers = rd_u32(f);
        for (uint32_t l = 0; l < n_layers; ++l) {
            uint32_t len = rd_u32(f);
            std::vector<uint8_t> keep(len);
            for (uint32_t u = 0; u < len; ++u) {
                int c = f.get();
                if (c != 0 && c != 1) throw std::runtime_error("checkpoint: bad mask byte");
                keep[u] = static_cast<uint8_t>(c);
            }
            m.keep.push_back(std::move(keep));
        }
        ck.mask = std::move(m);
    } else if (has_mask != 0) {
        throw std::runtime_error("checkpoint: bad mask flag");
    }

    ck.config_hash = rd_u64(f);
    uint32_t rng_len = rd_u32(f);
    ck.rng_state.resize(rng_len);
    f.read(ck.rng_state.data(), rng_len);
    if (!f) throw std::runtime_error("checkpoint: truncated file");

    // Rebuild the architecture, then overwrite every parameter from the payload.
    Rng scratch(0);
    ck.net = init_denoiser(input_dim, time_embed_dim, hidden, scratch);
    uint64_t n_params = rd_u64(f);
    if (n_params != static_cast<uint64_t>(ck.net.n_params()))
        throw std::runtime_error("checkpoint: parameter count does not match architecture");
    for (auto& layer : ck.net.layers) {
        for (double& w : layer.weights.data) w = rd_f64(f);
        for (double& b : layer.bias) b = rd_f64(f);
    }
    return ck;
}

Checkpoint Checkpoint::load_expecting(const std::string& path, const Denoiser& expected) {
    Checkpoint ck = load(path);
    if (!ck.net.same_architecture(expected)) {
        std::ostringstream msg;
        msg << "checkpoint: architecture mismatch in " << path << " (stored input_dim="
            << ck.net.input_dim << ", time_embed_dim=" << ck.net.time_embed_dim << ", hidden=[";
        for (size_t i = 0; i < ck.net.hidden_dims.size(); ++i)
            msg << (i ? "," : "") << ck.net.hidden_dims[i];
        msg << "])";
        throw std::runtime_error(msg.str());
    }
    return ck;
}

}  // namespace ebdiff
