#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ebdiff/earlybird.hpp"

namespace ebdiff {

// Experiment configuration. Defaults reproduce the reference setup:
// epsilon 0.1 with a queue of 5, T = 1000, 100 DDIM steps, three regions
// split at 240/440 with rates 0.3/0.6/0.8 and 2% overlap. Parsing is strict:
// unknown keys anywhere in the document are rejected.
struct ExperimentConfig {
    struct Dataset {
        std::string name = "gauss8";
        int n_train = 8000;
        int n_eval = 2000;
        uint64_t seed = 1;
    } dataset;

    struct Model {
        std::vector<int> hidden_dims{128, 128, 128};
        int time_embed_dim = 32;
    } model;

    struct Schedule {
        int T = 1000;
        double beta_min = 1e-4;
        double beta_max = 0.02;
    } schedule;

    EbConfig eb;  // epsilon 0.1, queue 5, pseudo-epoch 1000, magnitude, rate 0.5

    struct Taeb {
        std::vector<int> boundaries{240, 440};
        std::vector<double> rates{0.3, 0.6, 0.8};
        double overlap_frac = 0.02;
        std::vector<long long> budgets{20000, 20000, 20000};
    } taeb;

    struct Training {
        int batch_size = 64;
        double learning_rate = 1e-3;
        long long iterations = 20000;
    } training;

    struct Sampling {
        int ddim_steps = 100;
        int n_samples = 2000;
    } sampling;

    uint64_t global_seed = 1;

    void validate() const;
    std::string to_json() const;              // canonical dump (sorted keys)
    uint64_t hash() const;                    // FNV-1a of the canonical dump
    static ExperimentConfig from_json(const std::string& text);
    static ExperimentConfig load(const std::string& path);
};

}  // namespace ebdiff
