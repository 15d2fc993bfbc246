#include "ebdiff/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ebdiff {

namespace {

using nlohmann::json;

void require_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (allowed.find(it.key()) == allowed.end())
            throw std::invalid_argument("config: unknown key \"" + it.key() + "\" in " + where);
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw std::invalid_argument(std::string("config: bad value for \"") + key + "\"");
    }
}

Granularity parse_granularity(const json& v) {
    Granularity g;
    if (v.is_string()) {
        std::string s = v.get<std::string>();
        if (s == "epoch") {
            g.kind = Granularity::Kind::epoch;
        } else if (s == "iteration") {
            g.kind = Granularity::Kind::iteration;
        } else {
            throw std::invalid_argument("config: granularity must be \"epoch\", \"iteration\" or {\"pseudo_epoch\": n}");
        }
        return g;
    }
    if (v.is_object()) {
        require_keys(v, "eb.granularity", {"pseudo_epoch"});
        if (!v.contains("pseudo_epoch"))
            throw std::invalid_argument("config: granularity object needs \"pseudo_epoch\"");
        g.kind = Granularity::Kind::pseudo_epoch;
        g.iters = v.at("pseudo_epoch").get<int>();
        return g;
    }
    throw std::invalid_argument("config: bad granularity value");
}

json granularity_to_json(const Granularity& g) {
    switch (g.kind) {
        case Granularity::Kind::epoch: return json("epoch");
        case Granularity::Kind::iteration: return json("iteration");
        case Granularity::Kind::pseudo_epoch: return json{{"pseudo_epoch", g.iters}};
    }
    throw std::logic_error("granularity_to_json: bad enum");
}

}  // namespace

void ExperimentConfig::validate() const {
    if (dataset.name != "gauss8" && dataset.name != "two_moons" && dataset.name != "swiss_roll" &&
        dataset.name != "checkerboard")
        throw std::invalid_argument("config: unknown dataset \"" + dataset.name + "\"");
    if (dataset.n_train < 1 || dataset.n_eval < 1)
        throw std::invalid_argument("config: dataset sizes must be >= 1");
    if (model.hidden_dims.empty()) throw std::invalid_argument("config: hidden_dims must be non-empty");
    for (int h : model.hidden_dims)
        if (h < 1) throw std::invalid_argument("config: hidden widths must be >= 1");
    if (model.time_embed_dim <= 0 || model.time_embed_dim % 2 != 0)
        throw std::invalid_argument("config: time_embed_dim must be positive and even");
    if (schedule.T < 2) throw std::invalid_argument("config: schedule.T must be >= 2");
    if (!(schedule.beta_min > 0.0) || !(schedule.beta_min <= schedule.beta_max) ||
        !(schedule.beta_max < 1.0))
        throw std::invalid_argument("config: require 0 < beta_min <= beta_max < 1");
    eb.validate();
    if (taeb.rates.size() != taeb.boundaries.size() + 1)
        throw std::invalid_argument("config: taeb needs one rate per region");
    if (!taeb.budgets.empty() && taeb.budgets.size() != taeb.rates.size())
        throw std::invalid_argument("config: taeb needs one budget per region");
    if (training.batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (!(training.learning_rate > 0.0)) throw std::invalid_argument("config: learning_rate must be > 0");
    if (training.iterations < 0) throw std::invalid_argument("config: iterations must be >= 0");
    if (sampling.ddim_steps < 1 || sampling.ddim_steps > schedule.T)
        throw std::invalid_argument("config: ddim_steps must lie in [1, T]");
    if (sampling.n_samples < 1) throw std::invalid_argument("config: n_samples must be >= 1");
}

std::string ExperimentConfig::to_json() const {
    json j;
    j["dataset"] = {{"name", dataset.name},
                    {"n_train", dataset.n_train},
                    {"n_eval", dataset.n_eval},
                    {"seed", dataset.seed}};
    j["model"] = {{"hidden_dims", model.hidden_dims}, {"time_embed_dim", model.time_embed_dim}};
    j["schedule"] = {{"T", schedule.T}, {"beta_min", schedule.beta_min}, {"beta_max", schedule.beta_max}};
    j["eb"] = {{"epsilon", eb.epsilon},
               {"queue_len", eb.queue_len},
               {"granularity", granularity_to_json(eb.granularity)},
               {"criterion", criterion_name(eb.criterion)},
               {"rate", eb.rate},
               {"max_intervals", eb.max_intervals}};
    j["taeb"] = {{"boundaries", taeb.boundaries},
                 {"rates", taeb.rates},
                 {"overlap_frac", taeb.overlap_frac},
                 {"budgets", taeb.budgets}};
    j["training"] = {{"batch_size", training.batch_size},
                     {"learning_rate", training.learning_rate},
                     {"iterations", training.iterations}};
    j["sampling"] = {{"ddim_steps", sampling.ddim_steps}, {"n_samples", sampling.n_samples}};
    j["global_seed"] = global_seed;
    return j.dump(2);  // nlohmann objects dump with sorted keys
}

uint64_t ExperimentConfig::hash() const {
    std::string text = to_json();
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : text) {
        h ^= static_cast<uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
    }
    require_keys(j, "config",
                 {"dataset", "model", "schedule", "eb", "taeb", "training", "sampling", "global_seed"});

    ExperimentConfig cfg;
    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        require_keys(d, "dataset", {"name", "n_train", "n_eval", "seed"});
        read(d, "name", cfg.dataset.name);
        read(d, "n_train", cfg.dataset.n_train);
        read(d, "n_eval", cfg.dataset.n_eval);
        read(d, "seed", cfg.dataset.seed);
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        require_keys(m, "model", {"hidden_dims", "time_embed_dim"});
        read(m, "hidden_dims", cfg.model.hidden_dims);
        read(m, "time_embed_dim", cfg.model.time_embed_dim);
    }
    if (j.contains("schedule")) {
        const json& s = j.at("schedule");
        require_keys(s, "schedule", {"T", "beta_min", "beta_max"});
        read(s, "T", cfg.schedule.T);
        read(s, "beta_min", cfg.schedule.beta_min);
        read(s, "beta_max", cfg.schedule.beta_max);
    }
    if (j.contains("eb")) {
        const json& e = j.at("eb");
        require_keys(e, "eb", {"epsilon", "queue_len", "granularity", "criterion", "rate", "max_intervals"});
        read(e, "epsilon", cfg.eb.epsilon);
        read(e, "queue_len", cfg.eb.queue_len);
        if (e.contains("granularity")) cfg.eb.granularity = parse_granularity(e.at("granularity"));
        if (e.contains("criterion")) cfg.eb.criterion = criterion_from_name(e.at("criterion").get<std::string>());
        read(e, "rate", cfg.eb.rate);
        read(e, "max_intervals", cfg.eb.max_intervals);
    }
    if (j.contains("taeb")) {
        const json& t = j.at("taeb");
        require_keys(t, "taeb", {"boundaries", "rates", "overlap_frac", "budgets"});
        read(t, "boundaries", cfg.taeb.boundaries);
        read(t, "rates", cfg.taeb.rates);
        read(t, "overlap_frac", cfg.taeb.overlap_frac);
        read(t, "budgets", cfg.taeb.budgets);
    }
    if (j.contains("training")) {
        const json& t = j.at("training");
        require_keys(t, "training", {"batch_size", "learning_rate", "iterations"});
        read(t, "batch_size", cfg.training.batch_size);
        read(t, "learning_rate", cfg.training.learning_rate);
        read(t, "iterations", cfg.training.iterations);
    }
    if (j.contains("sampling")) {
        const json& s = j.at("sampling");
        require_keys(s, "sampling", {"ddim_steps", "n_samples"});
        read(s, "ddim_steps", cfg.sampling.ddim_steps);
        read(s, "n_samples", cfg.sampling.n_samples);
    }
    read(j, "global_seed", cfg.global_seed);

    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return from_json(ss.str());
}

}  // namespace ebdiff
