#include "ebdiff/earlybird.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ebdiff {

void EbConfig::validate() const {
    if (epsilon < 0.0) throw std::invalid_argument("EbConfig: epsilon must be >= 0");
    if (queue_len < 2) throw std::invalid_argument("EbConfig: queue_len must be >= 2");
    if (max_intervals < 1) throw std::invalid_argument("EbConfig: max_intervals must be >= 1");
    if (!(rate >= 0.0) || !(rate < 1.0)) throw std::invalid_argument("EbConfig: rate must lie in [0, 1)");
    if (granularity.kind == Granularity::Kind::pseudo_epoch && granularity.iters < 1)
        throw std::invalid_argument("EbConfig: pseudo-epoch length must be >= 1");
}

MaskQueue::MaskQueue(int capacity) : capacity_(capacity) {
    if (capacity < 2) throw std::invalid_argument("MaskQueue: capacity must be >= 2");
}

bool MaskQueue::push_and_check(const ChannelMask& mask, double epsilon) {
    if (!masks_.empty() && !masks_.front().same_shape(mask))
        throw std::invalid_argument("MaskQueue: mask shape mismatch");
    masks_.push_back(mask);
    if (static_cast<int>(masks_.size()) > capacity_) masks_.pop_front();
    if (static_cast<int>(masks_.size()) < capacity_) return false;
    double max_dist = 0.0;
    for (size_t i = 0; i < masks_.size(); ++i)
        for (size_t j = i + 1; j < masks_.size(); ++j)
            max_dist = std::max(max_dist, hamming_distance(masks_[i], masks_[j]));
    return max_dist < epsilon;
}

DistanceMatrix DistanceMatrix::from_masks(const std::vector<ChannelMask>& masks,
                                          std::optional<int> detected) {
    DistanceMatrix m;
    m.n = static_cast<int>(masks.size());
    m.detected_at = detected;
    m.d.assign(static_cast<size_t>(m.n) * m.n, 0.0);
    for (int i = 0; i < m.n; ++i)
        for (int j = i + 1; j < m.n; ++j) {
            double dist = hamming_distance(masks[static_cast<size_t>(i)], masks[static_cast<size_t>(j)]);
            m.d[static_cast<size_t>(i) * m.n + j] = dist;
            m.d[static_cast<size_t>(j) * m.n + i] = dist;
        }
    return m;
}

EbSearchResult find_eb_ticket(Denoiser net, AdamState adam, const SampleBatch& data,
                              const NoiseSchedule& sched, const EbConfig& cfg,
                              TimestepRange t_range, const TrainOpts& opts, Rng& rng) {
    cfg.validate();
    if (data.points.rows < 1) throw std::invalid_argument("find_eb_ticket: empty dataset");

    const int interval_len = cfg.granularity.iters_per_interval(data.points.rows, opts.batch_size);
    const bool taylor = cfg.criterion == CriterionKind::taylor;

    EbSearchResult res;
    MaskQueue queue(cfg.queue_len);
    GradBuffer acc = GradBuffer::zeros_like(net);

    auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&t0] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    auto run_interval = [&] {
        if (taylor) acc.set_zero();
        for (int i = 0; i < interval_len; ++i)
            train_step(net, adam, data, sched, rng, t_range, opts.batch_size,
                       taylor ? &acc : nullptr);
    };
    auto extract = [&] {
        auto scores = score_channels(net, cfg.criterion, taylor ? &acc : nullptr, &rng);
        return extract_mask(scores, cfg.rate);
    };

    for (int interval = 1; interval <= cfg.max_intervals; ++interval) {
        run_interval();
        ChannelMask mask = extract();
        res.interval_masks.push_back(mask);
        res.intervals_run = interval;
        if (queue.push_and_check(mask, cfg.epsilon)) {
            res.converged = true;
            res.ticket.mask = mask;
            res.ticket.found_at_interval = interval;
            res.ticket.found_at_iteration = static_cast<long long>(interval) * interval_len;
            res.ticket.criterion = cfg.criterion;
            res.ticket.rate = cfg.rate;
            res.ticket.search_wall_time = elapsed();
            res.net = net;
            res.adam = adam;
            res.rng_state_at_detection = rng_state_string(rng);
            break;
        }
    }

    if (res.converged) {
        // Extra intervals extend the heatmap past detection; the returned
        // snapshot stays at the detection point.
        for (int extra = 0; extra < cfg.queue_len; ++extra) {
            run_interval();
            res.interval_masks.push_back(extract());
        }
    } else {
        res.ticket.mask = res.interval_masks.empty() ? ChannelMask::all_kept(net)
                                                     : res.interval_masks.back();
        res.ticket.found_at_interval = res.intervals_run;
        res.ticket.found_at_iteration = static_cast<long long>(res.intervals_run) * interval_len;
        res.ticket.criterion = cfg.criterion;
        res.ticket.rate = cfg.rate;
        res.ticket.search_wall_time = elapsed();
        res.net = std::move(net);
        res.adam = std::move(adam);
        res.rng_state_at_detection = rng_state_string(rng);
    }
    res.search_seconds = res.ticket.search_wall_time;
    res.distances = DistanceMatrix::from_masks(
        res.interval_masks,
        res.converged ? std::optional<int>(res.ticket.found_at_interval) : std::nullopt);
    return res;
}

namespace {

void check_matrix_invariants(const DistanceMatrix& m) {
    if (m.n < 1) throw std::invalid_argument("export_distance_matrix: empty matrix");
    for (int i = 0; i < m.n; ++i) {
        if (m.at(i, i) != 0.0) throw std::runtime_error("distance matrix: nonzero diagonal");
        for (int j = 0; j < m.n; ++j) {
            double v = m.at(i, j);
            if (!(v >= 0.0 && v <= 1.0)) throw std::runtime_error("distance matrix: entry out of [0,1]");
            if (v != m.at(j, i)) throw std::runtime_error("distance matrix: not symmetric");
        }
    }
}

}  // namespace

void export_distance_matrix(const DistanceMatrix& m, const std::string& base_path) {
    check_matrix_invariants(m);

    {
        std::ofstream csv(base_path + ".csv", std::ios::binary);
        if (!csv) throw std::runtime_error("export_distance_matrix: cannot open " + base_path + ".csv");
        char buf[32];
        for (int i = 0; i < m.n; ++i) {
            for (int j = 0; j < m.n; ++j) {
                std::snprintf(buf, sizeof(buf), "%.6f", m.at(i, j));
                csv << buf << (j + 1 < m.n ? "," : "\n");
            }
        }
        if (!csv) throw std::runtime_error("export_distance_matrix: CSV write failed");
    }
    {
        std::ofstream pgm(base_path + ".pgm", std::ios::binary);
        if (!pgm) throw std::runtime_error("export_distance_matrix: cannot open " + base_path + ".pgm");
        pgm << "P5\n" << m.n << " " << m.n << "\n255\n";
        for (int i = 0; i < m.n; ++i)
            for (int j = 0; j < m.n; ++j) {
                auto px = static_cast<unsigned char>(std::lround(255.0 * (1.0 - m.at(i, j))));
                pgm.put(static_cast<char>(px));
            }
        if (!pgm) throw std::runtime_error("export_distance_matrix: PGM write failed");
    }
    {
        std::ofstream meta(base_path + ".meta", std::ios::binary);
        if (!meta) throw std::runtime_error("export_distance_matrix: cannot open " + base_path + ".meta");
        if (m.detected_at.has_value())
            meta << "detected_at=" << *m.detected_at << "\n";
        else
            meta << "detected_at=none\n";
    }
}

std::vector<std::vector<double>> load_distance_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_distance_csv: cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::optional<int> replay_detection(const std::vector<ChannelMask>& masks, double epsilon,
                                    int queue_len) {
    MaskQueue queue(queue_len);
    for (size_t i = 0; i < masks.size(); ++i)
        if (queue.push_and_check(masks[i], epsilon)) return static_cast<int>(i) + 1;
    return std::nullopt;
}

}  // namespace ebdiff
