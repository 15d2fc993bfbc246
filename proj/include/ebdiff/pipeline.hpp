#pragma once

#include <optional>
#include <string>

#include "ebdiff/checkpoint.hpp"
#include "ebdiff/config.hpp"
#include "ebdiff/datasets.hpp"
#include "ebdiff/metrics.hpp"

namespace ebdiff {

// Point-set CSV: header "x,y", one point per row, 9 significant digits.
void save_points_csv(const Matrix& pts, const std::string& path);
Matrix load_points_csv(const std::string& path);

struct RunOptions {
    std::string mode;  // dense | scratch | eb | taeb
    std::string out_dir;
    std::optional<std::string> baseline_dir;  // prior run used for the speedup ratio
    bool parallel = true;
};

struct RunResult {
    std::string run_dir;
    MetricReport metrics;
    SpeedupReport speedup;
    WeightedCost cost;
    double method_wall_time = 0.0;
};

// Thrown when a pipeline stage fails after the manifest (with the failing
// stage recorded) has been written.
struct PipelineError : std::runtime_error {
    std::string stage;
    PipelineError(std::string stage_name, const std::string& message)
        : std::runtime_error(message), stage(std::move(stage_name)) {}
};

// End-to-end experiment:
//   dense   — train the unpruned model.
//   scratch — train dense fully, extract the final mask, reinitialize the
//             surviving subnetwork randomly and retrain it.
//   eb      — single-ticket search over all timesteps, then train the
//             compacted ticket from its detection-time weights.
//   taeb    — per-region ticket search, parallel region training, ensemble
//             sampling routed by region cores.
// Emits checkpoints/, masks/, heatmaps/, samples/, reports/ plus
// manifest.json listing every artifact; fails by recording the stage in the
// manifest and throwing PipelineError.
RunResult run_pipeline(const ExperimentConfig& cfg, const RunOptions& opts);

// Method wall time recorded in a run's manifest (search + training for the
// ticket modes, plain training wall for dense/scratch).
double manifest_method_wall_time(const std::string& run_dir);

SpeedupReport measure_speedup_from_runs(const std::string& baseline_dir,
                                        const std::string& method_dir);

// Rebuilds the sampling-time model (single net or region ensemble) from a
// finished run directory.
EnsembleModel load_ensemble(const std::string& run_dir);

}  // namespace ebdiff
