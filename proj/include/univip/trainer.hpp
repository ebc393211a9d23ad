#pragma once

#include <string>
#include <vector>

#include "univip/config.hpp"

// Training orchestration. Everything a run produces lands under
// cfg.out_dir: config.ini (the resolved configuration), metrics.jsonl (one
// JSON object per optimization step, deterministic bytes for a given config
// and seed), checkpoint_epoch_NNN.uvip after every epoch and
// checkpoint_final.uvip at the end. Wall-clock progress goes to stderr only,
// so the metrics stream stays byte-comparable across runs.

namespace univip {

struct TrainResult {
    long steps_run = 0;
    long steps_per_epoch = 0;
    std::string metrics_path;
    std::string final_checkpoint;
    std::vector<std::string> epoch_checkpoints;
    double final_total_loss = 0.0; // batch mean at the last step
};

// Deterministic given (cfg, dataset): per-sample augmentation seeds derive
// from cfg.seed and the global sample index, so thread count cannot change
// results. Throws DataError for missing datasets, UsageError for impossible
// shapes (batch larger than the dataset), NumericError with the offending
// sample seed when a loss goes non-finite.
TrainResult train(const TrainConfig& cfg, bool quiet = false);

} // namespace univip
