#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "univip/losses.hpp"
#include "univip/model.hpp"
#include "univip/proposals.hpp"
#include "univip/sinkhorn.hpp"
#include "univip/synth.hpp"
#include "univip/views.hpp"

// Run configuration: a profile picks a coherent set of defaults ("desk" for
// minutes-scale CPU runs, "paper" for full-resolution geometry), an INI-style
// file overrides the profile, and command-line pairs override the file. The
// `profile` key is applied before everything else regardless of position.

namespace univip {

struct TrainConfig {
    std::string profile = "desk";

    // trainer
    std::string manifest;     // dataset manifest path (required by train)
    std::string out_dir = "runs/default";
    long epochs = 20;
    long warmup_epochs = 1;
    long batch_size = 32;
    double base_lr = 0.05;
    double weight_decay = 1e-4;
    double sgd_momentum = 0.9;
    double m0 = 0.99;         // target-momentum start, annealed to 1
    uint64_t seed = 0;
    int threads = 1;          // sample-construction pool
    LossSwitches switches;

    ModelDims dims;
    ViewParams views;
    ProposalParams proposals;
    SinkhornParams sinkhorn;
    SceneParams scene;        // gen-data geometry
    long scene_count = 2000;  // gen-data dataset size
};

// Baseline for a named profile ("desk" or "paper").
TrainConfig default_config(const std::string& profile);

// Applies one "section.key" = value assignment; throws UsageError on unknown
// keys or unparsable values. "views.k" also keeps the model fusion width in
// sync.
void apply_kv(TrainConfig& cfg, const std::string& key, const std::string& value);

// INI text: [section] headers, key = value lines, # or ; comments.
TrainConfig parse_config_text(const std::string& text,
                              const std::vector<std::pair<std::string, std::string>>& overrides = {});

// Reads the file (DataError if unreadable); empty path = profile defaults
// plus overrides only.
TrainConfig load_config(const std::string& path,
                        const std::vector<std::pair<std::string, std::string>>& overrides = {});

// Cross-field invariants; throws UsageError. Called by the loaders.
void validate_config(const TrainConfig& cfg);

// Full round-trippable dump in the file format, fixed key order.
std::string to_ini(const TrainConfig& cfg);

} // namespace univip
