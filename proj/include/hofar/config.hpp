#pragma once

#include <cstdint>
#include <string>

#include "hofar/schedule.hpp"

// Run configuration. Defaults are the toy training setup; files use plain
// `key = value` lines with `#` comments.

namespace hofar {

struct TrainConfig {
    int K = 3;          // pyramid scales
    int a = 2;          // pyramid base
    int n = 8;          // root resolution
    int c = 3;          // latent channels
    int width = 32;     // transformer stream width
    int m = 2;          // attention layers
    int head_depth = 1;  // flow-matching blocks per head
    ScheduleKind schedule = ScheduleKind::vp;
    double a_vp = 19.9;
    double b_vp = 0.1;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.01;
    int steps = 2000;
    int batch = 1;
    std::uint64_t seed = 1;
    int num_classes = 8;
    double cfg_dropout = 0.1;  // probability of training on the null embedding
};

// Throws on unknown keys, malformed values, or invariant violations
// (lr > 0, n divisible by a^(K-1), steps >= 0, ...).
TrainConfig parse_config_text(const std::string& text);
TrainConfig load_config_file(const std::string& path);
void validate_config(const TrainConfig& cfg);

// Canonical serialization: every field, fixed order, round-trip exact.
// Embedded in checkpoints as the config echo.
std::string config_to_text(const TrainConfig& cfg);

Schedule make_schedule(const TrainConfig& cfg);

}  // namespace hofar
