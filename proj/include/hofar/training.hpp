#pragma once

#include <string>
#include <vector>

#include "hofar/model.hpp"

// Training stack: synthetic labeled data, decoupled-weight-decay Adam, and
// the per-step trajectory-matching loss over the scale pyramid. Every random
// draw goes through one Rng in a fixed order, so a seed pins the whole run.

namespace hofar {

// Noise-free class pattern: an isotropic Gaussian bump, amplitude 2 and
// sigma n/4, centered on a 3x3 grid indexed by class id (same on every
// channel). Distinct classes differ by more than 0.5 in max-norm.
Tensor synth_mean(int class_id, int n, int c);

// Mean pattern plus 0.1 * N(0,1) per element, clamped to [-3, 3].
// Consumes n*n*c normal draws in flat (row, col, channel) order.
Tensor synth_sample(Rng& rng, int class_id, int n, int c);

struct AdamState {
    long long t = 0;
    double eps = 1e-8;
    std::vector<std::vector<double>> m, v;  // parallel to the handle list
};

AdamState make_adam_state(const std::vector<ParamHandle>& params);

// Decoupled decay applied first (theta *= 1 - lr*wd), then the bias-corrected
// adaptive step. A zero gradient therefore decays the weight exactly.
void adamw_step(std::vector<ParamHandle>& params, AdamState& st, double lr,
                double beta1, double beta2, double weight_decay);

// Stochastic inputs for one batch item, drawn in the fixed order: class id,
// guidance-dropout uniform, sample noise, then per scale the endpoint noise
// and the time draw (clamped to <= 1 - 1e-4).
struct StepDraws {
    int class_id = 0;
    bool drop = false;            // train this item against the null embedding
    Tensor sample;                // synthetic image, n x n x c
    std::vector<Tensor> noise;    // per-scale endpoint noise
    std::vector<double> t;        // per-scale time draw
};

std::vector<StepDraws> draw_step_inputs(const TrainConfig& cfg, Rng& rng);

// Builds the loss graph for the drawn inputs and returns the batch-mean
// scalar node. Per scale: teacher-forced condition from the true pyramid,
// both heads evaluated at the noisy point, summed squared error against the
// first- and second-derivative targets. per_scale (optional) receives the
// batch-mean per-scale sums.
Tensor step_loss(Model& model, const Schedule& sched,
                 const std::vector<StepDraws>& items,
                 std::vector<double>* per_scale);

struct LossRecord {
    int step = 0;
    std::vector<double> per_scale;  // summed squared error per scale, batch mean
    double total = 0.0;             // exact sum of per_scale
};

// One optimization step: draw, forward, backward, Adam update. Gradients are
// zeroed at the start and left in place afterwards for inspection. A
// non-finite loss aborts with a diagnostic.
LossRecord train_step(Model& model, const Schedule& sched,
                      std::vector<ParamHandle>& params, AdamState& adam,
                      Rng& rng, int step_index);

struct TrainResult {
    Model model;
    std::vector<LossRecord> records;
};

// Seeds an Rng from cfg.seed, initializes the model from it, then runs
// cfg.steps optimization steps. steps = 0 returns the untouched init.
TrainResult train(const TrainConfig& cfg);

// Header `step,scale_0,...,scale_{K-1},total`, one row per record, values
// printed with round-trip precision.
std::string loss_csv(const std::vector<LossRecord>& records, int K);
void write_loss_csv(const std::string& path, const std::vector<LossRecord>& records, int K);

}  // namespace hofar
