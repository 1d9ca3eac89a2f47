#pragma once

#include <string>
#include <vector>

// Complexity benchmark: wall-time medians over a small (n, d, m) grid plus
// log-log scaling fits. Columns that do not apply to a row are zero.

namespace hofar {

struct BenchRow {
    std::string kind;  // timing kind or fitted-slope kind
    int n = 0;         // grid side (tokens are n^2)
    int d = 0;         // channel / stream width
    int m = 0;         // stacked transformer layers
    double value = 0.0;  // seconds for timings, exponent or ratio for fits
};

struct BenchReport {
    std::vector<BenchRow> rows;
};

// Times attention alone, the m-layer transformer forward, one flow-matching
// block, and a full optimization step for n in {4,8,16}, d in {16,32},
// m in {1,2}. Each number is the median of 5 runs after 2 warmups, with
// inner repetition sized to keep samples above the clock resolution.
// Appends fit rows: slope_attention_n (per d), ratio_transformer_m
// (per n,d), slope_fm_d (per n).
BenchReport run_bench();

// Header kind,n,d,m,value.
std::string bench_csv(const BenchReport& report);

}  // namespace hofar
