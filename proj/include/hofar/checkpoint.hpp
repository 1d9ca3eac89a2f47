#pragma once

#include <stdexcept>
#include <string>

#include "hofar/model.hpp"

// Binary model snapshot: magic "HOFR", version, the full config echo, a named
// shape manifest with strictly increasing payload offsets, then all parameter
// payloads as little-endian f32. Math stays f64 in memory; storage is f32.
// save(load(save(m))) is byte-identical.

namespace hofar {

// Distinguishes unreadable-content failures (bad magic, truncation, manifest
// mismatch, trailing bytes) from plain I/O errors.
struct CorruptCheckpoint : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void save_checkpoint(const std::string& path, Model& model);
Model load_checkpoint(const std::string& path);

}  // namespace hofar
