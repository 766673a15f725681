#pragma once

// Prediction tensor files.
//
// Binary layout (little-endian):
//   "ALPT" | u16 version = 1 | u32 N | u32 E | u32 K
//   | N*E*K f32 in (sample, member, class) order | N u64 sample ids
//
// CSV input: rows `sample_id,member,p_0,...,p_{K-1}`, optional header line.
// Samples keep their first-appearance order; members must cover 0..E-1.

#include <filesystem>
#include <iosfwd>

#include "alsubset/acquisition.hpp"

namespace alsubset {

inline constexpr std::uint16_t kPredictionFormatVersion = 1;

void write_prediction_tensor(std::ostream& out, const PredictionTensor& tensor);
PredictionTensor read_prediction_tensor(std::istream& in);

void write_prediction_tensor(const std::filesystem::path& path, const PredictionTensor& tensor);
PredictionTensor read_prediction_tensor(const std::filesystem::path& path);

PredictionTensor read_prediction_csv(std::istream& in);

/// Dispatches on the file's leading bytes: ALPT magic or CSV text.
PredictionTensor load_predictions(const std::filesystem::path& path);

}  // namespace alsubset
