#pragma once

// Ensemble predictive distributions and acquisition functions.
//
// All scores are in nats. Inputs are probabilities (softmax outputs), never
// logits. Per-member argmax ties and majority-vote ties both resolve to the
// lowest class index.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "alsubset/common.hpp"

namespace alsubset {

using ProbabilityVector = std::vector<double>;

inline constexpr double kNormalizationTolerance = 1e-6;
inline constexpr double kLogFloor = 1e-12;
inline constexpr double kMutualInformationSlack = 1e-9;

enum class AcquisitionFunction {
  entropy,
  mutual_information,
  variation_ratios,
  error_count,
  random,
};

std::string_view to_string(AcquisitionFunction fn);
/// Throws ConfigError on unknown names.
AcquisitionFunction parse_acquisition_function(std::string_view name);

/// Throws std::invalid_argument("invalid distribution") unless every entry is
/// in [0, 1] and the entries sum to 1 within kNormalizationTolerance.
void validate_distribution(std::span<const double> p);

/// Lowest index among the maximal entries.
ClassIndex argmax(std::span<const double> p);

/// E x K matrix of member predictions, row e = p^(e).
class EnsemblePrediction {
 public:
  EnsemblePrediction(std::size_t members, std::size_t classes, std::vector<double> probs);
  EnsemblePrediction(std::size_t members, std::size_t classes, std::span<const float> probs);

  /// Convenience for tests and bindings: one row per member.
  static EnsemblePrediction from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t members() const { return members_; }
  std::size_t classes() const { return classes_; }
  std::span<const double> member(std::size_t e) const {
    return {probs_.data() + e * classes_, classes_};
  }

  /// Per-member argmax.
  std::vector<ClassIndex> votes() const;
  /// Most frequent vote M.
  ClassIndex mode_vote() const;

 private:
  void validate() const;

  std::size_t members_;
  std::size_t classes_;
  std::vector<double> probs_;
};

/// Monte Carlo estimate of the predictive distribution: the element-wise mean
/// of the member rows.
ProbabilityVector predictive_mean(const EnsemblePrediction& ens);

/// H(p) = -sum p_k ln p_k, with 0 ln 0 = 0.
double entropy(std::span<const double> p);

/// H(mean) - mean_e H(p^(e)). Rounding negatives down to -1e-9 are clamped to
/// zero; anything lower throws std::logic_error.
double mutual_information(const EnsemblePrediction& ens);

/// Fraction of members whose vote differs from the majority vote.
double variation_ratios(const EnsemblePrediction& ens);

/// Fraction of members whose vote differs from the ground-truth label.
double error_count(const EnsemblePrediction& ens, ClassIndex label);

/// Applies `fn` to a single ensemble. `random` is rejected here because it
/// is not a function of the predictions.
double acquisition_score(const EnsemblePrediction& ens, AcquisitionFunction fn,
                         std::optional<ClassIndex> label = std::nullopt);

/// N x E x K probabilities stored as f32 in (sample, member, class) order.
class PredictionTensor {
 public:
  PredictionTensor() = default;
  PredictionTensor(std::size_t members, std::size_t classes, std::vector<SampleId> sample_ids,
                   std::vector<float> data);

  std::size_t samples() const { return sample_ids_.size(); }
  std::size_t members() const { return members_; }
  std::size_t classes() const { return classes_; }
  const std::vector<SampleId>& sample_ids() const { return sample_ids_; }
  const std::vector<float>& data() const { return data_; }

  std::span<const float> slice(std::size_t n) const {
    return {data_.data() + n * members_ * classes_, members_ * classes_};
  }
  EnsemblePrediction ensemble(std::size_t n) const {
    return EnsemblePrediction(members_, classes_, slice(n));
  }

  bool operator==(const PredictionTensor&) const = default;

 private:
  std::size_t members_ = 0;
  std::size_t classes_ = 0;
  std::vector<SampleId> sample_ids_;
  std::vector<float> data_;
};

struct AcquisitionScores {
  AcquisitionFunction function = AcquisitionFunction::entropy;
  std::vector<double> scores;
  std::vector<SampleId> sample_ids;
};

/// Scores every sample of the tensor. `labels` (aligned with the tensor's
/// sample order) is required for error_count; `seed` is required for random,
/// which then emits one uniform draw per sample in order.
AcquisitionScores score_pool(const PredictionTensor& tensor, AcquisitionFunction fn,
                             std::span<const ClassIndex> labels = {},
                             std::optional<std::uint64_t> seed = std::nullopt);

/// Seeded uniform scores for an id list; the random-selection baseline.
AcquisitionScores random_scores(std::span<const SampleId> ids, std::uint64_t seed);

/// Per-member, per-class H x W maps of object-center probabilities.
class DetectionHeatmapSet {
 public:
  DetectionHeatmapSet(std::size_t members, std::size_t classes, std::size_t height,
                      std::size_t width, std::vector<double> cells);

  std::size_t members() const { return members_; }
  std::size_t classes() const { return classes_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  double at(std::size_t member, std::size_t cls, std::size_t row, std::size_t col) const;

 private:
  std::size_t members_;
  std::size_t classes_;
  std::size_t height_;
  std::size_t width_;
  std::vector<double> cells_;
};

/// Builds a heatmap set from nested maps [member][class] -> row-major H*W
/// cells. Throws std::invalid_argument when shapes differ.
DetectionHeatmapSet make_heatmap_set(const std::vector<std::vector<std::vector<double>>>& maps,
                                     std::size_t height, std::size_t width);

struct DetectionScore {
  double score = 0.0;
  /// classes x H x W acquisition values, row-major.
  std::vector<double> heatmaps;
  std::size_t classes = 0;
  std::size_t height = 0;
  std::size_t width = 0;
};

/// Each cell is a binary classifier [q, 1 - q] per member; the image score is
/// the maximum acquisition value over all cells and classes.
DetectionScore detection_image_score(const DetectionHeatmapSet& maps, AcquisitionFunction fn);

}  // namespace alsubset
