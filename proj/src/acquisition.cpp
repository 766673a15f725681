#include "alsubset/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>

#include "alsubset/rng.hpp"

namespace alsubset {

std::string_view to_string(AcquisitionFunction fn) {
  switch (fn) {
    case AcquisitionFunction::entropy:
      return "entropy";
    case AcquisitionFunction::mutual_information:
      return "mutual_information";
    case AcquisitionFunction::variation_ratios:
      return "variation_ratios";
    case AcquisitionFunction::error_count:
      return "error_count";
    case AcquisitionFunction::random:
      return "random";
  }
  return "unknown";
}

AcquisitionFunction parse_acquisition_function(std::string_view name) {
  for (auto fn : {AcquisitionFunction::entropy, AcquisitionFunction::mutual_information,
                  AcquisitionFunction::variation_ratios, AcquisitionFunction::error_count,
                  AcquisitionFunction::random}) {
    if (to_string(fn) == name) {
      return fn;
    }
  }
  throw ConfigError("unknown acquisition function '" + std::string(name) + "'");
}

void validate_distribution(std::span<const double> p) {
  if (p.empty()) {
    throw std::invalid_argument("invalid distribution");
  }
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("invalid distribution");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kNormalizationTolerance) {
    throw std::invalid_argument("invalid distribution");
  }
}

ClassIndex argmax(std::span<const double> p) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < p.size(); ++k) {
    if (p[k] > p[best]) {
      best = k;
    }
  }
  return static_cast<ClassIndex>(best);
}

EnsemblePrediction::EnsemblePrediction(std::size_t members, std::size_t classes,
                                       std::vector<double> probs)
    : members_(members), classes_(classes), probs_(std::move(probs)) {
  validate();
}

EnsemblePrediction::EnsemblePrediction(std::size_t members, std::size_t classes,
                                       std::span<const float> probs)
    : members_(members), classes_(classes), probs_(probs.begin(), probs.end()) {
  validate();
}

EnsemblePrediction EnsemblePrediction::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) {
    throw std::invalid_argument("empty ensemble");
  }
  const std::size_t classes = rows.front().size();
  std::vector<double> flat;
  flat.reserve(rows.size() * classes);
  for (const auto& row : rows) {
    if (row.size() != classes) {
      throw std::invalid_argument("ensemble rows differ in class count");
    }
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return EnsemblePrediction(rows.size(), classes, std::move(flat));
}

void EnsemblePrediction::validate() const {
  if (members_ == 0) {
    throw std::invalid_argument("empty ensemble");
  }
  if (classes_ == 0 || probs_.size() != members_ * classes_) {
    throw std::invalid_argument("ensemble shape does not match its data");
  }
  for (std::size_t e = 0; e < members_; ++e) {
    validate_distribution(member(e));
  }
}

std::vector<ClassIndex> EnsemblePrediction::votes() const {
  std::vector<ClassIndex> out(members_);
  for (std::size_t e = 0; e < members_; ++e) {
    out[e] = argmax(member(e));
  }
  return out;
}

ClassIndex EnsemblePrediction::mode_vote() const {
  std::vector<std::size_t> counts(classes_, 0);
  for (ClassIndex v : votes()) {
    ++counts[static_cast<std::size_t>(v)];
  }
  // max_element returns the first maximum: lowest class index on ties.
  return static_cast<ClassIndex>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

ProbabilityVector predictive_mean(const EnsemblePrediction& ens) {
  ProbabilityVector mean(ens.classes(), 0.0);
  for (std::size_t e = 0; e < ens.members(); ++e) {
    const auto row = ens.member(e);
    for (std::size_t k = 0; k < mean.size(); ++k) {
      mean[k] += row[k];
    }
  }
  const double inv = 1.0 / static_cast<double>(ens.members());
  for (double& v : mean) {
    v *= inv;
  }
  return mean;
}

double entropy(std::span<const double> p) {
  validate_distribution(p);
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) {
      h -= v * std::log(std::max(v, kLogFloor));
    }
  }
  return std::max(h, 0.0);
}

double mutual_information(const EnsemblePrediction& ens) {
  const double predictive = entropy(predictive_mean(ens));
  double expected = 0.0;
  for (std::size_t e = 0; e < ens.members(); ++e) {
    expected += entropy(ens.member(e));
  }
  expected /= static_cast<double>(ens.members());
  const double j = predictive - expected;
  if (j < -kMutualInformationSlack) {
    throw std::logic_error("mutual information below zero: " + std::to_string(j));
  }
  return std::max(j, 0.0);
}

double variation_ratios(const EnsemblePrediction& ens) {
  const ClassIndex mode = ens.mode_vote();
  const auto votes = ens.votes();
  const auto agree = std::count(votes.begin(), votes.end(), mode);
  const auto e = static_cast<std::ptrdiff_t>(ens.members());
  return static_cast<double>(e - agree) / static_cast<double>(e);
}

double error_count(const EnsemblePrediction& ens, ClassIndex label) {
  if (label < 0 || static_cast<std::size_t>(label) >= ens.classes()) {
    throw std::out_of_range("label " + std::to_string(label) + " outside [0, " +
                            std::to_string(ens.classes()) + ")");
  }
  const auto votes = ens.votes();
  const auto correct = std::count(votes.begin(), votes.end(), label);
  const auto e = static_cast<std::ptrdiff_t>(ens.members());
  return static_cast<double>(e - correct) / static_cast<double>(e);
}

double acquisition_score(const EnsemblePrediction& ens, AcquisitionFunction fn,
                         std::optional<ClassIndex> label) {
  switch (fn) {
    case AcquisitionFunction::entropy:
      return entropy(predictive_mean(ens));
    case AcquisitionFunction::mutual_information:
      return mutual_information(ens);
    case AcquisitionFunction::variation_ratios:
      return variation_ratios(ens);
    case AcquisitionFunction::error_count:
      if (!label) {
        throw std::invalid_argument("error_count requires labels");
      }
      return error_count(ens, *label);
    case AcquisitionFunction::random:
      break;
  }
  throw std::invalid_argument("random is not a function of the predictions");
}

PredictionTensor::PredictionTensor(std::size_t members, std::size_t classes,
                                   std::vector<SampleId> sample_ids, std::vector<float> data)
    : members_(members), classes_(classes), sample_ids_(std::move(sample_ids)),
      data_(std::move(data)) {
  if (data_.size() != sample_ids_.size() * members_ * classes_) {
    throw std::invalid_argument("prediction tensor data does not match N x E x K");
  }
  std::unordered_set<SampleId> seen;
  seen.reserve(sample_ids_.size());
  for (SampleId id : sample_ids_) {
    if (!seen.insert(id).second) {
      throw std::invalid_argument("duplicate sample id " + std::to_string(id));
    }
  }
}

AcquisitionScores random_scores(std::span<const SampleId> ids, std::uint64_t seed) {
  AcquisitionScores out;
  out.function = AcquisitionFunction::random;
  out.sample_ids.assign(ids.begin(), ids.end());
  out.scores.resize(ids.size());
  Rng rng(seed);
  for (double& s : out.scores) {
    s = rng.uniform();
  }
  return out;
}

AcquisitionScores score_pool(const PredictionTensor& tensor, AcquisitionFunction fn,
                             std::span<const ClassIndex> labels,
                             std::optional<std::uint64_t> seed) {
  if (fn == AcquisitionFunction::random) {
    if (!seed) {
      throw std::invalid_argument("random scoring requires a seed");
    }
    return random_scores(tensor.sample_ids(), *seed);
  }
  if (fn == AcquisitionFunction::error_count && labels.size() != tensor.samples()) {
    throw std::invalid_argument("error_count requires one label per sample");
  }
  AcquisitionScores out;
  out.function = fn;
  out.sample_ids = tensor.sample_ids();
  out.scores.resize(tensor.samples());
  for (std::size_t n = 0; n < tensor.samples(); ++n) {
    const auto ens = tensor.ensemble(n);
    std::optional<ClassIndex> label;
    if (fn == AcquisitionFunction::error_count) {
      label = labels[n];
    }
    out.scores[n] = acquisition_score(ens, fn, label);
  }
  return out;
}

DetectionHeatmapSet::DetectionHeatmapSet(std::size_t members, std::size_t classes,
                                         std::size_t height, std::size_t width,
                                         std::vector<double> cells)
    : members_(members), classes_(classes), height_(height), width_(width),
      cells_(std::move(cells)) {
  if (members_ == 0 || classes_ == 0 || height_ == 0 || width_ == 0) {
    throw std::invalid_argument("empty heatmap set");
  }
  if (cells_.size() != members_ * classes_ * height_ * width_) {
    throw std::invalid_argument("heatmap data does not match E x C x H x W");
  }
  for (double v : cells_) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("heatmap cell outside [0, 1]");
    }
  }
}

double DetectionHeatmapSet::at(std::size_t member, std::size_t cls, std::size_t row,
                               std::size_t col) const {
  return cells_[((member * classes_ + cls) * height_ + row) * width_ + col];
}

DetectionHeatmapSet make_heatmap_set(const std::vector<std::vector<std::vector<double>>>& maps,
                                     std::size_t height, std::size_t width) {
  if (maps.empty() || maps.front().empty()) {
    throw std::invalid_argument("empty heatmap set");
  }
  const std::size_t classes = maps.front().size();
  std::vector<double> cells;
  cells.reserve(maps.size() * classes * height * width);
  for (const auto& member : maps) {
    if (member.size() != classes) {
      throw std::invalid_argument("heatmap members differ in class count");
    }
    for (const auto& map : member) {
      if (map.size() != height * width) {
        throw std::invalid_argument("heatmap shapes differ");
      }
      cells.insert(cells.end(), map.begin(), map.end());
    }
  }
  return DetectionHeatmapSet(maps.size(), classes, height, width, std::move(cells));
}

DetectionScore detection_image_score(const DetectionHeatmapSet& maps, AcquisitionFunction fn) {
  if (fn != AcquisitionFunction::entropy && fn != AcquisitionFunction::mutual_information &&
      fn != AcquisitionFunction::variation_ratios) {
    throw std::invalid_argument("detection scoring supports entropy, mutual_information and "
                                "variation_ratios");
  }
  DetectionScore out;
  out.classes = maps.classes();
  out.height = maps.height();
  out.width = maps.width();
  out.heatmaps.resize(out.classes * out.height * out.width);
  out.score = -std::numeric_limits<double>::infinity();

  const std::size_t members = maps.members();
  std::vector<double> binary(members * 2);
  std::size_t cell = 0;
  for (std::size_t c = 0; c < out.classes; ++c) {
    for (std::size_t r = 0; r < out.height; ++r) {
      for (std::size_t w = 0; w < out.width; ++w, ++cell) {
        for (std::size_t e = 0; e < members; ++e) {
          const double q = maps.at(e, c, r, w);
          binary[2 * e] = q;
          binary[2 * e + 1] = 1.0 - q;
        }
        const double value = acquisition_score(EnsemblePrediction(members, 2, binary), fn);
        out.heatmaps[cell] = value;
        out.score = std::max(out.score, value);
      }
    }
  }
  return out;
}

}  // namespace alsubset
