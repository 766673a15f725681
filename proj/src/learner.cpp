#include "alsubset/learner.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_set>

#include "alsubset/binary_io.hpp"
#include "alsubset/config.hpp"
#include "alsubset/rng.hpp"
#include "alsubset/text_util.hpp"

namespace alsubset {

// ---------------------------------------------------------------------------
// LabeledPool

LabeledPool::LabeledPool(std::size_t dim, int classes, std::vector<double> features,
                         std::vector<ClassIndex> labels, std::vector<SampleId> ids)
    : dim_(dim), classes_(classes), features_(std::move(features)), labels_(std::move(labels)),
      ids_(std::move(ids)) {
  if (classes_ <= 0) {
    throw std::invalid_argument("pool needs at least one class");
  }
  if (labels_.size() != ids_.size() || features_.size() != ids_.size() * dim_) {
    throw std::invalid_argument("pool features, labels and ids disagree in size");
  }
  for (ClassIndex y : labels_) {
    if (y < 0 || y >= classes_) {
      throw std::invalid_argument("label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(classes_) + ")");
    }
  }
  for (double v : features_) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("non-finite feature value");
    }
  }
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) {
      throw std::invalid_argument("duplicate sample id " + std::to_string(ids_[i]));
    }
  }
}

std::size_t LabeledPool::index_of(SampleId id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) {
    throw std::out_of_range("unknown sample id " + std::to_string(id));
  }
  return it->second;
}

void write_pool_csv(std::ostream& out, const LabeledPool& pool) {
  out << "sample_id,label";
  for (std::size_t d = 0; d < pool.dim(); ++d) {
    out << ",f" << d;
  }
  out << '\n';
  for (std::size_t i = 0; i < pool.size(); ++i) {
    out << pool.id(i) << ',' << pool.label(i);
    for (double v : pool.features(i)) {
      out << ',' << detail::format_double(v);
    }
    out << '\n';
  }
}

LabeledPool read_pool_csv(std::istream& in, int classes) {
  std::vector<double> features;
  std::vector<ClassIndex> labels;
  std::vector<SampleId> ids;
  std::size_t dim = 0;
  bool have_dim = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = detail::split_csv_line(line);
    if (fields[0].empty() || fields[0].starts_with("#")) {
      continue;
    }
    if (!detail::looks_numeric(fields[0])) {
      continue;  // header
    }
    if (fields.size() < 2) {
      throw std::runtime_error("pool CSV line " + std::to_string(line_no) +
                               ": expected sample_id,label,features...");
    }
    if (!have_dim) {
      dim = fields.size() - 2;
      have_dim = true;
    } else if (fields.size() - 2 != dim) {
      throw std::runtime_error("pool CSV line " + std::to_string(line_no) +
                               ": inconsistent feature count");
    }
    ids.push_back(detail::parse_number<SampleId>(fields[0]));
    labels.push_back(detail::parse_number<ClassIndex>(fields[1]));
    for (std::size_t i = 2; i < fields.size(); ++i) {
      features.push_back(detail::parse_number<double>(fields[i]));
    }
  }
  if (classes <= 0) {
    classes = labels.empty() ? 1 : *std::max_element(labels.begin(), labels.end()) + 1;
  }
  return LabeledPool(dim, classes, std::move(features), std::move(labels), std::move(ids));
}

// ---------------------------------------------------------------------------
// Models

Architecture parse_architecture(std::string_view tag) {
  if (tag == "logistic") {
    return {};
  }
  if (tag.starts_with("mlp-")) {
    try {
      const auto hidden = detail::parse_number<std::size_t>(tag.substr(4));
      if (hidden > 0) {
        return {ArchitectureKind::mlp, hidden};
      }
    } catch (const std::invalid_argument&) {
    }
  }
  throw ConfigError("unknown architecture '" + std::string(tag) +
                    "' (expected logistic or mlp-<hidden>)");
}

std::string to_string(const Architecture& arch) {
  return arch.kind == ArchitectureKind::logistic ? "logistic"
                                                 : "mlp-" + std::to_string(arch.hidden);
}

namespace {

struct Layout {
  std::size_t dim;
  std::size_t classes;
  std::size_t hidden;  // 0 for logistic
  // Offsets into the flat weight vector.
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0, total = 0;

  Layout(const Architecture& arch, std::size_t d, int k)
      : dim(d), classes(static_cast<std::size_t>(k)),
        hidden(arch.kind == ArchitectureKind::mlp ? arch.hidden : 0) {
    if (arch.kind == ArchitectureKind::mlp && hidden == 0) {
      throw std::invalid_argument("mlp needs a positive hidden width");
    }
    if (hidden == 0) {
      w2 = 0;
      b2 = classes * dim;
      total = b2 + classes;
    } else {
      w1 = 0;
      b1 = hidden * dim;
      w2 = b1 + hidden;
      b2 = w2 + classes * hidden;
      total = b2 + classes;
    }
  }

  bool is_weight_matrix(std::size_t i) const {
    if (hidden == 0) {
      return i < b2;
    }
    return i < b1 || (i >= w2 && i < b2);
  }
};

Layout layout_of(const ModelParams& params) {
  Layout layout(params.arch, params.dim, params.classes);
  if (params.weights.size() != layout.total) {
    throw std::invalid_argument("parameter vector does not match architecture " +
                                to_string(params.arch));
  }
  return layout;
}

void check_input(const ModelParams& params, std::span<const double> x) {
  if (x.size() != params.dim) {
    throw std::invalid_argument("feature vector has " + std::to_string(x.size()) +
                                " entries, model expects " + std::to_string(params.dim));
  }
}

// Forward pass. `hidden_pre` receives the MLP pre-activations when non-null.
void forward(const ModelParams& params, const Layout& layout, std::span<const double> x,
             std::vector<double>& z, std::vector<double>* hidden_pre,
             std::vector<double>* hidden_act) {
  const auto& w = params.weights;
  z.assign(layout.classes, 0.0);
  if (layout.hidden == 0) {
    for (std::size_t k = 0; k < layout.classes; ++k) {
      double acc = w[layout.b2 + k];
      const double* row = w.data() + layout.w2 + k * layout.dim;
      for (std::size_t d = 0; d < layout.dim; ++d) {
        acc += row[d] * x[d];
      }
      z[k] = acc;
    }
    return;
  }
  std::vector<double> local_pre;
  std::vector<double> local_act;
  auto& pre = hidden_pre ? *hidden_pre : local_pre;
  auto& act = hidden_act ? *hidden_act : local_act;
  pre.assign(layout.hidden, 0.0);
  act.assign(layout.hidden, 0.0);
  for (std::size_t h = 0; h < layout.hidden; ++h) {
    double acc = w[layout.b1 + h];
    const double* row = w.data() + layout.w1 + h * layout.dim;
    for (std::size_t d = 0; d < layout.dim; ++d) {
      acc += row[d] * x[d];
    }
    pre[h] = acc;
    act[h] = acc > 0.0 ? acc : 0.0;
  }
  for (std::size_t k = 0; k < layout.classes; ++k) {
    double acc = w[layout.b2 + k];
    const double* row = w.data() + layout.w2 + k * layout.hidden;
    for (std::size_t h = 0; h < layout.hidden; ++h) {
      acc += row[h] * act[h];
    }
    z[k] = acc;
  }
}

// Adds scale * d(CE)/d(theta) for one example to `grad` and returns CE.
double accumulate_example(const ModelParams& params, const Layout& layout,
                          std::span<const double> x, ClassIndex y, double scale,
                          std::vector<double>* grad) {
  std::vector<double> z;
  std::vector<double> pre;
  std::vector<double> act;
  forward(params, layout, x, z, &pre, &act);
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) {
    sum += std::exp(v - zmax);
  }
  const double lse = zmax + std::log(sum);
  const double ce = lse - z[static_cast<std::size_t>(y)];
  if (!grad) {
    return ce;
  }
  auto& g = *grad;
  std::vector<double> dz(layout.classes);
  for (std::size_t k = 0; k < layout.classes; ++k) {
    dz[k] = scale * (std::exp(z[k] - lse) - (static_cast<ClassIndex>(k) == y ? 1.0 : 0.0));
  }
  const auto& w = params.weights;
  if (layout.hidden == 0) {
    for (std::size_t k = 0; k < layout.classes; ++k) {
      double* row = g.data() + layout.w2 + k * layout.dim;
      for (std::size_t d = 0; d < layout.dim; ++d) {
        row[d] += dz[k] * x[d];
      }
      g[layout.b2 + k] += dz[k];
    }
    return ce;
  }
  std::vector<double> dh(layout.hidden, 0.0);
  for (std::size_t k = 0; k < layout.classes; ++k) {
    double* grow = g.data() + layout.w2 + k * layout.hidden;
    const double* wrow = w.data() + layout.w2 + k * layout.hidden;
    for (std::size_t h = 0; h < layout.hidden; ++h) {
      grow[h] += dz[k] * act[h];
      dh[h] += dz[k] * wrow[h];
    }
    g[layout.b2 + k] += dz[k];
  }
  for (std::size_t h = 0; h < layout.hidden; ++h) {
    const double da = pre[h] > 0.0 ? dh[h] : 0.0;
    if (da == 0.0) {
      continue;
    }
    double* row = g.data() + layout.w1 + h * layout.dim;
    for (std::size_t d = 0; d < layout.dim; ++d) {
      row[d] += da * x[d];
    }
    g[layout.b1 + h] += da;
  }
  return ce;
}

}  // namespace

std::size_t parameter_count(const Architecture& arch, std::size_t dim, int classes) {
  return Layout(arch, dim, classes).total;
}

ModelParams zero_params(const Architecture& arch, std::size_t dim, int classes) {
  if (classes <= 0 || dim == 0) {
    throw std::invalid_argument("model needs positive input and output dimensions");
  }
  return {arch, dim, classes, std::vector<double>(parameter_count(arch, dim, classes), 0.0)};
}

ModelParams init_params(const Architecture& arch, std::size_t dim, int classes,
                        std::uint64_t seed) {
  ModelParams params = zero_params(arch, dim, classes);
  const Layout layout(arch, dim, classes);
  Rng rng(seed);
  if (layout.hidden == 0) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    for (std::size_t i = 0; i < layout.b2; ++i) {
      params.weights[i] = scale * rng.normal();
    }
    return params;
  }
  const double scale1 = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t i = layout.w1; i < layout.b1; ++i) {
    params.weights[i] = scale1 * rng.normal();
  }
  const double scale2 = 1.0 / std::sqrt(static_cast<double>(layout.hidden));
  for (std::size_t i = layout.w2; i < layout.b2; ++i) {
    params.weights[i] = scale2 * rng.normal();
  }
  return params;
}

std::vector<double> logits(const ModelParams& params, std::span<const double> x) {
  check_input(params, x);
  const Layout layout = layout_of(params);
  std::vector<double> z;
  forward(params, layout, x, z, nullptr, nullptr);
  return z;
}

ProbabilityVector softmax(std::span<const double> z) {
  if (z.empty()) {
    throw std::invalid_argument("softmax of an empty vector");
  }
  const double zmax = *std::max_element(z.begin(), z.end());
  ProbabilityVector p(z.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    p[k] = std::exp(z[k] - zmax);
    sum += p[k];
  }
  for (double& v : p) {
    v /= sum;
  }
  return p;
}

ProbabilityVector predict_proba(const ModelParams& params, std::span<const double> x) {
  return softmax(logits(params, x));
}

double objective(const ModelParams& params, std::span<const WeightedExample> batch,
                 double weight_decay, std::vector<double>* gradient) {
  const Layout layout = layout_of(params);
  if (gradient) {
    gradient->assign(layout.total, 0.0);
  }
  double loss = 0.0;
  if (!batch.empty()) {
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const auto& ex : batch) {
      check_input(params, ex.features);
      if (ex.weight == 0.0) {
        continue;
      }
      loss += ex.weight * accumulate_example(params, layout, ex.features, ex.label,
                                             ex.weight * inv, gradient);
    }
    loss *= inv;
  }
  if (weight_decay != 0.0) {
    double sq = 0.0;
    for (std::size_t i = 0; i < layout.total; ++i) {
      if (layout.is_weight_matrix(i)) {
        const double w = params.weights[i];
        sq += w * w;
        if (gradient) {
          (*gradient)[i] += weight_decay * w;
        }
      }
    }
    loss += 0.5 * weight_decay * sq;
  }
  return loss;
}

std::vector<double> inverse_frequency_weights(const LabeledPool& pool,
                                              std::span<const SampleId> ids) {
  const auto k = static_cast<std::size_t>(pool.classes());
  std::vector<std::size_t> counts(k, 0);
  for (SampleId id : ids) {
    ++counts[static_cast<std::size_t>(pool.label(pool.index_of(id)))];
  }
  std::vector<double> weights(k, 0.0);
  const auto n = static_cast<double>(ids.size());
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] > 0) {
      weights[c] = n / (static_cast<double>(k) * static_cast<double>(counts[c]));
    }
  }
  return weights;
}

std::vector<double> epoch_gradient(const ModelParams& params, const LabeledPool& pool,
                                   const SubsetState& subset, bool class_weighting) {
  const Layout layout = layout_of(params);
  const auto ids = subset.expanded();
  std::vector<double> class_weight(static_cast<std::size_t>(pool.classes()), 1.0);
  if (class_weighting) {
    class_weight = inverse_frequency_weights(pool, ids);
  }
  std::vector<double> grad(layout.total, 0.0);
  for (SampleId id : ids) {
    const std::size_t i = pool.index_of(id);
    const double w = class_weight[static_cast<std::size_t>(pool.label(i))];
    accumulate_example(params, layout, pool.features(i), pool.label(i), w, &grad);
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) {
    throw ConfigError("learning rate must be positive");
  }
  if (!(finetune_rate >= 0.0)) {
    throw ConfigError("fine-tune rate must be non-negative");
  }
  if (!(decay_factor > 0.0)) {
    throw ConfigError("decay factor must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("momentum must be in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) {
    throw ConfigError("weight decay must be non-negative");
  }
  if (batch_size == 0) {
    throw ConfigError("batch size must be positive");
  }
  if (max_epochs == 0) {
    throw ConfigError("max epochs must be positive");
  }
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation fraction must be in [0, 1)");
  }
  if (harvest_window == 0) {
    throw ConfigError("harvest window must be positive");
  }
  if (arch.kind == ArchitectureKind::mlp && arch.hidden == 0) {
    throw ConfigError("mlp needs a positive hidden width");
  }
}

std::vector<SampleId> validation_split(const SubsetState& subset, double fraction,
                                       std::uint64_t seed) {
  auto ids = subset.ids();
  const auto n_val =
      static_cast<std::size_t>(std::floor(fraction * static_cast<double>(ids.size())));
  if (n_val == 0) {
    return {};
  }
  const std::uint64_t key = mix64(seed);
  std::sort(ids.begin(), ids.end(), [key](SampleId a, SampleId b) {
    const auto ha = mix64(a ^ key);
    const auto hb = mix64(b ^ key);
    return ha != hb ? ha < hb : a < b;
  });
  std::vector<SampleId> val(ids.end() - static_cast<std::ptrdiff_t>(n_val), ids.end());
  std::sort(val.begin(), val.end());
  return val;
}

namespace {

struct LoopSettings {
  double rate;
  std::size_t epochs;
  const std::vector<std::size_t>* decay_epochs;
};

double accuracy_on(const ModelParams& params, const LabeledPool& pool,
                   std::span<const std::size_t> indices) {
  if (indices.empty()) {
    return 0.0;
  }
  std::size_t correct = 0;
  for (std::size_t i : indices) {
    if (argmax(predict_proba(params, pool.features(i))) == pool.label(i)) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

TrainRun training_loop(const LabeledPool& pool, const SubsetState& subset,
                       const TrainConfig& config, std::uint64_t seed, ModelParams params,
                       const LoopSettings& settings) {
  if (subset.empty()) {
    throw std::invalid_argument("cannot train on an empty subset");
  }
  if (params.dim != pool.dim() || params.classes != pool.classes()) {
    throw std::invalid_argument("model shape does not match the pool");
  }
  const Layout layout = layout_of(params);

  const auto val_ids = validation_split(subset, config.validation_fraction, seed);
  const std::unordered_set<SampleId> val_set(val_ids.begin(), val_ids.end());
  std::vector<std::size_t> val_indices;
  val_indices.reserve(val_ids.size());
  for (SampleId id : val_ids) {
    val_indices.push_back(pool.index_of(id));
  }

  std::vector<SampleId> train_ids;
  train_ids.reserve(subset.total_count());
  for (SampleId id : subset.expanded()) {
    if (!val_set.contains(id)) {
      train_ids.push_back(id);
    }
  }
  std::vector<double> class_weight(static_cast<std::size_t>(pool.classes()), 1.0);
  if (config.class_weighting) {
    class_weight = inverse_frequency_weights(pool, train_ids);
  }
  std::vector<WeightedExample> examples;
  examples.reserve(train_ids.size());
  for (SampleId id : train_ids) {
    const std::size_t i = pool.index_of(id);
    examples.push_back({pool.features(i), pool.label(i),
                        class_weight[static_cast<std::size_t>(pool.label(i))]});
  }

  const std::uint64_t subset_hash = subset.hash();
  TrainRun run;
  run.seed = seed;
  auto snapshot = [&](std::uint32_t epoch) {
    return Checkpoint{params, seed, epoch, subset_hash};
  };
  run.final = snapshot(0);
  run.best = run.final;
  if (settings.epochs == 0) {
    run.checkpoints.push_back(run.final);
    return run;
  }

  std::deque<Checkpoint> window;
  std::vector<double> velocity(layout.total, 0.0);
  std::vector<double> grad;
  std::vector<std::size_t> order(examples.size());
  std::vector<WeightedExample> batch;
  batch.reserve(config.batch_size);

  double plateau_scale = 1.0;
  double best_val = -1.0;
  double best_for_patience = -1.0;
  std::size_t since_improvement = 0;
  bool dropped = false;

  for (std::size_t epoch = 1; epoch <= settings.epochs; ++epoch) {
    double rate = settings.rate * plateau_scale;
    if (settings.decay_epochs) {
      for (std::size_t d : *settings.decay_epochs) {
        if (d < epoch) {
          rate *= config.decay_factor;
        }
      }
    }

    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, {epoch}));
    rng.shuffle(std::span<std::size_t>(order));

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t j = start; j < stop; ++j) {
        batch.push_back(examples[order[j]]);
      }
      const double loss = objective(params, batch, config.weight_decay, &grad);
      if (!std::isfinite(loss)) {
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) +
                                 " (seed " + std::to_string(seed) + ")");
      }
      for (std::size_t i = 0; i < layout.total; ++i) {
        velocity[i] = config.momentum * velocity[i] + grad[i];
        params.weights[i] -= rate * velocity[i];
      }
    }

    const double epoch_loss = objective(params, examples, config.weight_decay, nullptr);
    if (!std::isfinite(epoch_loss)) {
      throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + " (seed " +
                               std::to_string(seed) + ")");
    }
    run.train_loss.push_back(epoch_loss);
    run.epochs_run = epoch;

    const auto checkpoint = snapshot(static_cast<std::uint32_t>(epoch));
    window.push_back(checkpoint);
    if (window.size() > config.harvest_window) {
      window.pop_front();
    }
    run.final = checkpoint;

    if (val_indices.empty()) {
      run.best = checkpoint;
      continue;
    }
    const double val_acc = accuracy_on(params, pool, val_indices);
    run.validation_accuracy.push_back(val_acc);
    if (val_acc >= best_val) {
      best_val = val_acc;
      run.best = checkpoint;
    }
    if (config.patience == 0) {
      continue;
    }
    if (val_acc > best_for_patience) {
      best_for_patience = val_acc;
      since_improvement = 0;
      dropped = false;
      continue;
    }
    ++since_improvement;
    if (!dropped && since_improvement >= config.patience) {
      plateau_scale *= config.decay_factor;
      dropped = true;
      since_improvement = 0;
    } else if (dropped && since_improvement >= 2 * config.patience) {
      break;
    }
  }
  run.checkpoints.assign(window.begin(), window.end());
  return run;
}

}  // namespace

TrainRun train(const LabeledPool& pool, const SubsetState& subset, const TrainConfig& config,
               std::uint64_t seed) {
  config.validate();
  ModelParams params =
      init_params(config.arch, pool.dim(), pool.classes(), derive_seed(seed, {0x1417}));
  return training_loop(pool, subset, config, seed, std::move(params),
                       {config.learning_rate, config.max_epochs, &config.decay_epochs});
}

TrainRun fine_tune(const LabeledPool& pool, const SubsetState& subset, const ModelParams& params,
                   const TrainConfig& config, std::uint64_t seed) {
  layout_of(params);
  if (params.dim != pool.dim() || params.classes != pool.classes()) {
    throw std::invalid_argument("fine-tune parameters do not match the pool's shape");
  }
  return training_loop(pool, subset, config, seed, params,
                       {config.finetune_rate, config.finetune_epochs, nullptr});
}

// ---------------------------------------------------------------------------
// Ensembles

std::string_view to_string(EnsembleMode mode) {
  switch (mode) {
    case EnsembleMode::single:
      return "single";
    case EnsembleMode::seeds:
      return "seeds";
    case EnsembleMode::checkpoints:
      return "checkpoints";
    case EnsembleMode::combined:
      return "combined";
  }
  return "unknown";
}

EnsembleMode parse_ensemble_mode(std::string_view name) {
  for (auto mode : {EnsembleMode::single, EnsembleMode::seeds, EnsembleMode::checkpoints,
                    EnsembleMode::combined}) {
    if (to_string(mode) == name) {
      return mode;
    }
  }
  throw ConfigError("unknown ensemble mode '" + std::string(name) + "'");
}

std::size_t EnsembleConfig::member_count() const {
  switch (mode) {
    case EnsembleMode::single:
      return 1;
    case EnsembleMode::seeds:
      return runs;
    case EnsembleMode::checkpoints:
      return checkpoints;
    case EnsembleMode::combined:
      return runs * checkpoints;
  }
  return 0;
}

void EnsembleConfig::validate() const {
  if (runs == 0 || checkpoints == 0 || stride == 0) {
    throw ConfigError("ensemble runs, checkpoints and stride must be positive");
  }
}

CheckpointStore::CheckpointStore(const CheckpointStore& other) {
  std::lock_guard lock(other.mutex_);
  checkpoints_ = other.checkpoints_;
  runs_ = other.runs_;
}

CheckpointStore& CheckpointStore::operator=(const CheckpointStore& other) {
  if (this != &other) {
    std::scoped_lock lock(mutex_, other.mutex_);
    checkpoints_ = other.checkpoints_;
    runs_ = other.runs_;
  }
  return *this;
}

void CheckpointStore::add_run(const TrainRun& run) {
  for (const auto& c : run.checkpoints) {
    insert(c);
  }
  insert(run.best);
  insert(run.final);
  set_run_info(run.seed, {run.final.epoch, run.best.epoch});
}

void CheckpointStore::insert(const Checkpoint& checkpoint) {
  std::lock_guard lock(mutex_);
  checkpoints_.insert_or_assign({checkpoint.run_seed, checkpoint.epoch}, checkpoint);
  auto& info = runs_[checkpoint.run_seed];
  info.final_epoch = std::max(info.final_epoch, checkpoint.epoch);
}

void CheckpointStore::set_run_info(std::uint64_t seed, RunInfo info) {
  std::lock_guard lock(mutex_);
  runs_[seed] = info;
}

std::vector<std::uint64_t> CheckpointStore::run_seeds() const {
  std::lock_guard lock(mutex_);
  std::vector<std::uint64_t> seeds;
  for (const auto& [seed, info] : runs_) {
    seeds.push_back(seed);
  }
  return seeds;
}

CheckpointStore::RunInfo CheckpointStore::run_info(std::uint64_t seed) const {
  std::lock_guard lock(mutex_);
  const auto it = runs_.find(seed);
  if (it == runs_.end()) {
    throw std::out_of_range("no run with seed " + std::to_string(seed));
  }
  return it->second;
}

bool CheckpointStore::contains(std::uint64_t seed, std::uint32_t epoch) const {
  std::lock_guard lock(mutex_);
  return checkpoints_.contains({seed, epoch});
}

const Checkpoint& CheckpointStore::at(std::uint64_t seed, std::uint32_t epoch) const {
  std::lock_guard lock(mutex_);
  const auto it = checkpoints_.find({seed, epoch});
  if (it == checkpoints_.end()) {
    throw std::out_of_range("missing checkpoint run " + std::to_string(seed) + " epoch " +
                            std::to_string(epoch));
  }
  return it->second;
}

std::size_t CheckpointStore::size() const {
  std::lock_guard lock(mutex_);
  return checkpoints_.size();
}

void CheckpointStore::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::lock_guard lock(mutex_);
  for (const auto& [key, checkpoint] : checkpoints_) {
    const auto path =
        dir / ("run" + std::to_string(key.first) + "_ep" + std::to_string(key.second) + ".alck");
    std::ofstream out(path, std::ios::binary);
    if (!out) {
      throw std::runtime_error("cannot write " + path.string());
    }
    write_checkpoint(out, checkpoint);
  }
  std::ofstream meta(dir / "store.meta");
  for (const auto& [seed, info] : runs_) {
    meta << "run." << seed << ".final_epoch = " << info.final_epoch << '\n';
    meta << "run." << seed << ".best_epoch = " << info.best_epoch << '\n';
  }
}

CheckpointStore CheckpointStore::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("checkpoint directory " + dir.string() + " does not exist");
  }
  CheckpointStore store;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".alck") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    std::ifstream in(path, std::ios::binary);
    store.insert(read_checkpoint(in));
  }
  for (const auto seed : store.run_seeds()) {
    auto info = store.run_info(seed);
    info.best_epoch = info.final_epoch;
    store.set_run_info(seed, info);
  }
  if (std::filesystem::exists(dir / "store.meta")) {
    const auto meta = KeyValueConfig::load(dir / "store.meta");
    for (const auto seed : store.run_seeds()) {
      const std::string prefix = "run." + std::to_string(seed) + ".";
      auto info = store.run_info(seed);
      info.final_epoch =
          static_cast<std::uint32_t>(meta.get_u64(prefix + "final_epoch", info.final_epoch));
      info.best_epoch =
          static_cast<std::uint32_t>(meta.get_u64(prefix + "best_epoch", info.best_epoch));
      store.set_run_info(seed, info);
    }
  }
  return store;
}

std::vector<ModelParams> build_ensemble(const CheckpointStore& store,
                                        const EnsembleConfig& config) {
  config.validate();
  const auto seeds = store.run_seeds();
  const std::size_t runs_needed =
      (config.mode == EnsembleMode::single || config.mode == EnsembleMode::checkpoints)
          ? 1
          : config.runs;
  if (seeds.size() < runs_needed) {
    throw std::out_of_range("ensemble needs " + std::to_string(runs_needed) +
                            " runs, store has " + std::to_string(seeds.size()));
  }
  std::vector<ModelParams> members;
  members.reserve(config.member_count());
  auto harvest = [&](std::uint64_t seed) {
    const auto final_epoch = store.run_info(seed).final_epoch;
    const std::size_t span = (config.checkpoints - 1) * config.stride;
    if (span > final_epoch) {
      throw std::out_of_range("run " + std::to_string(seed) + " has too few epochs for " +
                              std::to_string(config.checkpoints) + " checkpoints");
    }
    for (std::size_t j = config.checkpoints; j-- > 0;) {
      const auto epoch = static_cast<std::uint32_t>(final_epoch - j * config.stride);
      members.push_back(store.at(seed, epoch).params);
    }
  };
  switch (config.mode) {
    case EnsembleMode::single: {
      const auto seed = seeds.front();
      members.push_back(store.at(seed, store.run_info(seed).final_epoch).params);
      break;
    }
    case EnsembleMode::seeds:
      for (std::size_t r = 0; r < config.runs; ++r) {
        members.push_back(store.at(seeds[r], store.run_info(seeds[r]).best_epoch).params);
      }
      break;
    case EnsembleMode::checkpoints:
      harvest(seeds.front());
      break;
    case EnsembleMode::combined:
      for (std::size_t r = 0; r < config.runs; ++r) {
        harvest(seeds[r]);
      }
      break;
  }
  return members;
}

PredictionTensor predict_pool(std::span<const ModelParams> members, const LabeledPool& pool,
                              std::span<const SampleId> ids) {
  if (members.empty()) {
    throw std::invalid_argument("empty ensemble");
  }
  const auto k = static_cast<std::size_t>(members.front().classes);
  for (const auto& m : members) {
    if (m.dim != pool.dim() || m.classes != members.front().classes) {
      throw std::invalid_argument("ensemble members disagree with the pool dimensions");
    }
  }
  std::vector<float> data;
  data.reserve(ids.size() * members.size() * k);
  for (SampleId id : ids) {
    const auto x = pool.features(pool.index_of(id));
    for (const auto& m : members) {
      for (double p : predict_proba(m, x)) {
        data.push_back(static_cast<float>(p));
      }
    }
  }
  return PredictionTensor(members.size(), k, std::vector<SampleId>(ids.begin(), ids.end()),
                          std::move(data));
}

// ---------------------------------------------------------------------------
// Checkpoint files

namespace {
constexpr char kCheckpointMagic[4] = {'A', 'L', 'C', 'K'};
}

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint) {
  const auto& p = checkpoint.params;
  layout_of(p);
  out.write(kCheckpointMagic, 4);
  detail::write_le<std::uint16_t>(out, kCheckpointFormatVersion);
  detail::write_le<std::uint8_t>(out, p.arch.kind == ArchitectureKind::logistic ? 0 : 1);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.dim));
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.classes));
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.arch.hidden));
  detail::write_le<std::uint64_t>(out, checkpoint.run_seed);
  detail::write_le<std::uint32_t>(out, checkpoint.epoch);
  for (double w : p.weights) {
    detail::write_le<float>(out, static_cast<float>(w));
  }
  if (!out) {
    throw std::runtime_error("failed writing checkpoint");
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[4] = {};
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kCheckpointMagic)) {
    throw std::runtime_error("not an ALCK checkpoint");
  }
  const auto version = detail::read_le<std::uint16_t>(in);
  if (version != kCheckpointFormatVersion) {
    throw std::runtime_error("unsupported ALCK version " + std::to_string(version));
  }
  const auto tag = detail::read_le<std::uint8_t>(in);
  if (tag > 1) {
    throw std::runtime_error("unknown architecture tag " + std::to_string(tag));
  }
  Checkpoint c;
  c.params.dim = detail::read_le<std::uint32_t>(in);
  c.params.classes = static_cast<int>(detail::read_le<std::uint32_t>(in));
  const std::size_t hidden = detail::read_le<std::uint32_t>(in);
  c.params.arch = tag == 0 ? Architecture{} : Architecture{ArchitectureKind::mlp, hidden};
  c.run_seed = detail::read_le<std::uint64_t>(in);
  c.epoch = detail::read_le<std::uint32_t>(in);
  c.params.weights.resize(parameter_count(c.params.arch, c.params.dim, c.params.classes));
  for (double& w : c.params.weights) {
    w = detail::read_le<float>(in);
  }
  return c;
}

}  // namespace alsubset
