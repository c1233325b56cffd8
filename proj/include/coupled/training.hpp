#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "coupled/data.hpp"
#include "coupled/model.hpp"

namespace coupled {

/// max(0, 1 - s_pos + s_neg)
double margin_loss(double s_pos, double s_neg);

/// -log(probs[label]), with probabilities clamped at 1e-300.
double cross_entropy(std::size_t label, const Tensor& probs);
/// -sum_j target_j log(probs_j) for a one-hot (or any) target.
double cross_entropy(const Tensor& target, const Tensor& probs);

/// Scales `grad` in place so its L2 norm is at most `threshold`. Returns the
/// factor applied (1 when unchanged).
double clip(std::span<double> grad, double threshold);

/// Single-tensor AdaGrad update. `grad` must already include any penalty.
void adagrad_update(std::span<double> theta, std::span<const double> grad,
                    std::span<double> accum, double lr, double eps);

struct OptimizerConfig {
  double lr = 0.005;
  double l2 = 1e-5;
  double clip_threshold = 10.0;
  double eps = 1e-8;

  void validate() const;
};

struct OptimizerState {
  OptimizerConfig config;
  std::vector<Tensor> accum;  // parallel to the parameter registry

  OptimizerState() = default;
  OptimizerState(const OptimizerConfig& config, const ParamRegistry& params);
};

/// Rows of the embedding table a step touched. Embedding gradients outside
/// these rows are known to be zero and are skipped.
using RowSet = std::vector<std::size_t>;

/// Global-norm clipping across every registry tensor. Returns the factor
/// applied.
double clip_gradients(const ParamRegistry& grads, double threshold, const RowSet* rows = nullptr);

/// One AdaGrad step. Non-embedding gradients get 2*l2*theta added first;
/// embeddings are not regularized.
void adagrad_step(OptimizerState& state, const ParamRegistry& params, const ParamRegistry& grads,
                  const RowSet* rows = nullptr);

// ---------------------------------------------------------------------------

struct MetricRecord {
  std::size_t epoch;
  std::string split;
  std::string metric;
  double value;
};

/// One JSON object per line: {"epoch", "split", "metric", "value"}.
std::string format_metric(const MetricRecord& record);

struct TrainOptions {
  OptimizerConfig optimizer;
  std::size_t epochs = 20;
  std::uint64_t seed = 1;
  /// Called for every record as soon as it is produced.
  std::function<void(const MetricRecord&)> on_record;
};

struct TrainResult {
  Model best;
  std::size_t best_epoch = 0;  // 0 when no dev split exists
  double best_dev = 0.0;
  std::vector<MetricRecord> log;
};

/// Accuracy for classification, P@1 for ranking (the positive must score
/// strictly above every negative).
double evaluate(const Model& model, const PairDataset& dataset,
                const std::vector<std::size_t>& indices);

/// Shuffled per-example SGD with AdaGrad. After each epoch the dev metric
/// is logged; the parameters of the best dev epoch (earliest on ties) are
/// returned and scored on test. Throws NumericError on a non-finite loss.
TrainResult train(const Model& initial, const PairDataset& dataset, const TrainOptions& options);

struct GridPoint {
  OptimizerConfig optimizer;
  double best_dev;
  std::size_t best_epoch;
};

/// Trains once per (lr, l2, clip) combination from the same initial model.
std::vector<GridPoint> grid_search(const Model& initial, const PairDataset& dataset,
                                   const TrainOptions& base, const std::vector<double>& lrs,
                                   const std::vector<double>& l2s, const std::vector<double>& clips);

}  // namespace coupled
