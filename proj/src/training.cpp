#include "coupled/training.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <random>

namespace coupled {

double margin_loss(double s_pos, double s_neg) { return std::max(0.0, 1.0 - s_pos + s_neg); }

double cross_entropy(std::size_t label, const Tensor& probs) {
  if (label >= probs.size()) {
    throw DimensionError("label " + std::to_string(label) + " outside " + std::to_string(probs.size()) +
                         " classes");
  }
  return -std::log(std::max(probs[label], 1e-300));
}

double cross_entropy(const Tensor& target, const Tensor& probs) {
  if (target.size() != probs.size()) {
    throw DimensionError("cross_entropy: target " + shape_string(target.shape()) + " vs probs " +
                         shape_string(probs.shape()));
  }
  double loss = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (target[k] != 0.0) loss -= target[k] * std::log(std::max(probs[k], 1e-300));
  }
  return loss;
}

double clip(std::span<double> grad, double threshold) {
  if (!(threshold > 0.0)) throw ConfigError("clip threshold must be positive");
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm <= threshold) return 1.0;
  const double scale = threshold / norm;
  for (double& g : grad) g *= scale;
  return scale;
}

void adagrad_update(std::span<double> theta, std::span<const double> grad,
                    std::span<double> accum, double lr, double eps) {
  if (theta.size() != grad.size() || theta.size() != accum.size()) {
    throw DimensionError("adagrad_update: mismatched spans");
  }
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double g = grad[k];
    if (g == 0.0) continue;
    accum[k] += g * g;
    theta[k] -= lr * g / (std::sqrt(accum[k]) + eps);
  }
}

void OptimizerConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("optimizer.lr must be non-negative");
  if (!(l2 >= 0.0)) throw ConfigError("optimizer.l2 must be non-negative");
  if (!(clip_threshold > 0.0)) throw ConfigError("optimizer.clip must be positive");
  if (!(eps > 0.0)) throw ConfigError("optimizer.eps must be positive");
}

OptimizerState::OptimizerState(const OptimizerConfig& cfg, const ParamRegistry& params)
    : config(cfg) {
  for (const auto& e : params.entries()) accum.push_back(Tensor::zeros_like(*e.tensor));
}

namespace {

template <typename Fn>
void for_each_row(const ParamRef& e, const RowSet* rows, Fn fn) {
  if (e.embedding && rows) {
    for (std::size_t r : *rows) fn(r * e.tensor->dim(1), e.tensor->dim(1));
  } else {
    fn(std::size_t{0}, e.tensor->size());
  }
}

void check_aligned(const ParamRegistry& a, const ParamRegistry& b) {
  if (a.size() != b.size()) throw DimensionError("parameter and gradient registries differ in size");
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a.entries()[k].tensor->shape() != b.entries()[k].tensor->shape()) {
      throw DimensionError("gradient for " + a.entries()[k].name + " has the wrong shape");
    }
  }
}

}  // namespace

double clip_gradients(const ParamRegistry& grads, double threshold, const RowSet* rows) {
  if (!(threshold > 0.0)) throw ConfigError("clip threshold must be positive");
  double sq = 0.0;
  for (const auto& e : grads.entries()) {
    for_each_row(e, rows, [&](std::size_t off, std::size_t len) {
      for (double g : e.tensor->values().subspan(off, len)) sq += g * g;
    });
  }
  const double norm = std::sqrt(sq);
  if (norm <= threshold) return 1.0;
  const double scale = threshold / norm;
  for (const auto& e : grads.entries()) {
    for_each_row(e, rows, [&](std::size_t off, std::size_t len) {
      for (double& g : e.tensor->values().subspan(off, len)) g *= scale;
    });
  }
  return scale;
}

void adagrad_step(OptimizerState& state, const ParamRegistry& params, const ParamRegistry& grads,
                  const RowSet* rows) {
  check_aligned(params, grads);
  if (state.accum.size() != params.size()) {
    throw DimensionError("optimizer state does not match the parameter registry");
  }
  const auto& c = state.config;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params.entries()[k];
    const auto& g = grads.entries()[k];
    if (!p.embedding && c.l2 != 0.0) {
      kernels::axpy(2.0 * c.l2, p.tensor->values(), g.tensor->values());
    }
    for_each_row(p, rows, [&](std::size_t off, std::size_t len) {
      adagrad_update(p.tensor->values().subspan(off, len), g.tensor->values().subspan(off, len),
                     state.accum[k].values().subspan(off, len), c.lr, c.eps);
    });
  }
}

// ---------------------------------------------------------------------------

std::string format_metric(const MetricRecord& r) {
  nlohmann::json j{{"epoch", r.epoch}, {"split", r.split}, {"metric", r.metric}, {"value", r.value}};
  return j.dump();
}

namespace {

bool ranked_first(const Model& model, const MatchSample& s) {
  const double pos = model.forward(s.x, s.y)[0];
  for (const auto& n : s.negatives) {
    if (!(pos > model.forward(s.x, n)[0])) return false;
  }
  return true;
}

std::size_t argmax(const Tensor& t) {
  return static_cast<std::size_t>(std::max_element(t.values().begin(), t.values().end()) -
                                  t.values().begin());
}

void zero_grads(const ParamRegistry& grads, const RowSet& rows) {
  for (const auto& e : grads.entries()) {
    for_each_row(e, &rows, [&](std::size_t off, std::size_t len) {
      auto v = e.tensor->values().subspan(off, len);
      std::fill(v.begin(), v.end(), 0.0);
    });
  }
}

void touch(RowSet& rows, const Tokens& tokens, std::size_t vocab) {
  for (auto id : tokens) rows.push_back(id < vocab ? id : kUnkId);
}

}  // namespace

double evaluate(const Model& model, const PairDataset& dataset,
                const std::vector<std::size_t>& indices) {
  if (indices.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i : indices) {
    const MatchSample& s = dataset.samples.at(i);
    if (model.config().head == HeadKind::ranking) {
      correct += ranked_first(model, s);
    } else {
      correct += argmax(model.forward(s.x, s.y)) == s.label;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

TrainResult train(const Model& initial, const PairDataset& dataset, const TrainOptions& options) {
  options.optimizer.validate();
  const ModelConfig& cfg = initial.config();
  const bool ranking = cfg.head == HeadKind::ranking;
  if (ranking != (dataset.task == TaskKind::ranking)) {
    throw ConfigError("model head is " + to_string(cfg.head) + " but the dataset is " +
                      to_string(dataset.task));
  }
  if (dataset.splits.train.empty()) throw ConfigError("training split is empty");
  if (!ranking) {
    for (std::size_t i : dataset.splits.train) {
      if (dataset.samples[i].label >= cfg.classes) {
        throw ConfigError("sample label " + std::to_string(dataset.samples[i].label) +
                          " exceeds model.classes");
      }
    }
  }

  TrainResult result;
  result.best = initial;
  Model model = initial;
  ModelParams grads = ModelParams::zeros(cfg);
  const ParamRegistry params_reg = model.registry();
  const ParamRegistry grads_reg = make_registry(grads, cfg);
  OptimizerState state(options.optimizer, params_reg);
  const std::size_t vocab = cfg.vocab_size;

  auto emit = [&](std::size_t epoch, const char* split, const char* metric, double value) {
    result.log.push_back({epoch, split, metric, value});
    if (options.on_record) options.on_record(result.log.back());
  };

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order = dataset.splits.train;
  ForwardTrace pos_trace, neg_trace;
  RowSet rows;
  Tensor d_one({1});
  Tensor d_logits({cfg.output_width()});
  double best = -1.0;

  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total_loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t step = 0; step < order.size(); ++step) {
      const MatchSample& s = dataset.samples[order[step]];
      rows.clear();
      touch(rows, s.x, vocab);
      touch(rows, s.y, vocab);
      double loss = 0.0;
      if (ranking) {
        const double pos = model.forward(s.x, s.y, &pos_trace)[0];
        double active = 0.0;
        bool first = true;
        for (const auto& n : s.negatives) {
          const double neg = model.forward(s.x, n, &neg_trace)[0];
          first = first && pos > neg;
          const double term = margin_loss(pos, neg);
          loss += term;
          if (term > 0.0) {
            active += 1.0;
            d_one[0] = 1.0;
            model.backward(neg_trace, d_one, grads);
            touch(rows, n, vocab);
          }
        }
        correct += first;
        if (active > 0.0) {
          d_one[0] = -active;
          model.backward(pos_trace, d_one, grads);
        }
      } else {
        const Tensor probs = model.forward(s.x, s.y, &pos_trace);
        loss = cross_entropy(s.label, probs);
        correct += argmax(probs) == s.label;
        for (std::size_t k = 0; k < probs.size(); ++k) {
          d_logits[k] = probs[k] - (k == s.label ? 1.0 : 0.0);
        }
        model.backward(pos_trace, d_logits, grads);
      }
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step + 1) + " (sample " + std::to_string(order[step]) + ")");
      }
      total_loss += loss;
      std::sort(rows.begin(), rows.end());
      rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
      clip_gradients(grads_reg, options.optimizer.clip_threshold, &rows);
      adagrad_step(state, params_reg, grads_reg, &rows);
      zero_grads(grads_reg, rows);
    }
    const double n = static_cast<double>(order.size());
    emit(epoch, "train", "loss", total_loss / n);
    emit(epoch, "train", ranking ? "p@1" : "accuracy", static_cast<double>(correct) / n);

    if (!dataset.splits.dev.empty()) {
      const double dev = evaluate(model, dataset, dataset.splits.dev);
      emit(epoch, "dev", ranking ? "p@1" : "accuracy", dev);
      if (dev > best) {
        best = dev;
        result.best = model;
        result.best_epoch = epoch;
        result.best_dev = dev;
      }
    } else {
      result.best = model;
    }
  }
  if (!dataset.splits.test.empty()) {
    emit(result.best_epoch, "test", ranking ? "p@1" : "accuracy",
         evaluate(result.best, dataset, dataset.splits.test));
  }
  return result;
}

std::vector<GridPoint> grid_search(const Model& initial, const PairDataset& dataset,
                                   const TrainOptions& base, const std::vector<double>& lrs,
                                   const std::vector<double>& l2s, const std::vector<double>& clips) {
  std::vector<GridPoint> out;
  for (double lr : lrs) {
    for (double l2 : l2s) {
      for (double c : clips) {
        TrainOptions o = base;
        o.optimizer.lr = lr;
        o.optimizer.l2 = l2;
        o.optimizer.clip_threshold = c;
        const TrainResult r = train(initial, dataset, o);
        out.push_back({o.optimizer, r.best_dev, r.best_epoch});
      }
    }
  }
  return out;
}

}  // namespace coupled
