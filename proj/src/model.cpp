#include "coupled/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace coupled {

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::clstm: return "clstm";
    case Architecture::nbow: return "nbow";
    case Architecture::parallel_lstm: return "parallel_lstm";
  }
  return "?";
}

std::string to_string(HeadKind h) {
  return h == HeadKind::ranking ? "ranking" : "classification";
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
  }
  return "?";
}

std::size_t ModelConfig::feature_width() const {
  switch (architecture) {
    case Architecture::clstm: return pool.p * pool.q * hidden;
    case Architecture::nbow: return 2 * embed_dim;
    case Architecture::parallel_lstm: return 2 * hidden;
  }
  return 0;
}

void ModelConfig::validate() const {
  if (blocks < 1) throw ConfigError("model.blocks must be at least 1");
  if (hidden < 1) throw ConfigError("model.hidden must be at least 1");
  if (embed_dim < 1) throw ConfigError("model.embed_dim must be at least 1");
  if (vocab_size < 2) throw ConfigError("model.vocab_size must cover the reserved UNK and PAD ids");
  if (pool.p < 1 || pool.q < 1) throw ConfigError("model.pool entries must be at least 1");
  if (head == HeadKind::classification && classes < 2) {
    throw ConfigError("classification needs at least 2 classes");
  }
}

// ---------------------------------------------------------------------------

ModelParams ModelParams::zeros(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams p;
  const std::size_t d = cfg.hidden;
  const std::size_t e = cfg.embed_dim;
  p.embedding = Tensor({cfg.vocab_size, e});
  switch (cfg.architecture) {
    case Architecture::clstm:
      for (std::size_t b = 0; b < cfg.blocks; ++b) {
        if (cfg.cell == CellKind::tc) {
          p.blocks.emplace_back(TcParams::zeros(b == 0 ? 2 * e : d, d));
        } else {
          p.blocks.emplace_back(LcParams::zeros(b == 0 ? e : d, d, cfg.lc_shared));
        }
      }
      break;
    case Architecture::parallel_lstm:
      p.encoder_x = LstmParams::zeros(e, d);
      if (!cfg.parallel_shared) p.encoder_y = LstmParams::zeros(e, d);
      break;
    case Architecture::nbow:
      break;
  }
  const std::size_t fc = cfg.effective_fc_width();
  p.fc_weight = Tensor({fc, cfg.feature_width()});
  p.fc_bias = Tensor({fc});
  p.out_weight = Tensor({cfg.output_width(), fc});
  p.out_bias = Tensor({cfg.output_width()});
  return p;
}

void ParamRegistry::add(std::string name, Tensor& tensor, bool embedding) {
  if (find(name)) throw ConfigError("duplicate parameter name " + name);
  entries_.push_back({std::move(name), &tensor, embedding});
}

const ParamRef* ParamRegistry::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

ParamRegistry make_registry(ModelParams& params, const ModelConfig& cfg) {
  ParamRegistry r;
  r.add("embedding", params.embedding, true);
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    const std::string prefix = "block" + std::to_string(b + 1) + ".";
    if (auto* tc = std::get_if<TcParams>(&params.blocks[b])) {
      r.add(prefix + "tc.weight", tc->weight, false);
      r.add(prefix + "tc.bias", tc->bias, false);
    } else {
      auto& lc = std::get<LcParams>(params.blocks[b]);
      r.add(prefix + "lstm1.weight", lc.lstm1.weight, false);
      r.add(prefix + "lstm1.bias", lc.lstm1.bias, false);
      if (!lc.shared) {
        r.add(prefix + "lstm2.weight", lc.lstm2.weight, false);
        r.add(prefix + "lstm2.bias", lc.lstm2.bias, false);
      }
    }
  }
  if (cfg.architecture == Architecture::parallel_lstm) {
    r.add("encoder_x.weight", params.encoder_x.weight, false);
    r.add("encoder_x.bias", params.encoder_x.bias, false);
    if (!cfg.parallel_shared) {
      r.add("encoder_y.weight", params.encoder_y.weight, false);
      r.add("encoder_y.bias", params.encoder_y.bias, false);
    }
  }
  r.add("fc.weight", params.fc_weight, false);
  r.add("fc.bias", params.fc_bias, false);
  r.add("output.weight", params.out_weight, false);
  r.add("output.bias", params.out_bias, false);
  return r;
}

std::size_t count_params(const ParamRegistry& registry, bool include_embeddings) {
  std::size_t total = 0;
  for (const auto& e : registry.entries()) {
    if (e.embedding && !include_embeddings) continue;
    total += e.tensor->size();
  }
  return total;
}

std::size_t core_param_count(const ModelConfig& cfg) {
  ModelParams p = ModelParams::zeros(cfg);
  std::size_t total = 0;
  for (const auto& b : p.blocks) total += param_count(b);
  if (cfg.architecture == Architecture::parallel_lstm) {
    total += p.encoder_x.param_count();
    if (!cfg.parallel_shared) total += p.encoder_y.param_count();
  }
  return total;
}

// ---------------------------------------------------------------------------

Tensor embed(const Tokens& tokens, const Tensor& embedding) {
  if (tokens.empty()) throw InputError("cannot embed an empty sentence");
  const std::size_t vocab = embedding.dim(0);
  const std::size_t e = embedding.dim(1);
  Tensor out({tokens.size(), e});
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const std::size_t id = tokens[t] < vocab ? tokens[t] : kUnkId;
    std::copy_n(embedding.row(id).begin(), e, out.row(t).begin());
  }
  return out;
}

Tensor softmax(const Tensor& logits) {
  Tensor out(logits.shape());
  const double top = *std::max_element(logits.values().begin(), logits.values().end());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - top);
    total += out[k];
  }
  for (std::size_t k = 0; k < logits.size(); ++k) out[k] /= total;
  return out;
}

namespace {

double activate(Activation a, double v) {
  switch (a) {
    case Activation::tanh: return std::tanh(v);
    case Activation::relu: return v > 0 ? v : 0.0;
    case Activation::identity: return v;
  }
  return v;
}

/// Derivative expressed through the activation's output.
double activate_grad(Activation a, double out) {
  switch (a) {
    case Activation::tanh: return 1.0 - out * out;
    case Activation::relu: return out > 0 ? 1.0 : 0.0;
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

/// Runs an LSTM over the rows of `seq` from zero state; returns the last h.
Tensor run_encoder(const LstmParams& p, const Tensor& seq, std::vector<GateTrace>& traces) {
  const std::size_t d = p.hidden();
  traces.resize(seq.dim(0));
  std::vector<double> h(d, 0.0), c(d, 0.0), h_next(d), c_next(d);
  for (std::size_t t = 0; t < seq.dim(0); ++t) {
    auto& tr = traces[t];
    tr.input.assign(seq.row(t).begin(), seq.row(t).end());
    tr.input.insert(tr.input.end(), h.begin(), h.end());
    detail::gated_forward(p.weight, p.bias, 1, c, h_next, c_next, tr);
    h.swap(h_next);
    c.swap(c_next);
  }
  return Tensor({d}, h);
}

void encoder_backward(const LstmParams& p, const std::vector<GateTrace>& traces,
                      std::span<const double> d_last, LstmParams& grads, Tensor& d_seq) {
  const std::size_t d = p.hidden();
  const std::size_t w = p.input_width();
  std::vector<double> dh(d_last.begin(), d_last.end()), dc(d, 0.0);
  std::vector<double> d_in(p.in_dim()), dc_prev(d);
  for (std::size_t t = traces.size(); t-- > 0;) {
    detail::gated_backward(p.weight, 1, traces[t], dh, dc, grads.weight, grads.bias, d_in,
                           dc_prev);
    kernels::axpy(1.0, std::span<const double>(d_in).subspan(0, w), d_seq.row(t));
    std::copy_n(d_in.begin() + w, d, dh.begin());
    dc.swap(dc_prev);
  }
}

void add_embedding_grad(const Tokens& tokens, const Tensor& d_emb, Tensor& d_table) {
  const std::size_t vocab = d_table.dim(0);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const std::size_t id = tokens[t] < vocab ? tokens[t] : kUnkId;
    kernels::axpy(1.0, d_emb.row(t), d_table.row(id));
  }
}

}  // namespace

Model::Model(ModelConfig cfg, ModelParams params) : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  ModelParams expected = ModelParams::zeros(cfg_);
  auto want = make_registry(expected, cfg_);
  auto have = make_registry(params_, cfg_);
  if (want.size() != have.size() || params_.blocks.size() != expected.blocks.size()) {
    throw ConfigError("parameter set does not match the model configuration");
  }
  for (std::size_t b = 0; b < expected.blocks.size(); ++b) {
    if (kind_of(params_.blocks[b]) != kind_of(expected.blocks[b])) {
      throw ConfigError("block " + std::to_string(b + 1) + " has the wrong cell kind");
    }
  }
  for (std::size_t k = 0; k < want.size(); ++k) {
    const auto& w = want.entries()[k];
    const auto& h = have.entries()[k];
    if (w.tensor->shape() != h.tensor->shape()) {
      throw DimensionError("parameter " + w.name + " has shape " +
                           shape_string(h.tensor->shape()) + ", config needs " +
                           shape_string(w.tensor->shape()));
    }
  }
}

Model Model::initialize(const ModelConfig& cfg, std::uint64_t seed, double scale,
                        std::optional<double> embed_scale) {
  ModelParams params = ModelParams::zeros(cfg);
  std::mt19937_64 rng(seed);
  const double es = embed_scale.value_or(scale);
  const ParamRegistry registry = make_registry(params, cfg);
  for (const auto& entry : registry.entries()) {
    std::uniform_real_distribution<double> uniform(entry.embedding ? -es : -scale, entry.embedding ? es : scale);
    for (auto& v : entry.tensor->values()) v = uniform(rng);
  }
  return Model(cfg, std::move(params));
}

Tensor Model::forward(const Tokens& x, const Tokens& y, ForwardTrace* trace) const {
  ForwardTrace local;
  ForwardTrace& t = trace ? *trace : local;
  t.x_tokens = x;
  t.y_tokens = y;
  t.x_emb = embed(x, params_.embedding);
  t.y_emb = embed(y, params_.embedding);

  switch (cfg_.architecture) {
    case Architecture::clstm: {
      t.grid = stacked_forward(params_.blocks, cfg_.four_directions, t.x_emb, t.y_emb, &t.stack);
      t.pooled = dynamic_pool(t.grid, cfg_.pool);
      t.features = Tensor({cfg_.feature_width()}, std::vector<double>(t.pooled.values.values().begin(),
                                                                       t.pooled.values.values().end()));
      break;
    }
    case Architecture::nbow: {
      const std::size_t e = cfg_.embed_dim;
      t.features = Tensor({2 * e});
      for (std::size_t r = 0; r < x.size(); ++r) {
        kernels::axpy(1.0, t.x_emb.row(r), t.features.values().subspan(0, e));
      }
      for (std::size_t r = 0; r < y.size(); ++r) {
        kernels::axpy(1.0, t.y_emb.row(r), t.features.values().subspan(e, e));
      }
      break;
    }
    case Architecture::parallel_lstm: {
      const LstmParams& ey = cfg_.parallel_shared ? params_.encoder_x : params_.encoder_y;
      const Tensor hx = run_encoder(params_.encoder_x, t.x_emb, t.enc_x);
      const Tensor hy = run_encoder(ey, t.y_emb, t.enc_y);
      const std::size_t d = cfg_.hidden;
      t.features = Tensor({2 * d});
      std::copy_n(hx.data(), d, t.features.data());
      std::copy_n(hy.data(), d, t.features.data() + d);
      break;
    }
  }

  t.fc_out = matvec(params_.fc_weight, t.features);
  for (std::size_t k = 0; k < t.fc_out.size(); ++k) {
    t.fc_out[k] = activate(cfg_.fc_activation, t.fc_out[k] + params_.fc_bias[k]);
  }
  t.logits = add(matvec(params_.out_weight, t.fc_out), params_.out_bias);
  t.output = cfg_.head == HeadKind::classification ? softmax(t.logits) : t.logits;
  return t.output;
}

void Model::backward(const ForwardTrace& t, const Tensor& d_logits, ModelParams& grads) const {
  if (d_logits.size() != cfg_.output_width()) {
    throw DimensionError("backward: head gradient has " + std::to_string(d_logits.size()) +
                         " entries, head has " + std::to_string(cfg_.output_width()));
  }
  const std::size_t fc = cfg_.effective_fc_width();
  const std::size_t feat = cfg_.feature_width();

  kernels::outer_add(d_logits.values(), t.fc_out.values(), grads.out_weight.values());
  kernels::axpy(1.0, d_logits.values(), grads.out_bias.values());
  std::vector<double> d_fc(fc, 0.0);
  kernels::gemv_t_add(params_.out_weight.values(), cfg_.output_width(), fc, d_logits.values(), d_fc);
  for (std::size_t k = 0; k < fc; ++k) d_fc[k] *= activate_grad(cfg_.fc_activation, t.fc_out[k]);

  kernels::outer_add(d_fc, t.features.values(), grads.fc_weight.values());
  kernels::axpy(1.0, d_fc, grads.fc_bias.values());
  Tensor d_features({feat});
  kernels::gemv_t_add(params_.fc_weight.values(), fc, feat, d_fc, d_features.values());

  Tensor dx = Tensor::zeros_like(t.x_emb);
  Tensor dy = Tensor::zeros_like(t.y_emb);
  switch (cfg_.architecture) {
    case Architecture::clstm: {
      GridTensor d_grid(t.grid.n(), t.grid.m(), t.grid.d());
      dynamic_pool_backward(t.pooled, d_features, d_grid);
      stacked_backward(params_.blocks, t.x_emb, t.y_emb, t.stack, d_grid, grads.blocks, dx, dy);
      break;
    }
    case Architecture::nbow: {
      const std::size_t e = cfg_.embed_dim;
      for (std::size_t r = 0; r < dx.dim(0); ++r) {
        kernels::axpy(1.0, d_features.values().subspan(0, e), dx.row(r));
      }
      for (std::size_t r = 0; r < dy.dim(0); ++r) {
        kernels::axpy(1.0, d_features.values().subspan(e, e), dy.row(r));
      }
      break;
    }
    case Architecture::parallel_lstm: {
      const std::size_t d = cfg_.hidden;
      const auto df = d_features.values();
      encoder_backward(params_.encoder_x, t.enc_x, df.subspan(0, d), grads.encoder_x, dx);
      if (cfg_.parallel_shared) {
        encoder_backward(params_.encoder_x, t.enc_y, df.subspan(d, d), grads.encoder_x, dy);
      } else {
        encoder_backward(params_.encoder_y, t.enc_y, df.subspan(d, d), grads.encoder_y, dy);
      }
      break;
    }
  }
  add_embedding_grad(t.x_tokens, dx, grads.embedding);
  add_embedding_grad(t.y_tokens, dy, grads.embedding);
}

GridTensor Model::encode(const Tokens& x, const Tokens& y) const {
  if (cfg_.architecture != Architecture::clstm) {
    throw ConfigError("only C-LSTM models expose an interaction grid");
  }
  const Tensor xe = embed(x, params_.embedding);
  const Tensor ye = embed(y, params_.embedding);
  return stacked_forward(params_.blocks, cfg_.four_directions, xe, ye);
}

// ---------------------------------------------------------------------------

std::vector<ReferenceCount> reference_counts() {
  struct Row {
    const char* label;
    CellKind cell;
    std::size_t blocks;
    double reference;
  };
  // Reference totals for the sentence-entailment setup: k = 50, 100d
  // embeddings, 3 classes, (1, 1) pooling.
  const Row rows[] = {
      {"LC-LSTMs", CellKind::lc, 1, 45'000},
      {"TC-LSTMs", CellKind::tc, 1, 77'500},
      {"four stacked LC-LSTMs", CellKind::lc, 4, 135'000},
      {"four stacked TC-LSTMs", CellKind::tc, 4, 190'000},
  };
  std::vector<ReferenceCount> out;
  for (const auto& row : rows) {
    ModelConfig cfg;
    cfg.architecture = Architecture::clstm;
    cfg.cell = row.cell;
    cfg.blocks = row.blocks;
    cfg.hidden = 50;
    cfg.embed_dim = 100;
    cfg.head = HeadKind::classification;
    cfg.classes = 3;
    cfg.pool = {1, 1};
    ModelParams p = ModelParams::zeros(cfg);
    const std::size_t total = count_params(make_registry(p, cfg), false);
    out.push_back({row.label, cfg, row.reference, core_param_count(cfg), total,
                   (static_cast<double>(total) - row.reference) / row.reference});
  }
  return out;
}

}  // namespace coupled
