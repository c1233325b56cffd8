#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "coupled/cells.hpp"
#include "coupled/grid.hpp"
#include "coupled/pooling.hpp"
#include "coupled/tensor.hpp"
#include "coupled/tokens.hpp"

namespace coupled {

enum class Architecture { clstm, nbow, parallel_lstm };
enum class HeadKind { ranking, classification };
enum class Activation { tanh, relu, identity };

std::string to_string(Architecture a);
std::string to_string(HeadKind h);
std::string to_string(Activation a);

struct ModelConfig {
  Architecture architecture = Architecture::clstm;
  CellKind cell = CellKind::tc;
  std::size_t blocks = 1;
  std::size_t hidden = 50;
  std::size_t embed_dim = 100;
  std::size_t vocab_size = 2;
  PoolSpec pool{1, 1};
  /// Width of the fully-connected layer; 0 means "same as hidden".
  std::size_t fc_width = 0;
  Activation fc_activation = Activation::tanh;
  HeadKind head = HeadKind::classification;
  std::size_t classes = 3;
  bool four_directions = true;
  bool lc_shared = true;
  bool parallel_shared = false;

  std::size_t effective_fc_width() const { return fc_width ? fc_width : hidden; }
  /// Width of the vector fed to the fully-connected layer.
  std::size_t feature_width() const;
  std::size_t output_width() const { return head == HeadKind::ranking ? 1 : classes; }
  /// Throws ConfigError on an invalid combination.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ModelParams {
  Tensor embedding;                // [V x embed_dim]
  std::vector<BlockParams> blocks;  // clstm
  LstmParams encoder_x;            // parallel_lstm
  LstmParams encoder_y;            // parallel_lstm, empty when shared
  Tensor fc_weight;                // [fc x feature]
  Tensor fc_bias;                  // [fc]
  Tensor out_weight;               // [1 or C x fc]
  Tensor out_bias;                 // [1 or C]

  /// Zero-filled parameters laid out for `cfg`.
  static ModelParams zeros(const ModelConfig& cfg);

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct ParamRef {
  std::string name;
  Tensor* tensor;
  bool embedding;
};

/// Named view over every trainable tensor of a parameter set, in a stable
/// order.
class ParamRegistry {
 public:
  /// Throws ConfigError on a duplicate name.
  void add(std::string name, Tensor& tensor, bool embedding);

  const std::vector<ParamRef>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const ParamRef* find(const std::string& name) const;

 private:
  std::vector<ParamRef> entries_;
};

ParamRegistry make_registry(ModelParams& params, const ModelConfig& cfg);

/// Total element count, optionally skipping embedding tensors.
std::size_t count_params(const ParamRegistry& registry, bool include_embeddings);

/// Parameters of the recurrent core alone (blocks or encoders).
std::size_t core_param_count(const ModelConfig& cfg);

/// Activations cached by one forward pass.
struct ForwardTrace {
  Tokens x_tokens, y_tokens;
  Tensor x_emb, y_emb;
  StackTrace stack;
  GridTensor grid;
  PoolResult pooled;
  std::vector<GateTrace> enc_x, enc_y;
  Tensor features;
  Tensor fc_out;
  Tensor logits;
  Tensor output;
};

Tensor embed(const Tokens& tokens, const Tensor& embedding);
Tensor softmax(const Tensor& logits);

class Model {
 public:
  Model() = default;
  Model(ModelConfig cfg, ModelParams params);

  /// Fresh model with every tensor drawn uniformly from [-scale, scale];
  /// the embedding table uses `embed_scale` when given.
  static Model initialize(const ModelConfig& cfg, std::uint64_t seed, double scale = 0.1,
                          std::optional<double> embed_scale = std::nullopt);

  const ModelConfig& config() const { return cfg_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }
  ParamRegistry registry() { return make_registry(params_, cfg_); }

  /// Ranking head: one score. Classification head: class probabilities.
  /// Throws InputError on an empty sentence.
  Tensor forward(const Tokens& x, const Tokens& y, ForwardTrace* trace = nullptr) const;

  /// Backward from the gradient of the head's pre-softmax logits (the score
  /// itself for ranking). Adds into `grads`.
  void backward(const ForwardTrace& trace, const Tensor& d_logits, ModelParams& grads) const;

  /// Final aggregated n x m x d grid of the C-LSTM encoder.
  GridTensor encode(const Tokens& x, const Tokens& y) const;

  friend bool operator==(const Model&, const Model&) = default;

 private:
  ModelConfig cfg_;
  ModelParams params_;
};

/// One of the four stacked/unstacked configurations reported with
/// reference parameter counts (word embeddings excluded).
struct ReferenceCount {
  std::string label;
  ModelConfig config;
  double reference;
  std::size_t core;
  std::size_t total;
  double deviation;  // (total - reference) / reference
};

std::vector<ReferenceCount> reference_counts();

// ---------------------------------------------------------------------------
// Checkpoints.

struct Checkpoint {
  Model model;
  std::vector<std::string> vocabulary;  // id -> token, may be empty

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Layout: 8-byte magic "CLSTMCKP", u32 version, u64 header length, a JSON
/// header {config, vocabulary, tensors: [{name, shape, embedding}]}, then each
/// tensor's doubles as little-endian IEEE-754 in header order.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace coupled
