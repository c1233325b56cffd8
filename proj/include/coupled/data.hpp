#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "coupled/tensor.hpp"
#include "coupled/tokens.hpp"

namespace coupled {

/// Token <-> id map. Ids 0 and 1 are reserved for "<unk>" and "<pad>".
class Vocab {
 public:
  Vocab();

  /// Restores a vocabulary from its id -> token list. Throws FormatError if
  /// the reserved entries are missing or a token repeats.
  static Vocab from_tokens(const std::vector<std::string>& tokens);

  /// Returns the id of `token`, inserting it if new.
  std::size_t add(const std::string& token);
  /// Id of `token`, or kUnkId when unknown.
  std::size_t id(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  Tokens encode(const std::vector<std::string>& words) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Whitespace split and ASCII lowercasing.
std::vector<std::string> tokenize(std::string_view sentence);

enum class TaskKind { classification, ranking };

std::string to_string(TaskKind task);

/// One sentence pair. For classification `label` is the class index; for
/// ranking `y` is the positive answer and `negatives` the wrong candidates.
struct MatchSample {
  Tokens x;
  Tokens y;
  std::size_t label = 0;
  std::vector<Tokens> negatives;

  friend bool operator==(const MatchSample&, const MatchSample&) = default;
};

struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> dev;
  std::vector<std::size_t> test;

  friend bool operator==(const Splits&, const Splits&) = default;
};

struct PairDataset {
  TaskKind task = TaskKind::classification;
  Vocab vocab;
  std::vector<std::string> labels;  // class names, classification only
  std::vector<MatchSample> samples;
  Splits splits;
};

// ---------------------------------------------------------------------------
// Pretrained embeddings (GloVe text format: "token v1 ... v_dim" per line).

struct EmbeddingTable {
  Tensor table;     // [V x dim]
  double coverage;  // fraction of vocabulary rows read from the file
};

/// Rows of vocabulary tokens present in the file take the file's values
/// (file tokens are lowercased; the first occurrence wins). Every other row
/// is drawn uniformly from [-0.1, 0.1]. Throws FormatError naming the line on
/// a malformed value or a dimension different from `dim`.
EmbeddingTable load_embeddings(const std::filesystem::path& path, const Vocab& vocab,
                               std::size_t dim, std::uint64_t seed);

/// Writes every row of `table` in GloVe text format with round-trip
/// precision.
void save_embeddings(const std::filesystem::path& path, const Tensor& table, const Vocab& vocab);

// ---------------------------------------------------------------------------
// TSV datasets.
//
// classification: label<TAB>sentence_x<TAB>sentence_y
// ranking:        group_id<TAB>flag<TAB>question<TAB>answer  (flag 1 = positive)

struct TsvOptions {
  TaskKind task = TaskKind::classification;
  /// Accepted class names, in class-index order.
  std::vector<std::string> labels = {"0", "1"};
  /// Ranking groups listed without negatives get this many sampled ones.
  std::size_t negatives = 4;
  std::uint64_t seed = 1;
};

/// Loads train/dev/test files; the vocabulary is built from the train file
/// only. Empty `dev`/`test` paths leave those splits empty.
PairDataset load_tsv(const std::filesystem::path& train, const std::filesystem::path& dev,
                     const std::filesystem::path& test, const TsvOptions& options);

/// Single-file form: everything lands in the train split.
PairDataset load_tsv(const std::filesystem::path& path, const TsvOptions& options);

/// Writes train.tsv, dev.tsv and test.tsv under `dir`.
void write_tsv(const PairDataset& dataset, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------

/// Pairs each (question, positive) with `k` distinct pool entries that
/// differ from its positive, drawn uniformly. Throws ConfigError when the
/// pool cannot supply `k` such entries.
std::vector<MatchSample> sample_negatives(const std::vector<std::pair<Tokens, Tokens>>& positives,
                                          const std::vector<Tokens>& pool, std::size_t k,
                                          std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic desk-scale matching tasks over a small symbol alphabet.
//
//   same-seq     Y copies X (label 1) or copies it with one symbol
//                substituted (label 0).
//   contains     label 1 iff the symbols of X occur in order inside the
//                longer Y; negatives are random strings that do not.
//   cross-match  X has distinct symbols and Y is a permutation of X: X itself
//                (label 1) or a derangement, where no symbol keeps its
//                position (label 0). Both bags of words are identical and
//                each sentence alone is uniformly distributed, so only a
//                position-aligned comparison helps.
//
// Labels are exactly balanced and samples are split 8:1:1.

enum class SynthTask { same_seq, contains, cross_match };

std::string to_string(SynthTask task);
SynthTask parse_synth_task(const std::string& name);

struct SynthOptions {
  std::size_t min_len = 4;
  std::size_t max_len = 8;
  std::size_t alphabet = 8;
};

/// Length bounds every generated sentence must respect.
inline constexpr std::size_t kMinSentenceLength = 4;
inline constexpr std::size_t kMaxSentenceLength = 30;

PairDataset synth_tasks(SynthTask task, std::size_t size, std::uint64_t seed,
                        const SynthOptions& options = {});

/// True when `needle` occurs in order (not necessarily contiguously) in `hay`.
bool is_subsequence(const Tokens& needle, const Tokens& hay);

}  // namespace coupled
