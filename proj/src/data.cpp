#include "coupled/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace coupled {

namespace {

const char* const kUnkToken = "<unk>";
const char* const kPadToken = "<pad>";

std::string location(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line) + ": ";
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn fn) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    fn(line, number);
  }
}

struct RawSample {
  std::vector<std::string> x, y;
  std::size_t label = 0;
  std::vector<std::vector<std::string>> negatives;
};

std::vector<RawSample> read_classification(const std::filesystem::path& path,
                                           const TsvOptions& options) {
  std::vector<RawSample> out;
  for_each_line(path, [&](const std::string& line, std::size_t number) {
    if (line.empty()) return;
    const auto fields = split_tabs(line);
    if (fields.size() != 3) {
      throw FormatError(location(path, number) + "expected 3 tab-separated fields " +
                        "(label, sentence_x, sentence_y), got " + std::to_string(fields.size()));
    }
    const auto it = std::find(options.labels.begin(), options.labels.end(), fields[0]);
    if (it == options.labels.end()) {
      throw FormatError(location(path, number) + "unknown label '" + fields[0] + "'");
    }
    RawSample s;
    s.label = static_cast<std::size_t>(it - options.labels.begin());
    s.x = tokenize(fields[1]);
    s.y = tokenize(fields[2]);
    if (s.x.empty() || s.y.empty()) throw FormatError(location(path, number) + "empty sentence");
    out.push_back(std::move(s));
  });
  return out;
}

/// Ranking groups in order of first appearance. Groups without listed
/// negatives come back with an empty negatives list.
std::vector<RawSample> read_ranking(const std::filesystem::path& path) {
  struct Group {
    RawSample sample;
    std::size_t positives = 0;
    std::size_t first_line = 0;
  };
  std::vector<Group> groups;
  std::map<std::string, std::size_t> index;
  for_each_line(path, [&](const std::string& line, std::size_t number) {
    if (line.empty()) return;
    const auto fields = split_tabs(line);
    if (fields.size() != 4) {
      throw FormatError(location(path, number) + "expected 4 tab-separated fields " +
                        "(group_id, flag, question, answer), got " + std::to_string(fields.size()));
    }
    if (fields[1] != "0" && fields[1] != "1") {
      throw FormatError(location(path, number) + "flag must be 1 (positive) or 0, got '" +
                        fields[1] + "'");
    }
    auto question = tokenize(fields[2]);
    auto answer = tokenize(fields[3]);
    if (question.empty() || answer.empty()) {
      throw FormatError(location(path, number) + "empty sentence");
    }
    auto [it, inserted] = index.try_emplace(fields[0], groups.size());
    if (inserted) {
      groups.push_back({});
      groups.back().sample.x = question;
      groups.back().first_line = number;
    } else if (groups[it->second].sample.x != question) {
      throw FormatError(location(path, number) + "group '" + fields[0] +
                        "' changes its question");
    }
    Group& g = groups[it->second];
    if (fields[1] == "1") {
      ++g.positives;
      g.sample.y = std::move(answer);
    } else {
      g.sample.negatives.push_back(std::move(answer));
    }
  });
  std::vector<RawSample> out;
  for (auto& g : groups) {
    if (g.positives != 1) {
      throw FormatError(location(path, g.first_line) + "group needs exactly one positive answer, has " +
                        std::to_string(g.positives));
    }
    out.push_back(std::move(g.sample));
  }
  return out;
}

std::vector<RawSample> read_split(const std::filesystem::path& path, const TsvOptions& options) {
  return options.task == TaskKind::classification ? read_classification(path, options)
                                                  : read_ranking(path);
}

void add_to_vocab(Vocab& vocab, const RawSample& s) {
  for (const auto& w : s.x) vocab.add(w);
  for (const auto& w : s.y) vocab.add(w);
  for (const auto& n : s.negatives) {
    for (const auto& w : n) vocab.add(w);
  }
}

/// Encodes raw splits against a train-only vocabulary and fills missing
/// ranking negatives.
PairDataset assemble(TaskKind task, std::vector<std::string> labels,
                     const std::vector<std::vector<RawSample>>& splits, std::size_t negatives,
                     std::uint64_t seed) {
  PairDataset ds;
  ds.task = task;
  ds.labels = std::move(labels);
  if (!splits.empty()) {
    for (const auto& s : splits[0]) add_to_vocab(ds.vocab, s);
  }
  std::vector<std::size_t>* targets[] = {&ds.splits.train, &ds.splits.dev, &ds.splits.test};
  for (std::size_t k = 0; k < splits.size(); ++k) {
    std::vector<MatchSample> encoded;
    for (const auto& raw : splits[k]) {
      MatchSample s;
      s.x = ds.vocab.encode(raw.x);
      s.y = ds.vocab.encode(raw.y);
      s.label = raw.label;
      for (const auto& n : raw.negatives) s.negatives.push_back(ds.vocab.encode(n));
      encoded.push_back(std::move(s));
    }
    if (task == TaskKind::ranking) {
      std::vector<std::pair<Tokens, Tokens>> missing;
      std::vector<std::size_t> where;
      std::vector<Tokens> pool;
      for (std::size_t i = 0; i < encoded.size(); ++i) {
        pool.push_back(encoded[i].y);
        if (encoded[i].negatives.empty()) {
          missing.emplace_back(encoded[i].x, encoded[i].y);
          where.push_back(i);
        }
      }
      if (!missing.empty()) {
        auto filled = sample_negatives(missing, pool, negatives, seed + k);
        for (std::size_t i = 0; i < where.size(); ++i) {
          encoded[where[i]].negatives = std::move(filled[i].negatives);
        }
      }
    }
    for (auto& s : encoded) {
      targets[k]->push_back(ds.samples.size());
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

std::string join(const Tokens& tokens, const Vocab& vocab) {
  std::string out;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (t) out += ' ';
    out += vocab.token(tokens[t]);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

Vocab::Vocab() {
  add(kUnkToken);
  add(kPadToken);
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < 2 || tokens[kUnkId] != kUnkToken || tokens[kPadId] != kPadToken) {
    throw FormatError("vocabulary must start with the reserved <unk> and <pad> entries");
  }
  Vocab v;
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    if (v.contains(tokens[i])) throw FormatError("vocabulary repeats token '" + tokens[i] + "'");
    v.add(tokens[i]);
  }
  return v;
}

std::size_t Vocab::add(const std::string& token) {
  auto [it, inserted] = index_.try_emplace(token, tokens_.size());
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::size_t Vocab::id(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

Tokens Vocab::encode(const std::vector<std::string>& words) const {
  Tokens out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

std::vector<std::string> tokenize(std::string_view sentence) {
  std::vector<std::string> out;
  std::string current;
  for (char ch : sentence) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::string to_string(TaskKind task) {
  return task == TaskKind::ranking ? "ranking" : "classification";
}

// ---------------------------------------------------------------------------

EmbeddingTable load_embeddings(const std::filesystem::path& path, const Vocab& vocab,
                               std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  EmbeddingTable out{Tensor({vocab.size(), dim}), 0.0};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-0.1, 0.1);
  for (auto& v : out.table.values()) v = uniform(rng);

  std::vector<bool> seen(vocab.size(), false);
  std::size_t found = 0;
  std::vector<double> row;
  for_each_line(path, [&](const std::string& line, std::size_t number) {
    if (line.empty()) return;
    const std::size_t space = line.find(' ');
    if (space == 0 || space == std::string::npos) {
      throw FormatError(location(path, number) + "expected 'token v1 ... v" + std::to_string(dim) + "'");
    }
    row.clear();
    const char* p = line.data() + space;
    const char* end = line.data() + line.size();
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      double v;
      const auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc() || (next < end && *next != ' ')) {
        const char* stop = std::find(p, end, ' ');
        throw FormatError(location(path, number) + "malformed value '" + std::string(p, stop) + "'");
      }
      row.push_back(v);
      p = next;
    }
    if (row.size() != dim) {
      throw FormatError(location(path, number) + "expected " + std::to_string(dim) +
                        " values, got " + std::to_string(row.size()));
    }
    std::string token = line.substr(0, space);
    std::transform(token.begin(), token.end(), token.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (!vocab.contains(token)) return;
    const std::size_t id = vocab.id(token);
    if (seen[id]) return;
    seen[id] = true;
    ++found;
    std::copy(row.begin(), row.end(), out.table.row(id).begin());
  });
  out.coverage = static_cast<double>(found) / static_cast<double>(vocab.size());
  return out;
}

void save_embeddings(const std::filesystem::path& path, const Tensor& table, const Vocab& vocab) {
  if (table.rank() != 2 || table.dim(0) != vocab.size()) {
    throw DimensionError("embedding table " + shape_string(table.shape()) +
                         " does not match a vocabulary of " + std::to_string(vocab.size()));
  }
  std::ofstream os(path);
  if (!os) throw InputError("cannot write " + path.string());
  char buf[32];
  for (std::size_t r = 0; r < table.dim(0); ++r) {
    os << vocab.token(r);
    for (double v : table.row(r)) {
      std::snprintf(buf, sizeof buf, " %.17g", v);
      os << buf;
    }
    os << '\n';
  }
}

// ---------------------------------------------------------------------------

PairDataset load_tsv(const std::filesystem::path& train, const std::filesystem::path& dev,
                     const std::filesystem::path& test, const TsvOptions& options) {
  std::vector<std::vector<RawSample>> splits;
  splits.push_back(read_split(train, options));
  splits.push_back(dev.empty() ? std::vector<RawSample>{} : read_split(dev, options));
  splits.push_back(test.empty() ? std::vector<RawSample>{} : read_split(test, options));
  return assemble(options.task, options.task == TaskKind::classification ? options.labels
                                                                         : std::vector<std::string>{},
                  splits, options.negatives, options.seed);
}

PairDataset load_tsv(const std::filesystem::path& path, const TsvOptions& options) {
  return load_tsv(path, {}, {}, options);
}

void write_tsv(const PairDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::pair<const char*, const std::vector<std::size_t>*> files[] = {
      {"train.tsv", &ds.splits.train}, {"dev.tsv", &ds.splits.dev}, {"test.tsv", &ds.splits.test}};
  for (const auto& [name, indices] : files) {
    std::ofstream os(dir / name);
    if (!os) throw InputError("cannot write " + (dir / name).string());
    for (std::size_t i : *indices) {
      const MatchSample& s = ds.samples[i];
      if (ds.task == TaskKind::classification) {
        os << ds.labels.at(s.label) << '\t' << join(s.x, ds.vocab) << '\t' << join(s.y, ds.vocab) << '\n';
      } else {
        const std::string q = join(s.x, ds.vocab);
        os << i << "\t1\t" << q << '\t' << join(s.y, ds.vocab) << '\n';
        for (const auto& n : s.negatives) os << i << "\t0\t" << q << '\t' << join(n, ds.vocab) << '\n';
      }
    }
  }
}

// ---------------------------------------------------------------------------

std::vector<MatchSample> sample_negatives(const std::vector<std::pair<Tokens, Tokens>>& positives,
                                          const std::vector<Tokens>& pool, std::size_t k,
                                          std::uint64_t seed) {
  if (pool.size() <= k) {
    throw ConfigError("answer pool of " + std::to_string(pool.size()) +
                      " is too small to draw " + std::to_string(k) + " negatives");
  }
  std::mt19937_64 rng(seed);
  std::vector<MatchSample> out;
  out.reserve(positives.size());
  std::vector<std::size_t> candidates;
  for (const auto& [question, positive] : positives) {
    candidates.clear();
    for (std::size_t j = 0; j < pool.size(); ++j) {
      if (pool[j] != positive) candidates.push_back(j);
    }
    if (candidates.size() < k) {
      throw ConfigError("answer pool has only " + std::to_string(candidates.size()) +
                        " entries distinct from a positive; need " + std::to_string(k));
    }
    MatchSample s{question, positive, 0, {}};
    // Partial Fisher-Yates over the eligible indices.
    for (std::size_t t = 0; t < k; ++t) {
      std::uniform_int_distribution<std::size_t> pick(t, candidates.size() - 1);
      std::swap(candidates[t], candidates[pick(rng)]);
      s.negatives.push_back(pool[candidates[t]]);
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string to_string(SynthTask task) {
  switch (task) {
    case SynthTask::same_seq: return "same-seq";
    case SynthTask::contains: return "contains";
    case SynthTask::cross_match: return "cross-match";
  }
  return "?";
}

SynthTask parse_synth_task(const std::string& name) {
  for (SynthTask t : {SynthTask::same_seq, SynthTask::contains, SynthTask::cross_match}) {
    if (to_string(t) == name) return t;
  }
  throw ConfigError("unknown synthetic task '" + name + "' (expected same-seq, contains or cross-match)");
}

bool is_subsequence(const Tokens& needle, const Tokens& hay) {
  std::size_t k = 0;
  for (std::size_t t = 0; t < hay.size() && k < needle.size(); ++t) {
    if (hay[t] == needle[k]) ++k;
  }
  return k == needle.size();
}

namespace {

class SynthGenerator {
 public:
  SynthGenerator(std::uint64_t seed, const SynthOptions& o) : rng_(seed), o_(o) {}

  std::size_t uniform(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }
  std::size_t symbol() { return uniform(0, o_.alphabet - 1); }
  std::size_t other_symbol(std::size_t not_this) {
    const std::size_t s = uniform(0, o_.alphabet - 2);
    return s >= not_this ? s + 1 : s;
  }
  Tokens random_seq(std::size_t len) {
    Tokens t(len);
    for (auto& v : t) v = symbol();
    return t;
  }

  std::pair<Tokens, Tokens> same_seq(bool positive) {
    Tokens x = random_seq(uniform(o_.min_len, o_.max_len));
    Tokens y = x;
    if (!positive) {
      const std::size_t pos = uniform(0, y.size() - 1);
      y[pos] = other_symbol(y[pos]);
    }
    return {x, y};
  }

  std::pair<Tokens, Tokens> contains(bool positive) {
    while (true) {
      const std::size_t lx = uniform(o_.min_len, o_.max_len - 1);
      const std::size_t ly = uniform(lx + 1, o_.max_len);
      Tokens x = random_seq(lx);
      Tokens y = random_seq(ly);
      // Slots of Y that receive X, in order.
      std::vector<std::size_t> slots(ly);
      for (std::size_t t = 0; t < ly; ++t) slots[t] = t;
      std::shuffle(slots.begin(), slots.end(), rng_);
      slots.resize(lx);
      std::sort(slots.begin(), slots.end());
      for (std::size_t t = 0; t < lx; ++t) y[slots[t]] = x[t];
      if (positive) return {x, y};
      y = random_seq(ly);
      if (!is_subsequence(x, y)) return {x, y};
    }
  }

  std::pair<Tokens, Tokens> cross_match(bool positive) {
    const std::size_t len = uniform(o_.min_len, o_.max_len);
    Tokens symbols(o_.alphabet);
    for (std::size_t s = 0; s < symbols.size(); ++s) symbols[s] = s;
    std::shuffle(symbols.begin(), symbols.end(), rng_);
    Tokens x(symbols.begin(), symbols.begin() + static_cast<long>(len));
    Tokens y = x;
    if (positive) return {x, y};
    // A derangement: no symbol keeps its position.
    while (true) {
      std::shuffle(y.begin(), y.end(), rng_);
      bool fixed = false;
      for (std::size_t k = 0; k < len; ++k) fixed = fixed || y[k] == x[k];
      if (!fixed) return {x, y};
    }
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
  SynthOptions o_;
};

std::vector<std::string> spell(const Tokens& symbols) {
  std::vector<std::string> out;
  for (auto s : symbols) out.emplace_back(1, static_cast<char>('a' + s));
  return out;
}

}  // namespace

PairDataset synth_tasks(SynthTask task, std::size_t size, std::uint64_t seed,
                        const SynthOptions& options) {
  if (size < 40) throw ConfigError("synthetic datasets need at least 40 samples");
  if (options.min_len < kMinSentenceLength || options.max_len > kMaxSentenceLength ||
      options.min_len > options.max_len) {
    throw ConfigError("synthetic sentence lengths must satisfy " + std::to_string(kMinSentenceLength) +
                      " <= min_len <= max_len <= " + std::to_string(kMaxSentenceLength));
  }
  if (options.alphabet < 2 || options.alphabet > 26) {
    throw ConfigError("synthetic alphabet must have between 2 and 26 symbols");
  }
  if (task == SynthTask::contains && options.max_len <= options.min_len) {
    throw ConfigError("contains needs max_len > min_len so Y can be longer than X");
  }
  if (task == SynthTask::cross_match && options.alphabet < options.max_len) {
    throw ConfigError("cross-match needs an alphabet at least as large as max_len");
  }

  SynthGenerator gen(seed, options);
  std::vector<RawSample> raw(size);
  for (std::size_t s = 0; s < size; ++s) {
    const bool positive = s % 2 == 0;
    std::pair<Tokens, Tokens> pair;
    switch (task) {
      case SynthTask::same_seq: pair = gen.same_seq(positive); break;
      case SynthTask::contains: pair = gen.contains(positive); break;
      case SynthTask::cross_match: pair = gen.cross_match(positive); break;
    }
    raw[s].x = spell(pair.first);
    raw[s].y = spell(pair.second);
    raw[s].label = positive ? 1 : 0;
  }
  std::shuffle(raw.begin(), raw.end(), gen.rng());

  const std::size_t n_train = size * 8 / 10;
  const std::size_t n_dev = size / 10;
  std::vector<std::vector<RawSample>> splits(3);
  for (std::size_t s = 0; s < size; ++s) {
    const std::size_t k = s < n_train ? 0 : s < n_train + n_dev ? 1 : 2;
    splits[k].push_back(std::move(raw[s]));
  }
  return assemble(TaskKind::classification, {"0", "1"}, splits, 0, seed);
}

}  // namespace coupled
