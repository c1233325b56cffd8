#include "coupled/model_json.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace coupled {

using nlohmann::json;

namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(const json& v, const std::array<std::pair<const char*, Enum>, N>& table,
                const std::string& key) {
  if (!v.is_string()) throw ConfigError(key + " must be a string");
  const auto s = v.get<std::string>();
  for (const auto& [name, value] : table) {
    if (s == name) return value;
  }
  std::string options;
  for (const auto& [name, value] : table) options += std::string(options.empty() ? "" : ", ") + name;
  throw ConfigError(key + ": unknown value '" + s + "' (expected one of " + options + ")");
}

constexpr std::array<std::pair<const char*, Architecture>, 3> kArchitectures{{
    {"clstm", Architecture::clstm},
    {"nbow", Architecture::nbow},
    {"parallel_lstm", Architecture::parallel_lstm},
}};
constexpr std::array<std::pair<const char*, CellKind>, 2> kCells{{
    {"lc", CellKind::lc},
    {"tc", CellKind::tc},
}};
constexpr std::array<std::pair<const char*, HeadKind>, 2> kHeads{{
    {"ranking", HeadKind::ranking},
    {"classification", HeadKind::classification},
}};
constexpr std::array<std::pair<const char*, Activation>, 3> kActivations{{
    {"tanh", Activation::tanh},
    {"relu", Activation::relu},
    {"identity", Activation::identity},
}};

std::size_t positive(const json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(key + " must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

bool boolean(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw ConfigError(key + " must be true or false");
  return v.get<bool>();
}

constexpr char kMagic[8] = {'C', 'L', 'S', 'T', 'M', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_le(std::ostream& os, T v) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_le(std::istream& is, const std::string& what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw FormatError("checkpoint truncated while reading " + what);
  }
  return v;
}

}  // namespace

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

json model_config_to_json(const ModelConfig& cfg) {
  return json{
      {"architecture", to_string(cfg.architecture)},
      {"cell", to_string(cfg.cell)},
      {"blocks", cfg.blocks},
      {"hidden", cfg.hidden},
      {"embed_dim", cfg.embed_dim},
      {"vocab_size", cfg.vocab_size},
      {"pool", {cfg.pool.p, cfg.pool.q}},
      {"fc_width", cfg.fc_width},
      {"fc_activation", to_string(cfg.fc_activation)},
      {"head", to_string(cfg.head)},
      {"classes", cfg.classes},
      {"directions", cfg.four_directions ? "four" : "single"},
      {"lc_shared", cfg.lc_shared},
      {"parallel_shared", cfg.parallel_shared},
  };
}

ModelConfig model_config_from_json(const json& j, ModelConfig cfg) {
  reject_unknown_keys(j,
                      {"architecture", "cell", "blocks", "hidden", "embed_dim", "vocab_size",
                       "pool", "fc_width", "fc_activation", "head", "classes", "directions",
                       "lc_shared", "parallel_shared"},
                      "model");
  if (j.contains("architecture")) cfg.architecture = parse_enum(j["architecture"], kArchitectures, "model.architecture");
  if (j.contains("cell")) cfg.cell = parse_enum(j["cell"], kCells, "model.cell");
  if (j.contains("blocks")) cfg.blocks = positive(j["blocks"], "model.blocks");
  if (j.contains("hidden")) cfg.hidden = positive(j["hidden"], "model.hidden");
  if (j.contains("embed_dim")) cfg.embed_dim = positive(j["embed_dim"], "model.embed_dim");
  if (j.contains("vocab_size")) cfg.vocab_size = positive(j["vocab_size"], "model.vocab_size");
  if (j.contains("pool")) {
    const auto& p = j["pool"];
    if (!p.is_array() || p.size() != 2) throw ConfigError("model.pool must be [p, q]");
    cfg.pool = {positive(p[0], "model.pool[0]"), positive(p[1], "model.pool[1]")};
  }
  if (j.contains("fc_width")) cfg.fc_width = positive(j["fc_width"], "model.fc_width");
  if (j.contains("fc_activation")) cfg.fc_activation = parse_enum(j["fc_activation"], kActivations, "model.fc_activation");
  if (j.contains("head")) cfg.head = parse_enum(j["head"], kHeads, "model.head");
  if (j.contains("classes")) cfg.classes = positive(j["classes"], "model.classes");
  if (j.contains("directions")) {
    const auto& v = j["directions"];
    if (v == "four") cfg.four_directions = true;
    else if (v == "single") cfg.four_directions = false;
    else throw ConfigError("model.directions must be \"four\" or \"single\"");
  }
  if (j.contains("lc_shared")) cfg.lc_shared = boolean(j["lc_shared"], "model.lc_shared");
  if (j.contains("parallel_shared")) cfg.parallel_shared = boolean(j["parallel_shared"], "model.parallel_shared");
  return cfg;
}

// ---------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  Model model = checkpoint.model;
  auto registry = model.registry();
  json header{{"config", model_config_to_json(model.config())},
              {"vocabulary", checkpoint.vocabulary},
              {"tensors", json::array()}};
  for (const auto& e : registry.entries()) {
    header["tensors"].push_back(
        {{"name", e.name}, {"shape", e.tensor->shape()}, {"embedding", e.embedding}});
  }
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof kMagic);
  write_le<std::uint32_t>(os, kVersion);
  write_le<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& e : registry.entries()) {
    for (double v : e.tensor->values()) write_le<double>(os, v);
  }
  if (!os) throw InputError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw FormatError(path.string() + " is not a checkpoint (bad magic)");
  }
  const auto version = read_le<std::uint32_t>(is, "version");
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto length = read_le<std::uint64_t>(is, "header length");
  std::string text(length, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(length))) {
    throw FormatError("checkpoint truncated inside the header");
  }
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  ModelConfig cfg;
  try {
    cfg = model_config_from_json(header.at("config"));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  ModelParams params = ModelParams::zeros(cfg);
  auto registry = make_registry(params, cfg);
  const auto& tensors = header.at("tensors");
  if (tensors.size() != registry.size()) {
    throw FormatError("checkpoint lists " + std::to_string(tensors.size()) +
                      " tensors, config needs " + std::to_string(registry.size()));
  }
  for (std::size_t k = 0; k < registry.size(); ++k) {
    const auto& e = registry.entries()[k];
    const auto& t = tensors[k];
    if (t.at("name") != e.name || t.at("shape").get<Shape>() != e.tensor->shape()) {
      throw FormatError("checkpoint tensor " + std::to_string(k) + " is " +
                        t.at("name").get<std::string>() + " " +
                        shape_string(t.at("shape").get<Shape>()) + ", expected " + e.name + " " +
                        shape_string(e.tensor->shape()));
    }
    for (auto& v : e.tensor->values()) v = read_le<double>(is, e.name);
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after the last checkpoint tensor");
  }

  Checkpoint out;
  out.model = Model(cfg, std::move(params));
  out.vocabulary = header.value("vocabulary", std::vector<std::string>{});
  return out;
}

}  // namespace coupled
