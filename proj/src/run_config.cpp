#include "coupled/run_config.hpp"

#include <fstream>

#include "coupled/model_json.hpp"

namespace coupled {

using nlohmann::json;

namespace {

double real(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError(key + " must be a number");
  return v.get<double>();
}

std::size_t count(const json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(key + " must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::string text(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError(key + " must be a string");
  return v.get<std::string>();
}

bool flag(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw ConfigError(key + " must be true or false");
  return v.get<bool>();
}

template <typename T, typename Fn>
std::vector<T> list(const json& v, const std::string& key, Fn item) {
  if (!v.is_array() || v.empty()) throw ConfigError(key + " must be a non-empty array");
  std::vector<T> out;
  for (std::size_t k = 0; k < v.size(); ++k) out.push_back(item(v[k], key + "[" + std::to_string(k) + "]"));
  return out;
}

CellKind cell_kind(const json& v, const std::string& key) {
  const auto s = text(v, key);
  if (s == "lc") return CellKind::lc;
  if (s == "tc") return CellKind::tc;
  throw ConfigError(key + " must be \"lc\" or \"tc\"");
}

HeadKind head_kind(const json& v, const std::string& key) {
  const auto s = text(v, key);
  if (s == "ranking") return HeadKind::ranking;
  if (s == "classification") return HeadKind::classification;
  throw ConfigError(key + " must be \"ranking\" or \"classification\"");
}

SynthConfig synth_from_json(const json& j) {
  reject_unknown_keys(j, {"task", "size", "seed", "min_len", "max_len", "alphabet"}, "data.synth");
  SynthConfig s;
  if (j.contains("task")) s.task = parse_synth_task(text(j["task"], "data.synth.task"));
  if (j.contains("size")) s.size = count(j["size"], "data.synth.size");
  if (j.contains("seed")) s.seed = count(j["seed"], "data.synth.seed");
  if (j.contains("min_len")) s.options.min_len = count(j["min_len"], "data.synth.min_len");
  if (j.contains("max_len")) s.options.max_len = count(j["max_len"], "data.synth.max_len");
  if (j.contains("alphabet")) s.options.alphabet = count(j["alphabet"], "data.synth.alphabet");
  return s;
}

DataConfig data_from_json(const json& j) {
  reject_unknown_keys(j, {"train", "dev", "test", "labels", "negatives", "embeddings", "synth"}, "data");
  DataConfig d;
  if (j.contains("train")) d.train = text(j["train"], "data.train");
  if (j.contains("dev")) d.dev = text(j["dev"], "data.dev");
  if (j.contains("test")) d.test = text(j["test"], "data.test");
  if (j.contains("labels")) d.labels = list<std::string>(j["labels"], "data.labels", text);
  if (j.contains("negatives")) d.negatives = count(j["negatives"], "data.negatives");
  if (j.contains("embeddings")) d.embeddings = text(j["embeddings"], "data.embeddings");
  if (j.contains("synth")) d.synth = synth_from_json(j["synth"]);
  if (d.synth && !d.train.empty()) throw ConfigError("data: give either synth or train/dev/test, not both");
  return d;
}

GradcheckConfig gradcheck_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"epsilon", "tolerance", "cells", "blocks", "heads", "hidden", "grid",
                       "embed_dim", "baselines", "init_scale", "corrupt"},
                      "gradcheck");
  GradcheckConfig g;
  if (j.contains("epsilon")) g.epsilon = real(j["epsilon"], "gradcheck.epsilon");
  if (j.contains("tolerance")) g.tolerance = real(j["tolerance"], "gradcheck.tolerance");
  if (j.contains("cells")) g.cells = list<CellKind>(j["cells"], "gradcheck.cells", cell_kind);
  if (j.contains("blocks")) g.blocks = list<std::size_t>(j["blocks"], "gradcheck.blocks", count);
  if (j.contains("heads")) g.heads = list<HeadKind>(j["heads"], "gradcheck.heads", head_kind);
  if (j.contains("hidden")) g.hidden = list<std::size_t>(j["hidden"], "gradcheck.hidden", count);
  if (j.contains("grid")) {
    const auto dims = list<std::size_t>(j["grid"], "gradcheck.grid", count);
    if (dims.size() != 2) throw ConfigError("gradcheck.grid must be [n, m]");
    g.n = dims[0];
    g.m = dims[1];
  }
  if (j.contains("embed_dim")) g.embed_dim = count(j["embed_dim"], "gradcheck.embed_dim");
  if (j.contains("baselines")) g.baselines = flag(j["baselines"], "gradcheck.baselines");
  if (j.contains("init_scale")) g.init_scale = real(j["init_scale"], "gradcheck.init_scale");
  if (j.contains("corrupt")) g.corrupt = flag(j["corrupt"], "gradcheck.corrupt");
  if (!(g.epsilon > 0.0) || !(g.tolerance > 0.0)) {
    throw ConfigError("gradcheck epsilon and tolerance must be positive");
  }
  if (g.n == 0 || g.m == 0 || g.embed_dim == 0) throw ConfigError("gradcheck sizes must be positive");
  return g;
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  reject_unknown_keys(j, {"seed", "model", "optimizer", "training", "data", "gradcheck"}, "config");
  RunConfig rc;
  if (j.contains("seed")) rc.seed = count(j["seed"], "seed");

  // The head decides the remaining defaults, so read it first.
  const json model = j.value("model", json::object());
  if (!model.is_object()) throw ConfigError("model must be an object");
  ModelConfig base;
  if (model.contains("head")) base.head = head_kind(model["head"], "model.head");
  if (base.head == HeadKind::ranking) {
    base.pool = {2, 1};
    rc.optimizer.lr = 0.05;
    rc.optimizer.l2 = 5e-5;
  }
  rc.model = model_config_from_json(model, base);

  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    reject_unknown_keys(o, {"lr", "l2", "clip", "eps"}, "optimizer");
    if (o.contains("lr")) rc.optimizer.lr = real(o["lr"], "optimizer.lr");
    if (o.contains("l2")) rc.optimizer.l2 = real(o["l2"], "optimizer.l2");
    if (o.contains("clip")) rc.optimizer.clip_threshold = real(o["clip"], "optimizer.clip");
    if (o.contains("eps")) rc.optimizer.eps = real(o["eps"], "optimizer.eps");
  }
  rc.optimizer.validate();

  if (j.contains("training")) {
    const auto& t = j["training"];
    reject_unknown_keys(t, {"epochs", "init_scale", "embed_init_scale"}, "training");
    if (t.contains("epochs")) rc.epochs = count(t["epochs"], "training.epochs");
    if (t.contains("init_scale")) rc.init_scale = real(t["init_scale"], "training.init_scale");
    if (t.contains("embed_init_scale")) {
      rc.embed_init_scale = real(t["embed_init_scale"], "training.embed_init_scale");
    }
  }
  if (j.contains("data")) rc.data = data_from_json(j["data"]);
  if (j.contains("gradcheck")) rc.gradcheck = gradcheck_from_json(j["gradcheck"]);
  rc.model.validate();
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

json run_config_to_json(const RunConfig& rc) {
  json data{{"train", rc.data.train},
            {"dev", rc.data.dev},
            {"test", rc.data.test},
            {"labels", rc.data.labels},
            {"negatives", rc.data.negatives},
            {"embeddings", rc.data.embeddings}};
  if (rc.data.synth) {
    const auto& s = *rc.data.synth;
    data["synth"] = {{"task", to_string(s.task)},
                     {"size", s.size},
                     {"min_len", s.options.min_len},
                     {"max_len", s.options.max_len},
                     {"alphabet", s.options.alphabet}};
    if (s.seed) data["synth"]["seed"] = *s.seed;
  }
  const auto& g = rc.gradcheck;
  json cells = json::array(), heads = json::array();
  for (auto c : g.cells) cells.push_back(to_string(c));
  for (auto h : g.heads) heads.push_back(to_string(h));
  return json{{"seed", rc.seed},
              {"model", model_config_to_json(rc.model)},
              {"optimizer",
               {{"lr", rc.optimizer.lr},
                {"l2", rc.optimizer.l2},
                {"clip", rc.optimizer.clip_threshold},
                {"eps", rc.optimizer.eps}}},
              {"training",
               {{"epochs", rc.epochs},
                {"init_scale", rc.init_scale},
                {"embed_init_scale", rc.embed_init_scale.value_or(rc.init_scale)}}},
              {"data", data},
              {"gradcheck",
               {{"epsilon", g.epsilon},
                {"tolerance", g.tolerance},
                {"cells", cells},
                {"blocks", g.blocks},
                {"heads", heads},
                {"hidden", g.hidden},
                {"grid", {g.n, g.m}},
                {"embed_dim", g.embed_dim},
                {"baselines", g.baselines},
                {"init_scale", g.init_scale},
                {"corrupt", g.corrupt}}}};
}

}  // namespace coupled
