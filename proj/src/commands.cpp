#include "coupled/commands.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "coupled/model_json.hpp"

namespace coupled {

using nlohmann::json;

PairDataset build_dataset(const RunConfig& rc) {
  const DataConfig& d = rc.data;
  if (d.synth) {
    if (rc.model.head != HeadKind::classification) {
      throw ConfigError("synthetic tasks are binary classification; set model.head to classification");
    }
    return synth_tasks(d.synth->task, d.synth->size, d.synth->seed.value_or(rc.seed), d.synth->options);
  }
  if (d.train.empty()) throw ConfigError("data.train (or data.synth) is required");
  TsvOptions options;
  options.task = rc.model.head == HeadKind::ranking ? TaskKind::ranking : TaskKind::classification;
  options.labels = d.labels;
  options.negatives = d.negatives;
  options.seed = rc.seed;
  return load_tsv(d.train, d.dev, d.test, options);
}

ModelConfig fit_model_config(ModelConfig model, const PairDataset& dataset) {
  model.vocab_size = dataset.vocab.size();
  model.head = dataset.task == TaskKind::ranking ? HeadKind::ranking : HeadKind::classification;
  if (dataset.task == TaskKind::classification) model.classes = dataset.labels.size();
  model.validate();
  return model;
}

PairDataset remap_vocabulary(const PairDataset& dataset, const Vocab& target) {
  PairDataset out = dataset;
  out.vocab = target;
  auto map = [&](Tokens& tokens) {
    for (auto& id : tokens) id = target.id(dataset.vocab.token(id));
  };
  for (auto& s : out.samples) {
    map(s.x);
    map(s.y);
    for (auto& n : s.negatives) map(n);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Tokens random_tokens(std::size_t len, std::size_t vocab, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(2, vocab - 1);
  Tokens t(len);
  for (auto& v : t) v = pick(rng);
  return t;
}

GradcheckCase check_model(const std::string& label, const ModelConfig& cfg, const GradcheckConfig& g,
                          std::uint64_t seed) {
  Model model = Model::initialize(cfg, seed, g.init_scale);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const Tokens x = random_tokens(g.n, cfg.vocab_size, rng);
  const Tokens y = random_tokens(g.m, cfg.vocab_size, rng);
  const Tokens y_neg = random_tokens(g.m, cfg.vocab_size, rng);
  const std::size_t label_id = std::uniform_int_distribution<std::size_t>(0, cfg.classes - 1)(rng);
  const bool ranking = cfg.head == HeadKind::ranking;

  // Ranking: s(x, y) - 0.5 s(x, y_neg), two accumulated backward passes.
  auto objective = [&]() {
    if (ranking) return model.forward(x, y)[0] - 0.5 * model.forward(x, y_neg)[0];
    return cross_entropy(label_id, model.forward(x, y));
  };

  ModelParams grads = ModelParams::zeros(cfg);
  ForwardTrace trace;
  if (ranking) {
    Tensor d({1});
    model.forward(x, y, &trace);
    d[0] = 1.0;
    model.backward(trace, d, grads);
    model.forward(x, y_neg, &trace);
    d[0] = -0.5;
    model.backward(trace, d, grads);
  } else {
    const Tensor probs = model.forward(x, y, &trace);
    Tensor d = probs;
    d[label_id] -= 1.0;
    model.backward(trace, d, grads);
  }

  auto params = model.registry();
  auto grad_reg = make_registry(grads, cfg);
  if (g.corrupt) {
    for (const auto& e : grad_reg.entries()) {
      for (auto& v : e.tensor->values()) v = v * 1.01 + 1e-3;
    }
  }
  std::vector<GradCheckTarget> targets;
  for (std::size_t k = 0; k < params.size(); ++k) {
    targets.push_back({params.entries()[k].name, params.entries()[k].tensor, grad_reg.entries()[k].tensor});
  }
  return {label, finite_diff_check(objective, targets, g.epsilon, g.tolerance)};
}

}  // namespace

std::vector<GradcheckCase> run_gradcheck(const GradcheckConfig& g, std::uint64_t seed) {
  std::vector<GradcheckCase> out;
  std::uint64_t case_seed = seed;
  auto base = [&](HeadKind head, std::size_t d) {
    ModelConfig cfg;
    cfg.head = head;
    cfg.hidden = d;
    cfg.embed_dim = g.embed_dim;
    cfg.vocab_size = g.n + g.m + 4;
    cfg.classes = 3;
    cfg.pool = {std::min<std::size_t>(2, g.n), std::min<std::size_t>(2, g.m)};
    return cfg;
  };
  for (CellKind cell : g.cells) {
    for (std::size_t blocks : g.blocks) {
      for (HeadKind head : g.heads) {
        for (std::size_t d : g.hidden) {
          ModelConfig cfg = base(head, d);
          cfg.architecture = Architecture::clstm;
          cfg.cell = cell;
          cfg.blocks = blocks;
          std::ostringstream label;
          label << to_string(cell) << " blocks=" << blocks << " head=" << to_string(head) << " d=" << d;
          out.push_back(check_model(label.str(), cfg, g, case_seed++));
        }
      }
    }
  }
  if (g.baselines) {
    for (Architecture arch : {Architecture::nbow, Architecture::parallel_lstm}) {
      for (HeadKind head : g.heads) {
        ModelConfig cfg = base(head, g.hidden.front());
        cfg.architecture = arch;
        out.push_back(check_model(to_string(arch) + " head=" + to_string(head) +
                                      " d=" + std::to_string(cfg.hidden),
                                  cfg, g, case_seed++));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

TrainResult run_training(const RunConfig& rc, const std::filesystem::path& out_dir,
                         std::ostream& progress) {
  PairDataset dataset = build_dataset(rc);
  const ModelConfig cfg = fit_model_config(rc.model, dataset);
  Model model = Model::initialize(cfg, rc.seed, rc.init_scale, rc.embed_init_scale);
  if (!rc.data.embeddings.empty()) {
    EmbeddingTable table = load_embeddings(rc.data.embeddings, dataset.vocab, cfg.embed_dim, rc.seed);
    model.params().embedding = std::move(table.table);
    progress << "embedding coverage " << table.coverage << "\n";
  }

  std::filesystem::create_directories(out_dir);
  std::ofstream metrics(out_dir / "metrics.jsonl", std::ios::trunc);
  std::ofstream timing(out_dir / "timing.jsonl", std::ios::trunc);
  if (!metrics || !timing) throw InputError("cannot write logs under " + out_dir.string());
  {
    std::ofstream cfg_out(out_dir / "config.json", std::ios::trunc);
    json resolved = run_config_to_json(rc);
    resolved["model"] = model_config_to_json(cfg);
    cfg_out << resolved.dump(2) << "\n";
  }

  const auto start = std::chrono::steady_clock::now();
  TrainOptions options;
  options.optimizer = rc.optimizer;
  options.epochs = rc.epochs;
  options.seed = rc.seed;
  options.on_record = [&](const MetricRecord& r) {
    const std::string line = format_metric(r);
    metrics << line << "\n" << std::flush;
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    timing << json{{"epoch", r.epoch}, {"split", r.split}, {"metric", r.metric}, {"wall_clock", seconds}}.dump()
           << "\n";
    progress << line << "\n" << std::flush;
  };
  TrainResult result = train(model, dataset, options);
  save_checkpoint(out_dir / "checkpoint.bin", {result.best, dataset.vocab.tokens()});
  return result;
}

// ---------------------------------------------------------------------------

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string activations_csv(const Model& model, const Vocab& vocab, const std::string& x,
                            const std::string& y, std::size_t neuron) {
  if (neuron >= model.config().hidden) {
    throw ConfigError("neuron " + std::to_string(neuron) + " out of range; the grid has " +
                      std::to_string(model.config().hidden) + " neurons");
  }
  const auto xw = tokenize(x);
  const auto yw = tokenize(y);
  if (xw.empty() || yw.empty()) throw InputError("both sentences must be non-empty");
  const GridTensor grid = model.encode(vocab.encode(xw), vocab.encode(yw));
  std::string out;
  for (const auto& w : yw) out += "," + csv_field(w);
  out += "\n";
  char buf[32];
  for (std::size_t i = 0; i < xw.size(); ++i) {
    out += csv_field(xw[i]);
    for (std::size_t j = 0; j < yw.size(); ++j) {
      std::snprintf(buf, sizeof buf, ",%.17g", grid.at(i, j, neuron));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

void write_count_report(const ModelConfig& model, std::ostream& os) {
  ModelParams p = ModelParams::zeros(model);
  const auto reg = make_registry(p, model);
  os << "configured model (" << to_string(model.architecture);
  if (model.architecture == Architecture::clstm) {
    os << ", " << to_string(model.cell) << ", " << model.blocks << " block(s)";
  }
  os << ", d=" << model.hidden << ")\n";
  os << "  parameters excluding embeddings: " << count_params(reg, false) << "\n";
  os << "  parameters including embeddings: " << count_params(reg, true) << "\n";
  os << "  recurrent core: " << core_param_count(model) << "\n\n";
  os << "reference configurations (d=50, 100d embeddings, 3 classes, embeddings excluded)\n";
  char buf[160];
  for (const auto& r : reference_counts()) {
    std::snprintf(buf, sizeof buf, "  %-22s core %7zu  total %7zu  reference %7.0f  deviation %+6.2f%%\n",
                  r.label.c_str(), r.core, r.total, r.reference, 100.0 * r.deviation);
    os << buf;
  }
}

// ---------------------------------------------------------------------------

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool needs_config) {
  auto* opt = cmd->add_option("--config", flags.config, "JSON run configuration");
  if (needs_config) opt->required();
  cmd->add_option("--seed", flags.seed, "Override the configured seed");
  cmd->add_option("--out", flags.out, "Output directory");
}

RunConfig resolve(const CommonFlags& flags) {
  RunConfig rc = flags.config.empty() ? run_config_from_json(json::object()) : load_run_config(flags.config);
  if (flags.seed) rc.seed = *flags.seed;
  return rc;
}

std::filesystem::path out_dir(const CommonFlags& flags, const char* fallback) {
  return flags.out.empty() ? std::filesystem::path(fallback) : std::filesystem::path(flags.out);
}

int cmd_gradcheck(const RunConfig& rc, std::ostream& out) {
  const auto cases = run_gradcheck(rc.gradcheck, rc.seed);
  bool ok = true;
  double worst = 0.0;
  char buf[256];
  for (const auto& c : cases) {
    out << "[" << (c.report.passed() ? "pass" : "FAIL") << "] " << c.label << "\n";
    for (const auto& e : c.report.entries) {
      if (e.passed) {
        std::snprintf(buf, sizeof buf, "    %-22s max rel error %.3e\n", e.name.c_str(), e.max_rel_error);
      } else {
        std::snprintf(buf, sizeof buf,
                      "    %-22s max rel error %.3e  <-- exceeds tolerance at [%zu]: numeric %.9e analytic %.9e\n",
                      e.name.c_str(), e.max_rel_error, e.worst_index, e.worst_numeric, e.worst_analytic);
      }
      out << buf;
    }
    ok = ok && c.report.passed();
    worst = std::max(worst, c.report.max_rel_error());
  }
  std::snprintf(buf, sizeof buf, "%zu cases, worst relative error %.3e, tolerance %.1e: %s\n", cases.size(),
                worst, rc.gradcheck.tolerance, ok ? "PASS" : "FAIL");
  out << buf;
  return ok ? kExitOk : kExitCheckFailed;
}

int cmd_eval(const RunConfig& rc, const std::string& checkpoint_path, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const Vocab vocab = Vocab::from_tokens(ckpt.vocabulary);
  RunConfig data_rc = rc;
  data_rc.model.head = ckpt.model.config().head;
  const PairDataset dataset = remap_vocabulary(build_dataset(data_rc), vocab);
  const char* metric = dataset.task == TaskKind::ranking ? "p@1" : "accuracy";
  const std::pair<const char*, const std::vector<std::size_t>*> splits[] = {
      {"train", &dataset.splits.train}, {"dev", &dataset.splits.dev}, {"test", &dataset.splits.test}};
  for (const auto& [name, indices] : splits) {
    if (indices->empty()) continue;
    out << json{{"split", name}, {"metric", metric}, {"value", evaluate(ckpt.model, dataset, *indices)}}.dump()
        << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Coupled-LSTM sentence matching"};
  app.require_subcommand(1);

  CommonFlags train_flags, eval_flags, grad_flags, act_flags, count_flags, synth_flags;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write its best checkpoint");
  add_common(train_cmd, train_flags, true);
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on the configured dataset");
  add_common(eval_cmd, eval_flags, true);
  std::string eval_ckpt;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  add_common(grad_cmd, grad_flags, false);
  auto* act_cmd = app.add_subcommand("activations", "Export one neuron of the final grid as CSV");
  add_common(act_cmd, act_flags, false);
  std::string act_ckpt, act_x, act_y;
  std::size_t act_neuron = 0;
  act_cmd->add_option("--checkpoint", act_ckpt, "Checkpoint file")->required();
  act_cmd->add_option("--x", act_x, "First sentence")->required();
  act_cmd->add_option("--y", act_y, "Second sentence")->required();
  act_cmd->add_option("--neuron", act_neuron, "Neuron index k")->required();
  auto* count_cmd = app.add_subcommand("count", "Print parameter counts");
  add_common(count_cmd, count_flags, false);
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic dataset as TSV files");
  add_common(synth_cmd, synth_flags, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (train_cmd->parsed()) {
      const RunConfig rc = resolve(train_flags);
      const auto dir = out_dir(train_flags, "run");
      const TrainResult r = run_training(rc, dir, out);
      out << "best dev epoch " << r.best_epoch << " (" << r.best_dev << "), checkpoint "
          << (dir / "checkpoint.bin").string() << "\n";
      return kExitOk;
    }
    if (eval_cmd->parsed()) return cmd_eval(resolve(eval_flags), eval_ckpt, out);
    if (grad_cmd->parsed()) return cmd_gradcheck(resolve(grad_flags), out);
    if (act_cmd->parsed()) {
      const Checkpoint ckpt = load_checkpoint(act_ckpt);
      const Vocab vocab = Vocab::from_tokens(ckpt.vocabulary);
      const std::string csv = activations_csv(ckpt.model, vocab, act_x, act_y, act_neuron);
      const auto dir = out_dir(act_flags, ".");
      std::filesystem::create_directories(dir);
      const auto path = dir / ("activations_k" + std::to_string(act_neuron) + ".csv");
      std::ofstream os(path, std::ios::trunc);
      if (!os) throw InputError("cannot write " + path.string());
      os << csv;
      out << "wrote " << path.string() << "\n";
      return kExitOk;
    }
    if (count_cmd->parsed()) {
      write_count_report(resolve(count_flags).model, out);
      return kExitOk;
    }
    if (synth_cmd->parsed()) {
      RunConfig rc = resolve(synth_flags);
      if (!rc.data.synth) rc.data.synth = SynthConfig{};
      rc.model.head = HeadKind::classification;
      const PairDataset ds = build_dataset(rc);
      const auto dir = out_dir(synth_flags, "synth");
      write_tsv(ds, dir);
      out << "wrote " << ds.samples.size() << " " << to_string(rc.data.synth->task) << " pairs to "
          << dir.string() << "\n";
      return kExitOk;
    }
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DimensionError& e) {
    err << "dimension error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace coupled
