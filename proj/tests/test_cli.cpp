#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "coupled/commands.hpp"
#include "coupled/data.hpp"
#include "coupled/model.hpp"

using namespace coupled;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "coupled_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Result {
  int code;
  std::string out;
};

Result run(const std::string& args) {
  const char* bin = std::getenv("COUPLED_CLI");
  REQUIRE_MESSAGE(bin != nullptr, "COUPLED_CLI is not set");
  const fs::path log = work_dir() / "stdout.txt";
  const std::string cmd = std::string("\"") + bin + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file(log)};
}

fs::path write_config(const std::string& name, const json& j) {
  const fs::path p = work_dir() / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

json tiny_train_config() {
  return {{"seed", 3},
          {"model", {{"cell", "tc"}, {"hidden", 3}, {"embed_dim", 4}, {"pool", {2, 2}}}},
          {"optimizer", {{"lr", 0.05}}},
          {"training", {{"epochs", 2}}},
          {"data", {{"synth", {{"task", "same-seq"}, {"size", 60}}}}}};
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("usage errors") {
  CHECK(run("").code == 2);
  CHECK(run("frobnicate").code == 2);
  CHECK(run("--help").code == 0);
  CHECK(run("train").code == 2);  // --config is required
  CHECK(run("train --config " + (work_dir() / "nope.json").string()).code == 2);

  const auto unknown = write_config("unknown.json", {{"modle", json::object()}});
  CHECK(run("count --config " + unknown.string()).code == 2);

  json missing = tiny_train_config();
  missing["data"] = {{"train", (work_dir() / "absent.tsv").string()}};
  const auto cfg = write_config("missing.json", missing);
  const auto r = run("train --config " + cfg.string() + " --out " + (work_dir() / "missing").string());
  CHECK(r.code == 2);
  CHECK(r.out.find("absent.tsv") != std::string::npos);
}

TEST_CASE("gradcheck passes and catches a corrupted backward") {
  const auto ok = run("gradcheck");
  CHECK_MESSAGE(ok.code == 0, ok.out);
  CHECK(ok.out.find("PASS") != std::string::npos);

  const auto minimal = write_config(
      "minimal.json", {{"gradcheck", {{"hidden", {1}}, {"blocks", {1}}, {"baselines", false}}}});
  CHECK(run("gradcheck --config " + minimal.string()).code == 0);

  const auto corrupt = write_config(
      "corrupt.json", {{"gradcheck", {{"corrupt", true}, {"hidden", {2}}, {"blocks", {1}}}}});
  const auto bad = run("gradcheck --config " + corrupt.string());
  CHECK(bad.code != 0);
  CHECK(bad.out.find("FAIL") != std::string::npos);
}

TEST_CASE("count prints configured and reference rows") {
  const auto r = run("count");
  CHECK(r.code == 0);
  CHECK(r.out.find("four stacked TC-LSTMs") != std::string::npos);
  CHECK(r.out.find("parameters excluding embeddings") != std::string::npos);
}

TEST_CASE("train, eval and activations") {
  const auto cfg = write_config("train.json", tiny_train_config());
  const fs::path a = work_dir() / "run_a", b = work_dir() / "run_b";
  REQUIRE(run("train --config " + cfg.string() + " --out " + a.string()).code == 0);
  REQUIRE(run("train --config " + cfg.string() + " --out " + b.string()).code == 0);
  CHECK(fs::exists(a / "checkpoint.bin"));
  CHECK(fs::exists(a / "config.json"));
  CHECK(fs::exists(a / "timing.jsonl"));
  const std::string log = read_file(a / "metrics.jsonl");
  CHECK_FALSE(log.empty());
  CHECK(log == read_file(b / "metrics.jsonl"));
  CHECK(read_file(a / "checkpoint.bin") == read_file(b / "checkpoint.bin"));

  const auto seeded = run("train --config " + cfg.string() + " --seed 4 --out " + (work_dir() / "run_c").string());
  CHECK(seeded.code == 0);
  CHECK(read_file(work_dir() / "run_c" / "metrics.jsonl") != log);

  const auto ev = run("eval --config " + cfg.string() + " --checkpoint " + (a / "checkpoint.bin").string());
  CHECK(ev.code == 0);
  CHECK(ev.out.find("\"dev\"") != std::string::npos);

  const fs::path act = work_dir() / "act";
  const auto r = run("activations --checkpoint " + (a / "checkpoint.bin").string() +
                     " --x \"a b c\" --y \"b c d a\" --neuron 1 --out " + act.string());
  REQUIRE(r.code == 0);
  const auto rows = parse_csv(read_file(act / "activations_k1.csv"));
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == std::vector<std::string>{"", "b", "c", "d", "a"});
  const Checkpoint ckpt = load_checkpoint(a / "checkpoint.bin");
  const Vocab vocab = Vocab::from_tokens(ckpt.vocabulary);
  const GridTensor grid =
      ckpt.model.encode(vocab.encode({"a", "b", "c"}), vocab.encode({"b", "c", "d", "a"}));
  for (std::size_t i = 0; i < 3; ++i) {
    REQUIRE(rows[i + 1].size() == 5);
    CHECK(rows[i + 1][0] == std::string(1, static_cast<char>('a' + i)));
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(std::abs(std::stod(rows[i + 1][j + 1]) - grid.at(i, j, 1)) <= 1e-9);
    }
  }

  CHECK(run("activations --checkpoint " + (a / "checkpoint.bin").string() +
            " --x a --y b --neuron 3 --out " + act.string())
            .code == 2);
  CHECK(run("activations --checkpoint " + (work_dir() / "none.bin").string() +
            " --x a --y b --neuron 0 --out " + act.string())
            .code == 2);
}

TEST_CASE("all-zero model gives an all-zero activation matrix") {
  ModelConfig cfg;
  cfg.hidden = 2;
  cfg.embed_dim = 3;
  cfg.vocab_size = 4;
  const fs::path ckpt = work_dir() / "zero.bin";
  save_checkpoint(ckpt, {Model(cfg, ModelParams::zeros(cfg)), {"<unk>", "<pad>", "x", "y"}});
  const fs::path out = work_dir() / "zero_act";
  REQUIRE(run("activations --checkpoint " + ckpt.string() + " --x \"x y x\" --y \"y y\" --neuron 0 --out " +
              out.string())
              .code == 0);
  const auto rows = parse_csv(read_file(out / "activations_k0.csv"));
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    REQUIRE(rows[i].size() == 3);
    CHECK(std::stod(rows[i][1]) == 0.0);
    CHECK(std::stod(rows[i][2]) == 0.0);
  }
}

TEST_CASE("non-finite loss exits with the numeric code") {
  const fs::path glove = work_dir() / "nan.txt";
  std::ofstream(glove) << "a nan nan nan nan\n";
  json j = tiny_train_config();
  j["data"]["embeddings"] = glove.string();
  const auto cfg = write_config("nan.json", j);
  const auto r = run("train --config " + cfg.string() + " --out " + (work_dir() / "nan_run").string());
  CHECK(r.code == 3);
  CHECK(r.out.find("step") != std::string::npos);
}

TEST_CASE("synth writes three splits") {
  const fs::path out = work_dir() / "synth";
  const auto cfg = write_config("synth.json", {{"data", {{"synth", {{"task", "contains"}, {"size", 100}}}}}});
  REQUIRE(run("synth --config " + cfg.string() + " --out " + out.string()).code == 0);
  for (const char* f : {"train.tsv", "dev.tsv", "test.tsv"}) CHECK(fs::exists(out / f));
  TsvOptions opt;
  const PairDataset ds = load_tsv(out / "train.tsv", out / "dev.tsv", out / "test.tsv", opt);
  CHECK(ds.samples.size() == 100);
  CHECK(run("synth --config " + cfg.string() + " --out " + (work_dir() / "synth2").string()).code == 0);
  CHECK(read_file(out / "train.tsv") == read_file(work_dir() / "synth2" / "train.tsv"));
}
