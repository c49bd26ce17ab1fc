#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <string>
#include <vector>

#include "commands.hpp"

using namespace flowgrasp;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kSmall = std::string(FLOWGRASP_SOURCE_DIR) + "/configs/small.json";

struct Workdir {
  fs::path path;
  explicit Workdir(const std::string& name) : path(fs::temp_directory_path() / ("fg_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Workdir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "flowgrasp");
  return cli::run(args);
}

struct Output {
  int status;
  std::string text;
};

// Runs the installed binary so stdout can be captured.
Output shell(const std::string& args) {
  const std::string cmd = std::string(FLOWGRASP_CLI) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string text;
  std::array<char, 4096> buf;
  while (std::fgets(buf.data(), buf.size(), pipe)) text += buf.data();
  const int status = pclose(pipe);
  return {WEXITSTATUS(status), text};
}

std::vector<std::string> lines_of(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::string last_line(const std::string& text) {
  auto end = text.find_last_not_of('\n');
  auto start = text.rfind('\n', end);
  return text.substr(start == std::string::npos ? 0 : start + 1, end - start);
}

// Dataset and checkpoint shared by the sampling tests.
struct Trained {
  Workdir dir{"trained"};
  std::string dataset = dir / "ds.jsonl";
  std::string ckpt = dir / "ck.json";
  Trained() {
    REQUIRE(run_cli({"gen-data", "--config", kSmall, "--out", dataset}) == 0);
    REQUIRE(run_cli({"train", "--config", kSmall, "--dataset", dataset, "--out", ckpt}) == 0);
  }
};

}  // namespace

TEST_CASE("gen-data is deterministic and its yield matches the file") {
  Workdir w("gen");
  const Output a = shell("gen-data --config " + kSmall + " --out " + (w / "a.jsonl"));
  REQUIRE(a.status == 0);
  REQUIRE(run_cli({"gen-data", "--config", kSmall, "--out", w / "b.jsonl"}) == 0);
  CHECK(file_sha256(w / "a.jsonl") == file_sha256(w / "b.jsonl"));

  const auto lines = lines_of(w / "a.jsonl");
  REQUIRE_FALSE(lines.empty());
  const json header = json::parse(lines.front());
  const int attempted = header.at("stats").at("attempted");
  CHECK(attempted == 12);
  const int accepted = static_cast<int>(lines.size()) - 1;
  std::smatch m;
  REQUIRE(std::regex_search(a.text, m, std::regex(R"(grasps (\d+)/(\d+)  yield ([0-9.]+))")));
  CHECK(std::stoi(m[1]) == accepted);
  CHECK(std::stoi(m[2]) == attempted);
  CHECK(std::stod(m[3]) == doctest::Approx(static_cast<double>(accepted) / attempted).epsilon(1e-4));
  CHECK(header.at("config").at("config_hash") == RunConfig::load(kSmall).hash());
  CHECK(header.at("seed") == RunConfig::load(kSmall).dataset_seed());

  REQUIRE(run_cli({"gen-data", "--config", kSmall, "--seed", "8", "--out", w / "c.jsonl"}) == 0);
  CHECK(file_sha256(w / "c.jsonl") != file_sha256(w / "a.jsonl"));
}

TEST_CASE("usage errors") {
  Workdir w("usage");
  CHECK(run_cli({"gen-data", "--n-objects", "0", "--out", w / "x.jsonl"}) == 2);
  CHECK_FALSE(fs::exists(w / "x.jsonl"));
  CHECK(run_cli({}) == 2);
  CHECK(run_cli({"frobnicate"}) == 2);
  CHECK(run_cli({"sample", "--guided", "--vanilla"}) == 2);
  CHECK(run_cli({"train", "--config", w / "missing.json"}) == 2);
  CHECK(run_cli({"--help"}) == 0);

  std::ofstream(w / "bad.json") << R"({"guidance": {"scael": 3}})";
  CHECK(run_cli({"gen-data", "--config", w / "bad.json", "--out", w / "y.jsonl"}) == 2);
}

TEST_CASE("runtime failures") {
  Workdir w("runtime");
  CHECK(run_cli({"sample", "--config", kSmall, "--checkpoint", w / "none.json", "--out",
                 w / "s.jsonl"}) == 1);
  CHECK(run_cli({"train", "--config", kSmall, "--dataset", w / "none.jsonl", "--out",
                 w / "c.json"}) == 1);
  CHECK(run_cli({"eval", "--config", kSmall, "--samples", w / "none.jsonl"}) == 1);
  CHECK(run_cli({"ablate", "--config", kSmall, "--checkpoint", w / "none.json"}) == 1);
  CHECK(run_cli({"verify", "--config", kSmall, "--dataset", w / "none.jsonl"}) == 1);
}

TEST_CASE("train, sample, eval and harnesses") {
  Trained t;
  const RunConfig cfg = RunConfig::load(kSmall);

  SUBCASE("training artifacts") {
    const auto loss = lines_of(t.ckpt + ".loss.csv");
    REQUIRE(static_cast<int>(loss.size()) == cfg.train.epochs + 1);
    CHECK(loss.front() == "epoch,loss");
    std::vector<double> values;
    for (std::size_t i = 1; i < loss.size(); ++i)
      values.push_back(std::stod(loss[i].substr(loss[i].find(',') + 1)));
    CHECK(smooth(values, 10).back() < values.front());

    const json meta = json::parse(std::ifstream(t.ckpt + ".meta.json"));
    CHECK(meta.at("config_hash") == cfg.hash());
    CHECK(meta.at("dataset_sha256") == file_sha256(t.dataset));
    const FlowCheckpoint ck = load_checkpoint(t.ckpt);
    CHECK(ck.config_hash == cfg.hash());
    CHECK(cli::checkpoint_probe(ck) == cli::checkpoint_probe(load_checkpoint(t.ckpt)));
    CHECK(ck.standardizer.mean.size() == cfg.hand.dim());

    // Inputs are left untouched.
    const std::string before = file_sha256(t.dataset);
    REQUIRE(run_cli({"train", "--config", kSmall, "--dataset", t.dataset, "--out",
                     t.dir / "ck2.json"}) == 0);
    CHECK(file_sha256(t.dataset) == before);
    CHECK(cli::checkpoint_probe(load_checkpoint(t.dir / "ck2.json")) == cli::checkpoint_probe(ck));
  }

  SUBCASE("sampling is reproducible and eval agrees") {
    const std::string base = "--config " + kSmall + " --checkpoint " + t.ckpt;
    const Output a = shell("sample " + base + " --guided --seed 3 --out " + (t.dir / "a.jsonl"));
    REQUIRE(a.status == 0);
    REQUIRE(run_cli({"sample", "--config", kSmall, "--checkpoint", t.ckpt, "--guided", "--seed",
                     "3", "--out", t.dir / "b.jsonl"}) == 0);
    CHECK(file_sha256(t.dir / "a.jsonl") == file_sha256(t.dir / "b.jsonl"));

    const Output e = shell("eval --config " + kSmall + " --seed 3 --samples " + (t.dir / "a.jsonl"));
    REQUIRE(e.status == 0);
    CHECK(json::parse(last_line(e.text)) == json::parse(last_line(a.text)));

    const cli::SampleFile f = cli::read_samples(t.dir / "a.jsonl", cfg.hand);
    CHECK(f.records.size() == 12);
    CHECK(f.header.at("guided") == true);
    CHECK(f.header.at("seed") == 3);
    CHECK(f.header.at("config_hash").is_string());
    CHECK(f.header.at("checkpoint_sha256") == file_sha256(t.ckpt));
    for (const auto& r : f.records) CHECK(r.nfe == cfg.nfe);

    REQUIRE(run_cli({"sample", "--config", kSmall, "--checkpoint", t.ckpt, "--vanilla", "--seed",
                     "3", "--nfe", "4", "--out", t.dir / "v.jsonl"}) == 0);
    const cli::SampleFile v = cli::read_samples(t.dir / "v.jsonl", cfg.hand);
    CHECK(v.header.at("guided") == false);
    CHECK(v.records.front().nfe == 4);

    REQUIRE(run_cli({"eval", "--config", kSmall, "--samples", t.dir / "a.jsonl", "--out",
                     t.dir / "report.json"}) == 0);
    const json rep = json::parse(std::ifstream(t.dir / "report.json"));
    CHECK(rep.at("n_samples") == 12);
    CHECK(rep.at("samples_sha256") == file_sha256(t.dir / "a.jsonl"));
  }

  SUBCASE("sample file round trip") {
    REQUIRE(run_cli({"sample", "--config", kSmall, "--checkpoint", t.ckpt, "--out",
                     t.dir / "r.jsonl"}) == 0);
    const cli::SampleFile f = cli::read_samples(t.dir / "r.jsonl", cfg.hand);
    cli::write_samples(f, cfg.hand, t.dir / "r2.jsonl");
    CHECK(file_sha256(t.dir / "r.jsonl") == file_sha256(t.dir / "r2.jsonl"));
    std::ofstream(t.dir / "junk.jsonl") << R"({"type":"sample"})" << '\n';
    CHECK_THROWS(cli::read_samples(t.dir / "junk.jsonl", cfg.hand));
  }

  SUBCASE("trajectory dumps") {
    REQUIRE(run_cli({"sample", "--config", kSmall, "--checkpoint", t.ckpt, "--n-objects", "1",
                     "--trace", t.dir / "traces", "--out", t.dir / "t.jsonl"}) == 0);
    int files = 0;
    for (const auto& e : fs::directory_iterator(t.dir / "traces")) {
      ++files;
      CHECK(static_cast<int>(lines_of(e.path().string()).size()) == cfg.nfe + 2);
    }
    CHECK(files == cfg.sample_batch_size);
  }

  SUBCASE("sweep, ablation and sensitivity tables") {
    REQUIRE(run_cli({"sweep-nfe", "--config", kSmall, "--checkpoint", t.ckpt, "--out",
                     t.dir / "nfe.csv"}) == 0);
    const auto nfe = lines_of(t.dir / "nfe.csv");
    REQUIRE(nfe.size() == 3);
    CHECK(nfe[1].rfind("5,", 0) == 0);
    CHECK(nfe[2].rfind("10,", 0) == 0);
    CHECK(fs::exists(t.dir / "nfe.csv.meta.json"));

    REQUIRE(run_cli({"ablate", "--config", kSmall, "--checkpoint", t.ckpt, "--n-objects", "2",
                     "--out", t.dir / "abl.csv"}) == 0);
    const auto abl = lines_of(t.dir / "abl.csv");
    REQUIRE(abl.size() == 7);
    const char* prefixes[] = {"a,\"Baseline (vanilla FM)\"", "b,\"+ SRF\"", "c,\"+ ERF\"",
                              "d,\"+ SRF & ERF\"", "e,\"+ SRF & ERF & SPF\"",
                              "f,\"+ SRF & ERF & SPF (original forms)\""};
    for (int i = 0; i < 6; ++i) CHECK(abl[i + 1].rfind(prefixes[i], 0) == 0);
    const json meta = json::parse(std::ifstream(t.dir / "abl.csv.meta.json"));
    CHECK(meta.at("seed") == cfg.seed);
    CHECK(meta.at("checkpoint_sha256") == file_sha256(t.ckpt));

    REQUIRE(run_cli({"sensitivity", "--config", kSmall, "--checkpoint", t.ckpt, "--n-objects",
                     "1", "--nfe", "3", "--out", t.dir / "sens.csv"}) == 0);
    CHECK(lines_of(t.dir / "sens.csv").size() == 25);
  }
}

TEST_CASE("verify reproduces every artifact") {
  Workdir w("verify");
  const std::string ds = w / "ds.jsonl", ck = w / "ck.json", s = w / "s.jsonl";
  REQUIRE(run_cli({"gen-data", "--config", kSmall, "--out", ds}) == 0);
  REQUIRE(run_cli({"train", "--config", kSmall, "--dataset", ds, "--out", ck}) == 0);
  REQUIRE(run_cli({"sample", "--config", kSmall, "--checkpoint", ck, "--out", s}) == 0);
  CHECK(run_cli({"verify", "--config", kSmall, "--dataset", ds, "--checkpoint", ck, "--samples",
                 s}) == 0);

  // A tampered sample file no longer matches.
  auto lines = lines_of(s);
  json rec = json::parse(lines[1]);
  rec["config"][0] = rec["config"][0].get<double>() + 1e-3;
  lines[1] = rec.dump();
  {
    std::ofstream out(s);
    for (const auto& l : lines) out << l << '\n';
  }
  CHECK(run_cli({"verify", "--config", kSmall, "--dataset", ds, "--checkpoint", ck, "--samples",
                 s}) == 1);
}
