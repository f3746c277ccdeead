#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "zsda/clirun.hpp"
#include "zsda/evalharness.hpp"
#include "zsda/serialize.hpp"

using namespace zsda;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / name;
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string sub(const std::string& name) const { return (path / name).string(); }
};

int run(const std::vector<std::string>& args, std::string* err_text = nullptr,
        std::string* out_text = nullptr) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (err_text) *err_text = err.str();
  if (out_text) *out_text = out.str();
  return code;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("missing config file exits 2 with the config-not-found category") {
  TempDir dir("zsda_cli_missing");
  std::string err;
  const int code = run({"generate", "--config", dir.sub("nope.json"), "--out", dir.sub("out")},
                       &err);
  CHECK(code == 2);
  CHECK(err.rfind("error: config-not-found:", 0) == 0);
}

TEST_CASE("config validation enumerates every violation") {
  TempDir dir("zsda_cli_invalid");
  {
    std::ofstream cfg(dir.sub("bad.json"));
    cfg << R"({"kind":"planted","bogus_key":1,"planted":{"classes":"two","another":true}})";
  }
  std::string err;
  const int code =
      run({"generate", "--config", dir.sub("bad.json"), "--out", dir.sub("out")}, &err);
  CHECK(code == 3);
  CHECK(err.rfind("error: config-invalid:", 0) == 0);
  CHECK(err.find("unknown key: bogus_key") != std::string::npos);
  CHECK(err.find("unknown key: planted.another") != std::string::npos);
  CHECK(err.find("type mismatch at planted.classes") != std::string::npos);
}

TEST_CASE("unknown flags and subcommands are usage errors") {
  std::string err;
  CHECK(run({"frobnicate"}, &err) == 6);
  CHECK(err.rfind("error: usage-error:", 0) == 0);
  CHECK(run({"generate", "--wat"}, &err) == 6);
  CHECK(run({}, &err) == 6);
}

TEST_CASE("generate, train, evaluate, complete, and sweep run end to end on a 3x3 grid") {
  TempDir dir("zsda_cli_e2e");

  // generate
  CHECK(run({"generate", "--out", dir.sub("gen"), "--seed", "17", "--set", "planted.dims=[3,3]",
             "--set", "planted.per_domain=120", "--set", "planted.test_per_domain=150"}) == 0);
  CHECK(fs::exists(dir.sub("gen/config.json")));
  CHECK(fs::exists(dir.sub("gen/train.jsonl")));
  CHECK(fs::exists(dir.sub("gen/test.jsonl")));
  CHECK(fs::exists(dir.sub("gen/oracle.json")));

  // train (two-stage)
  CHECK(run({"train", "--out", dir.sub("tr"), "--seed", "5", "--set",
             "data.train=" + dir.sub("gen/train.jsonl"), "--set", "mask.T=6", "--set",
             "train.max_iters=250", "--set", "arch.rep_dim=8", "--set",
             "completion.rank=2"}) == 0);
  CHECK(fs::exists(dir.sub("tr/checkpoint.json")));
  CHECK(fs::exists(dir.sub("tr/curve.csv")));
  CHECK(fs::exists(dir.sub("tr/summary.json")));

  // evaluate with oracle
  CHECK(run({"evaluate", "--out", dir.sub("ev"), "--set",
             "data.test=" + dir.sub("gen/test.jsonl"), "--set",
             "model=" + dir.sub("tr/checkpoint.json"), "--set",
             "oracle=" + dir.sub("gen/oracle.json")}) == 0);
  const ExperimentReport report = load_report(dir.sub("ev/report.txt"));
  CHECK(report.table.size() == 9);
  CHECK(report.has_excess);
  CHECK(report.has_bound);
  CHECK(report.has_distance);

  // standalone completion on a head-tensor file
  {
    DomainGrid grid({3, 3});
    CPFactors f = CPFactors::zeros(1, grid, 2);
    f.factor(0, 0).setOnes();
    f.factor(0, 1).setOnes();
    write_head_tensor(dir.sub("heads.json"), cp_materialize(f));
  }
  CHECK(run({"complete", "--out", dir.sub("co"), "--set", "heads=" + dir.sub("heads.json"),
             "--set", "mask.kind=uniform", "--set", "mask.T=7", "--set",
             "completion.rank=1"}) == 0);
  CHECK(fs::exists(dir.sub("co/factors.json")));
  CHECK(fs::exists(dir.sub("co/completed.json")));
  CHECK(fs::exists(dir.sub("co/result.json")));

  // sweep over T with a reduced budget
  CHECK(run({"sweep", "--out", dir.sub("sw"), "--seed", "3", "--threads", "2", "--set",
             "data.train=" + dir.sub("gen/train.jsonl"), "--set",
             "data.test=" + dir.sub("gen/test.jsonl"), "--set", "values=[3,5]", "--set",
             "seeds=2", "--set", "trainer.train.max_iters=60", "--set",
             "trainer.arch.rep_dim=8"}) == 0);
  const ExperimentReport sweep = load_report(dir.sub("sw/report.txt"));
  CHECK(sweep.runs.size() == 4);
  CHECK(sweep.curve.size() == 2);
}

TEST_CASE("reruns with the same resolved config and seed are bit-identical") {
  TempDir dir("zsda_cli_repro");
  const std::vector<std::string> gen = {"generate", "--seed",
                                        "23",       "--set",
                                        "planted.dims=[2,3]", "--set",
                                        "planted.per_domain=40", "--set",
                                        "planted.test_per_domain=40"};
  auto with_out = [&](const std::vector<std::string>& base, const std::string& out) {
    std::vector<std::string> args = base;
    args.push_back("--out");
    args.push_back(out);
    return args;
  };
  CHECK(run(with_out(gen, dir.sub("a"))) == 0);
  CHECK(run(with_out(gen, dir.sub("b"))) == 0);
  for (const std::string name : {"config.json", "train.jsonl", "test.jsonl", "oracle.json"})
    CHECK(slurp(dir.sub("a/" + name)) == slurp(dir.sub("b/" + name)));

  const std::vector<std::string> tr = {"train",
                                       "--seed",
                                       "9",
                                       "--set",
                                       "data.train=" + dir.sub("a/train.jsonl"),
                                       "--set",
                                       "mask.T=4",
                                       "--set",
                                       "train.max_iters=80"};
  CHECK(run(with_out(tr, dir.sub("ta"))) == 0);
  CHECK(run(with_out(tr, dir.sub("tb"))) == 0);
  for (const std::string name : {"config.json", "checkpoint.json", "curve.csv", "summary.json"})
    CHECK(slurp(dir.sub("ta/" + name)) == slurp(dir.sub("tb/" + name)));
}

TEST_CASE("outputs are write-once per run directory") {
  TempDir dir("zsda_cli_once");
  const std::vector<std::string> gen = {"generate", "--out",  dir.sub("out"),
                                        "--set",    "planted.dims=[2,2]",
                                        "--set",    "planted.per_domain=10",
                                        "--set",    "planted.test_per_domain=10"};
  CHECK(run(gen) == 0);
  std::string err;
  CHECK(run(gen, &err) == 4);
  CHECK(err.rfind("error: output-exists:", 0) == 0);
}

TEST_CASE("resolved config is echoed with overrides applied") {
  TempDir dir("zsda_cli_echo");
  CHECK(run({"generate", "--out", dir.sub("out"), "--seed", "77", "--set",
             "planted.dims=[2,2]", "--set", "planted.per_domain=10", "--set",
             "planted.test_per_domain=10", "--set", "planted.link=softmax", "--set",
             "planted.classes=3"}) == 0);
  const std::string echo = slurp(dir.sub("out/config.json"));
  CHECK(echo.find("\"seed\": 77") != std::string::npos);
  CHECK(echo.find("\"link\": \"softmax\"") != std::string::npos);
  CHECK(echo.find("\"classes\": 3") != std::string::npos);
}

}  // TEST_SUITE
