#include <doctest.h>

#include <sstream>

#include "cli_app.hpp"
#include "sweep_fixtures.hpp"

namespace fs = std::filesystem;
using casbench::cli::run;
using fixtures::scratch;
using fixtures::slurp;

namespace {

const std::string kFixtures = CASBENCH_FIXTURE_DIR;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"launch"}).code == 2);
  CHECK(cli({"sweep"}).code == 2);
  CHECK(cli({"sweep", "--config", "x", "--bogus"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("config errors exit 3") {
  const auto r = cli({"sweep", "--config", kFixtures + "/missing_seeds.yaml", "--out",
                      scratch("cli-bad").string()});
  CHECK(r.code == 3);
  CHECK(r.err.find("sweep.seeds") != std::string::npos);
}

TEST_CASE("sweep twice gives identical stores; parallelism does not matter") {
  const fs::path dir = scratch("cli-sweep");
  const std::string cfg = kFixtures + "/bon_full.yaml";
  CHECK(cli({"sweep", "--config", cfg, "--out", (dir / "a").string()}).code == 0);
  CHECK(cli({"sweep", "--config", cfg, "--out", (dir / "b").string(), "--parallelism", "4"}).code == 0);
  CHECK(slurp(dir / "a" / "results.jsonl") == slurp(dir / "b" / "results.jsonl"));
  CHECK(fs::exists(dir / "a" / "config.normalized.json"));
  // rerun over a complete store is a no-op
  const auto again = cli({"sweep", "--config", cfg, "--out", (dir / "a").string()});
  CHECK(again.code == 0);
  CHECK(again.out.find("0 new") != std::string::npos);
  CHECK(slurp(dir / "a" / "results.jsonl") == slurp(dir / "b" / "results.jsonl"));
}

TEST_CASE("seed offset changes the store header") {
  const fs::path dir = scratch("cli-offset");
  const std::string cfg = kFixtures + "/sim_minimal.yaml";
  CHECK(cli({"sweep", "--config", cfg, "--out", dir.string()}).code == 0);
  CHECK(cli({"sweep", "--config", cfg, "--out", dir.string(), "--seed-offset", "10"}).code == 3);
}

TEST_CASE("report writes csvs and refuses missing checklist fields") {
  const fs::path dir = scratch("cli-report");
  CHECK(cli({"sweep", "--config", kFixtures + "/sim_minimal.yaml", "--out", (dir / "ok").string()}).code == 0);
  const auto r = cli({"report", "--results", (dir / "ok" / "results.jsonl").string()});
  CHECK(r.code == 0);
  CHECK(fs::exists(dir / "ok" / "report" / "detail_summary.csv"));
  CHECK(r.out.find("theta_eval") != std::string::npos);

  CHECK(cli({"sweep", "--config", kFixtures + "/no_theta_eval.yaml", "--out", (dir / "bad").string()}).code == 0);
  const auto bad = cli({"report", "--results", (dir / "bad" / "results.jsonl").string()});
  CHECK(bad.code == 6);
  CHECK(bad.err.find("theta_eval") != std::string::npos);

  CHECK(cli({"sweep", "--config", kFixtures + "/bon_no_theta_gen.yaml", "--out", (dir / "bon").string()}).code == 0);
  CHECK(cli({"report", "--results", (dir / "bon" / "results.jsonl").string()}).code == 6);
}

TEST_CASE("report refuses partial results without --allow-partial") {
  const fs::path dir = scratch("cli-partial");
  CHECK(cli({"sweep", "--config", kFixtures + "/sim_minimal.yaml", "--out", dir.string()}).code == 0);
  std::string content = slurp(dir / "results.jsonl");
  content.pop_back();
  content.erase(content.rfind('\n') + 1);
  {
    std::ofstream out(dir / "results.jsonl", std::ios::binary | std::ios::trunc);
    out << content;
  }
  CHECK(cli({"report", "--results", (dir / "results.jsonl").string()}).code == 5);
  CHECK(cli({"report", "--results", (dir / "results.jsonl").string(), "--allow-partial"}).code == 0);
}

TEST_CASE("simulate writes the decay curve") {
  const fs::path dir = scratch("cli-sim");
  const auto r = cli({"simulate", "--population", "mixture(1:0.7,0.5:0.3)", "--prompts", "20000",
                      "--k-max", "10", "--seed", "3", "--fit-trials", "12", "--out", dir.string()});
  CHECK(r.code == 0);
  std::istringstream in(slurp(dir / "decay.csv"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "k,exact,monte_carlo,std_error,n_prompts");
  int rows = 0;
  while (std::getline(in, line)) {
    double k, exact, mc, se;
    REQUIRE(std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &k, &exact, &mc, &se) == 4);
    CHECK(exact == doctest::Approx(0.7 + 0.3 * std::pow(0.5, k)));
    CHECK(std::abs(mc - exact) <= 3 * se + 1e-12);
    ++rows;
  }
  CHECK(rows == 10);
  CHECK(fs::exists(dir / "estimates.csv"));
  CHECK(cli({"simulate", "--population", "normal(0,1)", "--out", dir.string()}).code == 3);
  CHECK(cli({"simulate", "--config", kFixtures + "/sim_minimal.yaml", "--target", "sim-target",
             "--prompts", "100", "--out", dir.string()}).code == 0);
}

TEST_CASE("run-gen and run-eval against sim backends") {
  const fs::path dir = scratch("cli-run");
  const std::string cfg = kFixtures + "/bon_full.yaml";
  const auto g = cli({"run-gen", "--config", cfg, "--target", "sim-target", "--judge", "sim-judge",
                      "--attack", "bon", "--prompt-id", "q01", "--k-gen", "2", "--theta-gen", "1",
                      "--T-gen", "1", "--budget", "500"});
  REQUIRE(g.code == 0);
  const auto gj = nlohmann::json::parse(g.out);
  CHECK(gj["prompt_id"] == "q01");
  CHECK(gj["candidates_tried"].get<int>() >= 1);

  const auto e = cli({"run-eval", "--config", cfg, "--judge", "sim-judge", "--candidate", "x",
                      "--response", "stub [p=1 r=00]", "--mode", "fixed-response", "--k-eval", "5",
                      "--theta-eval", "1", "--out", (dir / "e.json").string()});
  CHECK(e.code == 0);
  const auto ej = nlohmann::json::parse(slurp(dir / "e.json"));
  CHECK(ej["consistent"] == true);
  CHECK(ej["verdicts"] == "11111");

  CHECK(cli({"run-eval", "--config", cfg, "--judge", "sim-judge", "--candidate", "x", "--mode",
             "fixed-response", "--k-eval", "5", "--theta-eval", "1"}).code == 2);
  CHECK(cli({"run-gen", "--config", cfg, "--target", "sim-target", "--judge", "sim-judge",
             "--attack", "bon", "--prompt-id", "nope", "--k-gen", "1", "--theta-gen", "1"}).code == 3);
}

TEST_CASE("transport failure in run-gen exits 4") {
  const auto r = cli({"run-gen", "--config", kFixtures + "/live_judge.yaml", "--target",
                      "local-target", "--judge", "guard", "--attack", "direct", "--prompt", "x",
                      "--k-gen", "1", "--theta-gen", "0", "--budget", "1"});
  CHECK(r.code == 4);
}

TEST_CASE("probe-determinism collects, persists and re-analyzes") {
  const fs::path dir = scratch("cli-probe");
  const std::string cfg = kFixtures + "/sim_minimal.yaml";
  const auto r = cli({"probe-determinism", "--config", cfg, "--target", "sim-target", "--repeats",
                      "4", "--out", (dir / "a").string()});
  REQUIRE(r.code == 0);
  // the sim target at temperature 0 is deterministic
  CHECK(r.out.find("aggregate exact_match_rate: 1") != std::string::npos);
  CHECK(cli({"probe-determinism", "--analyze", (dir / "a" / "responses.jsonl").string(), "--out",
             (dir / "b").string()}).code == 0);
  CHECK(slurp(dir / "a" / "determinism.json") == slurp(dir / "b" / "determinism.json"));
  CHECK(slurp(dir / "a" / "determinism.csv") == slurp(dir / "b" / "determinism.csv"));
}

}  // TEST_SUITE
