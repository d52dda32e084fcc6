#include <doctest.h>

#include "casbench/result_store.hpp"
#include "sweep_fixtures.hpp"

using namespace casbench;
using namespace fixtures;
namespace fs = std::filesystem;

namespace {

std::string run_to_store(const fs::path& path, const SweepConfig& cfg, Backends b,
                         std::size_t parallelism, std::size_t n_prompts = 6) {
  fs::remove(path);
  const auto ds = prompts(n_prompts);
  auto store = ResultStore::open(path, make_run_header(cfg, ds, b, 0));
  run_sweep(ds, cfg, b, &store, {parallelism, 0});
  return slurp(path);
}

}  // namespace

TEST_SUITE("sweep") {

TEST_CASE("one prompt, one seed, one point gives one row") {
  SweepConfig c = small_grid();
  c.seeds = {0};
  c.k_eval = {1};
  Backends b = sim_backends("point(1)");
  const auto t = run_sweep(prompts(1), c, b, nullptr);
  REQUIRE(t.rows.size() == 1);
  CHECK(t.expected_cells == 1);
  CHECK_FALSE(t.partial());
  CHECK(t.rows[0].gen_accepted);
  CHECK(t.rows[0].verdicts.size() == 1);
}

TEST_CASE("grid enumeration covers the cross product") {
  SweepConfig c = small_grid();
  c.k_gen = {1, 5};
  c.theta_eval = {0.0, 0.5, 1.0};
  c.attacks = {"direct", "bon"};
  CHECK(enumerate_grid(c).size() == 2 * 2 * 3);
}

TEST_CASE("config validation") {
  SweepConfig c = small_grid();
  c.seeds.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_grid();
  c.k_eval = {5, 1};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_grid();
  c.theta_eval.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(SweepConfig::from_json(small_grid().to_json()).to_json() == small_grid().to_json());
}

TEST_CASE("identical sweeps are identical in memory") {
  SweepConfig c = small_grid();
  Backends b1 = sim_backends("mixture(1:0.7,0.5:0.3)");
  Backends b2 = sim_backends("mixture(1:0.7,0.5:0.3)");
  const auto a = run_sweep(prompts(8), c, b1, nullptr);
  const auto b = run_sweep(prompts(8), c, b2, nullptr, {4, 0});
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i].to_json() == b.rows[i].to_json());
}

TEST_CASE("store bytes do not depend on parallelism") {
  const fs::path dir = scratch("sweep-par");
  SweepConfig c = small_grid();
  c.attacks = {"direct", "bon"};
  c.k_gen = {1, 3};
  c.theta_eval = {0.0, 1.0};
  const std::string serial = run_to_store(dir / "a.jsonl", c, sim_backends("beta(2,2)"), 1);
  const std::string par = run_to_store(dir / "b.jsonl", c, sim_backends("beta(2,2)"), 8);
  CHECK(serial == par);
  CHECK(serial.size() > 1000);
}

TEST_CASE("resuming a torn store finishes with the same bytes and fewer calls") {
  const fs::path dir = scratch("sweep-resume");
  const SweepConfig c = small_grid();
  const std::string full = run_to_store(dir / "full.jsonl", c, sim_backends("beta(2,2)"), 1);

  // keep the header and the first four cells, plus half of the fifth line
  std::vector<std::string> lines;
  std::istringstream in(full);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  REQUIRE(lines.size() > 6);
  std::string cut;
  for (std::size_t i = 0; i < 5; ++i) cut += lines[i] + "\n";
  cut += lines[5].substr(0, lines[5].size() / 2);
  {
    std::ofstream out(dir / "part.jsonl", std::ios::binary | std::ios::trunc);
    out << cut;
  }

  Backends b = sim_backends("beta(2,2)");
  auto counting = std::make_shared<CountingTarget>(b.targets["sim"]);
  b.targets["sim"] = counting;
  const auto ds = prompts(6);
  auto store = ResultStore::open(dir / "part.jsonl", make_run_header(c, ds, b, 0));
  CHECK(store.size() == 4);
  const auto t = run_sweep(ds, c, b, &store);
  CHECK(slurp(dir / "part.jsonl") == full);
  CHECK(t.rows.size() == lines.size() - 1);

  Backends fresh = sim_backends("beta(2,2)");
  auto counting_full = std::make_shared<CountingTarget>(fresh.targets["sim"]);
  fresh.targets["sim"] = counting_full;
  run_sweep(ds, c, fresh, nullptr);
  CHECK(counting->calls.load() < counting_full->calls.load());
}

TEST_CASE("reopening with a different header is refused") {
  const fs::path dir = scratch("sweep-header");
  SweepConfig c = small_grid();
  run_to_store(dir / "s.jsonl", c, sim_backends("beta(2,2)"), 1);
  c.seeds = {0, 1, 2, 3};
  Backends b = sim_backends("beta(2,2)");
  CHECK_THROWS_AS(ResultStore::open(dir / "s.jsonl", make_run_header(c, prompts(6), b, 0)),
                  ConfigError);
}

TEST_CASE("store rejects a duplicate key") {
  const fs::path dir = scratch("store-dup");
  auto store = ResultStore::open(dir / "s.jsonl", {{"format", "x"}});
  store.append({{"key", "a"}, {"v", 1}});
  CHECK_THROWS_AS(store.append({{"key", "a"}, {"v", 2}}), DomainError);
  const auto contents = ResultStore::read(dir / "s.jsonl");
  CHECK(contents.cells.size() == 1);
}

TEST_CASE("backend failures mark cells failed and the sweep continues") {
  Backends b = sim_backends("point(1)");
  b.targets["dead"] = std::make_shared<DeadTarget>();
  SweepConfig c = small_grid();
  c.targets = {"sim", "dead"};
  const auto t = run_sweep(prompts(3), c, b, nullptr);
  CHECK(t.rows.size() == 2 * 3 * 3);
  CHECK(t.failed_count() == 9);
  CHECK(t.partial());
  for (const auto& r : t.rows) {
    if (r.point.target == "dead") {
      CHECK(r.status == CellStatus::kFailed);
      CHECK(r.failure.find("connection refused") != std::string::npos);
    } else {
      CHECK(r.status == CellStatus::kOk);
    }
  }
}

TEST_CASE("changing one seed only changes that seed's rows") {
  SweepConfig a = small_grid();
  a.seeds = {0, 1};
  SweepConfig b = small_grid();
  b.seeds = {0, 2};
  Backends ba = sim_backends("beta(1,1)");
  Backends bb = sim_backends("beta(1,1)");
  const auto ra = run_sweep(prompts(5), a, ba, nullptr);
  const auto rb = run_sweep(prompts(5), b, bb, nullptr);
  std::size_t compared = 0;
  for (const auto& x : ra.rows) {
    if (x.seed != 0) continue;
    for (const auto& y : rb.rows) {
      if (y.key() == x.key()) {
        CHECK(x.to_json() == y.to_json());
        ++compared;
      }
    }
  }
  CHECK(compared == 5);
}

TEST_CASE("seed offset shifts every seed") {
  SweepConfig c = small_grid();
  Backends b = sim_backends("beta(1,1)");
  const auto t = run_sweep(prompts(2), c, b, nullptr, {1, 100});
  for (const auto& r : t.rows) CHECK(r.seed >= 100);
}

TEST_CASE("early exit on and off agree on every cas bit") {
  SweepConfig on = small_grid();
  on.k_gen = {1, 3};
  on.attacks = {"bon"};
  on.theta_gen = {0.5};
  on.T_gen = {1.0};
  SweepConfig off = on;
  off.early_exit = false;
  Backends b1 = sim_backends("beta(2,2)");
  Backends b2 = sim_backends("beta(2,2)");
  const auto a = run_sweep(prompts(10), on, b1, nullptr);
  const auto b = run_sweep(prompts(10), off, b2, nullptr);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].gen_accepted == b.rows[i].gen_accepted);
    for (std::size_t k = 1; k <= 10; ++k) {
      CHECK(cas(a.rows[i].verdicts, k) == cas(b.rows[i].verdicts, k));
    }
  }
}

TEST_CASE("result rows round-trip through json") {
  Backends b = sim_backends("beta(2,2)");
  const auto t = run_sweep(prompts(3), small_grid(), b, nullptr);
  for (const auto& r : t.rows) CHECK(ResultRow::from_json(r.to_json()).to_json() == r.to_json());
}

TEST_CASE("heatmap axes and absent cells") {
  const fs::path dir = scratch("heatmap");
  SweepConfig c = small_grid();
  c.k_gen = {1, 5};
  c.theta_eval = {0.0};
  Backends b = sim_backends("beta(2,2)");
  const auto ds = prompts(6);
  auto store = ResultStore::open(dir / "s.jsonl", make_run_header(c, ds, b, 0));
  const auto t = run_sweep(ds, c, b, &store);

  CHECK_THROWS_AS(heatmap(t, "k_eval", "temperature", std::nullopt), ConfigError);
  CHECK_THROWS_AS(heatmap(t, "k_gen", "k_gen", 1), ConfigError);
  CHECK_THROWS_AS(heatmap(t, "k_gen", "T_gen", std::nullopt), ConfigError);

  const Heatmap hm = heatmap(t, "k_eval", "k_gen", std::nullopt);
  CHECK(hm.row_values == std::vector<std::string>{"1", "5", "10"});
  CHECK(hm.col_values == std::vector<std::string>{"1", "5"});
  // theta_eval = 0 with a fixed response: every verdict repeats the first
  for (std::size_t col = 0; col < 2; ++col) {
    REQUIRE(hm.at(0, col).has_value());
    for (std::size_t row = 1; row < 3; ++row) CHECK(hm.at(row, col)->rate == hm.at(0, col)->rate);
  }

  // a 1x1 heatmap equals asr on the matching subset
  const Heatmap one = heatmap(t, "target", "judge", 5);
  REQUIRE(one.cells.size() == 1);
  std::int64_t s = 0;
  for (const auto& r : t.rows) s += cas(r.verdicts, 5) ? 1 : 0;
  CHECK(one.at(0, 0)->rate == Rate{s, static_cast<std::int64_t>(t.rows.size())});

  // drop every k_gen = 5 row: those cells become absent
  ResultTable partial = t;
  std::erase_if(partial.rows, [](const ResultRow& r) { return r.point.k_gen == 5; });
  const Heatmap gap = heatmap(partial, "k_eval", "k_gen", std::nullopt);
  CHECK(gap.at(0, 0).has_value());
  CHECK_FALSE(gap.at(0, 1).has_value());
}

}  // TEST_SUITE
