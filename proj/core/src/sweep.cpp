#include "casbench/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "casbench/error.hpp"
#include "casbench/result_store.hpp"

namespace casbench {

namespace {

using nlohmann::json;

const std::vector<std::string> kAxes = {"attack",  "target",    "judge",  "k_gen",
                                        "T_gen",   "theta_gen", "T_eval", "theta_eval",
                                        "k_eval",  "seed"};

template <typename T>
void require_non_empty(const std::vector<T>& v, const char* name) {
  if (v.empty()) throw ConfigError(name, 0, "axis value list must be non-empty");
}

void require_non_negative(const std::vector<double>& v, const char* name) {
  for (double x : v) {
    if (!(x >= 0.0)) throw ConfigError(name, 0, "temperatures must be >= 0");
  }
}

void require_positive(const std::vector<std::size_t>& v, const char* name) {
  for (std::size_t x : v) {
    if (x < 1) throw ConfigError(name, 0, "consistency thresholds must be >= 1");
  }
}

template <typename T>
void require_unique(const std::vector<T>& v, const char* name) {
  std::set<T> seen(v.begin(), v.end());
  if (seen.size() != v.size()) throw ConfigError(name, 0, "axis values must be distinct");
}

// Generation coordinates shared by the rows of one work unit.
struct GenPoint {
  std::string attack;
  std::string target;
  std::string judge;
  std::size_t k_gen;
  double T_gen;
  double theta_gen;
};

struct WorkUnit {
  GenPoint gen;
  std::size_t prompt_index;
  std::int64_t seed;
  std::vector<GridPoint> points;  // eval variations, in grid order
};

ResultRow failed_row(const GridPoint& p, const std::string& prompt_id, std::int64_t seed,
                     std::size_t k_max, const std::string& reason) {
  ResultRow row;
  row.point = p;
  row.prompt_id = prompt_id;
  row.seed = seed;
  row.status = CellStatus::kFailed;
  row.failure = reason;
  row.verdicts.assign(k_max, Verdict::kSafe);
  return row;
}

template <typename Map>
auto& lookup(Map& map, const std::string& name, const char* what) {
  auto it = map.find(name);
  if (it == map.end() || !it->second) {
    throw ConfigError(what, 0, "no " + std::string(what) + " named '" + name + "'");
  }
  return *it->second;
}

std::vector<ResultRow> run_unit(const WorkUnit& unit, const PromptRef& prompt,
                                const SweepConfig& cfg, Backends& backends) {
  ChatModel& target = lookup(backends.targets, unit.gen.target, "target");
  JudgeModel& judge = lookup(backends.judges, unit.gen.judge, "judge");
  const Attack& attack = lookup(backends.attacks, unit.gen.attack, "attack");
  const std::size_t k_max = cfg.k_max();

  GenConfig gen_cfg;
  gen_cfg.k_gen = unit.gen.k_gen;
  gen_cfg.T_gen = unit.gen.T_gen;
  gen_cfg.theta_gen = unit.gen.theta_gen;
  gen_cfg.budget_N = cfg.budget_N;
  gen_cfg.seed = unit.seed;
  gen_cfg.early_exit = cfg.early_exit;

  std::vector<ResultRow> rows;
  GenOutcome gen;
  try {
    gen = run_cas_gen(prompt, attack, target, judge, gen_cfg);
  } catch (const RunError& e) {
    for (const GridPoint& p : unit.points) {
      rows.push_back(failed_row(p, prompt.id, unit.seed, k_max,
                                std::string("generation: ") + e.what()));
    }
    return rows;
  }

  for (const GridPoint& p : unit.points) {
    ResultRow row;
    row.point = p;
    row.prompt_id = prompt.id;
    row.seed = unit.seed;
    row.gen_accepted = gen.accepted;
    row.candidates_tried = gen.candidates_tried;
    row.verdicts.assign(k_max, Verdict::kSafe);
    if (gen.accepted) {
      EvalConfig eval_cfg;
      eval_cfg.k_eval = k_max;
      eval_cfg.T_eval = p.T_eval;
      eval_cfg.theta_eval = p.theta_eval;
      eval_cfg.mode = cfg.mode;
      eval_cfg.seed = unit.seed;
      eval_cfg.early_exit = cfg.early_exit;
      try {
        EvalOutcome ev =
            run_cas_eval(prompt.id, *gen.candidate, gen.response, &target, judge, eval_cfg);
        row.verdicts = std::move(ev.verdicts.verdicts);
        row.judge_calls = ev.judge_calls;
        row.ambiguous = ev.ambiguous;
        row.raw_labels = std::move(ev.raw_labels);
      } catch (const RunError& e) {
        row = failed_row(p, prompt.id, unit.seed, k_max, std::string("evaluation: ") + e.what());
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<WorkUnit> enumerate_units(const SweepConfig& cfg, std::size_t n_prompts,
                                      std::int64_t seed_offset) {
  std::vector<WorkUnit> units;
  for (const auto& attack : cfg.attacks)
    for (const auto& target : cfg.targets)
      for (const auto& judge : cfg.judges)
        for (std::size_t k_gen : cfg.k_gen)
          for (double T_gen : cfg.T_gen)
            for (double theta_gen : cfg.theta_gen) {
              GenPoint gp{attack, target, judge, k_gen, T_gen, theta_gen};
              std::vector<GridPoint> points;
              for (double T_eval : cfg.T_eval)
                for (double theta_eval : cfg.theta_eval)
                  points.push_back({attack, target, judge, k_gen, T_gen, theta_gen, T_eval,
                                    theta_eval});
              for (std::size_t i = 0; i < n_prompts; ++i)
                for (std::int64_t s : cfg.seeds) units.push_back({gp, i, s + seed_offset, points});
            }
  return units;
}

std::vector<std::string> axis_values_from_header(const json& header, const std::string& axis) {
  const json& sweep = header.at("sweep");
  std::vector<std::string> out;
  if (axis == "attack" || axis == "target" || axis == "judge") {
    for (const auto& v : sweep.at(axis + "s")) out.push_back(v.get<std::string>());
  } else if (axis == "k_gen" || axis == "k_eval") {
    for (const auto& v : sweep.at(axis)) out.push_back(std::to_string(v.get<std::size_t>()));
  } else if (axis == "seed") {
    const std::int64_t offset = header.value("seed_offset", std::int64_t{0});
    for (const auto& v : sweep.at("seeds")) out.push_back(std::to_string(v.get<std::int64_t>() + offset));
  } else {
    for (const auto& v : sweep.at(axis)) out.push_back(format_number(v.get<double>()));
  }
  return out;
}

}  // namespace

std::string format_number(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void SweepConfig::validate() const {
  require_non_empty(attacks, "attacks");
  require_non_empty(targets, "targets");
  require_non_empty(judges, "judges");
  require_non_empty(k_gen, "k_gen");
  require_non_empty(k_eval, "k_eval");
  require_non_empty(T_gen, "T_gen");
  require_non_empty(T_eval, "T_eval");
  require_non_empty(theta_gen, "theta_gen");
  require_non_empty(theta_eval, "theta_eval");
  require_non_empty(seeds, "seeds");
  require_positive(k_gen, "k_gen");
  require_positive(k_eval, "k_eval");
  require_non_negative(T_gen, "T_gen");
  require_non_negative(T_eval, "T_eval");
  require_non_negative(theta_gen, "theta_gen");
  require_non_negative(theta_eval, "theta_eval");
  require_unique(attacks, "attacks");
  require_unique(targets, "targets");
  require_unique(judges, "judges");
  require_unique(k_gen, "k_gen");
  require_unique(k_eval, "k_eval");
  require_unique(T_gen, "T_gen");
  require_unique(T_eval, "T_eval");
  require_unique(theta_gen, "theta_gen");
  require_unique(theta_eval, "theta_eval");
  require_unique(seeds, "seeds");
  if (!std::is_sorted(k_eval.begin(), k_eval.end())) {
    throw ConfigError("k_eval", 0, "values must be ascending");
  }
  if (budget_N < 1) throw ConfigError("budget", 0, "must be >= 1");
}

std::size_t SweepConfig::k_max() const {
  return k_eval.empty() ? 0 : *std::max_element(k_eval.begin(), k_eval.end());
}

json SweepConfig::to_json() const {
  return json{{"attacks", attacks},
              {"targets", targets},
              {"judges", judges},
              {"k_gen", k_gen},
              {"k_eval", k_eval},
              {"T_gen", T_gen},
              {"T_eval", T_eval},
              {"theta_gen", theta_gen},
              {"theta_eval", theta_eval},
              {"seeds", seeds},
              {"budget", budget_N},
              {"mode", std::string(to_string(mode))},
              {"early_exit", early_exit},
              {"undeclared", undeclared}};
}

SweepConfig SweepConfig::from_json(const json& j) {
  SweepConfig c;
  try {
    j.at("attacks").get_to(c.attacks);
    j.at("targets").get_to(c.targets);
    j.at("judges").get_to(c.judges);
    j.at("k_gen").get_to(c.k_gen);
    j.at("k_eval").get_to(c.k_eval);
    j.at("T_gen").get_to(c.T_gen);
    j.at("T_eval").get_to(c.T_eval);
    j.at("theta_gen").get_to(c.theta_gen);
    j.at("theta_eval").get_to(c.theta_eval);
    j.at("seeds").get_to(c.seeds);
    c.budget_N = j.at("budget").get<std::size_t>();
    c.mode = parse_eval_mode(j.at("mode").get<std::string>());
    c.early_exit = j.value("early_exit", true);
    c.undeclared = j.value("undeclared", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw ConfigError("sweep", 0, std::string("malformed sweep block: ") + e.what());
  }
  return c;
}

std::string ResultRow::key() const {
  return point.attack + "|" + point.target + "|" + point.judge + "|" +
         std::to_string(point.k_gen) + "|" + format_number(point.T_gen) + "|" +
         format_number(point.theta_gen) + "|" + format_number(point.T_eval) + "|" +
         format_number(point.theta_eval) + "|" + prompt_id + "|" + std::to_string(seed);
}

json ResultRow::to_json() const {
  json j{{"kind", "cell"},
         {"key", key()},
         {"attack", point.attack},
         {"target", point.target},
         {"judge", point.judge},
         {"k_gen", point.k_gen},
         {"T_gen", point.T_gen},
         {"theta_gen", point.theta_gen},
         {"T_eval", point.T_eval},
         {"theta_eval", point.theta_eval},
         {"prompt_id", prompt_id},
         {"seed", seed},
         {"status", status == CellStatus::kOk ? "ok" : "failed"},
         {"gen_accepted", gen_accepted},
         {"candidates_tried", candidates_tried},
         {"verdicts", verdicts_to_string(verdicts)},
         {"judge_calls", judge_calls},
         {"ambiguous", ambiguous},
         {"raw_labels", raw_labels}};
  if (status == CellStatus::kFailed) j["failure"] = failure;
  return j;
}

ResultRow ResultRow::from_json(const json& j) {
  ResultRow r;
  try {
    r.point.attack = j.at("attack").get<std::string>();
    r.point.target = j.at("target").get<std::string>();
    r.point.judge = j.at("judge").get<std::string>();
    r.point.k_gen = j.at("k_gen").get<std::size_t>();
    r.point.T_gen = j.at("T_gen").get<double>();
    r.point.theta_gen = j.at("theta_gen").get<double>();
    r.point.T_eval = j.at("T_eval").get<double>();
    r.point.theta_eval = j.at("theta_eval").get<double>();
    r.prompt_id = j.at("prompt_id").get<std::string>();
    r.seed = j.at("seed").get<std::int64_t>();
    r.status = j.at("status").get<std::string>() == "ok" ? CellStatus::kOk : CellStatus::kFailed;
    r.failure = j.value("failure", "");
    r.gen_accepted = j.at("gen_accepted").get<bool>();
    r.candidates_tried = j.at("candidates_tried").get<std::size_t>();
    r.verdicts = verdicts_from_string(j.at("verdicts").get<std::string>());
    r.judge_calls = j.at("judge_calls").get<std::size_t>();
    r.ambiguous = j.at("ambiguous").get<std::size_t>();
    j.at("raw_labels").get_to(r.raw_labels);
  } catch (const json::exception& e) {
    throw ConfigError("results", 0, std::string("malformed cell record: ") + e.what());
  }
  return r;
}

std::size_t ResultTable::failed_count() const {
  return static_cast<std::size_t>(std::count_if(
      rows.begin(), rows.end(), [](const ResultRow& r) { return r.status == CellStatus::kFailed; }));
}

bool ResultTable::partial() const { return rows.size() < expected_cells || failed_count() > 0; }

std::size_t ResultTable::k_max() const {
  std::size_t k = 0;
  for (const auto& v : header.at("sweep").at("k_eval")) k = std::max(k, v.get<std::size_t>());
  return k;
}

std::vector<GridPoint> enumerate_grid(const SweepConfig& cfg) {
  std::vector<GridPoint> out;
  for (const auto& attack : cfg.attacks)
    for (const auto& target : cfg.targets)
      for (const auto& judge : cfg.judges)
        for (std::size_t k_gen : cfg.k_gen)
          for (double T_gen : cfg.T_gen)
            for (double theta_gen : cfg.theta_gen)
              for (double T_eval : cfg.T_eval)
                for (double theta_eval : cfg.theta_eval)
                  out.push_back({attack, target, judge, k_gen, T_gen, theta_gen, T_eval, theta_eval});
  return out;
}

json make_run_header(const SweepConfig& cfg, const std::vector<PromptRef>& dataset,
                     const Backends& backends, std::int64_t seed_offset) {
  json prompt_ids = json::array();
  for (const PromptRef& p : dataset) prompt_ids.push_back(p.id);
  json attacks = json::object();
  for (const auto& name : cfg.attacks) {
    auto it = backends.attacks.find(name);
    attacks[name] = it != backends.attacks.end() && it->second ? it->second->kind() : "unknown";
  }
  json targets = json::object();
  for (const auto& name : cfg.targets) {
    auto it = backends.targets.find(name);
    targets[name] = it != backends.targets.end() && it->second ? it->second->identity() : "unknown";
  }
  json judges = json::object();
  for (const auto& name : cfg.judges) {
    auto it = backends.judges.find(name);
    judges[name] = it != backends.judges.end() && it->second ? it->second->identity() : "unknown";
  }
  return json{{"format", "casbench-results/1"},
              {"sweep", cfg.to_json()},
              {"seed_offset", seed_offset},
              {"prompt_ids", std::move(prompt_ids)},
              {"attack_kinds", std::move(attacks)},
              {"target_identities", std::move(targets)},
              {"judge_identities", std::move(judges)},
              {"guard_template_sha256", guard_template_sha256()}};
}

ResultTable run_sweep(const std::vector<PromptRef>& dataset, const SweepConfig& cfg,
                      Backends& backends, ResultStore* store, const SweepOptions& options) {
  cfg.validate();
  if (dataset.empty()) throw ConfigError("dataset", 0, "dataset has no prompts");
  for (const auto& name : cfg.attacks) lookup(backends.attacks, name, "attack");
  for (const auto& name : cfg.targets) lookup(backends.targets, name, "target");
  for (const auto& name : cfg.judges) lookup(backends.judges, name, "judge");

  const json header = make_run_header(cfg, dataset, backends, options.seed_offset);
  std::vector<WorkUnit> units = enumerate_units(cfg, dataset.size(), options.seed_offset);

  if (store != nullptr) {
    std::erase_if(units, [&](const WorkUnit& u) {
      return std::all_of(u.points.begin(), u.points.end(), [&](const GridPoint& p) {
        ResultRow probe;
        probe.point = p;
        probe.prompt_id = dataset[u.prompt_index].id;
        probe.seed = u.seed;
        return store->contains(probe.key());
      });
    });
  }

  ResultTable table;
  table.header = header;
  table.header["kind"] = "header";

  std::vector<std::optional<std::vector<ResultRow>>> done(units.size());
  std::size_t committed = 0;
  std::mutex commit_mu;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr failure;

  auto commit_ready = [&] {
    while (committed < units.size() && done[committed]) {
      for (ResultRow& row : *done[committed]) {
        if (store != nullptr && !store->contains(row.key())) store->append(row.to_json());
        if (store == nullptr) table.rows.push_back(std::move(row));
      }
      done[committed].reset();
      ++committed;
    }
  };

  auto worker = [&] {
    for (;;) {
      if (stop.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= units.size()) return;
      try {
        auto rows = run_unit(units[i], dataset[units[i].prompt_index], cfg, backends);
        std::lock_guard lock(commit_mu);
        done[i] = std::move(rows);
        commit_ready();
      } catch (...) {
        std::lock_guard lock(commit_mu);
        if (!failure) failure = std::current_exception();
        stop.store(true);
        return;
      }
    }
  };

  const std::size_t n_threads = std::max<std::size_t>(1, std::min(options.parallelism, units.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  if (store != nullptr) return load_results(store->path().string());
  table.expected_cells = enumerate_grid(cfg).size() * dataset.size() * cfg.seeds.size();
  return table;
}

ResultTable load_results(const std::string& path) {
  ResultStore::Contents contents = ResultStore::read(path);
  ResultTable table;
  table.header = std::move(contents.header);
  for (const json& cell : contents.cells) table.rows.push_back(ResultRow::from_json(cell));
  try {
    const SweepConfig cfg = SweepConfig::from_json(table.header.at("sweep"));
    table.expected_cells =
        enumerate_grid(cfg).size() * table.header.at("prompt_ids").size() * cfg.seeds.size();
  } catch (const json::exception& e) {
    throw ConfigError("results", 1, std::string("malformed result header: ") + e.what());
  }
  return table;
}

bool is_axis(const std::string& name) {
  return std::find(kAxes.begin(), kAxes.end(), name) != kAxes.end();
}

std::string axis_value(const ResultRow& row, const std::string& axis) {
  if (axis == "attack") return row.point.attack;
  if (axis == "target") return row.point.target;
  if (axis == "judge") return row.point.judge;
  if (axis == "k_gen") return std::to_string(row.point.k_gen);
  if (axis == "T_gen") return format_number(row.point.T_gen);
  if (axis == "theta_gen") return format_number(row.point.theta_gen);
  if (axis == "T_eval") return format_number(row.point.T_eval);
  if (axis == "theta_eval") return format_number(row.point.theta_eval);
  if (axis == "seed") return std::to_string(row.seed);
  throw ConfigError(axis, 0, "not a per-row axis");
}

Heatmap heatmap(const ResultTable& results, const std::string& row_axis,
                const std::string& col_axis, std::optional<std::size_t> k_fixed, double z) {
  for (const std::string* axis : {&row_axis, &col_axis}) {
    if (!is_axis(*axis)) {
      throw ConfigError(*axis, 0, "unknown axis; expected one of attack, target, judge, k_gen, "
                                  "T_gen, theta_gen, T_eval, theta_eval, k_eval, seed");
    }
  }
  if (row_axis == col_axis) throw ConfigError(row_axis, 0, "heatmap axes must differ");
  const bool k_on_axis = row_axis == "k_eval" || col_axis == "k_eval";
  if (!k_on_axis && !k_fixed) {
    throw ConfigError("k_eval", 0, "heatmap without a k_eval axis needs an explicit k_eval");
  }

  Heatmap hm;
  hm.row_axis = row_axis;
  hm.col_axis = col_axis;
  hm.k_eval = k_fixed.value_or(0);
  try {
    hm.row_values = axis_values_from_header(results.header, row_axis);
    hm.col_values = axis_values_from_header(results.header, col_axis);
  } catch (const json::exception&) {
    throw ConfigError(row_axis + "/" + col_axis, 0, "axis was not swept in these results");
  }
  if (k_fixed && !k_on_axis && (*k_fixed < 1 || *k_fixed > results.k_max())) {
    throw RangeError("k_eval=" + std::to_string(*k_fixed) + " exceeds recorded k_max=" +
                     std::to_string(results.k_max()));
  }

  auto index_of = [](const std::vector<std::string>& values, const std::string& v) {
    auto it = std::find(values.begin(), values.end(), v);
    return it == values.end() ? values.size() : static_cast<std::size_t>(it - values.begin());
  };

  std::vector<Rate> acc(hm.row_values.size() * hm.col_values.size());
  for (const ResultRow& row : results.rows) {
    if (row.status != CellStatus::kOk) continue;
    auto add = [&](std::size_t r, std::size_t c, std::size_t k) {
      if (r >= hm.row_values.size() || c >= hm.col_values.size()) return;
      Rate& cell = acc[r * hm.col_values.size() + c];
      cell.successes += cas(row.verdicts, k) ? 1 : 0;
      ++cell.n;
    };
    if (row_axis == "k_eval") {
      const std::size_t c = index_of(hm.col_values, axis_value(row, col_axis));
      for (std::size_t r = 0; r < hm.row_values.size(); ++r) {
        add(r, c, static_cast<std::size_t>(std::stoul(hm.row_values[r])));
      }
    } else if (col_axis == "k_eval") {
      const std::size_t r = index_of(hm.row_values, axis_value(row, row_axis));
      for (std::size_t c = 0; c < hm.col_values.size(); ++c) {
        add(r, c, static_cast<std::size_t>(std::stoul(hm.col_values[c])));
      }
    } else {
      add(index_of(hm.row_values, axis_value(row, row_axis)),
          index_of(hm.col_values, axis_value(row, col_axis)), *k_fixed);
    }
  }

  hm.cells.reserve(acc.size());
  for (const Rate& r : acc) {
    if (r.n == 0) {
      hm.cells.emplace_back(std::nullopt);
    } else {
      hm.cells.emplace_back(HeatmapCell{r, wilson_interval(r.successes, r.n, z)});
    }
  }
  return hm;
}

}  // namespace casbench
