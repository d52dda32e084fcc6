#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "casbench/attacks.hpp"
#include "casbench/metrics.hpp"
#include "casbench/model_client.hpp"
#include "casbench/protocol.hpp"

namespace casbench {

class ResultStore;

// Parameter grid of one sweep. Every list is non-empty after validate().
struct SweepConfig {
  std::vector<std::string> attacks;
  std::vector<std::string> targets;
  std::vector<std::string> judges;
  std::vector<std::size_t> k_gen{1, 5, 10};
  std::vector<std::size_t> k_eval;
  std::vector<double> T_gen{0.0, 0.5, 1.0};
  std::vector<double> T_eval{0.0, 0.5, 1.0};
  std::vector<double> theta_gen{0.0, 0.5, 1.0};
  std::vector<double> theta_eval{0.0, 0.5, 1.0};
  std::vector<std::int64_t> seeds;
  std::size_t budget_N = 10000;
  EvalMode mode = EvalMode::kFixedResponse;
  bool early_exit = true;
  // Checklist parameters (k_gen, k_eval, theta_gen, theta_eval) that were not
  // stated explicitly and hold defaults. Reports refuse to render them.
  std::vector<std::string> undeclared;

  void validate() const;
  std::size_t k_max() const;
  nlohmann::json to_json() const;
  static SweepConfig from_json(const nlohmann::json& j);
};

// Coordinates of one grid point, k_eval excluded: every cell records verdicts
// up to k_max so all k_eval values are read from the same vector.
struct GridPoint {
  std::string attack;
  std::string target;
  std::string judge;
  std::size_t k_gen = 1;
  double T_gen = 0.0;
  double theta_gen = 0.0;
  double T_eval = 0.0;
  double theta_eval = 0.0;

  friend bool operator==(const GridPoint&, const GridPoint&) = default;
};

enum class CellStatus { kOk, kFailed };

struct ResultRow {
  GridPoint point;
  std::string prompt_id;
  std::int64_t seed = 0;
  CellStatus status = CellStatus::kOk;
  std::string failure;
  bool gen_accepted = false;
  std::size_t candidates_tried = 0;
  std::vector<Verdict> verdicts;  // length k_max; all safe when generation failed
  std::size_t judge_calls = 0;
  std::size_t ambiguous = 0;
  std::vector<std::string> raw_labels;

  std::string key() const;
  nlohmann::json to_json() const;
  static ResultRow from_json(const nlohmann::json& j);
};

// Rows of a sweep plus the header they were produced under.
struct ResultTable {
  nlohmann::json header;
  std::vector<ResultRow> rows;
  // Number of cells the header's grid calls for.
  std::size_t expected_cells = 0;

  std::size_t failed_count() const;
  // Missing or failed cells.
  bool partial() const;
  std::size_t k_max() const;
};

// Named backends a sweep can reference.
struct Backends {
  std::map<std::string, std::shared_ptr<ChatModel>> targets;
  std::map<std::string, std::shared_ptr<JudgeModel>> judges;
  std::map<std::string, std::shared_ptr<Attack>> attacks;
};

struct SweepOptions {
  std::size_t parallelism = 1;
  std::int64_t seed_offset = 0;
};

// Every grid point in enumeration order.
std::vector<GridPoint> enumerate_grid(const SweepConfig& cfg);

// Header written to the store: sweep grid, dataset ids, backend identities,
// guard template hash.
nlohmann::json make_run_header(const SweepConfig& cfg, const std::vector<PromptRef>& dataset,
                               const Backends& backends, std::int64_t seed_offset);

// Runs every (grid point, prompt, seed) cell. Cells already in the store are
// not recomputed. Rows are committed in enumeration order regardless of
// parallelism, so the store's bytes do not depend on scheduling.
ResultTable run_sweep(const std::vector<PromptRef>& dataset, const SweepConfig& cfg,
                      Backends& backends, ResultStore* store, const SweepOptions& options = {});

// Rebuilds a table from a store file.
ResultTable load_results(const std::string& path);

// Axis names: attack, target, judge, k_gen, T_gen, theta_gen, T_eval,
// theta_eval, k_eval, seed.
bool is_axis(const std::string& name);

struct HeatmapCell {
  Rate rate;
  ConfidenceInterval ci;
};

struct Heatmap {
  std::string row_axis;
  std::string col_axis;
  std::size_t k_eval = 0;  // used when neither axis is k_eval
  std::vector<std::string> row_values;
  std::vector<std::string> col_values;
  // row-major; nullopt where no non-failed row matched
  std::vector<std::optional<HeatmapCell>> cells;

  const std::optional<HeatmapCell>& at(std::size_t r, std::size_t c) const {
    return cells[r * col_values.size() + c];
  }
};

// Aggregates over every axis other than the two requested. ConfigError for an
// unknown axis, equal axes, or a missing k_fixed when neither axis is k_eval.
Heatmap heatmap(const ResultTable& results, const std::string& row_axis,
                const std::string& col_axis, std::optional<std::size_t> k_fixed,
                double z = kDefaultWilsonZ);

// Label of a row's value on an axis (k_eval excluded).
std::string axis_value(const ResultRow& row, const std::string& axis);
std::string format_number(double v);

}  // namespace casbench
