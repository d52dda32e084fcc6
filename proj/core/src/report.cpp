#include "casbench/report.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <tuple>

#include "casbench/error.hpp"

namespace casbench {

namespace {

using nlohmann::json;

template <typename T>
std::optional<std::vector<T>> declared_list(const json& sweep, const std::string& key,
                                            const std::vector<std::string>& undeclared) {
  if (!sweep.contains(key) || sweep.at(key).is_null()) return std::nullopt;
  if (std::find(undeclared.begin(), undeclared.end(), key) != undeclared.end()) return std::nullopt;
  return sweep.at(key).get<std::vector<T>>();
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) {
      out += format_number(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

template <typename T>
std::string join_opt(const std::optional<std::vector<T>>& v) {
  return v ? join(*v) : std::string("<undisclosed>");
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("out", 0, "cannot write " + path.string());
  return out;
}

// Order rows by (grid point, prompt, seed) following the header's declared
// orders, independent of the order they were committed in.
std::vector<const ResultRow*> ordered_rows(const ResultTable& results) {
  const SweepConfig cfg = SweepConfig::from_json(results.header.at("sweep"));
  const std::vector<GridPoint> grid = enumerate_grid(cfg);
  std::vector<std::string> prompt_ids;
  if (results.header.contains("prompt_ids")) {
    results.header.at("prompt_ids").get_to(prompt_ids);
  }
  auto grid_index = [&](const GridPoint& p) {
    auto it = std::find(grid.begin(), grid.end(), p);
    return static_cast<std::size_t>(it - grid.begin());
  };
  auto prompt_index = [&](const std::string& id) {
    auto it = std::find(prompt_ids.begin(), prompt_ids.end(), id);
    return static_cast<std::size_t>(it - prompt_ids.begin());
  };
  std::vector<std::tuple<std::size_t, std::size_t, std::string, std::int64_t, const ResultRow*>> keyed;
  keyed.reserve(results.rows.size());
  for (const ResultRow& r : results.rows) {
    keyed.emplace_back(grid_index(r.point), prompt_index(r.prompt_id), r.prompt_id, r.seed, &r);
  }
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    return std::tie(std::get<0>(a), std::get<1>(a), std::get<2>(a), std::get<3>(a)) <
           std::tie(std::get<0>(b), std::get<1>(b), std::get<2>(b), std::get<3>(b));
  });
  std::vector<const ResultRow*> out;
  out.reserve(keyed.size());
  for (const auto& k : keyed) out.push_back(std::get<4>(k));
  return out;
}

std::string group_fields(const GridPoint& p) {
  return csv_escape(p.attack) + "," + csv_escape(p.target) + "," + csv_escape(p.judge) + "," +
         std::to_string(p.k_gen) + "," + format_number(p.T_gen) + "," + format_number(p.T_eval) +
         "," + format_number(p.theta_gen) + "," + format_number(p.theta_eval);
}

}  // namespace

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

ReportHeader ReportHeader::from_results_header(const json& header) {
  ReportHeader h;
  try {
    const json sweep = header.value("sweep", json::object());
    const auto undeclared = sweep.value("undeclared", std::vector<std::string>{});
    h.k_gen = declared_list<std::size_t>(sweep, "k_gen", undeclared);
    h.k_eval = declared_list<std::size_t>(sweep, "k_eval", undeclared);
    h.theta_eval = declared_list<double>(sweep, "theta_eval", undeclared);
    h.theta_gen = declared_list<double>(sweep, "theta_gen", undeclared);
    h.T_gen = sweep.value("T_gen", std::vector<double>{});
    h.T_eval = sweep.value("T_eval", std::vector<double>{});
    h.seeds = sweep.value("seeds", std::vector<std::int64_t>{});
    h.mode = sweep.value("mode", "");
    h.seed_offset = header.value("seed_offset", std::int64_t{0});
    h.judges = header.value("judge_identities", std::map<std::string, std::string>{});
    h.targets = header.value("target_identities", std::map<std::string, std::string>{});
    h.attacks = header.value("attack_kinds", std::map<std::string, std::string>{});
    h.guard_template_sha256 = header.value("guard_template_sha256", "");
  } catch (const json::exception& e) {
    throw ConfigError("results", 1, std::string("malformed result header: ") + e.what());
  }
  return h;
}

bool ReportHeader::uses_best_of_n() const {
  return std::any_of(attacks.begin(), attacks.end(),
                     [](const auto& kv) { return kv.second == "best-of-n"; });
}

std::vector<std::string> ReportHeader::missing_checklist_fields() const {
  std::vector<std::string> missing;
  if (!k_gen) missing.emplace_back("k_gen");
  if (!k_eval) missing.emplace_back("k_eval");
  if (!theta_eval) missing.emplace_back("theta_eval");
  if (uses_best_of_n() && !theta_gen) missing.emplace_back("theta_gen");
  return missing;
}

void ReportHeader::enforce_checklist() const {
  const auto missing = missing_checklist_fields();
  if (missing.empty()) return;
  std::string msg = "reporting checklist violated: ASR reports must disclose k_gen, k_eval and "
                    "theta_eval (and theta_gen for Best-of-N attacks); missing:";
  for (const auto& m : missing) msg += " " + m;
  throw ChecklistError(msg);
}

std::string ReportHeader::render(const ResultTable& results) const {
  std::size_t ambiguous = 0;
  for (const ResultRow& r : results.rows) ambiguous += r.ambiguous;
  std::ostringstream os;
  os << "# casbench report\n";
  os << "k_gen: " << join_opt(k_gen) << "\n";
  os << "k_eval: " << join_opt(k_eval) << "\n";
  os << "theta_eval: " << join_opt(theta_eval) << "\n";
  os << "theta_gen: " << join_opt(theta_gen) << "\n";
  os << "T_gen: " << join(T_gen) << "\n";
  os << "T_eval: " << join(T_eval) << "\n";
  os << "seeds: " << join(seeds) << " (offset " << seed_offset << ")\n";
  os << "mode: " << mode << "\n";
  for (const auto& [name, kind] : attacks) os << "attack: " << name << " = " << kind << "\n";
  for (const auto& [name, id] : targets) os << "target: " << name << " = " << id << "\n";
  for (const auto& [name, id] : judges) os << "judge: " << name << " = " << id << "\n";
  os << "guard_template_sha256: " << guard_template_sha256 << "\n";
  os << "wilson_z: " << format_number(wilson_z) << "\n";
  os << "cells: " << results.expected_cells << " expected, " << results.rows.size()
     << " recorded, " << results.failed_count() << " failed (excluded from every rate)\n";
  os << "ambiguous_judge_outputs: " << ambiguous << " (counted as safe)\n";
  return os.str();
}

ExportPaths export_csv(const ResultTable& results, const std::filesystem::path& detail_path,
                       const ExportOptions& options) {
  ReportHeader header = ReportHeader::from_results_header(results.header);
  header.enforce_checklist();
  if (results.partial() && !options.allow_partial) {
    throw PartialResultError("results are partial (" + std::to_string(results.rows.size()) + " of " +
                             std::to_string(results.expected_cells) + " cells recorded, " +
                             std::to_string(results.failed_count()) +
                             " failed); pass the partial flag to export anyway");
  }
  const std::vector<std::size_t>& k_values = *header.k_eval;
  const std::vector<const ResultRow*> rows = ordered_rows(results);

  // Non-failed row count per grid point.
  std::vector<std::pair<GridPoint, std::vector<const ResultRow*>>> groups;
  for (const ResultRow* r : rows) {
    if (r->status != CellStatus::kOk) continue;
    if (groups.empty() || !(groups.back().first == r->point)) {
      groups.emplace_back(r->point, std::vector<const ResultRow*>{});
    }
    groups.back().second.push_back(r);
  }

  ExportPaths paths;
  paths.detail = detail_path;
  paths.summary = detail_path.parent_path() / (detail_path.stem().string() + "_summary.csv");

  std::ofstream detail = open_out(paths.detail);
  detail << kDetailCsvHeader << "\n";
  for (const auto& [point, members] : groups) {
    for (const ResultRow* r : members) {
      for (std::size_t k : k_values) {
        detail << csv_escape(point.attack) << "," << csv_escape(point.target) << ","
               << csv_escape(point.judge) << "," << point.k_gen << "," << k << ","
               << format_number(point.T_gen) << "," << format_number(point.T_eval) << ","
               << format_number(point.theta_gen) << "," << format_number(point.theta_eval) << ","
               << r->seed << "," << csv_escape(r->prompt_id) << ","
               << (cas(r->verdicts, k) ? 1 : 0) << "," << members.size() << "\n";
      }
    }
  }

  std::ofstream summary = open_out(paths.summary);
  summary << kSummaryCsvHeader << "\n";
  for (const auto& [point, members] : groups) {
    for (std::size_t k : k_values) {
      Rate rate{0, static_cast<std::int64_t>(members.size())};
      for (const ResultRow* r : members) rate.successes += cas(r->verdicts, k) ? 1 : 0;
      const ConfidenceInterval ci = wilson_interval(rate.successes, rate.n, options.z);
      summary << group_fields(point) << "," << k << "," << format_number(rate.value()) << ","
              << format_number(ci.lower) << "," << format_number(ci.upper) << "," << rate.n
              << "\n";
    }
  }
  if (!detail || !summary) throw Error("writing CSV export failed");
  return paths;
}

void write_heatmap_csv(const Heatmap& hm, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << hm.row_axis << "," << hm.col_axis << ",asr,ci_lower,ci_upper,n\n";
  for (std::size_t r = 0; r < hm.row_values.size(); ++r) {
    for (std::size_t c = 0; c < hm.col_values.size(); ++c) {
      out << csv_escape(hm.row_values[r]) << "," << csv_escape(hm.col_values[c]) << ",";
      if (const auto& cell = hm.at(r, c)) {
        out << format_number(cell->rate.value()) << "," << format_number(cell->ci.lower) << ","
            << format_number(cell->ci.upper) << "," << cell->rate.n << "\n";
      } else {
        out << ",,,0\n";
      }
    }
  }
}

std::vector<std::filesystem::path> write_report(const ResultTable& results,
                                                const std::filesystem::path& out_dir,
                                                const ExportOptions& options) {
  ReportHeader header = ReportHeader::from_results_header(results.header);
  header.wilson_z = options.z;
  header.enforce_checklist();

  std::vector<std::filesystem::path> written;
  const ExportPaths paths = export_csv(results, out_dir / "detail.csv", options);
  written.push_back(paths.detail);
  written.push_back(paths.summary);

  for (const char* col : {"k_gen", "T_gen", "theta_gen"}) {
    const Heatmap hm = heatmap(results, "k_eval", col, std::nullopt, options.z);
    const auto path = out_dir / (std::string("heatmap_k_eval_") + col + ".csv");
    write_heatmap_csv(hm, path);
    written.push_back(path);
  }

  const auto report_path = out_dir / "report.txt";
  std::ofstream out = open_out(report_path);
  out << header.render(results);
  written.push_back(report_path);
  return written;
}

}  // namespace casbench
