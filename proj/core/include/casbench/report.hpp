#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "casbench/sweep.hpp"

namespace casbench {

// Parameters a report must disclose. Checklist fields stay nullopt when the
// results never declared them.
struct ReportHeader {
  std::optional<std::vector<std::size_t>> k_gen;
  std::optional<std::vector<std::size_t>> k_eval;
  std::optional<std::vector<double>> theta_eval;
  std::optional<std::vector<double>> theta_gen;
  std::vector<double> T_gen;
  std::vector<double> T_eval;
  std::vector<std::int64_t> seeds;
  std::int64_t seed_offset = 0;
  std::map<std::string, std::string> judges;   // name -> identity
  std::map<std::string, std::string> targets;  // name -> identity
  std::map<std::string, std::string> attacks;  // name -> kind
  std::string guard_template_sha256;
  std::string mode;
  double wilson_z = kDefaultWilsonZ;

  // Reads a result-store header. Missing or undeclared checklist parameters
  // come back as nullopt rather than failing here.
  static ReportHeader from_results_header(const nlohmann::json& header);

  bool uses_best_of_n() const;
  // Names of checklist parameters that are absent: k_gen, k_eval, theta_eval,
  // and theta_gen when any attack is Best-of-N.
  std::vector<std::string> missing_checklist_fields() const;
  // ChecklistError listing every missing field.
  void enforce_checklist() const;

  std::string render(const ResultTable& results) const;
};

struct ExportOptions {
  bool allow_partial = false;
  double z = kDefaultWilsonZ;
};

struct ExportPaths {
  std::filesystem::path detail;
  std::filesystem::path summary;
};

inline constexpr const char* kDetailCsvHeader =
    "attack,target,judge,k_gen,k_eval,T_gen,T_eval,theta_gen,theta_eval,seed,prompt_id,"
    "consistent,asr_group_n";
inline constexpr const char* kSummaryCsvHeader =
    "attack,target,judge,k_gen,T_gen,T_eval,theta_gen,theta_eval,k_eval,asr,ci_lower,ci_upper,n";

// Writes the per-cell detail CSV at `detail_path` and the per-group summary
// next to it as <stem>_summary.csv. Failed cells are left out of both.
// PartialResultError for partial results without allow_partial;
// ChecklistError when the header lacks mandated parameters.
ExportPaths export_csv(const ResultTable& results, const std::filesystem::path& detail_path,
                       const ExportOptions& options = {});

// CSV of a heatmap: row axis, column axis, asr, ci_lower, ci_upper, n. Absent
// cells keep empty rate fields.
void write_heatmap_csv(const Heatmap& hm, const std::filesystem::path& path);

// Full report directory: header block (report.txt), detail and summary CSVs,
// and k_eval heatmaps against k_gen, T_gen and theta_gen.
std::vector<std::filesystem::path> write_report(const ResultTable& results,
                                                const std::filesystem::path& out_dir,
                                                const ExportOptions& options = {});

std::string csv_escape(const std::string& field);

}  // namespace casbench
