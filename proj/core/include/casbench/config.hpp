#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "casbench/attacks.hpp"
#include "casbench/model_client.hpp"
#include "casbench/protocol.hpp"
#include "casbench/sweep.hpp"

namespace casbench {

struct TargetBinding {
  std::optional<EndpointConfig> endpoint;
  std::optional<std::string> sim_population;  // "sim:" binding when set
  std::uint64_t sim_key = 0;
};

struct JudgeBinding {
  std::optional<EndpointConfig> endpoint;
  bool sim = false;
  std::uint64_t sim_key = 0;
  JudgeFormat format = JudgeFormat::kTemplate;
};

struct AttackBlock {
  std::string kind;  // "best-of-n" | "direct"
  AugmentationSpec spec;
};

struct HarnessConfig {
  std::map<std::string, TargetBinding> targets;
  std::map<std::string, JudgeBinding> judges;
  std::map<std::string, AttackBlock> attacks;
  std::filesystem::path dataset;
  SweepConfig sweep;
  std::filesystem::path output_dir = "out";
  std::size_t parallelism = 1;
  double wilson_z = kDefaultWilsonZ;
  // Non-fatal findings, e.g. a checklist parameter left to its default.
  std::vector<std::string> warnings;

  // Fully resolved configuration, echoed into every run directory.
  nlohmann::json normalized() const;
};

// Parses a YAML (or JSON) harness config. Relative paths resolve against
// base_dir. ConfigError names the offending field and its line.
HarnessConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
HarnessConfig load_config(const std::filesystem::path& path);

// Instantiates every named target, judge and attack.
Backends build_backends(const HarnessConfig& cfg);

// Prompt dataset: UTF-8 TSV with header "id<TAB>prompt".
std::vector<PromptRef> load_dataset(const std::filesystem::path& path);
std::vector<PromptRef> parse_dataset(std::string_view tsv);

}  // namespace casbench
