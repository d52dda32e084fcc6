#include "casbench/config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

#include "casbench/error.hpp"
#include "casbench/sim_backend.hpp"
#include "casbench/stat_model.hpp"

namespace casbench {

namespace {

using nlohmann::json;

int line_of(const YAML::Node& node) {
  const YAML::Mark m = node.Mark();
  return m.line >= 0 ? m.line + 1 : 0;
}

[[noreturn]] void fail(const std::string& field, const YAML::Node& node, const std::string& msg) {
  throw ConfigError(field, line_of(node), msg);
}

void reject_unknown_keys(const YAML::Node& map, const std::string& prefix,
                         const std::set<std::string>& allowed) {
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.contains(key)) {
      throw ConfigError(prefix.empty() ? key : prefix + "." + key, line_of(kv.first),
                        "unknown field");
    }
  }
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& field) {
  if (!node.IsScalar()) fail(field, node, "expected a scalar value");
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    fail(field, node, "cannot convert '" + node.Scalar() + "'");
  }
}

template <typename T>
std::vector<T> list(const YAML::Node& node, const std::string& field) {
  if (!node.IsSequence()) fail(field, node, "expected a list");
  if (node.size() == 0) fail(field, node, "list must be non-empty");
  std::vector<T> out;
  for (std::size_t i = 0; i < node.size(); ++i) {
    out.push_back(scalar<T>(node[i], field + "[" + std::to_string(i) + "]"));
  }
  return out;
}

const YAML::Node required(const YAML::Node& map, const std::string& key, const std::string& field) {
  const YAML::Node n = map[key];
  if (!n) fail(field, map, "required field is missing");
  return n;
}

EndpointConfig parse_endpoint(const YAML::Node& node, const std::string& field) {
  EndpointConfig ep;
  ep.base_url = scalar<std::string>(required(node, "base_url", field + ".base_url"), field + ".base_url");
  ep.model_name = scalar<std::string>(required(node, "model", field + ".model"), field + ".model");
  if (node["api_key_env"]) ep.api_key_env = scalar<std::string>(node["api_key_env"], field + ".api_key_env");
  if (node["timeout"]) ep.timeout_s = scalar<double>(node["timeout"], field + ".timeout");
  if (node["max_retries"]) ep.max_retries = scalar<int>(node["max_retries"], field + ".max_retries");
  if (node["backoff_base"]) ep.backoff_base_s = scalar<double>(node["backoff_base"], field + ".backoff_base");
  if (node["max_in_flight"]) ep.max_in_flight = scalar<int>(node["max_in_flight"], field + ".max_in_flight");
  try {
    ep.validate();
  } catch (const ConfigError& e) {
    fail(field + "." + e.field(), node, e.what());
  }
  return ep;
}

const std::set<std::string> kEndpointKeys = {"base_url", "model", "api_key_env", "timeout",
                                             "max_retries", "backoff_base", "max_in_flight"};

std::set<std::string> with(std::set<std::string> base, std::initializer_list<std::string> extra) {
  base.insert(extra.begin(), extra.end());
  return base;
}

void parse_targets(const YAML::Node& node, HarnessConfig& cfg) {
  if (!node.IsMap()) fail("targets", node, "expected a map of named targets");
  for (const auto& kv : node) {
    const auto name = kv.first.as<std::string>();
    const std::string field = "targets." + name;
    const YAML::Node& body = kv.second;
    if (!body.IsMap()) fail(field, body, "expected a map");
    TargetBinding b;
    if (body["sim"]) {
      reject_unknown_keys(body, field, {"sim", "key"});
      const auto pop = scalar<std::string>(body["sim"], field + ".sim");
      try {
        PromptPopulation::parse(pop);
      } catch (const DomainError& e) {
        fail(field + ".sim", body["sim"], e.what());
      }
      b.sim_population = pop;
      if (body["key"]) b.sim_key = scalar<std::uint64_t>(body["key"], field + ".key");
    } else {
      reject_unknown_keys(body, field, kEndpointKeys);
      b.endpoint = parse_endpoint(body, field);
    }
    cfg.targets.emplace(name, std::move(b));
  }
}

void parse_judges(const YAML::Node& node, HarnessConfig& cfg) {
  if (!node.IsMap()) fail("judges", node, "expected a map of named judges");
  for (const auto& kv : node) {
    const auto name = kv.first.as<std::string>();
    const std::string field = "judges." + name;
    const YAML::Node& body = kv.second;
    if (!body.IsMap()) fail(field, body, "expected a map");
    JudgeBinding b;
    if (body["sim"]) {
      reject_unknown_keys(body, field, {"sim", "key"});
      b.sim = scalar<bool>(body["sim"], field + ".sim");
      if (!b.sim) fail(field + ".sim", body["sim"], "use an endpoint block for live judges");
      if (body["key"]) b.sim_key = scalar<std::uint64_t>(body["key"], field + ".key");
    } else {
      reject_unknown_keys(body, field, with(kEndpointKeys, {"format"}));
      b.endpoint = parse_endpoint(body, field);
      if (body["format"]) {
        const auto f = scalar<std::string>(body["format"], field + ".format");
        if (f == "template") {
          b.format = JudgeFormat::kTemplate;
        } else if (f == "conversation") {
          b.format = JudgeFormat::kConversation;
        } else {
          fail(field + ".format", body["format"], "expected 'template' or 'conversation'");
        }
      }
    }
    cfg.judges.emplace(name, std::move(b));
  }
}

void parse_attacks(const YAML::Node& node, HarnessConfig& cfg) {
  if (!node.IsMap()) fail("attacks", node, "expected a map of named attacks");
  for (const auto& kv : node) {
    const auto name = kv.first.as<std::string>();
    const std::string field = "attacks." + name;
    const YAML::Node& body = kv.second;
    if (!body.IsMap()) fail(field, body, "expected a map");
    AttackBlock a;
    a.kind = scalar<std::string>(required(body, "kind", field + ".kind"), field + ".kind");
    if (a.kind == "best-of-n") {
      reject_unknown_keys(body, field,
                          {"kind", "scramble_prob", "caps_prob", "noise_prob", "noise_alphabet"});
      if (body["scramble_prob"]) a.spec.scramble_prob = scalar<double>(body["scramble_prob"], field + ".scramble_prob");
      if (body["caps_prob"]) a.spec.caps_prob = scalar<double>(body["caps_prob"], field + ".caps_prob");
      if (body["noise_prob"]) a.spec.noise_prob = scalar<double>(body["noise_prob"], field + ".noise_prob");
      if (body["noise_alphabet"]) a.spec.noise_alphabet = scalar<std::string>(body["noise_alphabet"], field + ".noise_alphabet");
      try {
        a.spec.validate();
      } catch (const DomainError& e) {
        fail(field, body, e.what());
      }
    } else if (a.kind == "direct") {
      reject_unknown_keys(body, field, {"kind"});
    } else {
      fail(field + ".kind", body["kind"], "expected 'best-of-n' or 'direct'");
    }
    cfg.attacks.emplace(name, std::move(a));
  }
}

void check_names(const std::vector<std::string>& names, const auto& defined,
                 const std::string& field, const YAML::Node& node) {
  for (const auto& n : names) {
    if (!defined.contains(n)) fail(field, node, "references undefined '" + n + "'");
  }
}

void parse_sweep(const YAML::Node& node, HarnessConfig& cfg) {
  if (!node.IsMap()) fail("sweep", node, "expected a map");
  reject_unknown_keys(node, "sweep",
                      {"attacks", "targets", "judges", "k_gen", "k_eval", "T_gen", "T_eval",
                       "theta_gen", "theta_eval", "seeds", "budget", "mode", "early_exit"});
  SweepConfig& s = cfg.sweep;
  s.attacks = list<std::string>(required(node, "attacks", "sweep.attacks"), "sweep.attacks");
  s.targets = list<std::string>(required(node, "targets", "sweep.targets"), "sweep.targets");
  s.judges = list<std::string>(required(node, "judges", "sweep.judges"), "sweep.judges");
  check_names(s.attacks, cfg.attacks, "sweep.attacks", node["attacks"]);
  check_names(s.targets, cfg.targets, "sweep.targets", node["targets"]);
  check_names(s.judges, cfg.judges, "sweep.judges", node["judges"]);

  s.seeds = list<std::int64_t>(required(node, "seeds", "sweep.seeds"), "sweep.seeds");
  s.k_eval = list<std::size_t>(required(node, "k_eval", "sweep.k_eval"), "sweep.k_eval");
  s.mode = [&] {
    const YAML::Node m = required(node, "mode", "sweep.mode");
    try {
      return parse_eval_mode(scalar<std::string>(m, "sweep.mode"));
    } catch (const ConfigError& e) {
      fail("sweep.mode", m, e.what());
    }
  }();

  const bool bon = std::any_of(s.attacks.begin(), s.attacks.end(), [&](const std::string& a) {
    return cfg.attacks.at(a).kind == "best-of-n";
  });
  auto checklist_axis = [&](const char* key, auto& target, bool mandated) {
    if (node[key]) {
      target = list<typename std::decay_t<decltype(target)>::value_type>(node[key],
                                                                         std::string("sweep.") + key);
    } else {
      s.undeclared.emplace_back(key);
      if (mandated) {
        cfg.warnings.push_back(std::string("sweep.") + key +
                               " not declared; defaults are used but reports will refuse to "
                               "export until it is stated explicitly");
      }
    }
  };
  checklist_axis("k_gen", s.k_gen, true);
  checklist_axis("theta_eval", s.theta_eval, true);
  checklist_axis("theta_gen", s.theta_gen, bon);
  if (node["T_gen"]) s.T_gen = list<double>(node["T_gen"], "sweep.T_gen");
  if (node["T_eval"]) s.T_eval = list<double>(node["T_eval"], "sweep.T_eval");
  if (node["budget"]) s.budget_N = scalar<std::size_t>(node["budget"], "sweep.budget");
  if (node["early_exit"]) s.early_exit = scalar<bool>(node["early_exit"], "sweep.early_exit");
  try {
    s.validate();
  } catch (const ConfigError& e) {
    const YAML::Node at = node[e.field()] ? node[e.field()] : node;
    fail("sweep." + e.field(), at, e.what());
  }
}

json endpoint_json(const EndpointConfig& ep) {
  return json{{"base_url", ep.base_url},         {"model", ep.model_name},
              {"api_key_env", ep.api_key_env},   {"timeout", ep.timeout_s},
              {"max_retries", ep.max_retries},   {"backoff_base", ep.backoff_base_s},
              {"max_in_flight", ep.max_in_flight}};
}

}  // namespace

HarnessConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    throw ConfigError("", e.mark.line + 1, e.msg);
  }
  if (!root.IsMap()) throw ConfigError("", 1, "config must be a key-value document");
  reject_unknown_keys(root, "", {"targets", "judges", "attacks", "dataset", "sweep", "output_dir",
                                 "parallelism", "wilson_z"});

  HarnessConfig cfg;
  parse_targets(required(root, "targets", "targets"), cfg);
  parse_judges(required(root, "judges", "judges"), cfg);
  parse_attacks(required(root, "attacks", "attacks"), cfg);
  const std::filesystem::path dataset =
      scalar<std::string>(required(root, "dataset", "dataset"), "dataset");
  cfg.dataset = dataset.is_absolute() || base_dir.empty() ? dataset : base_dir / dataset;
  parse_sweep(required(root, "sweep", "sweep"), cfg);
  if (root["output_dir"]) {
    const std::filesystem::path out = scalar<std::string>(root["output_dir"], "output_dir");
    cfg.output_dir = out.is_absolute() || base_dir.empty() ? out : base_dir / out;
  }
  if (root["parallelism"]) {
    const auto p = scalar<long long>(root["parallelism"], "parallelism");
    if (p < 1) fail("parallelism", root["parallelism"], "must be >= 1");
    cfg.parallelism = static_cast<std::size_t>(p);
  }
  if (root["wilson_z"]) {
    cfg.wilson_z = scalar<double>(root["wilson_z"], "wilson_z");
    if (!(cfg.wilson_z > 0.0)) fail("wilson_z", root["wilson_z"], "must be positive");
  }
  return cfg;
}

HarnessConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", 0, "cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

json HarnessConfig::normalized() const {
  json t = json::object();
  for (const auto& [name, b] : targets) {
    t[name] = b.endpoint ? endpoint_json(*b.endpoint)
                         : json{{"sim", *b.sim_population}, {"key", b.sim_key}};
  }
  json j = json::object();
  for (const auto& [name, b] : judges) {
    if (b.endpoint) {
      j[name] = endpoint_json(*b.endpoint);
      j[name]["format"] = b.format == JudgeFormat::kTemplate ? "template" : "conversation";
    } else {
      j[name] = json{{"sim", true}, {"key", b.sim_key}};
    }
  }
  json a = json::object();
  for (const auto& [name, block] : attacks) {
    a[name] = json{{"kind", block.kind}};
    if (block.kind == "best-of-n") {
      a[name]["scramble_prob"] = block.spec.scramble_prob;
      a[name]["caps_prob"] = block.spec.caps_prob;
      a[name]["noise_prob"] = block.spec.noise_prob;
      a[name]["noise_alphabet"] = block.spec.noise_alphabet;
    }
  }
  return json{{"targets", t},
              {"judges", j},
              {"attacks", a},
              {"dataset", dataset.generic_string()},
              {"sweep", sweep.to_json()},
              {"output_dir", output_dir.generic_string()},
              {"parallelism", parallelism},
              {"wilson_z", wilson_z},
              {"warnings", warnings}};
}

Backends build_backends(const HarnessConfig& cfg) {
  Backends b;
  for (const auto& [name, t] : cfg.targets) {
    if (t.endpoint) {
      b.targets[name] = std::make_shared<HttpChatModel>(*t.endpoint);
    } else {
      b.targets[name] =
          std::make_shared<SimTarget>(PromptPopulation::parse(*t.sim_population), t.sim_key, name);
    }
  }
  for (const auto& [name, j] : cfg.judges) {
    if (j.endpoint) {
      b.judges[name] = std::make_shared<HttpJudge>(*j.endpoint, j.format);
    } else {
      b.judges[name] = std::make_shared<SimJudge>(j.sim_key, name);
    }
  }
  for (const auto& [name, a] : cfg.attacks) {
    if (a.kind == "best-of-n") {
      b.attacks[name] = std::make_shared<BestOfNAttack>(a.spec);
    } else {
      b.attacks[name] = std::make_shared<DirectAttack>();
    }
  }
  return b;
}

std::vector<PromptRef> parse_dataset(std::string_view tsv) {
  std::vector<PromptRef> out;
  std::set<std::string> ids;
  std::size_t start = 0;
  int line_no = 0;
  while (start < tsv.size()) {
    auto nl = tsv.find('\n', start);
    if (nl == std::string_view::npos) nl = tsv.size();
    std::string_view line = tsv.substr(start, nl - start);
    start = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1) {
      if (line.size() >= 3 && line.substr(0, 3) == "\xEF\xBB\xBF") line.remove_prefix(3);
      if (line != "id\tprompt") throw ConfigError("dataset", 1, "header must be id<TAB>prompt");
      continue;
    }
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0 || tab + 1 >= line.size()) {
      throw ConfigError("dataset", line_no, "expected id<TAB>prompt");
    }
    PromptRef p{std::string(line.substr(0, tab)), std::string(line.substr(tab + 1))};
    if (!ids.insert(p.id).second) throw ConfigError("dataset", line_no, "duplicate id '" + p.id + "'");
    out.push_back(std::move(p));
  }
  if (out.empty()) throw ConfigError("dataset", line_no, "dataset has no prompts");
  return out;
}

std::vector<PromptRef> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("dataset", 0, "cannot open dataset " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str());
}

}  // namespace casbench
