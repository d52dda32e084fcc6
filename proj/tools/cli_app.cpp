#include "cli_app.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>

#include <nlohmann/json.hpp>

#include "casbench/config.hpp"
#include "casbench/error.hpp"
#include "casbench/probe.hpp"
#include "casbench/protocol.hpp"
#include "casbench/report.hpp"
#include "casbench/result_store.hpp"
#include "casbench/sim_backend.hpp"
#include "casbench/stat_model.hpp"
#include "casbench/sweep.hpp"

namespace casbench::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct RunGenArgs {
  std::string config, target, judge, attack, prompt_id, prompt, out;
  std::size_t k_gen = 1;
  double T_gen = 0.0;
  double theta_gen = 0.0;
  std::size_t budget = 10000;
  std::int64_t seed = 0;
  bool no_early_exit = false;
};

struct RunEvalArgs {
  std::string config, target, judge, candidate, response, mode, prompt_id = "adhoc", out;
  std::size_t k_eval = 1;
  double T_eval = 0.0;
  double theta_eval = 0.0;
  std::int64_t seed = 0;
  bool no_early_exit = false;
};

struct SweepArgs {
  std::string config, out;
  std::optional<std::size_t> parallelism;
  std::int64_t seed_offset = 0;
};

struct ReportArgs {
  std::string results, out;
  bool allow_partial = false;
  std::optional<double> z;
};

struct SimulateArgs {
  std::string population, config, target, out = "simulate";
  std::size_t prompts = 10000;
  std::size_t k_max = 10;
  std::uint64_t seed = 0;
  std::optional<std::size_t> fit_trials;
};

struct ProbeArgs {
  std::string config, target, corpus, out = "probe", analyze;
  std::size_t repeats = 10;
};

void write_json(const json& j, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << j.dump(2) << "\n";
    return;
  }
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << j.dump(2) << "\n";
  if (!f) throw ConfigError("out", 0, "cannot write " + path);
}

std::ofstream open_csv(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("out", 0, "cannot write " + path.string());
  return f;
}

PromptRef resolve_prompt(const HarnessConfig& cfg, const RunGenArgs& a) {
  if (!a.prompt.empty()) return {a.prompt_id.empty() ? "adhoc" : a.prompt_id, a.prompt};
  if (a.prompt_id.empty()) throw ConfigError("--prompt-id", 0, "give --prompt or --prompt-id");
  for (PromptRef& p : load_dataset(cfg.dataset)) {
    if (p.id == a.prompt_id) return p;
  }
  throw ConfigError("--prompt-id", 0, "prompt '" + a.prompt_id + "' not in dataset");
}

template <typename Map>
auto find_named(Map& map, const std::string& name, const char* what) {
  auto it = map.find(name);
  if (it == map.end()) throw ConfigError(what, 0, std::string("no ") + what + " named '" + name + "'");
  return it->second;
}

int cmd_run_gen(const RunGenArgs& a, std::ostream& out, std::ostream& err) {
  const HarnessConfig cfg = load_config(a.config);
  for (const auto& w : cfg.warnings) err << "warning: " << w << "\n";
  Backends b = build_backends(cfg);
  auto target = find_named(b.targets, a.target, "target");
  auto judge = find_named(b.judges, a.judge, "judge");
  auto attack = find_named(b.attacks, a.attack, "attack");
  GenConfig gc;
  gc.k_gen = a.k_gen;
  gc.T_gen = a.T_gen;
  gc.theta_gen = a.theta_gen;
  gc.budget_N = a.budget;
  gc.seed = a.seed;
  gc.early_exit = !a.no_early_exit;
  const GenOutcome g = run_cas_gen(resolve_prompt(cfg, a), *attack, *target, *judge, gc);
  write_json(json{{"prompt_id", g.prompt_id},
                  {"accepted", g.accepted},
                  {"candidate", g.candidate ? json(*g.candidate) : json(nullptr)},
                  {"response", g.response ? json(*g.response) : json(nullptr)},
                  {"candidates_tried", g.candidates_tried},
                  {"config", {{"k_gen", gc.k_gen}, {"T_gen", gc.T_gen}, {"theta_gen", gc.theta_gen},
                              {"budget", gc.budget_N}, {"seed", gc.seed}}},
                  {"transcript", g.transcript.to_json()}},
             a.out, out);
  return kOk;
}

int cmd_run_eval(const RunEvalArgs& a, std::ostream& out, std::ostream& err) {
  const HarnessConfig cfg = load_config(a.config);
  for (const auto& w : cfg.warnings) err << "warning: " << w << "\n";
  Backends b = build_backends(cfg);
  auto judge = find_named(b.judges, a.judge, "judge");
  std::shared_ptr<ChatModel> target;
  if (!a.target.empty()) target = find_named(b.targets, a.target, "target");
  EvalConfig ec;
  ec.k_eval = a.k_eval;
  ec.T_eval = a.T_eval;
  ec.theta_eval = a.theta_eval;
  ec.mode = parse_eval_mode(a.mode);
  ec.seed = a.seed;
  ec.early_exit = !a.no_early_exit;
  std::optional<std::string> stored;
  if (!a.response.empty()) stored = a.response;
  const EvalOutcome e = run_cas_eval(a.prompt_id, a.candidate, stored, target.get(), *judge, ec);
  write_json(json{{"prompt_id", e.prompt_id},
                  {"consistent", e.consistent},
                  {"verdicts", verdicts_to_string(e.verdicts.verdicts)},
                  {"judge_calls", e.judge_calls},
                  {"ambiguous", e.ambiguous},
                  {"config", {{"k_eval", ec.k_eval}, {"T_eval", ec.T_eval},
                              {"theta_eval", ec.theta_eval},
                              {"mode", std::string(to_string(ec.mode))}, {"seed", ec.seed}}},
                  {"transcript", e.transcript.to_json()}},
             a.out, out);
  return kOk;
}

int cmd_sweep(const SweepArgs& a, std::ostream& out, std::ostream& err) {
  HarnessConfig cfg = load_config(a.config);
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (a.parallelism) {
    if (*a.parallelism < 1) throw ConfigError("--parallelism", 0, "must be >= 1");
    cfg.parallelism = *a.parallelism;
  }
  for (const auto& w : cfg.warnings) err << "warning: " << w << "\n";
  const std::vector<PromptRef> dataset = load_dataset(cfg.dataset);
  Backends backends = build_backends(cfg);

  fs::create_directories(cfg.output_dir);
  json normalized = cfg.normalized();
  normalized["seed_offset"] = a.seed_offset;
  write_json(normalized, (cfg.output_dir / "config.normalized.json").string(), out);

  const json header = make_run_header(cfg.sweep, dataset, backends, a.seed_offset);
  ResultStore store = ResultStore::open(cfg.output_dir / "results.jsonl", header);
  const std::size_t before = store.size();
  SweepOptions opts;
  opts.parallelism = cfg.parallelism;
  opts.seed_offset = a.seed_offset;
  const ResultTable table = run_sweep(dataset, cfg.sweep, backends, &store, opts);
  out << "sweep: " << table.rows.size() << " of " << table.expected_cells << " cells recorded ("
      << table.rows.size() - before << " new, " << table.failed_count() << " failed) in "
      << (cfg.output_dir / "results.jsonl").string() << "\n";
  return kOk;
}

int cmd_report(const ReportArgs& a, std::ostream& out) {
  // checklist first: a header missing k_eval cannot even be expanded into a grid
  ReportHeader header = ReportHeader::from_results_header(ResultStore::read(a.results).header);
  header.enforce_checklist();
  const ResultTable table = load_results(a.results);
  ExportOptions opts;
  opts.allow_partial = a.allow_partial;
  if (a.z) opts.z = *a.z;
  header.wilson_z = opts.z;
  const fs::path dir = a.out.empty() ? fs::path(a.results).parent_path() / "report" : fs::path(a.out);
  const auto written = write_report(table, dir, opts);
  out << header.render(table);
  for (const auto& p : written) out << "wrote " << p.string() << "\n";
  return kOk;
}

PromptPopulation simulate_population(const SimulateArgs& a) {
  if (!a.population.empty()) {
    try {
      return PromptPopulation::parse(a.population);
    } catch (const DomainError& e) {
      throw ConfigError("--population", 0, e.what());
    }
  }
  if (a.config.empty() || a.target.empty()) {
    throw ConfigError("--population", 0, "give --population or --config with --target");
  }
  const HarnessConfig cfg = load_config(a.config);
  auto it = cfg.targets.find(a.target);
  if (it == cfg.targets.end() || !it->second.sim_population) {
    throw ConfigError("--target", 0, "'" + a.target + "' is not a sim target in the config");
  }
  return PromptPopulation::parse(*it->second.sim_population);
}

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  const PromptPopulation pop = simulate_population(a);
  if (a.k_max < 1 || a.prompts < 1) throw ConfigError("--k-max", 0, "k-max and prompts must be >= 1");
  const fs::path dir(a.out);
  const auto trials = sample_trials(pop, a.prompts, a.k_max, a.seed);

  std::ofstream decay = open_csv(dir / "decay.csv");
  decay << "k,exact,monte_carlo,std_error,n_prompts\n";
  for (const auto& [k, exact] : decay_curve(pop, a.k_max)) {
    std::size_t s = 0;
    for (const auto& t : trials) s += and_success(t, k) ? 1 : 0;
    const double n = static_cast<double>(a.prompts);
    const double rate = static_cast<double>(s) / n;
    decay << k << "," << format_number(exact) << "," << format_number(rate) << ","
          << format_number(std::sqrt(rate * (1.0 - rate) / n)) << "," << a.prompts << "\n";
  }
  out << "population: " << pop.to_string() << "\nwrote " << (dir / "decay.csv").string() << "\n";

  if (a.fit_trials) {
    const auto fit = sample_trials(pop, a.prompts, *a.fit_trials, a.seed + 1);
    std::ofstream est = open_csv(dir / "estimates.csv");
    est << "k,method,estimate,exact,degenerate_fallback\n";
    for (std::size_t k = 1; k <= a.k_max; ++k) {
      for (Estimator m : {Estimator::kUnbiasedCombinatorial, Estimator::kPlugIn, Estimator::kBetaFit}) {
        if (m == Estimator::kUnbiasedCombinatorial && k > *a.fit_trials) continue;
        const AsrEstimate e = estimate_asr_at_k(fit, k, m);
        est << k << "," << to_string(m) << "," << format_number(e.rate) << ","
            << format_number(expected_asr_exact(pop, k)) << "," << (e.degenerate_fallback ? 1 : 0)
            << "\n";
      }
    }
    out << "wrote " << (dir / "estimates.csv").string() << "\n";
  }
  return kOk;
}

int cmd_probe(const ProbeArgs& a, std::ostream& out) {
  const fs::path dir(a.out);
  std::vector<ProbeResponses> collected;
  if (!a.analyze.empty()) {
    collected = load_probe_responses(a.analyze);
  } else {
    if (a.config.empty() || a.target.empty()) {
      throw ConfigError("--target", 0, "give --config and --target, or --analyze");
    }
    const HarnessConfig cfg = load_config(a.config);
    Backends b = build_backends(cfg);
    auto target = find_named(b.targets, a.target, "target");
    const ProbeCorpus corpus = a.corpus.empty() ? ProbeCorpus::bundled() : ProbeCorpus::load(a.corpus);
    collected = collect_probe_responses(*target, corpus, a.repeats);
    save_probe_responses(dir / "responses.jsonl", collected);
  }
  const DeterminismReport report = analyze_probe(collected);
  write_json(report.to_json(), (dir / "determinism.json").string(), out);

  std::ofstream csv = open_csv(dir / "determinism.csv");
  csv << "id,category,requested,completed,exact_match_rate\n";
  for (const auto& p : report.prompts) {
    csv << csv_escape(p.id) << "," << p.category << "," << p.requested << "," << p.completed << ","
        << (p.exact_match_rate ? format_number(*p.exact_match_rate) : std::string()) << "\n";
  }
  out << DeterminismReport::kRateDefinition << "\n";
  out << "aggregate exact_match_rate: "
      << (report.aggregate_exact_match_rate ? format_number(*report.aggregate_exact_match_rate)
                                            : std::string("n/a"))
      << "\nwrote " << (dir / "determinism.json").string() << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"casbench: consistency-aware jailbreak evaluation harness"};
  app.require_subcommand(1);

  RunGenArgs gen;
  auto* run_gen = app.add_subcommand("run-gen", "Run CAS-gen for one prompt");
  run_gen->add_option("--config", gen.config, "Harness config")->required();
  run_gen->add_option("--target", gen.target)->required();
  run_gen->add_option("--judge", gen.judge)->required();
  run_gen->add_option("--attack", gen.attack)->required();
  run_gen->add_option("--prompt-id", gen.prompt_id, "Prompt id from the dataset");
  run_gen->add_option("--prompt", gen.prompt, "Literal prompt text");
  run_gen->add_option("--k-gen", gen.k_gen)->required()->check(CLI::PositiveNumber);
  run_gen->add_option("--T-gen", gen.T_gen)->check(CLI::NonNegativeNumber);
  run_gen->add_option("--theta-gen", gen.theta_gen)->required()->check(CLI::NonNegativeNumber);
  run_gen->add_option("--budget", gen.budget)->check(CLI::PositiveNumber);
  run_gen->add_option("--seed", gen.seed);
  run_gen->add_flag("--no-early-exit", gen.no_early_exit);
  run_gen->add_option("--out", gen.out, "Write the outcome JSON here instead of stdout");

  RunEvalArgs ev;
  auto* run_eval = app.add_subcommand("run-eval", "Run CAS-eval on one candidate");
  run_eval->add_option("--config", ev.config)->required();
  run_eval->add_option("--judge", ev.judge)->required();
  run_eval->add_option("--target", ev.target, "Needed in regenerate mode");
  run_eval->add_option("--candidate", ev.candidate)->required();
  run_eval->add_option("--response", ev.response, "Stored response (fixed-response mode)");
  run_eval->add_option("--mode", ev.mode)->required()->check(
      CLI::IsMember({"fixed-response", "regenerate"}));
  run_eval->add_option("--prompt-id", ev.prompt_id);
  run_eval->add_option("--k-eval", ev.k_eval)->required()->check(CLI::PositiveNumber);
  run_eval->add_option("--T-eval", ev.T_eval)->check(CLI::NonNegativeNumber);
  run_eval->add_option("--theta-eval", ev.theta_eval)->required()->check(CLI::NonNegativeNumber);
  run_eval->add_option("--seed", ev.seed);
  run_eval->add_flag("--no-early-exit", ev.no_early_exit);
  run_eval->add_option("--out", ev.out);

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "Run the configured parameter sweep");
  sweep->add_option("--config", sw.config)->required();
  sweep->add_option("--parallelism", sw.parallelism);
  sweep->add_option("--out", sw.out, "Output directory (overrides output_dir)");
  sweep->add_option("--seed-offset", sw.seed_offset, "Added to every configured seed");

  ReportArgs rep;
  auto* report = app.add_subcommand("report", "Export CSVs and the report header");
  report->add_option("--results", rep.results, "results.jsonl from a sweep")->required();
  report->add_option("--out", rep.out);
  report->add_flag("--allow-partial", rep.allow_partial);
  report->add_option("--z", rep.z, "Wilson z")->check(CLI::PositiveNumber);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Beta-Bernoulli simulation, no network");
  simulate->add_option("--population", sim.population, "e.g. beta(2,5), mixture(1:0.7,0.5:0.3)");
  simulate->add_option("--config", sim.config);
  simulate->add_option("--target", sim.target, "sim target whose population to use");
  simulate->add_option("--prompts", sim.prompts);
  simulate->add_option("--k-max", sim.k_max);
  simulate->add_option("--seed", sim.seed);
  simulate->add_option("--fit-trials", sim.fit_trials, "Also estimate ASR(k) from m trials");
  simulate->add_option("--out", sim.out);

  ProbeArgs pr;
  auto* probe_cmd = app.add_subcommand("probe-determinism", "Temperature-0 determinism probe");
  probe_cmd->add_option("--config", pr.config);
  probe_cmd->add_option("--target", pr.target);
  probe_cmd->add_option("--corpus", pr.corpus, "TSV id/category/prompt (default: bundled)");
  probe_cmd->add_option("--repeats", pr.repeats)->check(CLI::Range(2, 1000000));
  probe_cmd->add_option("--out", pr.out);
  probe_cmd->add_option("--analyze", pr.analyze, "Re-analyze a stored responses.jsonl");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kUsage;
  }

  try {
    if (*run_gen) return cmd_run_gen(gen, out, err);
    if (*run_eval) return cmd_run_eval(ev, out, err);
    if (*sweep) return cmd_sweep(sw, out, err);
    if (*report) return cmd_report(rep, out);
    if (*simulate) return cmd_simulate(sim, out);
    if (*probe_cmd) return cmd_probe(pr, out);
  } catch (const ConfigError& e) {
    err << e.what() << "\n";
    return kConfig;
  } catch (const RunError& e) {
    err << "run failed: " << e.what() << "\n";
    return e.is_transport() ? kTransport : kFailure;
  } catch (const TransportError& e) {
    err << e.what() << "\n";
    return kTransport;
  } catch (const PartialResultError& e) {
    err << e.what() << "\n";
    return kPartial;
  } catch (const ChecklistError& e) {
    err << e.what() << "\n";
    return kChecklist;
  } catch (const PreconditionError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace casbench::cli
