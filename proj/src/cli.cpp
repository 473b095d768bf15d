#include "negmem/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "binary_io.hpp"
#include "negmem/digest.hpp"

namespace negmem {

namespace {

using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

[[noreturn]] void config_error(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::ConfigError, "field '" + field + "': " + why);
}

void reject_unknown_keys(const json& obj, const std::string& prefix, const std::set<std::string>& allowed) {
  if (!obj.is_object()) config_error(prefix.empty() ? "<root>" : prefix, "must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (allowed.count(key) == 0) config_error(prefix.empty() ? key : prefix + "." + key, "unknown field");
  }
}

std::size_t get_count(const json& j, const std::string& name) {
  if (!j.is_number_unsigned()) config_error(name, "must be a non-negative integer");
  return j.get<std::size_t>();
}

double get_real(const json& j, const std::string& name) {
  if (!j.is_number()) config_error(name, "must be a number");
  return j.get<double>();
}

bool get_flag(const json& j, const std::string& name) {
  if (!j.is_boolean()) config_error(name, "must be true or false");
  return j.get<bool>();
}

std::string get_text(const json& j, const std::string& name) {
  if (!j.is_string()) config_error(name, "must be a string");
  return j.get<std::string>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<FeatureVector> load_external(const ExperimentConfig& config) {
  std::vector<FeatureVector> external;
  if (config.external_features) {
    for (auto& r : load_samples(*config.external_features, config.feature_format).records) {
      external.push_back(std::move(r.values));
    }
  }
  return external;
}

LabeledDataset load_train(const ExperimentConfig& config) {
  return load_dataset(config.train_features, config.feature_format, config.validation_per_class, config.seed);
}

std::vector<std::size_t> parse_k_list(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long k = std::stoll(item, &used);
      if (used != item.size() || k < 1) throw std::invalid_argument(item);
      ks.push_back(static_cast<std::size_t>(k));
    } catch (const std::exception&) {
      config_error("k", "'" + item + "' is not a positive integer");
    }
  }
  if (ks.empty()) config_error("k", "no values given");
  return ks;
}

int report_failure(const Error& e) {
  std::cerr << "negmem: " << e.what() << "\n";
  return exit_code_for(e.code());
}

struct RunOptions {
  std::string config;
  std::string resume;
};

int cmd_run(const RunOptions& opts) {
  const auto started_at = utc_now();
  const auto loaded = load_config(opts.config);
  const auto& config = loaded.config;
  const auto dataset = load_train(config);
  const auto external = load_external(config);
  FeatureTable eval_set;
  if (config.test_features) eval_set = load_samples(*config.test_features, config.feature_format);
  const auto plan = config.plan(dataset);

  std::optional<IncrementalState> resume;
  if (!opts.resume.empty()) {
    auto [state, info] = read_checkpoint(opts.resume);
    if (info.strategy != config.strategy || info.seed != config.seed ||
        info.memory_budget != config.memory_budget) {
      throw Error(ErrorCode::ConfigError, "checkpoint " + opts.resume + " was written by a different config");
    }
    resume = std::move(state);
  }

  const auto run_dir = config.output_dir / loaded.digest.substr(0, 12);
  const auto states_dir = run_dir / "states";
  const auto reports_dir = run_dir / "reports";
  std::filesystem::create_directories(states_dir);
  std::filesystem::create_directories(reports_dir);
  detail::write_file(run_dir / "config.json", loaded.canonical + "\n");

  const CheckpointInfo info{config.strategy, config.memory_budget, config.seed};
  std::vector<std::string> checkpoints;
  const auto result = run_protocol(dataset, plan, config, eval_set.records, external, resume,
                                   [&](const IncrementalState& state, const EvalReport&) {
                                     const auto rel = "states/" + std::to_string(state.index);
                                     write_checkpoint(state, info, run_dir / rel);
                                     checkpoints.push_back(rel);
                                   });

  emit_report(result.reports, reports_dir / "report.csv");
  if (result.initial_grid) write_grid_table(*result.initial_grid, reports_dir / "grid.csv");
  std::string per_class = "state,class_id,top1\n";
  for (const auto& r : result.reports) {
    for (const auto& [id, acc] : r.per_class_accuracy) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%u,%d,%.6f\n", r.state_index, id, acc);
      per_class += buf;
    }
  }
  detail::write_file(reports_dir / "per_class.csv", per_class);

  std::ostringstream m;
  m << "config_digest=" << loaded.digest << "\n";
  m << "negmem_version=" << kVersion << "\n";
  m << "seed=" << config.seed << "\n";
  m << "strategy=" << to_string(config.strategy) << "\n";
  m << "memory_budget=" << config.memory_budget << "\n";
  m << "workers=" << config.workers << "\n";
  if (!opts.resume.empty()) m << "resumed_from=" << opts.resume << "\n";
  for (const auto& c : checkpoints) m << "checkpoint=" << c << "\n";
  m << "started_at=" << started_at << "\n";
  m << "finished_at=" << utc_now() << "\n";
  detail::write_file(run_dir / "manifest.txt", m.str());

  std::cout << run_dir.string() << "\n";
  return 0;
}

struct SyntheticOptions {
  SyntheticSpec spec;
  std::string format = "binary";
  std::string train_out = "train.dsf";
  std::string test_out = "test.dsf";
};

int cmd_gen_synthetic(const SyntheticOptions& opts) {
  const auto format = parse_format(opts.format);
  const auto data = generate_synthetic(opts.spec);
  write_feature_table(data.train, opts.train_out, format);
  if (opts.spec.test_per_class > 0) write_feature_table(data.test, opts.test_out, format);
  return 0;
}

struct SelectOptions {
  std::string config;
  std::string checkpoint;
  std::string out = "memory.dsf";
  std::optional<std::uint64_t> seed;
};

int cmd_select_negatives(const SelectOptions& opts) {
  auto loaded = load_config(opts.config);
  auto config = loaded.config;
  if (opts.seed) config.seed = *opts.seed;
  const auto [state, info] = read_checkpoint(opts.checkpoint);
  const auto dataset = load_train(loaded.config);
  const auto external = load_external(config);
  const auto memory = memory_for_classes(dataset, state.known_classes, config.engine(), external, state.index);
  export_memory(memory, opts.out);
  std::cout << memory.size() << " entries written to " << opts.out << "\n";
  return 0;
}

struct EvaluateOptions {
  std::string checkpoint;
  std::string features;
  std::string format = "binary";
  std::string k = "1,5";
  std::string out;
};

int cmd_evaluate(const EvaluateOptions& opts) {
  const auto ks = parse_k_list(opts.k);
  const auto [state, info] = read_checkpoint(opts.checkpoint);
  const auto samples = load_samples(opts.features, parse_format(opts.format));
  std::string header = "state,classes";
  std::string row = std::to_string(state.index) + "," + std::to_string(state.known_classes.size());
  for (auto k : ks) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", topk_accuracy(state, samples.records, k));
    header += ",top" + std::to_string(k);
    row += std::string(",") + buf;
  }
  const auto csv = header + "\n" + row + "\n";
  if (opts.out.empty()) {
    std::cout << csv;
  } else {
    detail::write_file(opts.out, csv);
  }
  return 0;
}

struct GridOptions {
  std::string config;
  std::string out;
};

int cmd_gridsearch_c(const GridOptions& opts) {
  const auto loaded = load_config(opts.config);
  const auto& config = loaded.config;
  const auto dataset = load_train(config);
  const auto external = load_external(config);
  const auto plan = config.plan(dataset);
  const auto engine = config.engine();
  const auto& first = plan.batches.front();
  const auto memory = memory_for_classes(dataset, first, engine, external, 0);
  const auto result = grid_search_c(dataset, first, memory, config.c_grid, engine);
  if (opts.out.empty()) {
    std::cout << grid_table_csv(result);
  } else {
    write_grid_table(result, opts.out);
  }
  std::cerr << "best c = " << result.best_c << "\n";
  return 0;
}

}  // namespace

LoadedConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown_keys(doc, "",
                      {"memory_budget", "strategy", "seed", "c_grid", "validation_per_class", "data", "plan",
                       "solver", "retrain_all", "per_state_c", "workers", "output_dir"});

  ExperimentConfig c;
  if (doc.contains("memory_budget")) c.memory_budget = get_count(doc["memory_budget"], "memory_budget");
  if (doc.contains("strategy")) {
    const auto s = get_text(doc["strategy"], "strategy");
    if (s != "ind" && s != "rand" && s != "div") config_error("strategy", "must be ind, rand or div");
    c.strategy = parse_strategy(s);
  }
  if (doc.contains("seed")) c.seed = get_count(doc["seed"], "seed");
  if (doc.contains("c_grid")) {
    const auto& grid = doc["c_grid"];
    if (!grid.is_array()) config_error("c_grid", "must be a list of numbers");
    c.c_grid.clear();
    for (const auto& v : grid) c.c_grid.push_back(get_real(v, "c_grid"));
  }
  if (doc.contains("validation_per_class")) {
    c.validation_per_class = get_count(doc["validation_per_class"], "validation_per_class");
  }
  if (doc.contains("retrain_all")) c.retrain_all = get_flag(doc["retrain_all"], "retrain_all");
  if (doc.contains("per_state_c")) c.per_state_c = get_flag(doc["per_state_c"], "per_state_c");
  if (doc.contains("workers")) c.workers = get_count(doc["workers"], "workers");
  if (doc.contains("output_dir")) c.output_dir = resolve(base_dir, get_text(doc["output_dir"], "output_dir"));

  if (!doc.contains("data")) config_error("data", "is required");
  const auto& data = doc["data"];
  reject_unknown_keys(data, "data", {"train", "test", "external", "format"});
  if (!data.contains("train")) config_error("data.train", "is required");
  c.train_features = resolve(base_dir, get_text(data["train"], "data.train"));
  if (data.contains("test")) c.test_features = resolve(base_dir, get_text(data["test"], "data.test"));
  if (data.contains("external")) {
    c.external_features = resolve(base_dir, get_text(data["external"], "data.external"));
  }
  if (data.contains("format")) {
    const auto f = get_text(data["format"], "data.format");
    if (f != "binary" && f != "csv") config_error("data.format", "must be binary or csv");
    c.feature_format = parse_format(f);
  }

  if (doc.contains("plan")) {
    const auto& plan = doc["plan"];
    reject_unknown_keys(plan, "plan", {"batch_size", "batch_sizes", "batches", "shuffle_classes"});
    if (plan.contains("batch_size")) c.batch_size = get_count(plan["batch_size"], "plan.batch_size");
    if (plan.contains("batch_sizes")) {
      if (!plan["batch_sizes"].is_array()) config_error("plan.batch_sizes", "must be a list");
      for (const auto& v : plan["batch_sizes"]) c.batch_sizes.push_back(get_count(v, "plan.batch_sizes"));
    }
    if (plan.contains("batches")) {
      if (!plan["batches"].is_array()) config_error("plan.batches", "must be a list of lists");
      for (const auto& b : plan["batches"]) {
        if (!b.is_array()) config_error("plan.batches", "must be a list of lists");
        std::vector<ClassId> ids;
        for (const auto& v : b) {
          if (!v.is_number_integer()) config_error("plan.batches", "class ids must be integers");
          ids.push_back(v.get<ClassId>());
        }
        c.batches.push_back(std::move(ids));
      }
    }
    if (plan.contains("shuffle_classes")) c.shuffle_classes = get_flag(plan["shuffle_classes"], "plan.shuffle_classes");
  }

  if (doc.contains("solver")) {
    const auto& solver = doc["solver"];
    reject_unknown_keys(solver, "solver", {"tolerance", "max_epochs", "positive_weight"});
    if (solver.contains("tolerance")) c.tolerance = get_real(solver["tolerance"], "solver.tolerance");
    if (solver.contains("max_epochs")) c.max_epochs = get_count(solver["max_epochs"], "solver.max_epochs");
    if (solver.contains("positive_weight")) {
      c.positive_weight = get_real(solver["positive_weight"], "solver.positive_weight");
    }
  }

  if (const char* dir = std::getenv("NEGMEM_OUTPUT_DIR"); dir != nullptr && *dir != '\0') c.output_dir = dir;
  if (const char* w = std::getenv("NEGMEM_WORKERS"); w != nullptr && *w != '\0') {
    try {
      const long n = std::stol(w);
      if (n < 1) throw std::invalid_argument(w);
      c.workers = static_cast<std::size_t>(n);
    } catch (const std::exception&) {
      config_error("workers", "NEGMEM_WORKERS must be a positive integer");
    }
  }
  c.validate_sources();

  LoadedConfig out;
  out.config = std::move(c);
  out.canonical = doc.dump();
  json identity = doc;
  identity.erase("output_dir");
  identity.erase("workers");
  out.digest = sha256_hex(identity.dump());
  return out;
}

LoadedConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = detail::read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  return parse_config(text, path.parent_path());
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::KTooLarge:
    case ErrorCode::EmptyValidation:
    case ErrorCode::SeparationInfeasible:
      return 1;
    case ErrorCode::FormatError:
    case ErrorCode::IoError:
    case ErrorCode::InsufficientSamples:
    case ErrorCode::ZeroVector:
    case ErrorCode::UnknownClassInEvalSet:
    case ErrorCode::InsufficientExternal:
    case ErrorCode::DimensionMismatch:
      return 2;
    default:
      return 3;
  }
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Class-incremental linear classifiers over fixed features with a bounded negative memory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "Run an incremental experiment from a config file");
  run_cmd->add_option("config", run.config, "Experiment config (JSON)")->required();
  run_cmd->add_option("--resume", run.resume, "Checkpoint directory to continue from");

  SyntheticOptions syn;
  auto* syn_cmd = app.add_subcommand("gen-synthetic", "Write a synthetic feature dataset");
  syn_cmd->add_option("--classes", syn.spec.classes, "Number of classes")->capture_default_str();
  syn_cmd->add_option("--dim", syn.spec.dim, "Feature dimension")->capture_default_str();
  syn_cmd->add_option("--train-per-class", syn.spec.train_per_class, "Train vectors per class")->capture_default_str();
  syn_cmd->add_option("--test-per-class", syn.spec.test_per_class, "Test vectors per class")->capture_default_str();
  syn_cmd->add_option("--separation", syn.spec.separation, "Mean distance to noise ratio")->capture_default_str();
  syn_cmd->add_option("--seed", syn.spec.seed, "Random seed")->capture_default_str();
  syn_cmd->add_option("--format", syn.format, "binary or csv")->capture_default_str();
  syn_cmd->add_option("--train-out", syn.train_out, "Train feature file")->capture_default_str();
  syn_cmd->add_option("--test-out", syn.test_out, "Test feature file")->capture_default_str();

  SelectOptions sel;
  std::uint64_t sel_seed = 0;
  auto* sel_cmd = app.add_subcommand("select-negatives", "Rebuild a checkpoint's negative memory");
  sel_cmd->add_option("config", sel.config, "Experiment config (JSON)")->required();
  sel_cmd->add_option("checkpoint", sel.checkpoint, "State checkpoint directory")->required();
  sel_cmd->add_option("--out", sel.out, "Snapshot file")->capture_default_str();
  auto* seed_opt = sel_cmd->add_option("--seed", sel_seed, "Override the config seed");

  EvaluateOptions ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Top-k accuracy of a checkpoint on a feature file");
  ev_cmd->add_option("checkpoint", ev.checkpoint, "State checkpoint directory")->required();
  ev_cmd->add_option("features", ev.features, "Labeled evaluation features")->required();
  ev_cmd->add_option("--format", ev.format, "binary or csv")->capture_default_str();
  ev_cmd->add_option("--k", ev.k, "Comma-separated k values")->capture_default_str();
  ev_cmd->add_option("--out", ev.out, "Output CSV (default: stdout)");

  GridOptions grid;
  auto* grid_cmd = app.add_subcommand("gridsearch-c", "Validation top-1 for every C of the config grid");
  grid_cmd->add_option("config", grid.config, "Experiment config (JSON)")->required();
  grid_cmd->add_option("--out", grid.out, "Output CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*syn_cmd) return cmd_gen_synthetic(syn);
    if (*sel_cmd) {
      if (*seed_opt) sel.seed = sel_seed;
      return cmd_select_negatives(sel);
    }
    if (*ev_cmd) return cmd_evaluate(ev);
    if (*grid_cmd) return cmd_gridsearch_c(grid);
  } catch (const Error& e) {
    return report_failure(e);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "negmem: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "negmem: " << e.what() << "\n";
    return 3;
  }
  return 1;
}

}  // namespace negmem
