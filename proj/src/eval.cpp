#include "negmem/eval.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "negmem/error.hpp"
#include "negmem/parallel.hpp"
#include "negmem/random.hpp"

namespace negmem {

namespace {

[[noreturn]] void config_error(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::ConfigError, "field '" + field + "': " + why);
}

// Position of the true class in the full ranking (0 = best).
std::size_t true_class_rank(const IncrementalState& state, const LabeledSample& sample) {
  auto it = state.classifiers.find(sample.class_id);
  if (it == state.classifiers.end()) {
    throw Error(ErrorCode::UnknownClassInEvalSet,
                "class " + std::to_string(sample.class_id) + " is not known in state " +
                    std::to_string(state.index));
  }
  const double own = score(it->second, sample.values);
  std::size_t rank = 0;
  for (const auto& [id, clf] : state.classifiers) {
    if (id == sample.class_id) continue;
    const double s = score(clf, sample.values);
    if (s > own || (s == own && id < sample.class_id)) ++rank;
  }
  return rank;
}

std::vector<std::size_t> ranks(const IncrementalState& state, std::span<const LabeledSample> samples,
                               std::size_t workers) {
  std::vector<std::size_t> out(samples.size());
  parallel_for(samples.size(), workers, [&](std::size_t i) { out[i] = true_class_rank(state, samples[i]); });
  return out;
}

std::string fixed6(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", x);
  return buf;
}

std::filesystem::path sibling(const std::filesystem::path& path, const std::string& suffix) {
  auto p = path;
  p.replace_filename(path.stem().string() + suffix);
  return p;
}

}  // namespace

std::size_t BatchPlan::class_count() const {
  std::size_t n = 0;
  for (const auto& b : batches) n += b.size();
  return n;
}

void BatchPlan::validate(const LabeledDataset& dataset) const {
  if (batches.empty()) config_error("batches", "the plan has no batches");
  std::set<ClassId> seen;
  for (const auto& b : batches) {
    for (ClassId id : b) {
      if (!seen.insert(id).second) config_error("batches", "class " + std::to_string(id) + " appears twice");
      if (!dataset.contains(id)) config_error("batches", "class " + std::to_string(id) + " is not in the dataset");
    }
  }
}

BatchPlan plan_by_size(std::span<const ClassId> order, std::size_t batch_size) {
  if (batch_size == 0) config_error("batch_size", "must be at least 1");
  BatchPlan plan;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const auto end = std::min(order.size(), i + batch_size);
    plan.batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                              order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return plan;
}

BatchPlan plan_by_sizes(std::span<const ClassId> order, std::span<const std::size_t> sizes) {
  BatchPlan plan;
  std::size_t pos = 0;
  for (std::size_t s : sizes) {
    if (pos + s > order.size()) config_error("batch_sizes", "sizes add up to more classes than the dataset holds");
    plan.batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(pos),
                              order.begin() + static_cast<std::ptrdiff_t>(pos + s));
    pos += s;
  }
  return plan;
}

std::vector<double> default_c_grid() { return {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0}; }

void ExperimentConfig::validate() const {
  if (memory_budget < 1) config_error("memory_budget", "must be at least 1");
  if (c_grid.empty()) config_error("c_grid", "must not be empty");
  for (double c : c_grid) {
    if (!(c > 0.0) || !std::isfinite(c)) config_error("c_grid", "values must be positive and finite");
  }
  if (!(tolerance > 0.0)) config_error("solver.tolerance", "must be positive");
  if (max_epochs < 1) config_error("solver.max_epochs", "must be at least 1");
  if (!(positive_weight > 0.0)) config_error("solver.positive_weight", "must be positive");
  if (workers < 1) config_error("workers", "must be at least 1");
  const int plan_kinds = (batch_size ? 1 : 0) + (batch_sizes.empty() ? 0 : 1) + (batches.empty() ? 0 : 1);
  if (plan_kinds > 1) config_error("batch_size", "give only one of batch_size, batch_sizes, batches");
  if (batch_size && *batch_size == 0) config_error("batch_size", "must be at least 1");
  for (std::size_t s : batch_sizes) {
    if (s == 0) config_error("batch_sizes", "sizes must be at least 1");
  }
}

void ExperimentConfig::validate_sources() const {
  validate();
  if (train_features.empty()) config_error("train_features", "is required");
  if (strategy == Strategy::Ind && !external_features) {
    config_error("external_features", "strategy ind needs an external pool");
  }
}

EngineConfig ExperimentConfig::engine() const {
  EngineConfig e;
  e.strategy = strategy;
  e.memory_budget = memory_budget;
  e.seed = seed;
  e.solver.tolerance = tolerance;
  e.solver.max_epochs = max_epochs;
  e.solver.positive_weight = positive_weight;
  e.workers = workers;
  e.retrain_all = retrain_all;
  return e;
}

BatchPlan ExperimentConfig::plan(const LabeledDataset& dataset) const {
  BatchPlan plan;
  if (!batches.empty()) {
    plan.batches = batches;
  } else {
    std::vector<ClassId> order = dataset.class_order;
    if (shuffle_classes) {
      Rng rng(derive_seed(seed, {0x6f72646572ULL}));
      const auto perm = sample_without_replacement(order.size(), order.size(), rng);
      std::vector<ClassId> shuffled;
      for (auto i : perm) shuffled.push_back(order[i]);
      order = std::move(shuffled);
    }
    if (batch_size) {
      plan = plan_by_size(order, *batch_size);
    } else if (!batch_sizes.empty()) {
      plan = plan_by_sizes(order, batch_sizes);
    } else {
      plan.batches.push_back(order);
    }
  }
  plan.validate(dataset);
  return plan;
}

double topk_accuracy(const IncrementalState& state, std::span<const LabeledSample> samples,
                     std::size_t k, std::size_t workers) {
  if (k > state.classifiers.size()) {
    throw Error(ErrorCode::KTooLarge, "k = " + std::to_string(k) + " exceeds the " +
                                          std::to_string(state.classifiers.size()) + " known classes");
  }
  if (samples.empty()) throw Error(ErrorCode::EmptyInput, "no evaluation samples");
  std::size_t hits = 0;
  for (std::size_t r : ranks(state, samples, workers)) hits += r < k ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

EvalReport evaluate_state(const IncrementalState& state, std::span<const LabeledSample> samples,
                          std::size_t workers) {
  if (samples.empty()) throw Error(ErrorCode::EmptyInput, "no evaluation samples");
  const auto r = ranks(state, samples, workers);
  const std::size_t top5_k = std::min<std::size_t>(5, state.classifiers.size());
  std::size_t hit1 = 0, hit5 = 0;
  std::map<ClassId, std::pair<std::size_t, std::size_t>> per_class;  // (hits, total)
  for (std::size_t i = 0; i < samples.size(); ++i) {
    hit1 += r[i] < 1 ? 1 : 0;
    hit5 += r[i] < top5_k ? 1 : 0;
    auto& pc = per_class[samples[i].class_id];
    pc.first += r[i] < 1 ? 1 : 0;
    ++pc.second;
  }
  EvalReport report;
  report.state_index = state.index;
  report.known_class_count = state.known_classes.size();
  const auto n = static_cast<double>(samples.size());
  report.top1 = static_cast<double>(hit1) / n;
  report.top5 = static_cast<double>(hit5) / n;
  for (const auto& [id, ht] : per_class) {
    report.per_class_accuracy[id] = static_cast<double>(ht.first) / static_cast<double>(ht.second);
  }
  return report;
}

std::vector<LabeledSample> validation_samples(const LabeledDataset& dataset, std::span<const ClassId> ids) {
  std::vector<LabeledSample> out;
  for (ClassId id : ids) {
    for (const auto& v : dataset.at(id).validation) out.push_back({id, v});
  }
  return out;
}

GridSearchResult grid_search_c(const LabeledDataset& dataset, std::span<const ClassId> classes,
                               const NegativeMemory& memory, std::span<const double> grid,
                               const EngineConfig& config) {
  if (grid.empty()) config_error("c_grid", "must not be empty");
  for (ClassId id : classes) {
    if (dataset.at(id).validation.empty()) {
      throw Error(ErrorCode::EmptyValidation, "class " + std::to_string(id) + " has no validation vectors");
    }
  }
  const auto samples = validation_samples(dataset, classes);
  if (samples.empty()) throw Error(ErrorCode::EmptyValidation, "no classes to validate");

  GridSearchResult result;
  double best = -1.0;
  for (double c : grid) {
    IncrementalState candidate;
    candidate.index = memory.state_index;
    candidate.c_value = c;
    candidate.known_classes.assign(classes.begin(), classes.end());
    for (auto& clf : train_classifiers(dataset, classes, memory, c, config, memory.state_index)) {
      candidate.classifiers.emplace(clf.class_id, std::move(clf));
    }
    const double acc = topk_accuracy(candidate, samples, 1, config.workers);
    result.table.emplace_back(c, acc);
    if (acc > best || (acc == best && c < result.best_c)) {
      best = acc;
      result.best_c = c;
    }
  }
  return result;
}

std::string grid_table_csv(const GridSearchResult& result) {
  std::string text = "c,val_top1\n";
  for (const auto& [c, acc] : result.table) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), c);
    text.append(buf, end);
    std::snprintf(buf, sizeof(buf), ",%.6f\n", acc);
    text += buf;
  }
  return text;
}

void write_grid_table(const GridSearchResult& result, const std::filesystem::path& path) {
  detail::write_file(path, grid_table_csv(result));
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 1) throw Error(ErrorCode::ConfigError, "classes must be at least 1");
  if (spec.dim < 1) throw Error(ErrorCode::ConfigError, "dim must be at least 1");
  if (spec.train_per_class < 1) throw Error(ErrorCode::ConfigError, "train_per_class must be at least 1");
  if (!(spec.separation > 0.0) || !std::isfinite(spec.separation)) {
    throw Error(ErrorCode::ConfigError, "separation must be positive");
  }

  constexpr double kHalfPi = 1.57079632679489661923;
  const double floor_angle = kHalfPi * spec.separation / (1.0 + spec.separation);
  const double max_dot = std::cos(floor_angle);
  std::normal_distribution<double> normal(0.0, 1.0);

  const auto random_unit = [&](Rng& rng) {
    std::vector<double> v(spec.dim);
    double n = 0.0;
    do {
      n = 0.0;
      for (auto& x : v) {
        x = normal(rng);
        n += x * x;
      }
    } while (n < 1e-24);
    n = std::sqrt(n);
    for (auto& x : v) x /= n;
    return v;
  };

  SyntheticData out;
  Rng mean_rng(derive_seed(spec.seed, {0x6d65616e73ULL}));
  std::vector<std::vector<double>> means;
  constexpr std::size_t kAttempts = 100000;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < kAttempts && !placed; ++attempt) {
      auto candidate = random_unit(mean_rng);
      placed = std::all_of(means.begin(), means.end(), [&](const std::vector<double>& m) {
        double s = 0.0;
        for (std::size_t k = 0; k < spec.dim; ++k) s += m[k] * candidate[k];
        return s <= max_dot;
      });
      if (placed) means.push_back(std::move(candidate));
    }
    if (!placed) {
      throw Error(ErrorCode::SeparationInfeasible,
                  "cannot place " + std::to_string(spec.classes) + " class means " +
                      std::to_string(floor_angle * 180.0 / (2 * kHalfPi)) + " degrees apart in dimension " +
                      std::to_string(spec.dim));
    }
  }

  double min_distance = 2.0 * std::sin(floor_angle / 2.0);
  if (means.size() > 1) {
    min_distance = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < means.size(); ++a) {
      for (std::size_t b = a + 1; b < means.size(); ++b) {
        double s = 0.0;
        for (std::size_t k = 0; k < spec.dim; ++k) s += (means[a][k] - means[b][k]) * (means[a][k] - means[b][k]);
        min_distance = std::min(min_distance, std::sqrt(s));
      }
    }
  }
  const double sigma = min_distance / spec.separation;

  const auto draw = [&](FeatureTable& table, std::size_t per_class, std::uint64_t stream) {
    table.dimension = spec.dim;
    for (std::size_t c = 0; c < spec.classes; ++c) {
      Rng rng(derive_seed(spec.seed, {stream, c}));
      for (std::size_t i = 0; i < per_class; ++i) {
        FeatureVector x(spec.dim);
        double n = 0.0;
        do {
          n = 0.0;
          for (std::size_t k = 0; k < spec.dim; ++k) {
            const double v = means[c][k] + sigma * normal(rng);
            x[k] = static_cast<float>(v);
            n += static_cast<double>(x[k]) * x[k];
          }
        } while (n < 1e-20);
        table.records.push_back({static_cast<ClassId>(c), l2_normalize(x)});
      }
    }
  };
  draw(out.train, spec.train_per_class, 1);
  draw(out.test, spec.test_per_class, 2);

  for (const auto& m : means) out.means.emplace_back(m.begin(), m.end());
  out.min_mean_distance = min_distance;
  out.noise_scale = sigma;
  out.dataset = split_dataset(out.train, spec.validation_per_class, spec.seed);
  return out;
}

void emit_report(std::span<const EvalReport> reports, const std::filesystem::path& path) {
  if (reports.empty()) throw Error(ErrorCode::EmptyInput, "no reports to write");
  std::string csv = "state,classes,top1,top5\n";
  std::string timing = "state,wall_time\n";
  std::string dat = "# state classes top1 top5\n";
  for (const auto& r : reports) {
    const auto state = std::to_string(r.state_index);
    const auto classes = std::to_string(r.known_class_count);
    csv += state + "," + classes + "," + fixed6(r.top1) + "," + fixed6(r.top5) + "\n";
    timing += state + "," + fixed6(r.wall_time) + "\n";
    dat += state + " " + classes + " " + fixed6(r.top1) + " " + fixed6(r.top5) + "\n";
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  detail::write_file(path, csv);
  detail::write_file(sibling(path, "_timing.csv"), timing);
  detail::write_file(sibling(path, ".dat"), dat);
}

std::vector<EvalReport> read_report(const std::filesystem::path& path) {
  std::istringstream in(detail::read_file(path));
  std::string line;
  std::getline(in, line);
  if (line.rfind("state,classes,top1,top5", 0) != 0) {
    throw Error(ErrorCode::FormatError, path.string() + ": unexpected header");
  }
  std::vector<EvalReport> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EvalReport r;
    unsigned state = 0;
    unsigned long classes = 0;
    if (std::sscanf(line.c_str(), "%u,%lu,%lf,%lf", &state, &classes, &r.top1, &r.top5) != 4) {
      throw Error(ErrorCode::FormatError, path.string() + ": bad row '" + line + "'");
    }
    r.state_index = state;
    r.known_class_count = classes;
    out.push_back(r);
  }
  return out;
}

ProtocolResult run_protocol(const LabeledDataset& dataset, const BatchPlan& plan,
                            const ExperimentConfig& config, std::span<const LabeledSample> eval_samples,
                            std::span<const FeatureVector> external,
                            const std::optional<IncrementalState>& resume_from,
                            const StateCallback& on_state) {
  config.validate();
  plan.validate(dataset);
  const EngineConfig engine = config.engine();
  using Clock = std::chrono::steady_clock;

  ProtocolResult result;
  const auto record = [&](IncrementalState state, Clock::time_point started) {
    std::vector<LabeledSample> samples;
    if (eval_samples.empty()) {
      samples = validation_samples(dataset, state.known_classes);
    } else {
      const std::set<ClassId> known(state.known_classes.begin(), state.known_classes.end());
      for (const auto& s : eval_samples) {
        if (known.count(s.class_id) != 0) samples.push_back(s);
      }
    }
    const double seconds = std::chrono::duration<double>(Clock::now() - started).count();
    EvalReport report = evaluate_state(state, samples, engine.workers);
    report.wall_time = seconds;
    if (on_state) on_state(state, report);
    result.reports.push_back(std::move(report));
    result.states.push_back(std::move(state));
  };

  std::size_t next_batch = 0;
  if (resume_from) {
    const std::set<ClassId> known(resume_from->known_classes.begin(), resume_from->known_classes.end());
    std::size_t covered = 0;
    while (next_batch < plan.batches.size() &&
           std::all_of(plan.batches[next_batch].begin(), plan.batches[next_batch].end(),
                       [&](ClassId id) { return known.count(id) != 0; })) {
      covered += plan.batches[next_batch].size();
      ++next_batch;
    }
    if (covered != known.size()) {
      throw Error(ErrorCode::ConfigError, "checkpoint classes do not match a prefix of the batch plan");
    }
    record(*resume_from, Clock::now());
  } else {
    const auto started = Clock::now();
    const auto& first = plan.batches.front();
    const auto memory = memory_for_classes(dataset, first, engine, external, 0);
    result.initial_grid = grid_search_c(dataset, first, memory, config.c_grid, engine);
    record(initial_state(dataset, first, engine, result.initial_grid->best_c, external), started);
    next_batch = 1;
  }

  for (; next_batch < plan.batches.size(); ++next_batch) {
    const auto started = Clock::now();
    const auto& batch = plan.batches[next_batch];
    IncrementalState base = result.states.back();
    if (config.per_state_c && !batch.empty()) {
      std::vector<ClassId> known = base.known_classes;
      known.insert(known.end(), batch.begin(), batch.end());
      const auto memory = memory_for_classes(dataset, known, engine, external, base.index + 1);
      base.c_value = grid_search_c(dataset, batch, memory, config.c_grid, engine).best_c;
    }
    record(advance_state(base, dataset, batch, engine, external), started);
  }
  return result;
}

}  // namespace negmem
