#include "negmem/engine.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "negmem/digest.hpp"
#include "negmem/error.hpp"
#include "negmem/parallel.hpp"
#include "negmem/random.hpp"

namespace negmem {

namespace {

void check_batch(const LabeledDataset& dataset, std::span<const ClassId> batch,
                 const std::set<ClassId>& known) {
  std::set<ClassId> seen;
  for (ClassId id : batch) {
    if (known.count(id) != 0 || !seen.insert(id).second) {
      throw Error(ErrorCode::DuplicateClass, "class " + std::to_string(id) + " is already known");
    }
    if (!dataset.contains(id)) {
      throw Error(ErrorCode::FormatError, "class " + std::to_string(id) + " is not in the dataset");
    }
  }
}

std::string format_double(double x) {
  char buf[40];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, end);
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::istringstream in(detail::read_file(path));
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::FormatError, path.string() + ": bad line '" + line + "'");
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

const std::string& require(const std::map<std::string, std::string>& kv, const std::string& key,
                           const std::filesystem::path& path) {
  auto it = kv.find(key);
  if (it == kv.end()) throw Error(ErrorCode::FormatError, path.string() + ": missing key " + key);
  return it->second;
}

template <typename T>
T parse_number(const std::string& s, const std::string& what) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw Error(ErrorCode::FormatError, "manifest field " + what + " is not a number: " + s);
  }
  return v;
}

}  // namespace

std::uint64_t solver_seed(std::uint64_t run_seed, ClassId class_id) {
  return derive_seed(run_seed, {0x73766dULL, static_cast<std::uint64_t>(static_cast<std::uint32_t>(class_id))});
}

NegativeMemory memory_for_classes(const LabeledDataset& dataset, std::span<const ClassId> known,
                                  const EngineConfig& config, std::span<const FeatureVector> external,
                                  std::uint32_t state_index) {
  std::vector<ClassPool> pools;
  if (config.strategy != Strategy::Ind) {
    pools.reserve(known.size());
    for (ClassId id : known) pools.push_back({id, dataset.at(id).train});
  }
  return build_memory(config.strategy, pools, config.memory_budget, config.seed, external, state_index);
}

std::vector<LinearClassifier> train_classifiers(const LabeledDataset& dataset,
                                                std::span<const ClassId> ids,
                                                const NegativeMemory& memory, double c,
                                                const EngineConfig& config, std::uint32_t state_index) {
  std::vector<LinearClassifier> out(ids.size());
  parallel_for(ids.size(), config.workers, [&](std::size_t i) {
    const ClassId id = ids[i];
    const auto& train = dataset.at(id).train;
    std::vector<FeatureView> positives(train.begin(), train.end());
    const auto negatives = negatives_for_class(memory, id);
    if (negatives.empty()) {
      throw Error(ErrorCode::EmptyClass, "class " + std::to_string(id) +
                                             " has no negatives once its own memory entries are removed");
    }
    SolverConfig solver = config.solver;
    solver.c = c;
    solver.seed = solver_seed(config.seed, id);
    auto classifier = train_svm(positives, negatives, solver);
    classifier.class_id = id;
    classifier.trained_in_state = state_index;
    out[i] = std::move(classifier);
  });
  return out;
}

IncrementalState initial_state(const LabeledDataset& dataset, std::span<const ClassId> batch,
                               const EngineConfig& config, double c,
                               std::span<const FeatureVector> external) {
  check_batch(dataset, batch, {});
  IncrementalState state;
  state.index = 0;
  state.c_value = c;
  state.known_classes.assign(batch.begin(), batch.end());
  state.memory = memory_for_classes(dataset, state.known_classes, config, external, 0);
  for (auto& clf : train_classifiers(dataset, batch, state.memory, c, config, 0)) {
    state.classifiers.emplace(clf.class_id, std::move(clf));
  }
  return state;
}

IncrementalState advance_state(const IncrementalState& state, const LabeledDataset& dataset,
                               std::span<const ClassId> new_classes, const EngineConfig& config,
                               std::span<const FeatureVector> external) {
  const std::set<ClassId> known(state.known_classes.begin(), state.known_classes.end());
  check_batch(dataset, new_classes, known);

  IncrementalState next;
  next.index = state.index + 1;
  next.c_value = state.c_value;
  next.known_classes = state.known_classes;
  next.known_classes.insert(next.known_classes.end(), new_classes.begin(), new_classes.end());
  if (config.strategy == Strategy::Ind && state.memory.strategy == Strategy::Ind &&
      state.memory.budget == config.memory_budget) {
    next.memory = state.memory;
    next.memory.state_index = next.index;
  } else {
    next.memory = memory_for_classes(dataset, next.known_classes, config, external, next.index);
  }

  if (config.retrain_all) {
    for (auto& clf : train_classifiers(dataset, next.known_classes, next.memory, next.c_value, config,
                                       next.index)) {
      next.classifiers.emplace(clf.class_id, std::move(clf));
    }
  } else {
    next.classifiers = state.classifiers;
    for (auto& clf :
         train_classifiers(dataset, new_classes, next.memory, next.c_value, config, next.index)) {
      next.classifiers.emplace(clf.class_id, std::move(clf));
    }
  }
  return next;
}

std::vector<std::pair<ClassId, double>> predict_topk(const IncrementalState& state, FeatureView x,
                                                     std::size_t k) {
  if (k > state.classifiers.size()) {
    throw Error(ErrorCode::KTooLarge, "k = " + std::to_string(k) + " exceeds the " +
                                          std::to_string(state.classifiers.size()) + " known classes");
  }
  std::vector<std::pair<ClassId, double>> scored;
  scored.reserve(state.classifiers.size());
  for (const auto& [id, clf] : state.classifiers) scored.emplace_back(id, score(clf, x));
  const auto better = [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), better);
  scored.resize(k);
  return scored;
}

void write_checkpoint(const IncrementalState& state, const CheckpointInfo& info,
                      const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto memory_path = dir / "memory.dsf";
  const auto classifiers_path = dir / "classifiers.dsc";
  export_memory(state.memory, memory_path);
  std::vector<LinearClassifier> ordered;
  for (ClassId id : state.known_classes) ordered.push_back(state.classifiers.at(id));
  write_classifiers(ordered, classifiers_path);

  std::ostringstream m;
  m << "format=negmem-checkpoint-1\n";
  m << "state_index=" << state.index << "\n";
  m << "classes=";
  for (std::size_t i = 0; i < state.known_classes.size(); ++i) {
    m << (i ? "," : "") << state.known_classes[i];
  }
  m << "\n";
  m << "c_value=" << format_double(state.c_value) << "\n";
  m << "strategy=" << to_string(info.strategy) << "\n";
  m << "seed=" << info.seed << "\n";
  m << "memory_budget=" << info.memory_budget << "\n";
  m << "memory_sha256=" << file_sha256_hex(memory_path) << "\n";
  m << "classifiers_sha256=" << file_sha256_hex(classifiers_path) << "\n";
  detail::write_file(dir / "manifest.txt", m.str());
}

std::pair<IncrementalState, CheckpointInfo> read_checkpoint(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.txt";
  const auto kv = read_key_values(manifest_path);
  if (require(kv, "format", manifest_path) != "negmem-checkpoint-1") {
    throw Error(ErrorCode::FormatError, manifest_path.string() + ": unknown checkpoint format");
  }
  const auto memory_path = dir / "memory.dsf";
  const auto classifiers_path = dir / "classifiers.dsc";
  if (file_sha256_hex(memory_path) != require(kv, "memory_sha256", manifest_path)) {
    throw Error(ErrorCode::FormatError, memory_path.string() + ": digest does not match the manifest");
  }
  if (file_sha256_hex(classifiers_path) != require(kv, "classifiers_sha256", manifest_path)) {
    throw Error(ErrorCode::FormatError, classifiers_path.string() + ": digest does not match the manifest");
  }

  CheckpointInfo info;
  info.strategy = parse_strategy(require(kv, "strategy", manifest_path));
  info.seed = parse_number<std::uint64_t>(require(kv, "seed", manifest_path), "seed");
  info.memory_budget = parse_number<std::size_t>(require(kv, "memory_budget", manifest_path), "memory_budget");

  IncrementalState state;
  state.index = parse_number<std::uint32_t>(require(kv, "state_index", manifest_path), "state_index");
  state.c_value = parse_number<double>(require(kv, "c_value", manifest_path), "c_value");
  const auto& classes = require(kv, "classes", manifest_path);
  std::size_t start = 0;
  while (start < classes.size()) {
    auto comma = classes.find(',', start);
    if (comma == std::string::npos) comma = classes.size();
    state.known_classes.push_back(parse_number<ClassId>(classes.substr(start, comma - start), "classes"));
    start = comma + 1;
  }
  for (auto& clf : read_classifiers(classifiers_path)) state.classifiers.emplace(clf.class_id, std::move(clf));
  if (state.classifiers.size() != state.known_classes.size()) {
    throw Error(ErrorCode::FormatError, dir.string() + ": classifier count does not match the class list");
  }
  for (ClassId id : state.known_classes) {
    if (state.classifiers.count(id) == 0) {
      throw Error(ErrorCode::FormatError, dir.string() + ": no classifier for class " + std::to_string(id));
    }
  }
  state.memory = import_memory(memory_path, info.memory_budget, info.strategy, state.index);
  return {std::move(state), info};
}

}  // namespace negmem
