#ifndef NEGMEM_EVAL_HPP_
#define NEGMEM_EVAL_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "negmem/engine.hpp"

namespace negmem {

struct EvalReport {
  std::uint32_t state_index = 0;
  std::size_t known_class_count = 0;
  double top1 = 0.0;
  double top5 = 0.0;
  std::map<ClassId, double> per_class_accuracy;  // top-1 per true class
  double wall_time = 0.0;                         // seconds spent building the state
};

/// Ordered class batches; ids are disjoint across batches.
struct BatchPlan {
  std::vector<std::vector<ClassId>> batches;

  std::size_t class_count() const;
  /// Throws ConfigError on repeated or unknown ids.
  void validate(const LabeledDataset& dataset) const;
};

/// Consecutive batches of `batch_size` over `order` (the last may be short).
BatchPlan plan_by_size(std::span<const ClassId> order, std::size_t batch_size);
/// Consecutive batches with the given sizes over `order`.
BatchPlan plan_by_sizes(std::span<const ClassId> order, std::span<const std::size_t> sizes);

std::vector<double> default_c_grid();  // 1e-4, 1e-3, ..., 1e3

struct ExperimentConfig {
  std::size_t memory_budget = 20000;
  Strategy strategy = Strategy::Rand;
  std::uint64_t seed = 0;
  std::vector<double> c_grid = default_c_grid();
  std::size_t validation_per_class = 20;
  FileFormat feature_format = FileFormat::Binary;
  std::filesystem::path train_features;
  std::optional<std::filesystem::path> test_features;
  std::optional<std::filesystem::path> external_features;
  std::optional<std::size_t> batch_size;
  std::vector<std::size_t> batch_sizes;
  std::vector<std::vector<ClassId>> batches;
  bool shuffle_classes = false;
  bool retrain_all = false;
  bool per_state_c = false;
  double tolerance = 1e-4;
  std::size_t max_epochs = 1000;
  double positive_weight = 1.0;
  std::size_t workers = 1;
  std::filesystem::path output_dir = "out";

  /// Throws ConfigError naming the first offending field. Data paths are
  /// not checked.
  void validate() const;
  /// validate() plus the file sources a command line run needs.
  void validate_sources() const;
  EngineConfig engine() const;
  /// The batch plan over the dataset's class order.
  BatchPlan plan(const LabeledDataset& dataset) const;
};

/// Fraction of samples whose class is among the k best predictions.
/// Throws UnknownClassInEvalSet or KTooLarge.
double topk_accuracy(const IncrementalState& state, std::span<const LabeledSample> samples,
                     std::size_t k, std::size_t workers = 1);

/// Top-1 and top-min(5, y) accuracy plus per-class top-1 in one pass.
EvalReport evaluate_state(const IncrementalState& state, std::span<const LabeledSample> samples,
                          std::size_t workers = 1);

/// Pooled validation partitions of the given classes.
std::vector<LabeledSample> validation_samples(const LabeledDataset& dataset, std::span<const ClassId> ids);

struct GridSearchResult {
  double best_c = 0.0;
  std::vector<std::pair<double, double>> table;  // (c, validation top-1) in grid order
};

/// Trains the classes' classifiers for every C, scores pooled validation
/// top-1 and returns the best C (ties go to the smaller C).
/// Throws EmptyValidation.
GridSearchResult grid_search_c(const LabeledDataset& dataset, std::span<const ClassId> classes,
                               const NegativeMemory& memory, std::span<const double> grid,
                               const EngineConfig& config);

std::string grid_table_csv(const GridSearchResult& result);
void write_grid_table(const GridSearchResult& result, const std::filesystem::path& path);

struct SyntheticSpec {
  std::size_t classes = 10;
  std::size_t dim = 32;
  std::size_t train_per_class = 100;
  std::size_t test_per_class = 20;
  double separation = 6.0;
  std::uint64_t seed = 0;
  std::size_t validation_per_class = 0;
};

struct SyntheticData {
  FeatureTable train;            // raw records, class by class
  FeatureTable test;
  LabeledDataset dataset;        // train records split per spec.validation_per_class
  std::vector<FeatureVector> means;
  double min_mean_distance = 0.0;
  double noise_scale = 0.0;      // per-coordinate standard deviation
};

/// Class means are uniform on the unit sphere, redrawn until every pair is at
/// least an angle of (pi/2) s / (1 + s) apart, s being the separation. Each
/// sample is mean + N(0, sigma^2 I) with sigma = (closest mean distance) / s,
/// then L2-normalized. Throws SeparationInfeasible.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// Writes `path` (state,classes,top1,top5), `<stem>_timing.csv`
/// (state,wall_time) and `<stem>.dat`, a whitespace-separated copy for
/// plotting tools. Throws EmptyInput before creating any file when `reports`
/// is empty.
void emit_report(std::span<const EvalReport> reports, const std::filesystem::path& path);

/// Parses the CSV written by emit_report.
std::vector<EvalReport> read_report(const std::filesystem::path& path);

struct ProtocolResult {
  std::vector<IncrementalState> states;
  std::vector<EvalReport> reports;
  std::optional<GridSearchResult> initial_grid;
};

using StateCallback = std::function<void(const IncrementalState&, const EvalReport&)>;

/// Runs a whole incremental experiment: state 0 on the first batch with its C
/// picked by grid search on validation data, then one transition per batch.
/// After every state it evaluates over `eval_samples` restricted to known
/// classes, or over the known classes' validation partitions when
/// `eval_samples` is empty. With `resume_from`, batches it already covers
/// are skipped and the state itself is re-evaluated first.
ProtocolResult run_protocol(const LabeledDataset& dataset, const BatchPlan& plan,
                            const ExperimentConfig& config, std::span<const LabeledSample> eval_samples,
                            std::span<const FeatureVector> external = {},
                            const std::optional<IncrementalState>& resume_from = std::nullopt,
                            const StateCallback& on_state = {});

}  // namespace negmem

#endif  // NEGMEM_EVAL_HPP_
