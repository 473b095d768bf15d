#ifndef NEGMEM_ENGINE_HPP_
#define NEGMEM_ENGINE_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "negmem/features.hpp"
#include "negmem/memory.hpp"
#include "negmem/svm.hpp"

namespace negmem {

struct EngineConfig {
  Strategy strategy = Strategy::Rand;
  std::size_t memory_budget = 20000;
  std::uint64_t seed = 0;
  SolverConfig solver;  // solver.c is replaced by the state's C; solver.seed is derived per class
  std::size_t workers = 1;
  bool retrain_all = false;  // ablation: retrain every known class at each transition
};

/// The system after a number of class batches.
struct IncrementalState {
  std::uint32_t index = 0;
  std::vector<ClassId> known_classes;  // in arrival order
  std::map<ClassId, LinearClassifier> classifiers;
  NegativeMemory memory;
  double c_value = 1.0;

  bool operator==(const IncrementalState&) const = default;
};

/// Solver seed used for the classifier of `class_id`; independent of the
/// state a class arrives in, so incremental and batch training agree.
std::uint64_t solver_seed(std::uint64_t run_seed, ClassId class_id);

/// Memory for the given known classes, drawn from their train partitions.
NegativeMemory memory_for_classes(const LabeledDataset& dataset, std::span<const ClassId> known,
                                  const EngineConfig& config, std::span<const FeatureVector> external,
                                  std::uint32_t state_index);

/// One classifier per id: the class's train vectors as positives, the memory
/// minus the class's own entries as negatives. Trainings run on
/// `config.workers` threads; output order follows `ids`.
std::vector<LinearClassifier> train_classifiers(const LabeledDataset& dataset,
                                                std::span<const ClassId> ids,
                                                const NegativeMemory& memory, double c,
                                                const EngineConfig& config, std::uint32_t state_index);

/// State 0: memory over the first batch and one classifier per class.
IncrementalState initial_state(const LabeledDataset& dataset, std::span<const ClassId> batch,
                               const EngineConfig& config, double c,
                               std::span<const FeatureVector> external = {});

/// Moves to the next state: rebuilds the memory over past and new classes
/// (unchanged for Ind), trains the new classes' classifiers and copies the
/// earlier ones untouched. Throws DuplicateClass or EmptyClass.
IncrementalState advance_state(const IncrementalState& state, const LabeledDataset& dataset,
                               std::span<const ClassId> new_classes, const EngineConfig& config,
                               std::span<const FeatureVector> external = {});

/// The k best (class_id, score) pairs, highest score first, ties to the
/// lower class id. Throws KTooLarge or DimensionMismatch.
std::vector<std::pair<ClassId, double>> predict_topk(const IncrementalState& state, FeatureView x,
                                                     std::size_t k);

// Checkpoint directory: memory.dsf, classifiers.dsc and manifest.txt.
struct CheckpointInfo {
  Strategy strategy = Strategy::Rand;
  std::size_t memory_budget = 0;
  std::uint64_t seed = 0;
};

void write_checkpoint(const IncrementalState& state, const CheckpointInfo& info,
                      const std::filesystem::path& dir);

/// Reads a checkpoint back, verifying the content digests in its manifest.
/// Throws FormatError on a mismatch.
std::pair<IncrementalState, CheckpointInfo> read_checkpoint(const std::filesystem::path& dir);

}  // namespace negmem

#endif  // NEGMEM_ENGINE_HPP_
