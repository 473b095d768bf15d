#ifndef NEGMEM_MEMORY_HPP_
#define NEGMEM_MEMORY_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "negmem/features.hpp"

namespace negmem {

/// How the negative pool is filled.
///   Ind  - a fixed external pool, identical in every state.
///   Rand - seeded balanced sampling from every known class.
///   Div  - per-class greedy diversification, seed-free.
enum class Strategy { Ind, Rand, Div };

Strategy parse_strategy(std::string_view name);
const char* to_string(Strategy strategy);

struct MemoryEntry {
  ClassId provenance = kExternalClass;  // class the vector belongs to
  std::size_t source_index = 0;         // index within that class's train set
  FeatureVector values;

  bool operator==(const MemoryEntry&) const = default;
};

/// Bounded pool of negative features shared by every classifier trained in a
/// state. Entries are kept sorted by (provenance, source_index).
struct NegativeMemory {
  std::size_t budget = 0;
  Strategy strategy = Strategy::Rand;
  std::uint32_t state_index = 0;
  std::vector<MemoryEntry> entries;

  std::size_t size() const { return entries.size(); }
  std::map<ClassId, std::size_t> counts() const;

  bool operator==(const NegativeMemory&) const = default;
};

/// Candidate vectors of one class. For rand and div these are the class's
/// train vectors.
struct ClassPool {
  ClassId class_id = 0;
  std::span<const FeatureVector> vectors;
};

struct QuotaRequest {
  ClassId class_id = 0;
  std::size_t available = 0;
};

struct Quota {
  std::size_t budget = 0;
  std::size_t base = 0;       // floor(K / y)
  std::size_t remainder = 0;  // K - y * base
  std::map<ClassId, std::size_t> per_class;

  std::size_t total() const;
};

/// Picks `count` class ids out of `eligible` (ascending ids) when there are
/// more classes than memory slots.
using SubsetChooser =
    std::function<std::vector<ClassId>(std::span<const QuotaRequest> eligible, std::size_t count)>;

/// Balanced per-class quota for a memory of `budget` vectors.
///
/// When the classes together hold no more than `budget` vectors, every
/// vector is taken. Otherwise:
/// With y classes and y <= budget every class gets floor(K/y), and the first
/// K mod y classes in ascending id order get one more. Quotas are capped at
/// what each class can supply; the deficit is left unfilled. With y > budget
/// the chooser picks `budget` classes (among those with samples) that get a
/// quota of one; without a chooser the lowest ids are taken.
Quota compute_quota(std::span<const QuotaRequest> classes, std::size_t budget,
                    const SubsetChooser& choose = {});

SubsetChooser random_subset_chooser(std::uint64_t seed);
SubsetChooser diverse_subset_chooser(std::map<ClassId, FeatureVector> class_means);

/// Greedy diversification over unit-norm items.
///
/// The first pick is the item most similar to the normalized mean of all
/// items. Each later pick is the remaining item whose mean dot product with
/// the already selected items is smallest. Ties go to the lowest index.
/// Returns indices in selection order.
std::vector<std::size_t> greedy_diversify(std::span<const FeatureVector> items, std::size_t n);

/// greedy_diversify over the normalized class means; returns class ids in
/// selection order.
std::vector<ClassId> diversify_classes(std::span<const std::pair<ClassId, FeatureVector>> class_means,
                                       std::size_t n);

/// L2-normalized mean of the vectors; all zeros if the mean vanishes.
FeatureVector class_mean(std::span<const FeatureVector> vectors);

NegativeMemory select_rand(std::span<const ClassPool> pools, const Quota& quota, std::uint64_t seed);
NegativeMemory select_div(std::span<const ClassPool> pools, const Quota& quota);

/// The first `budget` external vectors. Throws InsufficientExternal.
NegativeMemory select_ind(std::span<const FeatureVector> external, std::size_t budget);

/// Runs quota computation and the strategy's selection over `pools`.
/// `external` is only read by Ind.
NegativeMemory build_memory(Strategy strategy, std::span<const ClassPool> pools, std::size_t budget,
                            std::uint64_t seed, std::span<const FeatureVector> external,
                            std::uint32_t state_index);

/// Entries whose provenance differs from `class_id`, in memory order.
std::vector<FeatureView> negatives_for_class(const NegativeMemory& memory, ClassId class_id);

/// Snapshot in the DSF1 feature format; provenance goes in the class_id slot.
void export_memory(const NegativeMemory& memory, const std::filesystem::path& path);

/// Inverse of export_memory. Source indices are not stored in the snapshot
/// and are restored as the ordinal of each entry within its class.
NegativeMemory import_memory(const std::filesystem::path& path, std::size_t budget,
                             Strategy strategy, std::uint32_t state_index);

}  // namespace negmem

#endif  // NEGMEM_MEMORY_HPP_
