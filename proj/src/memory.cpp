#include "negmem/memory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "negmem/error.hpp"
#include "negmem/random.hpp"

namespace negmem {

namespace {

void sort_entries(std::vector<MemoryEntry>& entries) {
  std::sort(entries.begin(), entries.end(), [](const MemoryEntry& a, const MemoryEntry& b) {
    return a.provenance != b.provenance ? a.provenance < b.provenance
                                        : a.source_index < b.source_index;
  });
}

// Mean of the vectors scaled to unit length; zero when the mean vanishes.
std::vector<double> mean_direction(std::span<const FeatureVector> vectors) {
  if (vectors.empty()) throw Error(ErrorCode::EmptyInput, "mean of no vectors");
  const std::size_t d = vectors.front().size();
  std::vector<double> sum(d, 0.0);
  for (const auto& v : vectors) {
    if (v.size() != d) throw Error(ErrorCode::DimensionMismatch, "vectors of unequal length");
    for (std::size_t k = 0; k < d; ++k) sum[k] += v[k];
  }
  double norm = 0.0;
  for (double s : sum) norm += s * s;
  norm = std::sqrt(norm);
  if (norm >= 1e-12) {
    for (double& s : sum) s /= norm;
  } else {
    std::fill(sum.begin(), sum.end(), 0.0);
  }
  return sum;
}

std::size_t quota_of(const Quota& quota, ClassId id) {
  auto it = quota.per_class.find(id);
  return it == quota.per_class.end() ? 0 : it->second;
}

template <typename PickIndices>
NegativeMemory select_per_class(std::span<const ClassPool> pools, const Quota& quota,
                                Strategy strategy, PickIndices&& pick) {
  NegativeMemory memory;
  memory.budget = quota.budget;
  memory.strategy = strategy;
  for (const auto& pool : pools) {
    const std::size_t q = std::min(quota_of(quota, pool.class_id), pool.vectors.size());
    if (q == 0) continue;
    for (std::size_t idx : pick(pool, q)) {
      memory.entries.push_back({pool.class_id, idx, pool.vectors[idx]});
    }
  }
  sort_entries(memory.entries);
  return memory;
}

}  // namespace

Strategy parse_strategy(std::string_view name) {
  if (name == "ind") return Strategy::Ind;
  if (name == "rand") return Strategy::Rand;
  if (name == "div") return Strategy::Div;
  throw Error(ErrorCode::ConfigError, "unknown strategy '" + std::string(name) + "'");
}

const char* to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::Ind: return "ind";
    case Strategy::Rand: return "rand";
    case Strategy::Div: return "div";
  }
  return "?";
}

std::map<ClassId, std::size_t> NegativeMemory::counts() const {
  std::map<ClassId, std::size_t> out;
  for (const auto& e : entries) ++out[e.provenance];
  return out;
}

std::size_t Quota::total() const {
  std::size_t n = 0;
  for (const auto& [id, q] : per_class) n += q;
  return n;
}

Quota compute_quota(std::span<const QuotaRequest> classes, std::size_t budget,
                    const SubsetChooser& choose) {
  std::vector<QuotaRequest> sorted(classes.begin(), classes.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const QuotaRequest& a, const QuotaRequest& b) { return a.class_id < b.class_id; });

  Quota quota;
  quota.budget = budget;
  const std::size_t y = sorted.size();
  if (y == 0 || budget == 0) return quota;

  quota.base = budget / y;
  quota.remainder = budget - y * quota.base;
  for (const auto& r : sorted) quota.per_class[r.class_id] = 0;

  // A budget that holds every available vector takes them all.
  std::size_t supply = 0;
  for (const auto& r : sorted) supply += r.available;
  if (supply <= budget) {
    for (const auto& r : sorted) quota.per_class[r.class_id] = r.available;
    return quota;
  }

  if (y <= budget) {
    for (std::size_t i = 0; i < y; ++i) {
      const std::size_t want = quota.base + (i < quota.remainder ? 1 : 0);
      quota.per_class[sorted[i].class_id] = std::min(want, sorted[i].available);
    }
    return quota;
  }

  std::vector<QuotaRequest> eligible;
  for (const auto& r : sorted) {
    if (r.available > 0) eligible.push_back(r);
  }
  std::vector<ClassId> chosen;
  if (eligible.size() <= budget) {
    for (const auto& r : eligible) chosen.push_back(r.class_id);
  } else if (choose) {
    chosen = choose(eligible, budget);
  } else {
    for (std::size_t i = 0; i < budget; ++i) chosen.push_back(eligible[i].class_id);
  }
  for (ClassId id : chosen) quota.per_class[id] = 1;
  return quota;
}

SubsetChooser random_subset_chooser(std::uint64_t seed) {
  return [seed](std::span<const QuotaRequest> eligible, std::size_t count) {
    Rng rng(derive_seed(seed, {0x636c617373ULL}));
    auto picks = sample_without_replacement(eligible.size(), count, rng);
    std::sort(picks.begin(), picks.end());
    std::vector<ClassId> ids;
    for (auto i : picks) ids.push_back(eligible[i].class_id);
    return ids;
  };
}

SubsetChooser diverse_subset_chooser(std::map<ClassId, FeatureVector> class_means) {
  return [means = std::move(class_means)](std::span<const QuotaRequest> eligible, std::size_t count) {
    std::vector<std::pair<ClassId, FeatureVector>> items;
    for (const auto& r : eligible) items.emplace_back(r.class_id, means.at(r.class_id));
    return diversify_classes(items, count);
  };
}

std::vector<std::size_t> greedy_diversify(std::span<const FeatureVector> items, std::size_t n) {
  if (items.empty()) throw Error(ErrorCode::EmptyInput, "nothing to diversify");
  if (n > items.size()) {
    throw Error(ErrorCode::KTooLarge, "asked for " + std::to_string(n) + " of " +
                                          std::to_string(items.size()) + " items");
  }
  std::vector<std::size_t> picked;
  if (n == 0) return picked;
  picked.reserve(n);

  const std::vector<double> center = mean_direction(items);
  std::size_t first = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < items.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < center.size(); ++k) s += items[i][k] * center[k];
    if (s > best) {
      best = s;
      first = i;
    }
  }

  std::vector<bool> taken(items.size(), false);
  std::vector<double> similarity_sum(items.size(), 0.0);
  std::size_t last = first;
  taken[first] = true;
  picked.push_back(first);
  while (picked.size() < n) {
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (!taken[i]) similarity_sum[i] += dot(items[i], items[last]);
    }
    const double k = static_cast<double>(picked.size());
    std::size_t next = items.size();
    double lowest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (taken[i]) continue;
      const double mean = similarity_sum[i] / k;
      if (mean < lowest) {
        lowest = mean;
        next = i;
      }
    }
    taken[next] = true;
    picked.push_back(next);
    last = next;
  }
  return picked;
}

std::vector<ClassId> diversify_classes(std::span<const std::pair<ClassId, FeatureVector>> class_means,
                                       std::size_t n) {
  std::vector<FeatureVector> means;
  means.reserve(class_means.size());
  for (const auto& [id, m] : class_means) {
    means.push_back(l2_norm(m) >= 1e-12 ? l2_normalize(m) : m);
  }
  std::vector<ClassId> ids;
  for (auto i : greedy_diversify(means, n)) ids.push_back(class_means[i].first);
  return ids;
}

FeatureVector class_mean(std::span<const FeatureVector> vectors) {
  const auto direction = mean_direction(vectors);
  return FeatureVector(direction.begin(), direction.end());
}

NegativeMemory select_rand(std::span<const ClassPool> pools, const Quota& quota, std::uint64_t seed) {
  return select_per_class(pools, quota, Strategy::Rand, [seed](const ClassPool& pool, std::size_t q) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(static_cast<std::uint32_t>(pool.class_id))}));
    return sample_without_replacement(pool.vectors.size(), q, rng);
  });
}

NegativeMemory select_div(std::span<const ClassPool> pools, const Quota& quota) {
  return select_per_class(pools, quota, Strategy::Div, [](const ClassPool& pool, std::size_t q) {
    return greedy_diversify(pool.vectors, q);
  });
}

NegativeMemory select_ind(std::span<const FeatureVector> external, std::size_t budget) {
  if (external.size() < budget) {
    throw Error(ErrorCode::InsufficientExternal, "external pool holds " + std::to_string(external.size()) +
                                                     " vectors, budget is " + std::to_string(budget));
  }
  NegativeMemory memory;
  memory.budget = budget;
  memory.strategy = Strategy::Ind;
  memory.entries.reserve(budget);
  for (std::size_t i = 0; i < budget; ++i) memory.entries.push_back({kExternalClass, i, external[i]});
  return memory;
}

NegativeMemory build_memory(Strategy strategy, std::span<const ClassPool> pools, std::size_t budget,
                            std::uint64_t seed, std::span<const FeatureVector> external,
                            std::uint32_t state_index) {
  NegativeMemory memory;
  if (strategy == Strategy::Ind) {
    memory = select_ind(external, budget);
  } else {
    std::vector<QuotaRequest> requests;
    requests.reserve(pools.size());
    for (const auto& p : pools) requests.push_back({p.class_id, p.vectors.size()});

    SubsetChooser chooser;
    if (pools.size() > budget) {
      if (strategy == Strategy::Rand) {
        chooser = random_subset_chooser(seed);
      } else {
        std::map<ClassId, FeatureVector> means;
        for (const auto& p : pools) {
          if (!p.vectors.empty()) means.emplace(p.class_id, class_mean(p.vectors));
        }
        chooser = diverse_subset_chooser(std::move(means));
      }
    }
    const Quota quota = compute_quota(requests, budget, chooser);
    memory = strategy == Strategy::Rand ? select_rand(pools, quota, seed) : select_div(pools, quota);
  }
  memory.state_index = state_index;
  return memory;
}

std::vector<FeatureView> negatives_for_class(const NegativeMemory& memory, ClassId class_id) {
  std::vector<FeatureView> out;
  out.reserve(memory.entries.size());
  for (const auto& e : memory.entries) {
    if (e.provenance != class_id) out.emplace_back(e.values);
  }
  return out;
}

void export_memory(const NegativeMemory& memory, const std::filesystem::path& path) {
  FeatureTable table;
  table.dimension = memory.entries.empty() ? 1 : memory.entries.front().values.size();
  for (const auto& e : memory.entries) table.records.push_back({e.provenance, e.values});
  write_feature_table(table, path, FileFormat::Binary);
}

NegativeMemory import_memory(const std::filesystem::path& path, std::size_t budget,
                             Strategy strategy, std::uint32_t state_index) {
  const FeatureTable table = read_feature_table(path, FileFormat::Binary);
  NegativeMemory memory;
  memory.budget = budget;
  memory.strategy = strategy;
  memory.state_index = state_index;
  std::map<ClassId, std::size_t> ordinal;
  for (const auto& r : table.records) {
    memory.entries.push_back({r.class_id, ordinal[r.class_id]++, r.values});
  }
  sort_entries(memory.entries);
  if (memory.entries.size() > budget) {
    throw Error(ErrorCode::FormatError, path.string() + ": snapshot holds more entries than the budget");
  }
  return memory;
}

}  // namespace negmem
