#include <algorithm>
#include <array>
#include <random>
#include <set>

#include "doctest.h"
#include "negmem/error.hpp"
#include "negmem/memory.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace negmem;

namespace {

std::vector<QuotaRequest> uniform_requests(std::size_t y, std::size_t available) {
  std::vector<QuotaRequest> r;
  for (std::size_t i = 0; i < y; ++i) r.push_back({static_cast<ClassId>(i), available});
  return r;
}

}  // namespace

TEST_CASE("quota splits the remainder over the lowest ids") {
  const auto q = compute_quota(uniform_requests(3, 4), 10);
  CHECK(q.per_class == std::map<ClassId, std::size_t>{{0, 4}, {1, 3}, {2, 3}});
  CHECK(q.base == 3);
  CHECK(q.remainder == 1);

  const auto big = compute_quota(uniform_requests(1000, 1300), 20000);
  CHECK(big.per_class.size() == 1000);
  for (const auto& [id, n] : big.per_class) CHECK(n == 20);
}

TEST_CASE("quota is capped by what a class can supply") {
  std::vector<QuotaRequest> r{{0, 1}, {1, 50}, {2, 50}};
  const auto q = compute_quota(r, 30);
  CHECK(q.per_class.at(0) == 1);
  CHECK(q.per_class.at(1) == 10);
  CHECK(q.per_class.at(2) == 10);
  CHECK(q.total() == 21);
}

TEST_CASE("more classes than slots") {
  const auto reqs = uniform_requests(5, 3);
  const auto a = compute_quota(reqs, 2, random_subset_chooser(17));
  const auto b = compute_quota(reqs, 2, random_subset_chooser(17));
  CHECK(a.per_class == b.per_class);
  CHECK(a.total() == 2);
  std::size_t ones = 0;
  for (const auto& [id, n] : a.per_class) ones += n == 1 ? 1 : 0;
  CHECK(ones == 2);

  std::set<std::map<ClassId, std::size_t>> seen;
  for (std::uint64_t s = 0; s < 20; ++s) seen.insert(compute_quota(reqs, 2, random_subset_chooser(s)).per_class);
  CHECK(seen.size() > 1);

  // Classes with nothing to give are never chosen.
  std::vector<QuotaRequest> sparse{{0, 0}, {1, 0}, {2, 4}, {3, 4}};
  const auto q = compute_quota(sparse, 1, random_subset_chooser(3));
  CHECK(q.per_class.at(0) + q.per_class.at(1) == 0);
  CHECK(q.total() == 1);
}

TEST_CASE("select_rand") {
  std::vector<FeatureVector> two{{1.0f, 0.0f}, {0.0f, 1.0f}};
  std::vector<ClassPool> pools{{0, two}};
  Quota q;
  q.budget = 2;
  q.per_class = {{0, 2}};
  for (std::uint64_t s = 0; s < 5; ++s) CHECK(select_rand(pools, q, s).size() == 2);
  CHECK(select_rand(pools, q, 4) == select_rand(pools, q, 4));

  std::vector<FeatureVector> three{{1.0f, 0.0f}, {0.0f, 1.0f}, {-1.0f, 0.0f}};
  std::vector<ClassPool> pools3{{0, three}};
  q.budget = 1;
  q.per_class = {{0, 1}};
  std::array<int, 3> hits{};
  for (std::uint64_t s = 0; s < 3000; ++s) ++hits[select_rand(pools3, q, s).entries.at(0).source_index];
  // Binomial(3000, 1/3): sd ~ 25.8, so 150 is almost six sd.
  for (int h : hits) CHECK(std::abs(h - 1000) <= 150);
}

TEST_CASE("greedy_diversify hand examples") {
  const std::vector<FeatureVector> items{{1.0f, 0.0f}, {0.0f, 1.0f}, {-1.0f, 0.0f}};
  CHECK(greedy_diversify(items, 2) == std::vector<std::size_t>{1, 0});
  CHECK(greedy_diversify(items, 1) == std::vector<std::size_t>{1});
  auto all = greedy_diversify(items, 3);
  std::sort(all.begin(), all.end());
  CHECK(all == std::vector<std::size_t>{0, 1, 2});
  CHECK_THROWS_AS(greedy_diversify(items, 4), Error);
  CHECK_THROWS_AS(greedy_diversify({}, 0), Error);
}

TEST_CASE("greedy_diversify agrees with a literal trace") {
  std::mt19937_64 rng(55);
  std::uniform_int_distribution<std::size_t> size(1, 8), dim(1, 5);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t m = size(rng), d = dim(rng);
    std::vector<FeatureVector> items;
    for (std::size_t i = 0; i < m; ++i) items.push_back(negmem::testing::random_unit(rng, d));
    for (std::size_t n = 0; n <= m; ++n) {
      CHECK(greedy_diversify(items, n) == negmem::testing::reference_greedy(items, n));
    }
  }
}

TEST_CASE("select_div") {
  const std::vector<FeatureVector> vs{{1.0f, 0.0f}, {1.0f, 0.0f}, {0.0f, 1.0f}};
  std::vector<ClassPool> pools{{4, vs}};
  Quota q;
  q.budget = 2;
  q.per_class = {{4, 2}};
  const auto mem = select_div(pools, q);
  REQUIRE(mem.size() == 2);
  CHECK(std::any_of(mem.entries.begin(), mem.entries.end(), [](const MemoryEntry& e) { return e.source_index == 2; }));
  CHECK(select_div(pools, q) == mem);

  q.per_class = {{4, 3}};
  CHECK(select_div(pools, q).size() == 3);
}

TEST_CASE("select_ind and negatives_for_class") {
  std::mt19937_64 rng(1);
  std::vector<FeatureVector> ext;
  for (int i = 0; i < 5; ++i) ext.push_back(negmem::testing::random_unit(rng, 3));
  CHECK_THROWS_AS(select_ind(ext, 10), Error);
  try {
    select_ind(ext, 10);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientExternal);
  }
  const auto mem = select_ind(ext, 4);
  CHECK(mem.size() == 4);
  CHECK(negatives_for_class(mem, 0).size() == 4);
  CHECK(negatives_for_class(mem, 123).size() == 4);

  NegativeMemory two;
  for (ClassId c : {0, 1}) {
    for (std::size_t i = 0; i < 20; ++i) two.entries.push_back({c, i, ext[i % 5]});
  }
  CHECK(negatives_for_class(two, 0).size() == 20);
  NegativeMemory lone;
  lone.entries.push_back({0, 0, ext[0]});
  CHECK(negatives_for_class(lone, 0).empty());
}

TEST_CASE("diversify_classes") {
  std::vector<std::pair<ClassId, FeatureVector>> ortho{
      {10, {1, 0, 0}}, {20, {0, 1, 0}}, {30, {0, 0, 1}}};
  auto ids = diversify_classes(ortho, 3);
  std::sort(ids.begin(), ids.end());
  CHECK(ids == std::vector<ClassId>{10, 20, 30});

  std::vector<std::pair<ClassId, FeatureVector>> means{{0, {1, 0}}, {1, {1, 0}}, {2, {0, 1}}};
  const auto two = diversify_classes(means, 2);
  REQUIRE(two.size() == 2);
  CHECK(two[1] == 2);
}

TEST_CASE("memory snapshot round trip") {
  negmem::testing::TempDir dir;
  std::mt19937_64 rng(3);
  const auto ds = negmem::testing::random_dataset(rng, 4, 6, 3, 9);
  std::vector<ClassPool> pools;
  for (const auto& c : ds.classes) pools.push_back({c.class_id, c.train});
  const auto mem = build_memory(Strategy::Div, pools, 12, 0, {}, 2);
  export_memory(mem, dir / "m.dsf");
  const auto back = import_memory(dir / "m.dsf", 12, Strategy::Div, 2);
  REQUIRE(back.size() == mem.size());
  CHECK(back.counts() == mem.counts());
  for (std::size_t i = 0; i < mem.size(); ++i) CHECK(back.entries[i].values == mem.entries[i].values);
}

TEST_CASE("build_memory never exceeds the budget") {
  std::mt19937_64 rng(21);
  const auto ds = negmem::testing::random_dataset(rng, 9, 4, 1, 7);
  std::vector<ClassPool> pools;
  for (const auto& c : ds.classes) pools.push_back({c.class_id, c.train});
  for (auto s : {Strategy::Rand, Strategy::Div}) {
    for (std::size_t k = 1; k <= 80; ++k) {
      const auto mem = build_memory(s, pools, k, 5, {}, 0);
      CHECK(mem.size() <= k);
      // Every class has at least one vector, so small budgets fill exactly.
      if (k <= pools.size()) CHECK(mem.size() == k);
    }
  }
}
