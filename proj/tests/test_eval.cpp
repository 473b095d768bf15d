#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "negmem/error.hpp"
#include "negmem/eval.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace negmem;

namespace {

IncrementalState constant_state(std::size_t y, std::size_t d) {
  IncrementalState st;
  for (std::size_t i = 0; i < y; ++i) {
    LinearClassifier c;
    c.class_id = static_cast<ClassId>(i);
    c.weights.assign(d, 0.0);
    st.classifiers[c.class_id] = c;
    st.known_classes.push_back(c.class_id);
  }
  return st;
}

std::vector<LabeledSample> samples_of(const SyntheticData& data) {
  return data.test.records;
}

double ovr_top1(const SyntheticData& data, double c) {
  EngineConfig cfg;
  cfg.memory_budget = data.dataset.train_count();
  const auto st = initial_state(data.dataset, data.dataset.class_order, cfg, c);
  return topk_accuracy(st, samples_of(data), 1);
}

}  // namespace

TEST_CASE("topk boundaries") {
  auto st = constant_state(8, 1);
  for (ClassId id = 0; id < 8; ++id) st.classifiers[id].bias = -static_cast<double>(id);
  // True class 5 is ranked 6th.
  const std::vector<LabeledSample> one{{5, {0.0f}}};
  CHECK(topk_accuracy(st, one, 5) == 0.0);
  CHECK(topk_accuracy(st, one, 6) == 1.0);

  std::vector<LabeledSample> firsts{{0, {0.3f}}, {0, {-0.8f}}};
  for (std::size_t k = 1; k <= 8; ++k) CHECK(topk_accuracy(st, firsts, k) == 1.0);

  CHECK_THROWS_AS(topk_accuracy(st, one, 9), Error);
  const std::vector<LabeledSample> stranger{{42, {0.0f}}};
  try {
    topk_accuracy(st, stranger, 1);
    FAIL("expected UnknownClassInEvalSet");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownClassInEvalSet);
  }
}

TEST_CASE("equal scores give k/y under uniform labels") {
  const std::size_t y = 10, n = 4000;
  const auto st = constant_state(y, 2);
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<ClassId> label(0, static_cast<ClassId>(y - 1));
  std::vector<LabeledSample> samples;
  for (std::size_t i = 0; i < n; ++i) samples.push_back({label(rng), {0.6f, 0.8f}});
  for (std::size_t k : {1, 3, 5, 10}) {
    const double p = static_cast<double>(k) / y;
    const double sd = std::sqrt(p * (1 - p) / n);
    CHECK(std::abs(topk_accuracy(st, samples, k) - p) <= 3 * sd + 1e-12);
  }
}

TEST_CASE("topk matches brute force ranking") {
  std::mt19937_64 rng(10);
  const auto ds = negmem::testing::random_dataset(rng, 9, 5, 4, 8, 1.0);
  EngineConfig cfg;
  cfg.memory_budget = 30;
  const auto st = initial_state(ds, ds.class_order, cfg, 1.0);
  std::vector<LabeledSample> samples;
  for (int i = 0; i < 300; ++i) {
    samples.push_back({static_cast<ClassId>(i % 9), negmem::testing::random_unit(rng, 5)});
  }
  for (std::size_t k = 1; k <= 9; ++k) {
    CHECK(topk_accuracy(st, samples, k, 3) == negmem::testing::brute_force_topk(st, samples, k));
  }
  const auto rep = evaluate_state(st, samples);
  CHECK(rep.top1 == negmem::testing::brute_force_topk(st, samples, 1));
  CHECK(rep.top5 == negmem::testing::brute_force_topk(st, samples, 5));
  CHECK(rep.per_class_accuracy.size() == 9);
}

TEST_CASE("grid search") {
  SyntheticSpec spec;
  spec.classes = 4;
  spec.dim = 8;
  spec.train_per_class = 30;
  spec.validation_per_class = 10;
  spec.seed = 3;
  const auto data = generate_synthetic(spec);
  EngineConfig cfg;
  cfg.memory_budget = 60;
  const auto memory = memory_for_classes(data.dataset, data.dataset.class_order, cfg, {}, 0);

  const std::vector<double> single{0.7};
  const auto one = grid_search_c(data.dataset, data.dataset.class_order, memory, single, cfg);
  CHECK(one.best_c == 0.7);
  REQUIRE(one.table.size() == 1);
  CHECK(one.table[0].second >= 0.0);

  // Separable data at separation 6 validates perfectly for both values.
  const std::vector<double> pair{5.0, 2.0};
  const auto tied = grid_search_c(data.dataset, data.dataset.class_order, memory, pair, cfg);
  REQUIRE(tied.table[0].second == tied.table[1].second);
  CHECK(tied.best_c == 2.0);

  SyntheticSpec no_val = spec;
  no_val.validation_per_class = 0;
  const auto bare = generate_synthetic(no_val);
  try {
    grid_search_c(bare.dataset, bare.dataset.class_order, memory, single, cfg);
    FAIL("expected EmptyValidation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyValidation);
  }
}

TEST_CASE("synthetic data") {
  SyntheticSpec spec;
  spec.classes = 5;
  spec.dim = 16;
  spec.train_per_class = 20;
  spec.test_per_class = 7;
  spec.seed = 12;
  const auto a = generate_synthetic(spec);
  const auto b = generate_synthetic(spec);
  CHECK(a.train.records == b.train.records);
  CHECK(a.test.records == b.test.records);
  CHECK(a.train.records.size() == 100);
  CHECK(a.test.records.size() == 35);
  CHECK(a.noise_scale == doctest::Approx(a.min_mean_distance / spec.separation));
  for (const auto& r : a.train.records) CHECK(l2_norm(r.values) == doctest::Approx(1.0).epsilon(1e-6));
  spec.seed = 13;
  CHECK(generate_synthetic(spec).train.records != a.train.records);

  spec.classes = 0;
  CHECK_THROWS_AS(generate_synthetic(spec), Error);
}

TEST_CASE("two well separated classes are classified perfectly") {
  SyntheticSpec spec;
  spec.classes = 2;
  spec.dim = 32;
  spec.separation = 10.0;
  spec.train_per_class = 50;
  spec.test_per_class = 50;
  spec.seed = 1;
  CHECK(ovr_top1(generate_synthetic(spec), 1.0) == 1.0);
}

TEST_CASE("low separation falls to chance") {
  const std::size_t classes = 10, test_per_class = 100;
  double total = 0.0;
  const int seeds = 5;
  for (int s = 0; s < seeds; ++s) {
    SyntheticSpec spec;
    spec.classes = classes;
    spec.dim = 32;
    spec.separation = 0.1;
    spec.train_per_class = 50;
    spec.test_per_class = test_per_class;
    spec.seed = static_cast<std::uint64_t>(s);
    total += ovr_top1(generate_synthetic(spec), 1.0);
  }
  const double n = static_cast<double>(seeds * classes * test_per_class);
  const double p = 1.0 / classes;
  CHECK(std::abs(total / seeds - p) <= 3 * std::sqrt(p * (1 - p) / n));
}

TEST_CASE("more train samples pull the empirical mean onto the class mean") {
  SyntheticSpec spec;
  spec.classes = 3;
  spec.dim = 8;
  spec.separation = 4.0;
  spec.seed = 4;
  double previous = 2.0;
  for (std::size_t n : {10, 100, 1000, 10000}) {
    spec.train_per_class = n;
    const auto data = generate_synthetic(spec);
    const auto m = class_mean(data.dataset.at(0).train);
    const double cosine = dot(m, data.means[0]);
    CHECK(cosine > 0.9);
    CHECK(1.0 - cosine <= previous + 1e-3);
    previous = 1.0 - cosine;
  }
}

TEST_CASE("emit_report") {
  negmem::testing::TempDir dir;
  std::vector<EvalReport> reports(10);
  for (std::uint32_t i = 0; i < 10; ++i) {
    reports[i].state_index = i;
    reports[i].known_class_count = 10 * (i + 1);
    reports[i].top1 = 0.1 * i;
    reports[i].top5 = 0.05 * i + 0.5;
  }
  emit_report(reports, dir / "r.csv");
  const auto text = negmem::testing::slurp(dir / "r.csv");
  CHECK(std::count(text.begin(), text.end(), '\n') == 11);
  CHECK(std::filesystem::exists(dir / "r_timing.csv"));
  CHECK(std::filesystem::exists(dir / "r.dat"));
  const auto back = read_report(dir / "r.csv");
  REQUIRE(back.size() == 10);
  CHECK(back[3].top1 == doctest::Approx(0.3));
  CHECK(back[9].known_class_count == 100);

  CHECK_THROWS_AS(emit_report({}, dir / "none.csv"), Error);
  CHECK_FALSE(std::filesystem::exists(dir / "none.csv"));
}

TEST_CASE("protocol reports one row per batch and is reproducible") {
  SyntheticSpec spec;
  spec.classes = 12;
  spec.dim = 8;
  spec.train_per_class = 30;
  spec.test_per_class = 10;
  spec.validation_per_class = 5;
  spec.seed = 8;
  const auto data = generate_synthetic(spec);
  ExperimentConfig cfg;
  cfg.memory_budget = 40;
  cfg.c_grid = {0.1, 1.0};
  cfg.batch_size = 4;
  const auto plan = cfg.plan(data.dataset);
  const auto a = run_protocol(data.dataset, plan, cfg, samples_of(data));
  REQUIRE(a.reports.size() == 3);
  for (std::size_t s = 0; s < 3; ++s) CHECK(a.reports[s].known_class_count == 4 * (s + 1));
  const auto b = run_protocol(data.dataset, plan, cfg, samples_of(data));
  CHECK(a.states == b.states);
  for (std::size_t s = 0; s < 3; ++s) {
    CHECK(a.reports[s].top1 == b.reports[s].top1);
    CHECK(a.reports[s].top5 == b.reports[s].top5);
  }

  // Resuming from state 1 redoes state 2 identically.
  const auto resumed = run_protocol(data.dataset, plan, cfg, samples_of(data), {}, a.states[1]);
  REQUIRE(resumed.states.size() == 2);
  CHECK(resumed.states[1] == a.states[2]);
}
