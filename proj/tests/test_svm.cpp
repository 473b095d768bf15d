#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "negmem/error.hpp"
#include "negmem/svm.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace negmem;
using negmem::testing::views;

namespace {

struct Problem {
  std::vector<FeatureVector> pos, neg;
};

Problem random_problem(std::mt19937_64& rng, std::size_t d, std::size_t n, double shift) {
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<std::size_t> split(1, n - 1);
  const std::size_t np = split(rng);
  const auto dir = negmem::testing::random_unit(rng, d);
  Problem p;
  for (std::size_t i = 0; i < n; ++i) {
    const double sign = i < np ? 1.0 : -1.0;
    FeatureVector v(d);
    for (std::size_t k = 0; k < d; ++k) v[k] = static_cast<float>(sign * shift * dir[k] + normal(rng));
    (i < np ? p.pos : p.neg).push_back(l2_normalize(v));
  }
  return p;
}

negmem::testing::QpSolution oracle(const Problem& p, const SolverConfig& cfg) {
  std::vector<std::vector<double>> x;
  std::vector<double> y, u;
  for (const auto& v : p.pos) {
    x.emplace_back(v.begin(), v.end());
    y.push_back(1.0);
    u.push_back(cfg.c * cfg.positive_weight);
  }
  for (const auto& v : p.neg) {
    x.emplace_back(v.begin(), v.end());
    y.push_back(-1.0);
    u.push_back(cfg.c);
  }
  return negmem::testing::solve_svm_qp(x, y, u);
}

}  // namespace

TEST_CASE("two-point problem has the max-margin solution") {
  const std::vector<FeatureVector> pos{{2.0f}}, neg{{-2.0f}};
  SolverConfig cfg;
  cfg.c = 1.0;
  const auto clf = train_svm(views(pos), views(neg), cfg);
  CHECK(clf.weights[0] == doctest::Approx(0.5).epsilon(1e-3));
  CHECK(std::abs(clf.bias) <= 1e-3);
  CHECK(score(clf, pos[0]) == doctest::Approx(1.0).epsilon(1e-3));

  LinearClassifier exact;
  exact.weights = {0.5};
  CHECK(dual_gap(exact, views(pos), views(neg), cfg) <= 1e-6);
  CHECK(dual_gap(clf, views(pos), views(neg), cfg) <= 1e-3 * (1 + primal_objective(clf, views(pos), views(neg), cfg)));
}

TEST_CASE("identical positive and negative stays finite") {
  const std::vector<FeatureVector> same{l2_normalize(FeatureVector{1.0f, 2.0f, -1.0f})};
  for (double c : {0.01, 1.0, 100.0}) {
    SolverConfig cfg;
    cfg.c = c;
    const auto clf = train_svm(views(same), views(same), cfg);
    for (double w : clf.weights) CHECK(std::isfinite(w));
    CHECK(std::isfinite(clf.bias));
    // Both hinge terms add to at least 2 whatever the score, and w = 0 reaches it.
    CHECK(primal_objective(clf, views(same), views(same), cfg) == doctest::Approx(2.0 * c).epsilon(1e-6));
  }
}

TEST_CASE("score") {
  LinearClassifier clf;
  clf.weights = {1.0, 0.0};
  CHECK(score(clf, FeatureVector{0.6f, 0.8f}) == doctest::Approx(0.6));
  clf.weights = {0.0, 0.0};
  clf.bias = -1.0;
  CHECK(score(clf, FeatureVector{0.3f, -7.0f}) == -1.0);
}

TEST_CASE("matches the interior-point oracle on separable 2-D data") {
  std::mt19937_64 rng(2024);
  for (int rep = 0; rep < 10; ++rep) {
    const auto p = random_problem(rng, 2, 20, 4.0);
    SolverConfig cfg;
    cfg.c = 10.0;
    const auto clf = train_svm(views(p.pos), views(p.neg), cfg);
    const auto ref = oracle(p, cfg);
    const double ours = primal_objective(clf, views(p.pos), views(p.neg), cfg);
    CHECK(std::abs(ours - ref.primal) <= 1e-3 * std::abs(ref.primal));
    CHECK(ref.primal - ref.dual <= 1e-8 * (1 + ref.primal));
  }
}

TEST_CASE("dual gap") {
  std::mt19937_64 rng(7);
  const auto p = random_problem(rng, 5, 60, 2.0);
  SolverConfig cfg;
  const auto clf = train_svm(views(p.pos), views(p.neg), cfg);
  const double primal = primal_objective(clf, views(p.pos), views(p.neg), cfg);
  const double gap = dual_gap(clf, views(p.pos), views(p.neg), cfg);
  CHECK(gap >= -1e-9);
  CHECK(gap <= 1e-3 * (1 + primal));

  LinearClassifier zero;
  zero.weights.assign(5, 0.0);
  CHECK(dual_gap(zero, views(p.pos), views(p.neg), cfg) > 0.0);
}

TEST_CASE("training is deterministic and the dual decreases") {
  std::mt19937_64 rng(8);
  const auto p = random_problem(rng, 8, 120, 0.5);
  SolverConfig cfg;
  cfg.seed = 77;
  SolverTrace trace;
  const auto a = train_svm(views(p.pos), views(p.neg), cfg, &trace);
  const auto b = train_svm(views(p.pos), views(p.neg), cfg);
  CHECK(a == b);
  REQUIRE(trace.dual_objective.size() == trace.epochs);
  for (std::size_t i = 1; i < trace.dual_objective.size(); ++i) {
    CHECK(trace.dual_objective[i] <= trace.dual_objective[i - 1] + 1e-12);
  }
  CHECK(trace.converged);
  CHECK(trace.final_violation < cfg.tolerance);
}

TEST_CASE("input order only moves the objective within tolerance") {
  std::mt19937_64 rng(9);
  auto p = random_problem(rng, 6, 100, 1.0);
  SolverConfig cfg;
  const double before = primal_objective(train_svm(views(p.pos), views(p.neg), cfg), views(p.pos),
                                         views(p.neg), cfg);
  std::shuffle(p.pos.begin(), p.pos.end(), rng);
  std::shuffle(p.neg.begin(), p.neg.end(), rng);
  const double after = primal_objective(train_svm(views(p.pos), views(p.neg), cfg), views(p.pos),
                                        views(p.neg), cfg);
  CHECK(std::abs(before - after) <= 1e-3 * std::abs(before));
}

TEST_CASE("very large C separates separable data") {
  std::mt19937_64 rng(10);
  const auto p = random_problem(rng, 4, 40, 6.0);
  SolverConfig cfg;
  cfg.c = 1e6;
  cfg.max_epochs = 100000;
  const auto clf = train_svm(views(p.pos), views(p.neg), cfg);
  for (const auto& v : p.pos) CHECK(score(clf, v) > 0.0);
  for (const auto& v : p.neg) CHECK(score(clf, v) < 0.0);
}

TEST_CASE("positive weight scales the positive upper bound") {
  std::mt19937_64 rng(12);
  const auto p = random_problem(rng, 3, 50, 0.3);
  SolverConfig cfg;
  cfg.positive_weight = 4.0;
  const auto clf = train_svm(views(p.pos), views(p.neg), cfg);
  const auto ref = oracle(p, cfg);
  CHECK(primal_objective(clf, views(p.pos), views(p.neg), cfg) ==
        doctest::Approx(ref.primal).epsilon(1e-3));
}

TEST_CASE("training errors") {
  const std::vector<FeatureVector> one{{1.0f, 0.0f}}, other{{0.0f, 1.0f, 0.0f}}, none;
  SolverConfig cfg;
  auto code = [&](auto fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::ConfigError;
  };
  CHECK(code([&] { train_svm(views(one), views(none), cfg); }) == ErrorCode::EmptyClass);
  CHECK(code([&] { train_svm(views(none), views(one), cfg); }) == ErrorCode::EmptyClass);
  CHECK(code([&] { train_svm(views(one), views(other), cfg); }) == ErrorCode::DimensionMismatch);
  SolverConfig bad;
  bad.c = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("classifier serialization round trip") {
  negmem::testing::TempDir dir;
  std::vector<LinearClassifier> cls(3);
  for (int i = 0; i < 3; ++i) {
    cls[i].class_id = i * 7 - 2;
    cls[i].weights = {0.1 * i, -1e-300, 3.5};
    cls[i].bias = -0.25 * i;
    cls[i].c_used = 0.5f;
    cls[i].trained_in_state = static_cast<std::uint32_t>(i);
  }
  write_classifiers(cls, dir / "c.dsc");
  CHECK(read_classifiers(dir / "c.dsc") == cls);
  auto blob = encode_classifier(cls[0]);
  blob.pop_back();
  CHECK_THROWS_AS(decode_classifiers(blob), Error);
}
