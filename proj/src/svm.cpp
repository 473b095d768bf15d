#include "negmem/svm.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "binary_io.hpp"
#include "negmem/error.hpp"
#include "negmem/random.hpp"

namespace negmem {

namespace {

constexpr std::string_view kClassifierMagic = "DSC1";

// Training set seen by the solver: augmented rows with labels and box bounds.
struct Problem {
  std::vector<FeatureView> rows;
  std::vector<double> label;  // +1 / -1
  std::vector<double> upper;  // C_i
  std::size_t dim = 0;
};

Problem make_problem(std::span<const FeatureView> positives, std::span<const FeatureView> negatives,
                     const SolverConfig& config, bool require_both) {
  if (require_both && (positives.empty() || negatives.empty())) {
    throw Error(ErrorCode::EmptyClass, positives.empty() ? "no positive examples" : "no negative examples");
  }
  Problem p;
  p.dim = !positives.empty() ? positives.front().size()
                             : (!negatives.empty() ? negatives.front().size() : 0);
  const auto add = [&](std::span<const FeatureView> rows, double y, double c) {
    for (const auto& r : rows) {
      if (r.size() != p.dim) {
        throw Error(ErrorCode::DimensionMismatch,
                    "training vector of length " + std::to_string(r.size()) + ", expected " +
                        std::to_string(p.dim));
      }
      p.rows.push_back(r);
      p.label.push_back(y);
      p.upper.push_back(c);
    }
  };
  add(positives, +1.0, config.c * config.positive_weight);
  add(negatives, -1.0, config.c);
  return p;
}

double augmented_dot(const std::vector<double>& w, double b, FeatureView x) {
  double s = b;
  for (std::size_t k = 0; k < x.size(); ++k) s += w[k] * x[k];
  return s;
}

double squared_norm(const std::vector<double>& w, double b) {
  double s = b * b;
  for (double v : w) s += v * v;
  return s;
}

// (P(w) - D(alpha)) / P(w) for w = sum_i alpha_i y_i x_i.
double relative_gap(const Problem& p, const std::vector<double>& w, double b, const std::vector<double>& alpha) {
  double loss = 0.0, sum_alpha = 0.0;
  for (std::size_t i = 0; i < p.rows.size(); ++i) {
    loss += p.upper[i] * std::max(0.0, 1.0 - p.label[i] * augmented_dot(w, b, p.rows[i]));
    sum_alpha += alpha[i];
  }
  const double ww = squared_norm(w, b);
  const double primal = 0.5 * ww + loss;
  const double dual = sum_alpha - 0.5 * ww;
  return (primal - dual) / primal;
}

void check_dimension(const LinearClassifier& c, std::size_t d) {
  if (c.weights.size() != d) {
    throw Error(ErrorCode::DimensionMismatch,
                "classifier has dimension " + std::to_string(c.weights.size()) + ", input has " +
                    std::to_string(d));
  }
}

}  // namespace

void SolverConfig::validate() const {
  if (!(c > 0.0) || !std::isfinite(c)) throw Error(ErrorCode::ConfigError, "c must be positive");
  if (!(tolerance > 0.0)) throw Error(ErrorCode::ConfigError, "tolerance must be positive");
  if (max_epochs < 1) throw Error(ErrorCode::ConfigError, "max_epochs must be at least 1");
  if (!(positive_weight > 0.0)) throw Error(ErrorCode::ConfigError, "positive_weight must be positive");
}

LinearClassifier train_svm(std::span<const FeatureView> positives,
                           std::span<const FeatureView> negatives, const SolverConfig& config,
                           SolverTrace* trace) {
  config.validate();
  const Problem p = make_problem(positives, negatives, config, true);
  const std::size_t n = p.rows.size();

  std::vector<double> w(p.dim, 0.0);
  double b = 0.0;
  std::vector<double> alpha(n, 0.0);
  std::vector<double> qd(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 1.0;
    for (float x : p.rows[i]) s += static_cast<double>(x) * x;
    qd[i] = s;
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(config.seed);

  double violation = std::numeric_limits<double>::infinity();
  double gap = std::numeric_limits<double>::infinity();
  std::size_t epoch = 0;
  while (epoch < config.max_epochs) {
    for (std::size_t i = 0; i + 1 < n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(order[i], order[pick(rng)]);
    }
    violation = 0.0;
    for (std::size_t i : order) {
      const double y = p.label[i];
      const double g = y * augmented_dot(w, b, p.rows[i]) - 1.0;
      double pg = g;
      if (alpha[i] <= 0.0) {
        pg = std::min(g, 0.0);
      } else if (alpha[i] >= p.upper[i]) {
        pg = std::max(g, 0.0);
      }
      violation = std::max(violation, std::abs(pg));
      if (std::abs(pg) > 1e-12) {
        const double old = alpha[i];
        alpha[i] = std::clamp(old - g / qd[i], 0.0, p.upper[i]);
        const double step = (alpha[i] - old) * y;
        const auto& x = p.rows[i];
        for (std::size_t k = 0; k < p.dim; ++k) w[k] += step * x[k];
        b += step;
      }
    }
    ++epoch;
    if (trace != nullptr) {
      double sum_alpha = 0.0;
      for (double a : alpha) sum_alpha += a;
      trace->dual_objective.push_back(0.5 * squared_norm(w, b) - sum_alpha);
    }
    if (violation < config.tolerance) {
      // A small violation alone does not bound the primal error when C is
      // large, so also require the primal-dual gap of the iterate to be small.
      gap = relative_gap(p, w, b, alpha);
      if (gap <= config.tolerance) break;
    }
  }
  if (trace != nullptr) {
    trace->epochs = epoch;
    trace->final_violation = violation;
    trace->relative_gap = gap;
    trace->converged = violation < config.tolerance && gap <= config.tolerance;
  }

  LinearClassifier out;
  out.weights = std::move(w);
  out.bias = b;
  out.c_used = static_cast<float>(config.c);
  return out;
}

double score(const LinearClassifier& classifier, FeatureView x) {
  check_dimension(classifier, x.size());
  return augmented_dot(classifier.weights, classifier.bias, x);
}

double primal_objective(const LinearClassifier& classifier, std::span<const FeatureView> positives,
                        std::span<const FeatureView> negatives, const SolverConfig& config) {
  const Problem p = make_problem(positives, negatives, config, false);
  if (!p.rows.empty()) check_dimension(classifier, p.dim);
  double loss = 0.0;
  for (std::size_t i = 0; i < p.rows.size(); ++i) {
    const double m = p.label[i] * augmented_dot(classifier.weights, classifier.bias, p.rows[i]);
    loss += p.upper[i] * std::max(0.0, 1.0 - m);
  }
  return 0.5 * squared_norm(classifier.weights, classifier.bias) + loss;
}

double dual_gap(const LinearClassifier& classifier, std::span<const FeatureView> positives,
                std::span<const FeatureView> negatives, const SolverConfig& config) {
  const Problem p = make_problem(positives, negatives, config, false);
  const std::size_t n = p.rows.size();
  if (n > 0) check_dimension(classifier, p.dim);
  const std::size_t d = classifier.weights.size();
  constexpr double kMarginBand = 1e-3;

  // v accumulates sum_i a_i y_i x_i (augmented, bias last).
  std::vector<double> alpha(n, 0.0);
  std::vector<double> v(d + 1, 0.0);
  std::vector<std::size_t> free_set;
  double primal_loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double m = p.label[i] * augmented_dot(classifier.weights, classifier.bias, p.rows[i]);
    primal_loss += p.upper[i] * std::max(0.0, 1.0 - m);
    if (m < 1.0 - kMarginBand) {
      alpha[i] = p.upper[i];
      const double s = alpha[i] * p.label[i];
      for (std::size_t k = 0; k < d; ++k) v[k] += s * p.rows[i][k];
      v[d] += s;
    } else if (m <= 1.0 + kMarginBand) {
      free_set.push_back(i);
    }
  }

  // Fit the margin examples: min ||v - w|| over a_F in their boxes.
  std::vector<double> target(classifier.weights);
  target.push_back(classifier.bias);
  for (std::size_t sweep = 0; sweep < 20000 && !free_set.empty(); ++sweep) {
    double largest_step = 0.0;
    for (std::size_t i : free_set) {
      const auto& x = p.rows[i];
      const double y = p.label[i];
      double g = v[d] - target[d];
      double qd = 1.0;
      for (std::size_t k = 0; k < d; ++k) {
        g += (v[k] - target[k]) * x[k];
        qd += static_cast<double>(x[k]) * x[k];
      }
      g *= y;
      const double old = alpha[i];
      alpha[i] = std::clamp(old - g / qd, 0.0, p.upper[i]);
      const double s = (alpha[i] - old) * y;
      if (s != 0.0) {
        for (std::size_t k = 0; k < d; ++k) v[k] += s * x[k];
        v[d] += s;
      }
      largest_step = std::max(largest_step, std::abs(alpha[i] - old) / std::max(1.0, p.upper[i]));
    }
    if (largest_step < 1e-14) break;
  }

  double sum_alpha = 0.0;
  for (double a : alpha) sum_alpha += a;
  double vv = 0.0;
  for (double x : v) vv += x * x;
  // Shrinking alpha toward zero stays feasible; take the best scale.
  const double t = vv > 0.0 ? std::clamp(sum_alpha / vv, 0.0, 1.0) : 1.0;
  const double dual = t * sum_alpha - 0.5 * t * t * vv;
  const double primal = 0.5 * squared_norm(classifier.weights, classifier.bias) + primal_loss;
  return primal - dual;
}

std::string encode_classifier(const LinearClassifier& c) {
  detail::ByteWriter out;
  out.bytes(kClassifierMagic);
  out.uint(static_cast<std::uint32_t>(c.weights.size()));
  out.i32(c.class_id);
  out.uint(c.trained_in_state);
  out.f32(c.c_used);
  for (double w : c.weights) out.f64(w);
  out.f64(c.bias);
  return out.data();
}

void write_classifiers(std::span<const LinearClassifier> classifiers,
                       const std::filesystem::path& path) {
  std::string blob;
  for (const auto& c : classifiers) blob += encode_classifier(c);
  detail::write_file(path, blob);
}

std::vector<LinearClassifier> decode_classifiers(std::string_view blob) {
  detail::ByteReader in(blob);
  std::vector<LinearClassifier> out;
  while (in.remaining() > 0) {
    const auto where = "classifier record " + std::to_string(out.size());
    if (!in.has(4 + 4 + 4 + 4 + 4)) throw Error(ErrorCode::FormatError, where + " truncated");
    if (in.bytes(4) != kClassifierMagic) throw Error(ErrorCode::FormatError, where + " has a bad magic");
    LinearClassifier c;
    const auto d = in.uint<std::uint32_t>();
    c.class_id = in.i32();
    c.trained_in_state = in.uint<std::uint32_t>();
    c.c_used = in.f32();
    if (!in.has((static_cast<std::size_t>(d) + 1) * 8)) {
      throw Error(ErrorCode::FormatError, where + " truncated");
    }
    c.weights.resize(d);
    for (auto& w : c.weights) w = in.f64();
    c.bias = in.f64();
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<LinearClassifier> read_classifiers(const std::filesystem::path& path) {
  return decode_classifiers(detail::read_file(path));
}

std::string classifier_csv_line(const LinearClassifier& c) {
  const auto fmt = [](auto x) {
    char buf[40];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, end);
  };
  std::string line = std::to_string(c.class_id) + "," + std::to_string(c.trained_in_state) + "," +
                     fmt(c.c_used) + "," + fmt(c.bias);
  for (double w : c.weights) line += "," + fmt(w);
  return line;
}

}  // namespace negmem
