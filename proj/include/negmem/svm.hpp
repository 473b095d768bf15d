#ifndef NEGMEM_SVM_HPP_
#define NEGMEM_SVM_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "negmem/features.hpp"

namespace negmem {

struct SolverConfig {
  double c = 1.0;
  double tolerance = 1e-4;       // max projected-gradient violation at exit
  std::size_t max_epochs = 1000;
  std::uint64_t seed = 0;        // drives the per-epoch visiting order
  double positive_weight = 1.0;  // positives use C * positive_weight

  /// Throws ConfigError when c, tolerance or positive_weight is not positive
  /// or max_epochs is zero.
  void validate() const;
};

/// One-vs-rest scorer for a single class: score(x) = weights . x + bias.
struct LinearClassifier {
  ClassId class_id = 0;
  std::vector<double> weights;
  double bias = 0.0;
  float c_used = 0.0f;  // stored as f32 on disk
  std::uint32_t trained_in_state = 0;

  std::size_t dimension() const { return weights.size(); }
  bool operator==(const LinearClassifier&) const = default;
};

struct SolverTrace {
  std::vector<double> dual_objective;  // after each epoch, minimization form
  std::size_t epochs = 0;
  double final_violation = 0.0;
  double relative_gap = 0.0;  // (primal - dual) / primal at the last check
  bool converged = false;
};

/// L1-hinge, L2-regularized linear SVM trained by dual coordinate descent.
///
/// The bias is learned as the weight of a constant feature of value 1, so it
/// is regularized together with the weights. Each epoch visits the examples
/// in an order drawn from `config.seed`. The solver stops once the largest
/// projected-gradient violation of an epoch falls below `config.tolerance`
/// and the primal-dual gap of the iterate is at most `config.tolerance`
/// times the primal objective, or after `config.max_epochs` epochs. Results
/// are bit-reproducible for identical inputs.
LinearClassifier train_svm(std::span<const FeatureView> positives,
                           std::span<const FeatureView> negatives, const SolverConfig& config,
                           SolverTrace* trace = nullptr);

double score(const LinearClassifier& classifier, FeatureView x);

/// 1/2 (||w||^2 + b^2) + sum_i C_i max(0, 1 - y_i score(x_i)).
double primal_objective(const LinearClassifier& classifier, std::span<const FeatureView> positives,
                        std::span<const FeatureView> negatives, const SolverConfig& config);

/// Primal objective minus the objective of a feasible dual point rebuilt from
/// the classifier's margins: examples well inside the margin are pinned at
/// their upper bound, examples well outside at zero, and the rest are fitted
/// by box-constrained least squares so that sum_i a_i y_i x_i matches the
/// weights. Weak duality makes the result an upper bound on suboptimality.
double dual_gap(const LinearClassifier& classifier, std::span<const FeatureView> positives,
                std::span<const FeatureView> negatives, const SolverConfig& config);

// DSC1 records: magic, u32 d, i32 class_id, u32 state, f32 c_used,
// (d + 1) f64 holding the weights followed by the bias.
std::string encode_classifier(const LinearClassifier& classifier);
void write_classifiers(std::span<const LinearClassifier> classifiers,
                       const std::filesystem::path& path);
std::vector<LinearClassifier> read_classifiers(const std::filesystem::path& path);
std::vector<LinearClassifier> decode_classifiers(std::string_view blob);

/// class_id,state,c,bias,w0,...,w{d-1}
std::string classifier_csv_line(const LinearClassifier& classifier);

}  // namespace negmem

#endif  // NEGMEM_SVM_HPP_
