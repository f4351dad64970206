#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "conceptlab/activation.hpp"
#include "conceptlab/error.hpp"

namespace conceptlab {

inline constexpr double kProbabilityTolerance = 1e-6;

// A validated probability vector: non-negative entries summing to one.
class ProbVector {
 public:
  explicit ProbVector(Eigen::VectorXd p);

  const Eigen::VectorXd& values() const { return p_; }
  Eigen::Index size() const { return p_.size(); }
  double operator[](Eigen::Index i) const { return p_(i); }

 private:
  Eigen::VectorXd p_;
};

/// Max-shifted softmax. Shifting x by a constant does not change the result.
template <typename Derived>
ProbVector softmax(const Eigen::MatrixBase<Derived>& x) {
  require(x.size() > 0, "softmax: empty vector");
  require(x.allFinite(), "softmax: non-finite input");
  const Eigen::VectorXd v = x.template cast<double>();
  const Eigen::VectorXd e = (v.array() - v.maxCoeff()).exp();
  return ProbVector(e / e.sum());
}

/// Shannon entropy in nats with 0 ln 0 = 0.
double entropy(const ProbVector& p);

struct TopK {
  std::vector<Eigen::Index> indices;  // descending by value, ties by lower index
  Eigen::VectorXd values;
};

TopK topk_select(const Eigen::Ref<const Eigen::VectorXd>& row, Eigen::Index cutoff);

// subset_softmax: keep the top-cutoff activations, softmax over them.
// truncated_full_softmax: softmax over all K, keep the top-cutoff
// probabilities without renormalizing and sum -p ln p over them.
enum class CutoffOrder { subset_softmax, truncated_full_softmax };

enum class GoodnessMode { task_agnostic, task_specific };

std::string to_string(GoodnessMode mode);
std::string to_string(CutoffOrder order);
GoodnessMode parse_goodness_mode(const std::string& s);
CutoffOrder parse_cutoff_order(const std::string& s);

// Entropy of one activation vector under the cutoff protocol.
double unit_entropy(const Eigen::Ref<const Eigen::VectorXd>& activations, Eigen::Index cutoff,
                    CutoffOrder order = CutoffOrder::subset_softmax);

struct GoodnessReport {
  GoodnessMode mode = GoodnessMode::task_agnostic;
  Eigen::Index cutoff = 100;
  CutoffOrder order = CutoffOrder::subset_softmax;
  std::vector<double> per_unit;  // per image or per class, nats
  double mean_entropy = 0.0;
  std::string concept_set;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

GoodnessReport task_agnostic_goodness(const ActivationMatrix& acts, Eigen::Index cutoff,
                                      CutoffOrder order = CutoffOrder::subset_softmax);

// Per-class mean activation vectors, one row per class in [0, classes).
Eigen::MatrixXd class_mean_activations(const Eigen::Ref<const Eigen::MatrixXd>& values,
                                       std::span<const std::uint32_t> labels, Eigen::Index classes);

GoodnessReport task_specific_goodness(const ActivationMatrix& acts, std::span<const std::uint32_t> labels,
                                      Eigen::Index classes, Eigen::Index cutoff,
                                      CutoffOrder order = CutoffOrder::subset_softmax);

// ---- concept-set refinement -------------------------------------------------

enum class RefineStrategy { entropy_guided, random };

struct RefinementStep {
  Eigen::Index removed_index = -1;
  std::string removed_name;
  double entropy = 0.0;  // goodness after this removal (trial mean for random)
};

struct RefinementTrace {
  RefineStrategy strategy = RefineStrategy::entropy_guided;
  GoodnessMode objective = GoodnessMode::task_agnostic;
  Eigen::Index cutoff = 100;
  std::size_t trials = 1;
  std::uint64_t seed = 0;
  double initial_entropy = 0.0;
  std::vector<RefinementStep> steps;  // removed_index from trial 0 for random
  std::vector<std::vector<Eigen::Index>> removed_per_trial;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

struct RefineOptions {
  Eigen::Index cutoff = 100;
  Eigen::Index steps = 10;
  // Evaluate only this many randomly drawn candidates per greedy step
  // (0 = every remaining concept).
  Eigen::Index candidate_limit = 0;
  std::uint64_t seed = 0;
};

struct RefineLabels {
  std::span<const std::uint32_t> labels;
  Eigen::Index classes = 0;
};

// Greedy removal: each step drops the concept whose removal minimizes the
// goodness entropy, ties broken by lowest index. With labels the objective
// is the task-specific entropy, otherwise task-agnostic.
RefinementTrace refine_entropy_guided(const ActivationMatrix& acts, std::optional<RefineLabels> labels,
                                      const RefineOptions& options);

RefinementTrace refine_random_baseline(const ActivationMatrix& acts, std::optional<RefineLabels> labels,
                                       const RefineOptions& options, std::size_t trials);

}  // namespace conceptlab
