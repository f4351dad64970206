#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "conceptlab/embedding_store.hpp"
#include "conceptlab/error.hpp"

namespace conceptlab {

enum class NormMode { per_concept, scalar };

struct NormStats {
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma;
  double epsilon = 1e-6;
  NormMode mode = NormMode::per_concept;
  // Columns whose sigma fell below epsilon and was replaced.
  std::vector<Eigen::Index> degenerate;

  Eigen::Index size() const { return mu.size(); }
};

struct ActivationMatrix {
  Eigen::MatrixXd values;  // N x K
  NormStats stats;
  std::vector<std::string> concept_names;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }

  ActivationMatrix select_columns(std::span<const Eigen::Index> columns) const;
  ActivationMatrix select_rows(std::span<const Eigen::Index> rows) const;
};

/// Cosine similarity of every image row against every concept row.
/// Both inputs are L2-normalized row-wise in double precision, so the
/// result is a plain dot product of unit vectors, clamped to [-1, 1].
template <typename DerivedC, typename DerivedI>
Eigen::MatrixXd raw_scores(const Eigen::MatrixBase<DerivedC>& concept_embeddings,
                           const Eigen::MatrixBase<DerivedI>& image_embeddings) {
  require(concept_embeddings.cols() == image_embeddings.cols(),
          "raw_scores: embedding widths differ (" + std::to_string(concept_embeddings.cols()) +
              " vs " + std::to_string(image_embeddings.cols()) + ")");
  auto unit_rows = [](const auto& m, const char* what) {
    Eigen::MatrixXd u = m.template cast<double>();
    for (Eigen::Index r = 0; r < u.rows(); ++r) {
      const double norm = u.row(r).norm();
      require(norm > 0.0 && std::isfinite(norm),
              std::string("raw_scores: zero-norm ") + what + " row " + std::to_string(r));
      u.row(r) /= norm;
    }
    return u;
  };
  const Eigen::MatrixXd c = unit_rows(concept_embeddings, "concept");
  const Eigen::MatrixXd x = unit_rows(image_embeddings, "image");
  Eigen::MatrixXd scores = x * c.transpose();
  return scores.cwiseMax(-1.0).cwiseMin(1.0);
}

NormStats fit_norm_stats(const Eigen::Ref<const Eigen::MatrixXd>& train_scores, double epsilon = 1e-6,
                         NormMode mode = NormMode::per_concept);

ActivationMatrix normalize(const Eigen::Ref<const Eigen::MatrixXd>& scores, const NormStats& stats,
                           std::vector<std::string> concept_names = {});

// Raw scores for all rows, stats fitted on the train split, then normalized.
ActivationMatrix compute_activations(const EmbeddingBundle& bundle, double epsilon = 1e-6,
                                     NormMode mode = NormMode::per_concept);

struct HistogramReport {
  std::vector<double> edges;  // bins + 1, uniform spacing
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;
  std::uint64_t below_range = 0;  // clamped into the first bin
  std::uint64_t above_range = 0;  // clamped into the last bin

  std::string to_csv() const;
};

HistogramReport histogram(std::span<const double> values, double bin_width, double lo, double hi);

// Values of the top-`cutoff` activations of every row; cutoff 0 keeps all.
std::vector<double> top_activation_values(const ActivationMatrix& acts, Eigen::Index cutoff);

}  // namespace conceptlab
