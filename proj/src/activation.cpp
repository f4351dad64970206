#include "conceptlab/activation.hpp"

#include <algorithm>
#include <sstream>

#include "conceptlab/goodness.hpp"

namespace conceptlab {

ActivationMatrix ActivationMatrix::select_columns(std::span<const Eigen::Index> columns) const {
  ActivationMatrix out;
  const auto k = static_cast<Eigen::Index>(columns.size());
  out.values.resize(values.rows(), k);
  const bool has_stats = stats.mu.size() == cols() && stats.sigma.size() == cols();
  if (has_stats) {
    out.stats.mu.resize(k);
    out.stats.sigma.resize(k);
  }
  out.stats.epsilon = stats.epsilon;
  out.stats.mode = stats.mode;
  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::Index src = columns[static_cast<std::size_t>(j)];
    require(src >= 0 && src < cols(), "select_columns: column out of range");
    out.values.col(j) = values.col(src);
    if (has_stats) {
      out.stats.mu(j) = stats.mu(src);
      out.stats.sigma(j) = stats.sigma(src);
    }
    if (std::find(stats.degenerate.begin(), stats.degenerate.end(), src) != stats.degenerate.end())
      out.stats.degenerate.push_back(j);
    if (!concept_names.empty()) out.concept_names.push_back(concept_names[static_cast<std::size_t>(src)]);
  }
  return out;
}

ActivationMatrix ActivationMatrix::select_rows(std::span<const Eigen::Index> rows) const {
  ActivationMatrix out;
  out.values = gather_rows(values, rows);
  out.stats = stats;
  out.concept_names = concept_names;
  return out;
}

NormStats fit_norm_stats(const Eigen::Ref<const Eigen::MatrixXd>& train_scores, double epsilon, NormMode mode) {
  require(train_scores.rows() >= 2, "fit_norm_stats: need at least 2 training rows");
  require(epsilon > 0.0, "fit_norm_stats: epsilon must be > 0");
  const Eigen::Index k = train_scores.cols();
  NormStats stats;
  stats.epsilon = epsilon;
  stats.mode = mode;
  stats.mu.resize(k);
  stats.sigma.resize(k);
  // Two-pass mean / population variance, fixed row order per column.
  if (mode == NormMode::per_concept) {
    const double n = static_cast<double>(train_scores.rows());
    for (Eigen::Index j = 0; j < k; ++j) {
      const double mean = train_scores.col(j).sum() / n;
      const double var = (train_scores.col(j).array() - mean).square().sum() / n;
      stats.mu(j) = mean;
      stats.sigma(j) = std::sqrt(var);
    }
  } else {
    const double n = static_cast<double>(train_scores.size());
    const double mean = train_scores.sum() / n;
    const double var = (train_scores.array() - mean).square().sum() / n;
    stats.mu.setConstant(mean);
    stats.sigma.setConstant(std::sqrt(var));
  }
  for (Eigen::Index j = 0; j < k; ++j) {
    if (stats.sigma(j) < epsilon) {
      stats.sigma(j) = epsilon;
      stats.degenerate.push_back(j);
    }
  }
  return stats;
}

ActivationMatrix normalize(const Eigen::Ref<const Eigen::MatrixXd>& scores, const NormStats& stats,
                           std::vector<std::string> concept_names) {
  require(scores.cols() == stats.size(), "normalize: dimension mismatch (" + std::to_string(scores.cols()) +
                                             " columns vs " + std::to_string(stats.size()) + " stats)");
  require(concept_names.empty() || static_cast<Eigen::Index>(concept_names.size()) == scores.cols(),
          "normalize: concept name count mismatch");
  ActivationMatrix out;
  out.values = (scores.rowwise() - stats.mu.transpose()).array().rowwise() / stats.sigma.transpose().array();
  require(out.values.allFinite(), "normalize: non-finite activation");
  out.stats = stats;
  out.concept_names = std::move(concept_names);
  return out;
}

ActivationMatrix compute_activations(const EmbeddingBundle& bundle, double epsilon, NormMode mode) {
  const Eigen::MatrixXd scores = raw_scores(bundle.concept_embeddings, bundle.image_embeddings);
  const auto train = bundle.rows_in(Split::train);
  const NormStats stats = fit_norm_stats(gather_rows(scores, train), epsilon, mode);
  return normalize(scores, stats, bundle.concept_names);
}

HistogramReport histogram(std::span<const double> values, double bin_width, double lo, double hi) {
  require(bin_width > 0.0 && std::isfinite(bin_width), "histogram: bin width must be > 0");
  require(std::isfinite(lo) && std::isfinite(hi) && lo < hi, "histogram: invalid range");
  const double span = (hi - lo) / bin_width;
  const auto bins = static_cast<std::size_t>(std::max(1.0, std::ceil(span - 1e-9)));
  HistogramReport h;
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = lo + static_cast<double>(i) * bin_width;
  h.counts.assign(bins, 0);
  for (double v : values) {
    std::size_t bin;
    if (v < lo) {
      bin = 0;
      ++h.below_range;
    } else if (v >= h.edges.back()) {
      bin = bins - 1;
      ++h.above_range;
    } else {
      bin = std::min(bins - 1, static_cast<std::size_t>(std::floor((v - lo) / bin_width)));
    }
    ++h.counts[bin];
    ++h.total;
  }
  return h;
}

std::string HistogramReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "edge_lo,edge_hi,count\n";
  for (std::size_t i = 0; i < counts.size(); ++i) out << edges[i] << ',' << edges[i + 1] << ',' << counts[i] << '\n';
  return out.str();
}

std::vector<double> top_activation_values(const ActivationMatrix& acts, Eigen::Index cutoff) {
  std::vector<double> out;
  if (cutoff == 0) {
    out.assign(acts.values.data(), acts.values.data() + acts.values.size());
    return out;
  }
  out.reserve(static_cast<std::size_t>(acts.rows() * cutoff));
  for (Eigen::Index i = 0; i < acts.rows(); ++i) {
    const Eigen::VectorXd row = acts.values.row(i).transpose();
    const TopK top = topk_select(row, cutoff);
    out.insert(out.end(), top.values.data(), top.values.data() + top.values.size());
  }
  return out;
}

}  // namespace conceptlab
