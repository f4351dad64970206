#include "conceptlab/goodness.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace conceptlab {

ProbVector::ProbVector(Eigen::VectorXd p) : p_(std::move(p)) {
  require(p_.size() > 0, "probability vector is empty");
  require(p_.allFinite(), "probability vector has non-finite entries");
  require(p_.minCoeff() >= 0.0, "probability vector has negative entries");
  require(std::abs(p_.sum() - 1.0) <= kProbabilityTolerance, "probability vector does not sum to 1");
}

double entropy(const ProbVector& p) {
  double h = 0.0;
  for (Eigen::Index j = 0; j < p.size(); ++j)
    if (p[j] > 0.0) h -= p[j] * std::log(p[j]);
  return std::max(0.0, h);
}

TopK topk_select(const Eigen::Ref<const Eigen::VectorXd>& row, Eigen::Index cutoff) {
  require(cutoff >= 0 && cutoff <= row.size(),
          "topk_select: cutoff " + std::to_string(cutoff) + " exceeds " + std::to_string(row.size()) + " concepts");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(row.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto before = [&](Eigen::Index a, Eigen::Index b) { return row(a) > row(b) || (row(a) == row(b) && a < b); };
  std::partial_sort(order.begin(), order.begin() + cutoff, order.end(), before);
  order.resize(static_cast<std::size_t>(cutoff));
  TopK out;
  out.values.resize(cutoff);
  for (Eigen::Index i = 0; i < cutoff; ++i) out.values(i) = row(order[static_cast<std::size_t>(i)]);
  out.indices = std::move(order);
  return out;
}

std::string to_string(GoodnessMode mode) {
  return mode == GoodnessMode::task_agnostic ? "task-agnostic" : "task-specific";
}

std::string to_string(CutoffOrder order) {
  return order == CutoffOrder::subset_softmax ? "subset-softmax" : "truncated-full-softmax";
}

GoodnessMode parse_goodness_mode(const std::string& s) {
  if (s == "task-agnostic" || s == "task_agnostic") return GoodnessMode::task_agnostic;
  if (s == "task-specific" || s == "task_specific") return GoodnessMode::task_specific;
  fail("unknown goodness mode '" + s + "'");
}

CutoffOrder parse_cutoff_order(const std::string& s) {
  if (s == "subset-softmax" || s == "subset_softmax") return CutoffOrder::subset_softmax;
  if (s == "truncated-full-softmax" || s == "truncated_full_softmax") return CutoffOrder::truncated_full_softmax;
  fail("unknown cutoff order '" + s + "'");
}

double unit_entropy(const Eigen::Ref<const Eigen::VectorXd>& activations, Eigen::Index cutoff, CutoffOrder order) {
  const TopK top = topk_select(activations, cutoff);
  if (order == CutoffOrder::subset_softmax) return entropy(softmax(top.values));
  const ProbVector full = softmax(activations);
  double h = 0.0;
  for (Eigen::Index j : top.indices)
    if (full[j] > 0.0) h -= full[j] * std::log(full[j]);
  return h;
}

namespace {

GoodnessReport report_over_rows(const Eigen::Ref<const Eigen::MatrixXd>& rows, GoodnessMode mode,
                                Eigen::Index cutoff, CutoffOrder order) {
  require(rows.rows() >= 1, "goodness: no rows to evaluate");
  GoodnessReport r;
  r.mode = mode;
  r.cutoff = cutoff;
  r.order = order;
  r.per_unit.reserve(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) r.per_unit.push_back(unit_entropy(rows.row(i).transpose(), cutoff, order));
  r.mean_entropy = std::accumulate(r.per_unit.begin(), r.per_unit.end(), 0.0) / static_cast<double>(r.per_unit.size());
  return r;
}

}  // namespace

GoodnessReport task_agnostic_goodness(const ActivationMatrix& acts, Eigen::Index cutoff, CutoffOrder order) {
  require(cutoff <= acts.cols(), "goodness: cutoff " + std::to_string(cutoff) + " exceeds concept count " +
                                     std::to_string(acts.cols()));
  return report_over_rows(acts.values, GoodnessMode::task_agnostic, cutoff, order);
}

Eigen::MatrixXd class_mean_activations(const Eigen::Ref<const Eigen::MatrixXd>& values,
                                       std::span<const std::uint32_t> labels, Eigen::Index classes) {
  require(static_cast<Eigen::Index>(labels.size()) == values.rows(), "class means: label count mismatch");
  require(classes >= 1, "class means: need at least one class");
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(classes, values.cols());
  std::vector<std::size_t> counts(static_cast<std::size_t>(classes), 0);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    const auto y = labels[static_cast<std::size_t>(i)];
    require(y < static_cast<std::uint32_t>(classes), "class means: label out of range");
    sums.row(y) += values.row(i);
    ++counts[y];
  }
  for (Eigen::Index s = 0; s < classes; ++s) {
    require(counts[static_cast<std::size_t>(s)] > 0, "empty class " + std::to_string(s));
    sums.row(s) /= static_cast<double>(counts[static_cast<std::size_t>(s)]);
  }
  return sums;
}

GoodnessReport task_specific_goodness(const ActivationMatrix& acts, std::span<const std::uint32_t> labels,
                                      Eigen::Index classes, Eigen::Index cutoff, CutoffOrder order) {
  require(cutoff <= acts.cols(), "goodness: cutoff " + std::to_string(cutoff) + " exceeds concept count " +
                                     std::to_string(acts.cols()));
  return report_over_rows(class_mean_activations(acts.values, labels, classes), GoodnessMode::task_specific,
                          cutoff, order);
}

nlohmann::json GoodnessReport::to_json() const {
  return {{"mode", to_string(mode)},        {"cutoff", cutoff},         {"cutoff_order", to_string(order)},
          {"mean_entropy", mean_entropy}, {"per_unit", per_unit}, {"concept_set", concept_set}};
}

std::string GoodnessReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "unit,entropy\n";
  for (std::size_t i = 0; i < per_unit.size(); ++i) out << i << ',' << per_unit[i] << '\n';
  return out.str();
}

}  // namespace conceptlab
