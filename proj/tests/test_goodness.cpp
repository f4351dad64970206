#include <numeric>

#include <gtest/gtest.h>

#include "conceptlab/activation.hpp"
#include "conceptlab/error.hpp"
#include "conceptlab/fixtures.hpp"
#include "conceptlab/goodness.hpp"
#include "conceptlab/synthetic.hpp"
#include "support.hpp"

using namespace conceptlab;

namespace {

ActivationMatrix acts_of(const Eigen::MatrixXd& v) {
  ActivationMatrix a;
  a.values = v;
  for (Eigen::Index j = 0; j < v.cols(); ++j) a.concept_names.push_back("c" + std::to_string(j));
  return a;
}

Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  return testing_support::gaussian(rng, n, 1) * scale;
}

}  // namespace

TEST(Softmax, ZerosAreUniform) {
  const ProbVector p = softmax(Eigen::VectorXd::Zero(4));
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(p[i], 0.25);
}

TEST(Softmax, LogTwoAnalytic) {
  Eigen::VectorXd x(2);
  x << std::log(2.0), 0.0;
  const ProbVector p = softmax(x);
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, MatchesExtendedPrecision) {
  std::mt19937_64 rng(50);
  const Eigen::VectorXd x = random_vector(rng, 50, 3.0);
  const ProbVector p = softmax(x);
  const auto want = testing_support::softmax_ld(std::vector<long double>(x.data(), x.data() + 50));
  for (int i = 0; i < 50; ++i) EXPECT_NEAR(p[i], static_cast<double>(want[static_cast<std::size_t>(i)]), 1e-9);
  EXPECT_NEAR(p.values().sum(), 1.0, 1e-12);
}

TEST(Softmax, ShiftInvariant) {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd x = random_vector(rng, 30, 4.0);
    const ProbVector base = softmax(x);
    for (double c : {-5.0, 5.0}) {
      const ProbVector shifted = softmax((x.array() + c).matrix());
      EXPECT_LT((shifted.values() - base.values()).cwiseAbs().maxCoeff(), 1e-9);
    }
  }
}

TEST(Softmax, LargeLogitsStayFinite) {
  Eigen::VectorXd x(3);
  x << 1000, 999, -1000;
  const ProbVector p = softmax(x);
  EXPECT_TRUE(p.values().allFinite());
  EXPECT_NEAR(p[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
}

TEST(Softmax, EmptyIsAnError) { EXPECT_THROW(softmax(Eigen::VectorXd()), Error); }

TEST(Entropy, UniformHundred) {
  const ProbVector p(Eigen::VectorXd::Constant(100, 0.01));
  EXPECT_NEAR(entropy(p), std::log(100.0), 1e-12);
  EXPECT_NEAR(entropy(p), 4.605170, 1e-6);
}

TEST(Entropy, OneHotIsZero) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(7);
  v(3) = 1.0;
  EXPECT_EQ(entropy(ProbVector(v)), 0.0);
}

TEST(Entropy, HalfQuarterQuarter) {
  Eigen::VectorXd v(3);
  v << 0.5, 0.25, 0.25;
  EXPECT_NEAR(entropy(ProbVector(v)), 1.5 * std::log(2.0), 1e-15);
  EXPECT_NEAR(entropy(ProbVector(v)), 1.039721, 1e-6);
}

TEST(Entropy, InvalidDistributionIsRejected) {
  Eigen::VectorXd v(2);
  v << 0.7, 0.7;
  EXPECT_THROW(ProbVector{v}, Error);
  v << 1.5, -0.5;
  EXPECT_THROW(ProbVector{v}, Error);
}

TEST(Entropy, WithinBounds) {
  std::mt19937_64 rng(52);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index m = 1 + trial % 40;
    const ProbVector p = softmax(random_vector(rng, m, 0.2 * (trial % 25)));
    const double h = entropy(p);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, std::log(static_cast<double>(m)) + 1e-12);
  }
}

TEST(Entropy, ConcentratingMassNeverIncreasesEntropy) {
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> frac(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd p = softmax(random_vector(rng, 12, 1.5)).values();
    Eigen::Index top = 0;
    p.maxCoeff(&top);
    Eigen::Index donor = (top + 1 + trial % 11) % 12;
    const double eps = frac(rng) * p(donor);
    const double before = entropy(ProbVector(p));
    p(donor) -= eps;
    p(top) += eps;
    EXPECT_LE(entropy(ProbVector(p)), before + 1e-12);
  }
}

TEST(TopK, TiesGoToLowerIndex) {
  Eigen::VectorXd row(4);
  row << 1, 3, 3, 0;
  const TopK t = topk_select(row, 2);
  EXPECT_EQ(t.indices, (std::vector<Eigen::Index>{1, 2}));
  EXPECT_EQ(t.values(0), 3.0);
}

TEST(TopK, FullCutoffIsRanking) {
  Eigen::VectorXd row(4);
  row << 0.5, -1, 2, 0.5;
  EXPECT_EQ(topk_select(row, 4).indices, (std::vector<Eigen::Index>{2, 0, 3, 1}));
}

TEST(TopK, MatchesSortOracle) {
  std::mt19937_64 rng(54);
  const Eigen::VectorXd row = random_vector(rng, 500);
  std::vector<Eigen::Index> order(500);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return row(a) > row(b); });
  order.resize(100);
  const TopK t = topk_select(row, 100);
  EXPECT_EQ(t.indices, order);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(t.values(i), row(order[static_cast<std::size_t>(i)]));
}

TEST(TopK, CutoffAboveLengthIsAnError) { EXPECT_THROW(topk_select(Eigen::VectorXd::Zero(3), 4), Error); }

TEST(TaskAgnostic, EqualActivationsGiveLogCutoff) {
  const ActivationMatrix a = acts_of(Eigen::MatrixXd::Constant(1, 300, 0.7));
  EXPECT_NEAR(task_agnostic_goodness(a, 100).mean_entropy, std::log(100.0), 1e-12);
}

TEST(TaskAgnostic, NearDeltaFromLargeGap) {
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(1, 50);
  v(0, 17) = 20.0;
  const double h = task_agnostic_goodness(acts_of(v), 10).mean_entropy;
  // Analytic: p_top = 1 / (1 + 9 e^-20), others e^-20 p_top.
  const double q = std::exp(-20.0), pt = 1.0 / (1.0 + 9.0 * q), po = q * pt;
  EXPECT_NEAR(h, -pt * std::log(pt) - 9.0 * po * std::log(po), 1e-12);
  EXPECT_LT(h, 0.01);
}

TEST(TaskAgnostic, MatchesSortOracleForEveryRow) {
  std::mt19937_64 rng(55);
  const Eigen::MatrixXd v = testing_support::gaussian(rng, 20, 60);
  const GoodnessReport r = task_agnostic_goodness(acts_of(v), 15);
  ASSERT_EQ(r.per_unit.size(), 20u);
  double sum = 0;
  for (int i = 0; i < 20; ++i) {
    const double want = static_cast<double>(testing_support::subset_entropy_ld(v.row(i).transpose(), 15));
    EXPECT_NEAR(r.per_unit[static_cast<std::size_t>(i)], want, 1e-12);
    sum += want;
  }
  EXPECT_NEAR(r.mean_entropy, sum / 20, 1e-12);
}

TEST(TaskAgnostic, ConceptOrderDoesNotMatter) {
  std::mt19937_64 rng(56);
  const Eigen::MatrixXd v = testing_support::gaussian(rng, 15, 40);
  std::vector<Eigen::Index> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const ActivationMatrix a = acts_of(v);
  for (Eigen::Index cut : {1, 10, 40}) {
    EXPECT_NEAR(task_agnostic_goodness(a, cut).mean_entropy,
                task_agnostic_goodness(a.select_columns(perm), cut).mean_entropy, 1e-9);
  }
}

TEST(TaskAgnostic, CutoffAboveConceptCountIsAnError) {
  EXPECT_THROW(task_agnostic_goodness(acts_of(Eigen::MatrixXd::Zero(2, 5)), 6), Error);
}

TEST(CutoffOrder, TruncatedFullSoftmaxUsesUnrenormalizedMass) {
  Eigen::VectorXd row(4);
  row << 2, 1, 0, -1;
  const auto full = testing_support::softmax_ld({2, 1, 0, -1});
  const long double want = -(full[0] * std::log(full[0]) + full[1] * std::log(full[1]));
  EXPECT_NEAR(unit_entropy(row, 2, CutoffOrder::truncated_full_softmax), static_cast<double>(want), 1e-12);
  EXPECT_NEAR(unit_entropy(row, 4, CutoffOrder::truncated_full_softmax), unit_entropy(row, 4), 1e-12);
}

TEST(CutoffOrder, NamesRoundTrip) {
  for (auto o : {CutoffOrder::subset_softmax, CutoffOrder::truncated_full_softmax})
    EXPECT_EQ(parse_cutoff_order(to_string(o)), o);
  for (auto m : {GoodnessMode::task_agnostic, GoodnessMode::task_specific})
    EXPECT_EQ(parse_goodness_mode(to_string(m)), m);
  EXPECT_EQ(parse_goodness_mode("task_agnostic"), GoodnessMode::task_agnostic);
  EXPECT_THROW(parse_goodness_mode("agnostic"), Error);
  EXPECT_THROW(parse_cutoff_order("softmax"), Error);
}

TEST(TaskSpecific, SingletonClassesMatchPerImage) {
  std::mt19937_64 rng(57);
  const Eigen::MatrixXd v = testing_support::gaussian(rng, 4, 30);
  const std::vector<std::uint32_t> labels = {2, 0, 3, 1};
  const ActivationMatrix a = acts_of(v);
  const GoodnessReport spec = task_specific_goodness(a, labels, 4, 8);
  const GoodnessReport agn = task_agnostic_goodness(a, 8);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(spec.per_unit[labels[i]], agn.per_unit[i], 1e-15);
}

TEST(TaskSpecific, IdenticalClassMeansGiveIdenticalEntropies) {
  std::mt19937_64 rng(58);
  Eigen::MatrixXd v = testing_support::gaussian(rng, 4, 20);
  v.row(2) = v.row(0);
  v.row(3) = v.row(1);
  const std::vector<std::uint32_t> labels = {0, 0, 1, 1};
  const GoodnessReport r = task_specific_goodness(acts_of(v), labels, 2, 5);
  EXPECT_EQ(r.per_unit[0], r.per_unit[1]);
}

TEST(TaskSpecific, EmptyClassIsAnError) {
  const std::vector<std::uint32_t> labels = {0, 0, 2};
  EXPECT_THROW(task_specific_goodness(acts_of(Eigen::MatrixXd::Zero(3, 4)), labels, 3, 2), Error);
}

TEST(TaskSpecific, AlignedConceptsAreSharperPerClassThanPerImage) {
  SyntheticSpec s = fixtures::goodness_spec(7);
  s.relevant_fraction = 1.0;
  const EmbeddingBundle b = make_synthetic_bundle(s);
  const ActivationMatrix a = compute_activations(b);
  EXPECT_LT(task_specific_goodness(a, b.labels, b.class_count(), 100).mean_entropy,
            task_agnostic_goodness(a, 100).mean_entropy);
}

TEST(GoodnessReport, JsonAndCsvFields) {
  std::mt19937_64 rng(59);
  GoodnessReport r = task_agnostic_goodness(acts_of(testing_support::gaussian(rng, 3, 10)), 4);
  r.concept_set = "set";
  const auto j = r.to_json();
  for (const char* key : {"mode", "cutoff", "mean_entropy", "per_unit", "cutoff_order", "concept_set"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["mode"], "task-agnostic");
  EXPECT_EQ(j["per_unit"].size(), 3u);
  const std::string csv = r.to_csv();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

// ---- refinement -----------------------------------------------------------

namespace {

// Exhaustive one-step oracle: goodness after removing each concept.
Eigen::Index best_single_removal(const ActivationMatrix& a, Eigen::Index cutoff, double* entropy_out) {
  Eigen::Index best = -1;
  double best_h = 0;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < a.cols(); ++i)
      if (i != j) keep.push_back(i);
    const double h = task_agnostic_goodness(a.select_columns(keep), cutoff).mean_entropy;
    if (best < 0 || h < best_h) {
      best = j;
      best_h = h;
    }
  }
  *entropy_out = best_h;
  return best;
}

}  // namespace

TEST(Refine, LoudSharpeningConceptIsKept) {
  std::mt19937_64 rng(60);
  Eigen::MatrixXd v = testing_support::gaussian(rng, 40, 25) * 0.3;
  // Concept 7 tops every row, so it sharpens each distribution.
  for (Eigen::Index i = 0; i < 40; ++i) v(i, 7) = 2.5 + 0.3 * std::sin(static_cast<double>(i));
  const ActivationMatrix a = acts_of(v);
  double oracle_h = 0;
  const Eigen::Index oracle = best_single_removal(a, 5, &oracle_h);
  RefineOptions o;
  o.cutoff = 5;
  o.steps = 1;
  const RefinementTrace t = refine_entropy_guided(a, std::nullopt, o);
  ASSERT_EQ(t.steps.size(), 1u);
  EXPECT_NE(oracle, 7);
  EXPECT_EQ(t.steps[0].removed_index, oracle);
  EXPECT_EQ(t.steps[0].removed_name, "c" + std::to_string(oracle));
  EXPECT_NEAR(t.steps[0].entropy, oracle_h, 1e-10);
}

TEST(Refine, GreedyStepsMatchExhaustiveSearch) {
  std::mt19937_64 rng(61);
  const ActivationMatrix a = acts_of(testing_support::gaussian(rng, 30, 18));
  RefineOptions o;
  o.cutoff = 6;
  o.steps = 5;
  const RefinementTrace t = refine_entropy_guided(a, std::nullopt, o);
  std::vector<Eigen::Index> remaining(18);
  std::iota(remaining.begin(), remaining.end(), 0);
  for (const auto& step : t.steps) {
    const ActivationMatrix sub = a.select_columns(remaining);
    double h = 0;
    const Eigen::Index local = best_single_removal(sub, 6, &h);
    EXPECT_EQ(step.removed_index, remaining[static_cast<std::size_t>(local)]);
    EXPECT_NEAR(step.entropy, h, 1e-10);
    remaining.erase(remaining.begin() + local);
  }
}

TEST(Refine, TaskSpecificObjectiveMatchesExhaustiveSearch) {
  std::mt19937_64 rng(62);
  const ActivationMatrix a = acts_of(testing_support::gaussian(rng, 24, 12));
  std::vector<std::uint32_t> labels(24);
  for (std::size_t i = 0; i < 24; ++i) labels[i] = static_cast<std::uint32_t>(i % 3);
  RefineOptions o;
  o.cutoff = 4;
  o.steps = 1;
  const RefinementTrace t = refine_entropy_guided(a, RefineLabels{labels, 3}, o);
  Eigen::Index best = -1;
  double best_h = 0;
  for (Eigen::Index j = 0; j < 12; ++j) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < 12; ++i)
      if (i != j) keep.push_back(i);
    const double h = task_specific_goodness(a.select_columns(keep), labels, 3, 4).mean_entropy;
    if (best < 0 || h < best_h) best = j, best_h = h;
  }
  EXPECT_EQ(t.objective, GoodnessMode::task_specific);
  EXPECT_EQ(t.steps[0].removed_index, best);
  EXPECT_NEAR(t.steps[0].entropy, best_h, 1e-10);
}

TEST(Refine, ZeroStepsLeaveEntropyUnchanged) {
  std::mt19937_64 rng(63);
  const ActivationMatrix a = acts_of(testing_support::gaussian(rng, 10, 8));
  RefineOptions o;
  o.cutoff = 3;
  o.steps = 0;
  const RefinementTrace g = refine_entropy_guided(a, std::nullopt, o);
  const RefinementTrace r = refine_random_baseline(a, std::nullopt, o, 3);
  EXPECT_TRUE(g.steps.empty());
  EXPECT_TRUE(r.steps.empty());
  const double h = task_agnostic_goodness(a, 3).mean_entropy;
  EXPECT_NEAR(g.initial_entropy, h, 1e-12);
  EXPECT_NEAR(r.initial_entropy, h, 1e-12);
}

TEST(Refine, TooManyStepsIsAnError) {
  const ActivationMatrix a = acts_of(Eigen::MatrixXd::Zero(3, 6));
  RefineOptions o;
  o.cutoff = 2;
  o.steps = 6;
  EXPECT_THROW(refine_entropy_guided(a, std::nullopt, o), Error);
  o.steps = 5;  // would leave fewer than `cutoff` concepts
  EXPECT_THROW(refine_entropy_guided(a, std::nullopt, o), Error);
}

TEST(Refine, RandomBaselineIsSeededAndAveraged) {
  std::mt19937_64 rng(64);
  const ActivationMatrix a = acts_of(testing_support::gaussian(rng, 12, 20));
  RefineOptions o;
  o.cutoff = 4;
  o.steps = 6;
  o.seed = 99;
  const RefinementTrace r1 = refine_random_baseline(a, std::nullopt, o, 1);
  const RefinementTrace r2 = refine_random_baseline(a, std::nullopt, o, 1);
  EXPECT_EQ(r1.to_csv(), r2.to_csv());
  const RefinementTrace r3 = refine_random_baseline(a, std::nullopt, o, 4);
  ASSERT_EQ(r3.removed_per_trial.size(), 4u);
  // Oracle: replay every trial's removal order and average.
  for (std::size_t s = 0; s < 6; ++s) {
    double sum = 0;
    for (const auto& removed : r3.removed_per_trial) {
      std::vector<Eigen::Index> keep;
      for (Eigen::Index j = 0; j < 20; ++j)
        if (std::find(removed.begin(), removed.begin() + static_cast<long>(s) + 1, j) == removed.begin() + static_cast<long>(s) + 1)
          keep.push_back(j);
      sum += task_agnostic_goodness(a.select_columns(keep), 4).mean_entropy;
    }
    EXPECT_NEAR(r3.steps[s].entropy, sum / 4, 1e-10);
  }
  o.seed = 100;
  EXPECT_NE(refine_random_baseline(a, std::nullopt, o, 1).to_csv(), r1.to_csv());
}

TEST(Refine, CandidateLimitStillRemovesValidConcepts) {
  std::mt19937_64 rng(65);
  const ActivationMatrix a = acts_of(testing_support::gaussian(rng, 10, 30));
  RefineOptions o;
  o.cutoff = 5;
  o.steps = 4;
  o.candidate_limit = 3;
  const RefinementTrace t = refine_entropy_guided(a, std::nullopt, o);
  std::vector<Eigen::Index> seen;
  for (const auto& s : t.steps) {
    EXPECT_TRUE(std::find(seen.begin(), seen.end(), s.removed_index) == seen.end());
    seen.push_back(s.removed_index);
  }
  EXPECT_EQ(refine_entropy_guided(a, std::nullopt, o).to_csv(), t.to_csv());
}

TEST(Refine, MixedFixtureRemovesMoreRandomConcepts) {
  const SyntheticSpec s = fixtures::refinement_spec(1);
  const ActivationMatrix a = compute_activations(make_synthetic_bundle(s));
  RefineOptions o = fixtures::refinement_options(1);
  o.steps = 20;
  const RefinementTrace g = refine_entropy_guided(a, std::nullopt, o);
  const RefinementTrace r = refine_random_baseline(a, std::nullopt, o, fixtures::kRefinementTrials);
  const Eigen::Index relevant = s.relevant_count();
  double guided = 0, random = 0;
  for (auto j : g.removed_per_trial[0]) guided += j >= relevant;
  for (const auto& trial : r.removed_per_trial)
    for (auto j : trial) random += j >= relevant;
  random /= static_cast<double>(r.removed_per_trial.size());
  EXPECT_GT(guided, random);
  for (std::size_t i = 0; i < g.steps.size(); ++i) EXPECT_LE(g.steps[i].entropy, r.steps[i].entropy) << i;
}

TEST(Refine, CsvHasInitialRowAndQuotesNames) {
  Eigen::MatrixXd v(2, 4);
  v << 1, 0, 0, 0, 0, 1, 0, 0;
  ActivationMatrix a = acts_of(v);
  a.concept_names[0] = "red, round";
  RefineOptions o;
  o.cutoff = 2;
  o.steps = 2;
  const std::string csv = refine_entropy_guided(a, std::nullopt, o).to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,removed_index,removed_name,entropy");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(csv.find("red, round,"), std::string::npos);
}
