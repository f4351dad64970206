#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "conceptlab/goodness.hpp"
#include "conceptlab/synthetic.hpp"

namespace conceptlab {

namespace {

// Incremental top-cutoff softmax entropies for every unit (row) while
// concepts are deleted. For a unit with kept values x and shift m = max x:
//   Z = sum exp(x - m),  Y = sum (x - m) exp(x - m),  H = ln Z - Y / Z.
class RemovalState {
 public:
  RemovalState(Eigen::MatrixXd units, Eigen::Index cutoff)
      : units_(std::move(units)), cutoff_(cutoff), removed_(static_cast<std::size_t>(units_.cols()), false) {
    const Eigen::Index r = units_.rows(), k = units_.cols();
    order_.resize(static_cast<std::size_t>(r));
    rows_.resize(static_cast<std::size_t>(r));
    for (Eigen::Index i = 0; i < r; ++i) {
      auto& ord = order_[static_cast<std::size_t>(i)];
      ord.resize(static_cast<std::size_t>(k));
      std::iota(ord.begin(), ord.end(), Eigen::Index{0});
      std::sort(ord.begin(), ord.end(), [&](Eigen::Index a, Eigen::Index b) {
        return units_(i, a) > units_(i, b) || (units_(i, a) == units_(i, b) && a < b);
      });
      rebuild(i);
    }
    remaining_ = k;
  }

  Eigen::Index remaining() const { return remaining_; }
  bool removed(Eigen::Index j) const { return removed_[static_cast<std::size_t>(j)]; }

  double mean_entropy() const {
    double sum = 0.0;
    for (const auto& row : rows_) sum += row.entropy;
    return sum / static_cast<double>(rows_.size());
  }

  // Mean entropy that would result from deleting each concept; entries for
  // already removed concepts are left untouched.
  std::vector<double> removal_objectives() const {
    const Eigen::Index k = units_.cols();
    std::vector<double> delta(static_cast<std::size_t>(k), 0.0);
    double base = 0.0;
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      const Row& row = rows_[i];
      base += row.entropy;
      for (std::size_t t = 0; t < row.top.size(); ++t) {
        const Eigen::Index j = row.top[t];
        delta[static_cast<std::size_t>(j)] += entropy_without(static_cast<Eigen::Index>(i), t) - row.entropy;
      }
    }
    std::vector<double> out(static_cast<std::size_t>(k));
    const double n = static_cast<double>(rows_.size());
    for (Eigen::Index j = 0; j < k; ++j) out[static_cast<std::size_t>(j)] = (base + delta[static_cast<std::size_t>(j)]) / n;
    return out;
  }

  void remove(Eigen::Index j) {
    require(!removed(j), "concept already removed");
    removed_[static_cast<std::size_t>(j)] = true;
    --remaining_;
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      const Row& row = rows_[i];
      const bool affected = row.next == j || std::find(row.top.begin(), row.top.end(), j) != row.top.end();
      if (affected) rebuild(static_cast<Eigen::Index>(i));
    }
  }

 private:
  struct Row {
    std::vector<Eigen::Index> top;
    Eigen::Index next = -1;
    double shift = 0.0, z = 0.0, y = 0.0, entropy = 0.0;
  };

  static double entropy_of(double z, double y) { return std::max(0.0, std::log(z) - y / z); }

  void rebuild(Eigen::Index i) {
    Row& row = rows_[static_cast<std::size_t>(i)];
    row.top.clear();
    row.next = -1;
    for (Eigen::Index j : order_[static_cast<std::size_t>(i)]) {
      if (removed_[static_cast<std::size_t>(j)]) continue;
      if (static_cast<Eigen::Index>(row.top.size()) < cutoff_) {
        row.top.push_back(j);
      } else {
        row.next = j;
        break;
      }
    }
    row.shift = units_(i, row.top.front());
    row.z = row.y = 0.0;
    for (Eigen::Index j : row.top) {
      const double d = units_(i, j) - row.shift, e = std::exp(d);
      row.z += e;
      row.y += d * e;
    }
    row.entropy = entropy_of(row.z, row.y);
  }

  // Entropy of unit i once its t-th kept concept is deleted.
  double entropy_without(Eigen::Index i, std::size_t t) const {
    const Row& row = rows_[static_cast<std::size_t>(i)];
    if (t == 0) {
      // Deleting the maximum changes the shift; recompute directly.
      const double shift = row.top.size() > 1 ? units_(i, row.top[1]) : units_(i, row.next);
      double z = 0.0, y = 0.0;
      auto add = [&](Eigen::Index j) {
        const double d = units_(i, j) - shift, e = std::exp(d);
        z += e;
        y += d * e;
      };
      for (std::size_t u = 1; u < row.top.size(); ++u) add(row.top[u]);
      if (row.next >= 0) add(row.next);
      return entropy_of(z, y);
    }
    const double dj = units_(i, row.top[t]) - row.shift, ej = std::exp(dj);
    double z = row.z - ej, y = row.y - dj * ej;
    if (row.next >= 0) {
      const double dn = units_(i, row.next) - row.shift, en = std::exp(dn);
      z += en;
      y += dn * en;
    }
    return entropy_of(z, y);
  }

  Eigen::MatrixXd units_;
  Eigen::Index cutoff_;
  std::vector<bool> removed_;
  std::vector<std::vector<Eigen::Index>> order_;
  std::vector<Row> rows_;
  Eigen::Index remaining_ = 0;
};

Eigen::MatrixXd objective_units(const ActivationMatrix& acts, const std::optional<RefineLabels>& labels) {
  if (!labels) return acts.values;
  return class_mean_activations(acts.values, labels->labels, labels->classes);
}

void check_refine_preconditions(const ActivationMatrix& acts, const RefineOptions& o) {
  require(o.steps >= 0 && o.steps < acts.cols(),
          "refine: steps (" + std::to_string(o.steps) + ") must be < concept count (" + std::to_string(acts.cols()) + ")");
  require(o.cutoff >= 1 && o.cutoff <= acts.cols() - o.steps,
          "refine: cutoff must be in [1, concepts - steps] so every step keeps a full cutoff");
  require(acts.rows() >= 1, "refine: no rows");
}

std::string name_of(const ActivationMatrix& acts, Eigen::Index j) {
  return acts.concept_names.empty() ? std::string() : acts.concept_names[static_cast<std::size_t>(j)];
}

}  // namespace

RefinementTrace refine_entropy_guided(const ActivationMatrix& acts, std::optional<RefineLabels> labels,
                                      const RefineOptions& options) {
  check_refine_preconditions(acts, options);
  RemovalState state(objective_units(acts, labels), options.cutoff);
  RefinementTrace trace;
  trace.strategy = RefineStrategy::entropy_guided;
  trace.objective = labels ? GoodnessMode::task_specific : GoodnessMode::task_agnostic;
  trace.cutoff = options.cutoff;
  trace.seed = options.seed;
  trace.initial_entropy = state.mean_entropy();
  trace.removed_per_trial.emplace_back();

  std::mt19937_64 rng(derive_seed(options.seed, 0x5EED));
  for (Eigen::Index step = 0; step < options.steps; ++step) {
    std::vector<Eigen::Index> candidates;
    for (Eigen::Index j = 0; j < acts.cols(); ++j)
      if (!state.removed(j)) candidates.push_back(j);
    if (options.candidate_limit > 0 && options.candidate_limit < static_cast<Eigen::Index>(candidates.size())) {
      std::shuffle(candidates.begin(), candidates.end(), rng);
      candidates.resize(static_cast<std::size_t>(options.candidate_limit));
      std::sort(candidates.begin(), candidates.end());
    }
    const std::vector<double> objective = state.removal_objectives();
    Eigen::Index best = candidates.front();
    for (Eigen::Index j : candidates)
      if (objective[static_cast<std::size_t>(j)] < objective[static_cast<std::size_t>(best)]) best = j;
    state.remove(best);
    trace.steps.push_back({best, name_of(acts, best), state.mean_entropy()});
    trace.removed_per_trial.front().push_back(best);
  }
  return trace;
}

RefinementTrace refine_random_baseline(const ActivationMatrix& acts, std::optional<RefineLabels> labels,
                                       const RefineOptions& options, std::size_t trials) {
  check_refine_preconditions(acts, options);
  require(trials >= 1, "refine: trials must be >= 1");
  const Eigen::MatrixXd units = objective_units(acts, labels);
  RefinementTrace trace;
  trace.strategy = RefineStrategy::random;
  trace.objective = labels ? GoodnessMode::task_specific : GoodnessMode::task_agnostic;
  trace.cutoff = options.cutoff;
  trace.trials = trials;
  trace.seed = options.seed;
  trace.steps.resize(static_cast<std::size_t>(options.steps));

  for (std::size_t t = 0; t < trials; ++t) {
    RemovalState state(units, options.cutoff);
    if (t == 0) trace.initial_entropy = state.mean_entropy();
    std::mt19937_64 rng(derive_seed(options.seed, t));
    std::vector<Eigen::Index> pool(static_cast<std::size_t>(acts.cols()));
    std::iota(pool.begin(), pool.end(), Eigen::Index{0});
    std::vector<Eigen::Index> removed;
    for (Eigen::Index step = 0; step < options.steps; ++step) {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      const std::size_t at = pick(rng);
      const Eigen::Index j = pool[at];
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(at));
      state.remove(j);
      removed.push_back(j);
      auto& s = trace.steps[static_cast<std::size_t>(step)];
      s.entropy += state.mean_entropy() / static_cast<double>(trials);
      if (t == 0) {
        s.removed_index = j;
        s.removed_name = name_of(acts, j);
      }
    }
    trace.removed_per_trial.push_back(std::move(removed));
  }
  return trace;
}

nlohmann::json RefinementTrace::to_json() const {
  nlohmann::json steps_json = nlohmann::json::array();
  for (std::size_t i = 0; i < steps.size(); ++i)
    steps_json.push_back({{"step", i + 1},
                          {"removed_index", steps[i].removed_index},
                          {"removed_name", steps[i].removed_name},
                          {"entropy", steps[i].entropy}});
  return {{"strategy", strategy == RefineStrategy::entropy_guided ? "entropy-guided" : "random"},
          {"objective", to_string(objective)},
          {"cutoff", cutoff},
          {"trials", trials},
          {"seed", seed},
          {"initial_entropy", initial_entropy},
          {"steps", steps_json},
          {"removed_per_trial", removed_per_trial}};
}

std::string RefinementTrace::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "step,removed_index,removed_name,entropy\n";
  out << 0 << ",,," << initial_entropy << '\n';
  for (std::size_t i = 0; i < steps.size(); ++i)
    out << i + 1 << ',' << steps[i].removed_index << ',' << steps[i].removed_name << ',' << steps[i].entropy << '\n';
  return out.str();
}

}  // namespace conceptlab
