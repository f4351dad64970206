#include "conceptlab/cbm.hpp"

#include <algorithm>
#include <cstring>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "conceptlab/stats.hpp"
#include "conceptlab/synthetic.hpp"

namespace conceptlab {

namespace {

enum Stage : std::uint64_t { kEncoderStage = 11, kTeacherStage = 12, kClassifierStage = 13 };

std::mt19937_64 init_rng(const TrainConfig& cfg, Stage stage) { return std::mt19937_64(derive_seed(cfg.seed, stage)); }
std::mt19937_64 shuffle_rng(const TrainConfig& cfg, Stage stage) {
  return std::mt19937_64(derive_seed(cfg.seed, stage + 100));
}

// Calls fn(batch_rows) for every mini-batch of a fresh permutation.
template <typename Fn>
void for_each_batch(Eigen::Index n, int batch_size, std::mt19937_64& rng, Fn&& fn) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  for (Eigen::Index start = 0; start < n; start += batch_size) {
    const Eigen::Index end = std::min<Eigen::Index>(n, start + batch_size);
    fn(std::span<const Eigen::Index>(order.data() + start, static_cast<std::size_t>(end - start)));
  }
}

std::vector<std::uint32_t> pick(std::span<const std::uint32_t> v, std::span<const Eigen::Index> rows) {
  return gather(v, rows);
}

struct EncoderPass {
  Eigen::MatrixXd pre, hidden, out;
};

EncoderPass encoder_pass(const ConceptEncoder& e, const Eigen::Ref<const Eigen::MatrixXd>& x) {
  EncoderPass p;
  p.pre = dense_forward(e.layer1, x);
  p.hidden = e.nonlinearity == Nonlinearity::relu ? Eigen::MatrixXd(relu(p.pre)) : p.pre;
  p.out = dense_forward(e.layer2, p.hidden);
  return p;
}

}  // namespace

std::string to_string(Nonlinearity n) { return n == Nonlinearity::relu ? "relu" : "none"; }

Nonlinearity parse_nonlinearity(const std::string& s) {
  if (s == "relu") return Nonlinearity::relu;
  if (s == "none") return Nonlinearity::none;
  fail("unknown nonlinearity '" + s + "'");
}

Eigen::MatrixXd ConceptEncoder::forward(const Eigen::Ref<const Eigen::MatrixXd>& features) const {
  return encoder_pass(*this, features).out;
}

void ConceptEncoder::validate() const {
  require(layer2.in() == layer1.out(), "concept encoder: hidden widths disagree");
  require(layer1.bias.size() == layer1.out() && layer2.bias.size() == layer2.out(), "concept encoder: bias shape");
  require(layer1.weight.allFinite() && layer2.weight.allFinite() && layer1.bias.allFinite() &&
              layer2.bias.allFinite(),
          "concept encoder: non-finite parameters");
}

Eigen::MatrixXd TeacherProbe::logits(const Eigen::Ref<const Eigen::MatrixXd>& features) const {
  return dense_forward(linear, features);
}

void TrainConfig::validate() const {
  require(alpha >= 0.0 && beta >= 0.0, "alpha and beta must be >= 0");
  require(temperature > 0.0, "temperature must be > 0");
  require(lambda >= 0.0 && lambda <= 1.0, "lambda must be in [0, 1]");
  require(encoder_epochs >= 0 && teacher_epochs >= 0 && classifier_epochs >= 0, "epochs must be >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(hidden_width >= 0, "hidden_width must be >= 0");
  require(norm_epsilon > 0.0, "norm_epsilon must be > 0");
  encoder_schedule.validate();
  classifier_schedule.validate();
  teacher_schedule.validate();
}

std::string TrainingHistory::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,ce,elastic,kd,total,val_acc,lr\n";
  for (std::size_t e = 0; e < epochs(); ++e) {
    out << e << ',' << ce[e] << ',' << elastic[e] << ',' << kd[e] << ',' << total[e] << ',';
    if (e < val_acc.size()) out << val_acc[e];
    out << ',' << lr[e] << '\n';
  }
  return out.str();
}

StageData stage_data(const EmbeddingBundle& bundle, Split split) {
  StageData d;
  d.rows = bundle.rows_in(split);
  d.features = gather_rows(bundle.features, d.rows).cast<double>();
  d.labels = gather(bundle.labels, d.rows);
  return d;
}

StageData validation_data(const EmbeddingBundle& bundle) {
  StageData d = stage_data(bundle, Split::val);
  if (d.rows.empty()) {
    std::cerr << "warning: bundle has no val split; validating on the test split\n";
    d = stage_data(bundle, Split::test);
  }
  return d;
}

std::vector<std::uint32_t> argmax_rows(const Eigen::Ref<const Eigen::MatrixXd>& logits) {
  std::vector<std::uint32_t> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < logits.cols(); ++j)
      if (logits(i, j) > logits(i, best)) best = j;
    out[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(best);
  }
  return out;
}

double accuracy(std::span<const std::uint32_t> predicted, std::span<const std::uint32_t> truth) {
  require(predicted.size() == truth.size(), "accuracy: length mismatch");
  if (truth.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

Trained<ConceptEncoder> train_concept_encoder(const EmbeddingBundle& bundle, const ActivationMatrix& acts,
                                              const TrainConfig& cfg) {
  cfg.validate();
  require(acts.rows() == bundle.rows(), "train_concept_encoder: activations and bundle row counts differ");
  const StageData train = stage_data(bundle, Split::train);
  require(!train.rows.empty(), "train_concept_encoder: empty train split");
  const Eigen::MatrixXd targets = gather_rows(acts.values, train.rows);
  const Eigen::Index d_b = bundle.features.cols();
  const Eigen::Index hidden = cfg.hidden_width > 0 ? cfg.hidden_width : d_b;

  auto rng = init_rng(cfg, kEncoderStage);
  Trained<ConceptEncoder> t;
  t.model.layer1 = DenseParams<double>::init_uniform(hidden, d_b, rng);
  t.model.layer2 = DenseParams<double>::init_uniform(acts.cols(), hidden, rng);
  t.model.nonlinearity = cfg.encoder_nonlinearity;
  t.optimizer = {DenseAdam<double>::for_params(t.model.layer1), DenseAdam<double>::for_params(t.model.layer2)};

  auto shuffler = shuffle_rng(cfg, kEncoderStage);
  ConceptEncoder& enc = t.model;
  for (int epoch = 0; epoch < cfg.encoder_epochs; ++epoch) {
    const double lr = cosine_lr(cfg.encoder_schedule, epoch);
    for_each_batch(train.features.rows(), cfg.batch_size, shuffler, [&](std::span<const Eigen::Index> rows) {
      const Eigen::MatrixXd x = gather_rows(train.features, rows);
      const EncoderPass pass = encoder_pass(enc, x);
      const auto loss = mse_loss(pass.out, gather_rows(targets, rows));
      const DenseGrads<double> g2 = dense_backward(enc.layer2, pass.hidden, loss.grad);
      const Eigen::MatrixXd grad_hidden =
          enc.nonlinearity == Nonlinearity::relu ? Eigen::MatrixXd(relu_backward(pass.pre, g2.input)) : g2.input;
      const DenseGrads<double> g1 = dense_backward(enc.layer1, x, grad_hidden);
      t.optimizer[0].apply(enc.layer1, g1, lr);
      t.optimizer[1].apply(enc.layer2, g2, lr);
    });
    const double mse = mse_loss(enc.forward(train.features), targets).value;
    t.history.ce.push_back(mse);
    t.history.elastic.push_back(0.0);
    t.history.kd.push_back(0.0);
    t.history.total.push_back(mse);
    t.history.lr.push_back(lr);
  }
  return t;
}

Trained<TeacherProbe> train_teacher(const EmbeddingBundle& bundle, const TrainConfig& cfg) {
  cfg.validate();
  const StageData train = stage_data(bundle, Split::train);
  require(!train.rows.empty(), "train_teacher: empty train split");
  const StageData val = validation_data(bundle);
  auto rng = init_rng(cfg, kTeacherStage);
  Trained<TeacherProbe> t;
  t.model.linear = DenseParams<double>::init_uniform(bundle.class_count(), bundle.features.cols(), rng);
  t.optimizer = {DenseAdam<double>::for_params(t.model.linear)};
  auto shuffler = shuffle_rng(cfg, kTeacherStage);
  for (int epoch = 0; epoch < cfg.teacher_epochs; ++epoch) {
    const double lr = cosine_lr(cfg.teacher_schedule, epoch);
    for_each_batch(train.features.rows(), cfg.batch_size, shuffler, [&](std::span<const Eigen::Index> rows) {
      const Eigen::MatrixXd x = gather_rows(train.features, rows);
      const auto loss = ce_loss(t.model.logits(x), pick(train.labels, rows));
      t.optimizer[0].apply(t.model.linear, dense_backward(t.model.linear, x, loss.grad), lr);
    });
    const double ce = ce_loss(t.model.logits(train.features), train.labels).value;
    t.history.ce.push_back(ce);
    t.history.elastic.push_back(0.0);
    t.history.kd.push_back(0.0);
    t.history.total.push_back(ce);
    t.history.val_acc.push_back(accuracy(argmax_rows(t.model.logits(val.features)), val.labels));
    t.history.lr.push_back(lr);
  }
  return t;
}

ClassifierObjective classifier_objective(const FinalClassifier& clf, const Eigen::Ref<const Eigen::MatrixXd>& concepts,
                                         const Eigen::MatrixXd* teacher_logits, std::span<const std::uint32_t> labels,
                                         const TrainConfig& cfg, double n_train) {
  require(n_train > 0.0, "classifier objective: n_train must be > 0");
  const Eigen::MatrixXd logits = dense_forward(clf.linear, concepts);
  const auto ce = ce_loss(logits, labels);
  const auto el = elastic_penalty(clf.linear.weight, cfg.lambda);
  ClassifierObjective o;
  o.ce = ce.value;
  o.elastic = el.value / n_train;
  Eigen::MatrixXd grad_logits = cfg.alpha * ce.grad;
  if (teacher_logits != nullptr) {
    const auto kd = kd_loss(logits, *teacher_logits, cfg.temperature);
    o.kd = kd.value;
    if (cfg.beta != 0.0) grad_logits += cfg.beta * kd.grad;
  }
  o.total = cfg.alpha * (o.ce + o.elastic) + cfg.beta * o.kd;
  o.grads = dense_backward(clf.linear, concepts, grad_logits);
  o.grads.weight += (cfg.alpha / n_train) * el.grad;
  return o;
}

Trained<FinalClassifier> train_classifier(const ConceptEncoder& encoder, const TeacherProbe* teacher,
                                          const EmbeddingBundle& bundle, const TrainConfig& cfg) {
  cfg.validate();
  encoder.validate();
  require(teacher != nullptr || cfg.beta == 0.0, "train_classifier: beta > 0 needs a teacher");
  require(encoder.input_dim() == bundle.features.cols(), "train_classifier: encoder input width mismatch");
  if (teacher != nullptr)
    require(teacher->linear.in() == bundle.features.cols() && teacher->linear.out() == bundle.class_count(),
            "train_classifier: teacher shape mismatch");
  const StageData train = stage_data(bundle, Split::train);
  require(!train.rows.empty(), "train_classifier: empty train split");
  const StageData val = validation_data(bundle);
  const Eigen::MatrixXd concepts = encoder.forward(train.features);
  const Eigen::MatrixXd val_concepts = encoder.forward(val.features);
  Eigen::MatrixXd teacher_logits;
  if (teacher != nullptr) teacher_logits = teacher->logits(train.features);
  const double n_train = static_cast<double>(train.rows.size());

  auto rng = init_rng(cfg, kClassifierStage);
  Trained<FinalClassifier> t;
  t.model.linear = DenseParams<double>::init_uniform(bundle.class_count(), encoder.concept_count(), rng);
  t.optimizer = {DenseAdam<double>::for_params(t.model.linear)};
  auto shuffler = shuffle_rng(cfg, kClassifierStage);
  for (int epoch = 0; epoch < cfg.classifier_epochs; ++epoch) {
    const double lr = cosine_lr(cfg.classifier_schedule, epoch);
    for_each_batch(train.features.rows(), cfg.batch_size, shuffler, [&](std::span<const Eigen::Index> rows) {
      const Eigen::MatrixXd c = gather_rows(concepts, rows);
      Eigen::MatrixXd z;
      if (teacher != nullptr) z = gather_rows(teacher_logits, rows);
      const auto o = classifier_objective(t.model, c, teacher != nullptr ? &z : nullptr, pick(train.labels, rows),
                                          cfg, n_train);
      t.optimizer[0].apply(t.model.linear, o.grads, lr);
    });
    const auto o = classifier_objective(t.model, concepts, teacher != nullptr ? &teacher_logits : nullptr,
                                        train.labels, cfg, n_train);
    t.history.ce.push_back(o.ce);
    t.history.elastic.push_back(o.elastic);
    t.history.kd.push_back(o.kd);
    t.history.total.push_back(o.total);
    t.history.val_acc.push_back(
        accuracy(argmax_rows(dense_forward(t.model.linear, val_concepts)), val.labels));
    t.history.lr.push_back(lr);
  }
  return t;
}

Prediction predict(const ConceptEncoder& encoder, const FinalClassifier& classifier,
                   const Eigen::Ref<const Eigen::MatrixXd>& features) {
  require(encoder.input_dim() == features.cols(), "predict: feature width mismatch");
  require(classifier.linear.in() == encoder.concept_count(), "predict: classifier expects " +
                                                                  std::to_string(classifier.linear.in()) +
                                                                  " concepts, encoder produces " +
                                                                  std::to_string(encoder.concept_count()));
  Prediction p;
  p.logits = dense_forward(classifier.linear, encoder.forward(features));
  p.labels = argmax_rows(p.logits);
  return p;
}

Explanation explain(const ConceptEncoder& encoder, const FinalClassifier& classifier,
                    const Eigen::Ref<const Eigen::RowVectorXd>& features, Eigen::Index k,
                    std::span<const std::string> concept_names) {
  const Eigen::Index K = encoder.concept_count();
  require(k >= 0 && k <= K, "explain: k (" + std::to_string(k) + ") exceeds concept count (" + std::to_string(K) + ")");
  const Eigen::MatrixXd x = features;
  const Eigen::RowVectorXd c = encoder.forward(x).row(0);
  const Prediction p = predict(encoder, classifier, x);
  Explanation e;
  e.predicted_class = p.labels.front();
  const Eigen::RowVectorXd contrib = classifier.linear.weight.row(e.predicted_class).cwiseProduct(c);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(K));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return contrib(a) > contrib(b) || (contrib(a) == contrib(b) && a < b);
  });
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::Index j = order[static_cast<std::size_t>(i)];
    e.top.push_back({j, concept_names.empty() ? std::string() : concept_names[static_cast<std::size_t>(j)], contrib(j)});
  }
  return e;
}

AuditReport linearity_audit(const ConceptEncoder& encoder, const FinalClassifier& classifier,
                            const Eigen::Ref<const Eigen::MatrixXd>& probe_features) {
  const auto& w1 = encoder.layer1;
  const auto& w2 = encoder.layer2;
  const auto& wf = classifier.linear;
  AuditReport r;
  r.nonlinearity = encoder.nonlinearity;
  r.composed_weight = wf.weight * (w2.weight * w1.weight);
  r.composed_bias = wf.weight * (w2.weight * w1.bias + w2.bias) + wf.bias;
  r.probes = probe_features.rows();
  if (r.probes == 0) return r;
  const Prediction layered = predict(encoder, classifier, probe_features);
  Eigen::MatrixXd composed = probe_features * r.composed_weight.transpose();
  composed.rowwise() += r.composed_bias.transpose();
  r.max_deviation = (layered.logits - composed).cwiseAbs().maxCoeff();
  r.agreement = accuracy(layered.labels, argmax_rows(composed));
  return r;
}

nlohmann::json AuditReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < composed_weight.rows(); ++r) {
    const Eigen::RowVectorXd row = composed_weight.row(r);
    rows.push_back(std::vector<double>(row.data(), row.data() + row.size()));
  }
  return {{"nonlinearity", to_string(nonlinearity)},
          {"max_deviation", max_deviation},
          {"agreement", agreement},
          {"probes", probes},
          {"composed_shape", {composed_weight.rows(), composed_weight.cols()}},
          {"composed_weight", rows},
          {"composed_bias", std::vector<double>(composed_bias.data(), composed_bias.data() + composed_bias.size())}};
}

double test_accuracy(const ConceptEncoder& encoder, const FinalClassifier& classifier, const EmbeddingBundle& bundle) {
  const StageData test = stage_data(bundle, Split::test);
  return accuracy(predict(encoder, classifier, test.features).labels, test.labels);
}

double test_accuracy(const TeacherProbe& teacher, const EmbeddingBundle& bundle) {
  const StageData test = stage_data(bundle, Split::test);
  return accuracy(argmax_rows(teacher.logits(test.features)), test.labels);
}

const ConditionSummary& SensitivityReport::find(const std::string& architecture, const std::string& concept_set) const {
  for (const auto& c : conditions)
    if (c.architecture == architecture && c.concept_set == concept_set) return c;
  fail("no condition " + architecture + "/" + concept_set);
}

nlohmann::json SensitivityReport::to_json() const {
  nlohmann::json conds = nlohmann::json::array();
  for (const auto& c : conditions)
    conds.push_back({{"architecture", c.architecture},
                     {"concept_set", c.concept_set},
                     {"accuracies", c.accuracies},
                     {"mean", c.mean},
                     {"std", c.stddev}});
  return {{"runs", runs},
          {"conditions", conds},
          {"oracle", {{"accuracies", oracle_accuracies},
                      {"mean", mean(oracle_accuracies)},
                      {"std", sample_stddev(oracle_accuracies)}}}};
}

SensitivityReport concept_sensitivity_test(const EmbeddingBundle& relevant, const EmbeddingBundle& irrelevant,
                                           const TrainConfig& cfg, int runs) {
  require(runs >= 1, "sensitivity: runs must be >= 1");
  require(relevant.features.rows() == irrelevant.features.rows() &&
              relevant.features.cols() == irrelevant.features.cols() &&
              std::memcmp(relevant.features.data(), irrelevant.features.data(),
                          sizeof(float) * static_cast<std::size_t>(relevant.features.size())) == 0 &&
              relevant.labels == irrelevant.labels && relevant.split == irrelevant.split &&
              relevant.class_names.size() == irrelevant.class_names.size(),
          "sensitivity: bundle mismatch on features/labels");
  const ActivationMatrix acts_rel = compute_activations(relevant, cfg.norm_epsilon, cfg.norm_mode);
  const ActivationMatrix acts_irr = compute_activations(irrelevant, cfg.norm_epsilon, cfg.norm_mode);

  SensitivityReport report;
  report.runs = runs;
  for (const char* arch : {"non-linear", "linear"})
    for (const char* set : {"relevant", "irrelevant"}) report.conditions.push_back({arch, set, {}, 0.0, 0.0});

  for (int r = 0; r < runs; ++r) {
    TrainConfig run_cfg = cfg;
    run_cfg.seed = cfg.seed + static_cast<std::uint64_t>(r);
    const auto teacher = train_teacher(relevant, run_cfg);
    report.oracle_accuracies.push_back(test_accuracy(teacher.model, relevant));
    for (auto& cond : report.conditions) {
      TrainConfig c = run_cfg;
      c.encoder_nonlinearity = cond.architecture == "linear" ? Nonlinearity::none : Nonlinearity::relu;
      const bool rel = cond.concept_set == "relevant";
      const EmbeddingBundle& bundle = rel ? relevant : irrelevant;
      const auto enc = train_concept_encoder(bundle, rel ? acts_rel : acts_irr, c);
      const auto clf = train_classifier(enc.model, &teacher.model, bundle, c);
      cond.accuracies.push_back(test_accuracy(enc.model, clf.model, bundle));
    }
  }
  for (auto& cond : report.conditions) {
    cond.mean = mean(cond.accuracies);
    cond.stddev = sample_stddev(cond.accuracies);
  }
  return report;
}

nlohmann::json DistillationReport::to_json() const {
  auto block = [](const std::vector<double>& v) {
    return nlohmann::json{{"accuracies", v}, {"mean", mean(v)}, {"std", sample_stddev(v)}};
  };
  const PairedTest t = paired_t_test(distilled, vanilla);
  return {{"oracle", block(oracle)},
          {"distilled", block(distilled)},
          {"vanilla", block(vanilla)},
          {"distilled_minus_vanilla", {{"mean", t.mean_difference}, {"t", t.t_statistic}, {"df", t.df}}}};
}

DistillationReport distillation_comparison(const EmbeddingBundle& bundle, const TrainConfig& cfg, int runs) {
  require(runs >= 1, "distillation: runs must be >= 1");
  const ActivationMatrix acts = compute_activations(bundle, cfg.norm_epsilon, cfg.norm_mode);
  DistillationReport report;
  for (int r = 0; r < runs; ++r) {
    TrainConfig c = cfg;
    c.seed = cfg.seed + static_cast<std::uint64_t>(r);
    const auto teacher = train_teacher(bundle, c);
    const auto enc = train_concept_encoder(bundle, acts, c);
    const auto distilled = train_classifier(enc.model, &teacher.model, bundle, c);
    TrainConfig vanilla_cfg = c;
    vanilla_cfg.beta = 0.0;
    const auto vanilla = train_classifier(enc.model, nullptr, bundle, vanilla_cfg);
    report.oracle.push_back(test_accuracy(teacher.model, bundle));
    report.distilled.push_back(test_accuracy(enc.model, distilled.model, bundle));
    report.vanilla.push_back(test_accuracy(enc.model, vanilla.model, bundle));
  }
  return report;
}

}  // namespace conceptlab
