#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "conceptlab/activation.hpp"
#include "conceptlab/embedding_store.hpp"
#include "conceptlab/nn_core.hpp"

namespace conceptlab {

enum class Nonlinearity { relu, none };

std::string to_string(Nonlinearity n);
Nonlinearity parse_nonlinearity(const std::string& s);

// Two-layer perceptron from backbone features to predicted concept
// activations. Nonlinearity::none is the linear-CBM ablation.
struct ConceptEncoder {
  DenseParams<double> layer1;  // d_b -> hidden
  DenseParams<double> layer2;  // hidden -> K
  Nonlinearity nonlinearity = Nonlinearity::relu;

  Eigen::Index input_dim() const { return layer1.in(); }
  Eigen::Index hidden_dim() const { return layer1.out(); }
  Eigen::Index concept_count() const { return layer2.out(); }

  Eigen::MatrixXd forward(const Eigen::Ref<const Eigen::MatrixXd>& features) const;
  void validate() const;
};

struct TeacherProbe {
  DenseParams<double> linear;  // d_b -> S
  Eigen::MatrixXd logits(const Eigen::Ref<const Eigen::MatrixXd>& features) const;
};

struct FinalClassifier {
  DenseParams<double> linear;  // K -> S
};

struct TrainConfig {
  double alpha = 1.0;
  double beta = 1.0;
  double temperature = 2.0;
  double lambda = 0.5;
  LrSchedule encoder_schedule{ScheduleKind::cosine, 1e-3, 1e-4, 20};
  LrSchedule classifier_schedule{ScheduleKind::constant, 1e-4, 1e-4, 20};
  LrSchedule teacher_schedule{ScheduleKind::constant, 1e-3, 1e-4, 20};
  int encoder_epochs = 50;
  int teacher_epochs = 50;
  int classifier_epochs = 50;
  int batch_size = 256;
  Eigen::Index hidden_width = 0;  // 0: same as the feature width
  std::uint64_t seed = 0;
  Nonlinearity encoder_nonlinearity = Nonlinearity::relu;
  double norm_epsilon = 1e-6;
  NormMode norm_mode = NormMode::per_concept;

  void validate() const;
};

// One entry per epoch, evaluated on the full training split after the
// epoch. `ce` holds the stage's main loss (MSE for the encoder); `elastic`
// is the penalty as it enters the objective (scaled by 1/N_train).
struct TrainingHistory {
  std::vector<double> ce, elastic, kd, total, val_acc, lr;

  std::size_t epochs() const { return total.size(); }
  std::string to_csv() const;
};

template <typename Model>
struct Trained {
  Model model;
  TrainingHistory history;
  std::vector<DenseAdam<double>> optimizer;
};

struct StageData {
  Eigen::MatrixXd features;
  std::vector<std::uint32_t> labels;
  std::vector<Eigen::Index> rows;
};

StageData stage_data(const EmbeddingBundle& bundle, Split split);
// Validation rows: the val split, or the test split when val is empty.
StageData validation_data(const EmbeddingBundle& bundle);

Trained<ConceptEncoder> train_concept_encoder(const EmbeddingBundle& bundle, const ActivationMatrix& acts,
                                              const TrainConfig& cfg);

Trained<TeacherProbe> train_teacher(const EmbeddingBundle& bundle, const TrainConfig& cfg);

// Terms of the classifier objective on one batch of concept activations.
struct ClassifierObjective {
  double ce = 0, elastic = 0, kd = 0, total = 0;
  DenseGrads<double> grads;
};

// alpha * [CE + (lambda |W|_1 + (1 - lambda) |W|_F^2) / n_train] + beta * KD.
// CE and KD are batch means; the penalty is divided by n_train so the
// objective is the summed loss over the training set divided by n_train.
// teacher_logits may be null, in which case the KD term is neither
// evaluated nor differentiated.
ClassifierObjective classifier_objective(const FinalClassifier& clf, const Eigen::Ref<const Eigen::MatrixXd>& concepts,
                                         const Eigen::MatrixXd* teacher_logits, std::span<const std::uint32_t> labels,
                                         const TrainConfig& cfg, double n_train);

// Encoder and teacher are read-only. With teacher == nullptr, beta must be 0.
Trained<FinalClassifier> train_classifier(const ConceptEncoder& encoder, const TeacherProbe* teacher,
                                          const EmbeddingBundle& bundle, const TrainConfig& cfg);

struct Prediction {
  Eigen::MatrixXd logits;
  std::vector<std::uint32_t> labels;
};

// Argmax per row, ties to the lowest index.
std::vector<std::uint32_t> argmax_rows(const Eigen::Ref<const Eigen::MatrixXd>& logits);
double accuracy(std::span<const std::uint32_t> predicted, std::span<const std::uint32_t> truth);

Prediction predict(const ConceptEncoder& encoder, const FinalClassifier& classifier,
                   const Eigen::Ref<const Eigen::MatrixXd>& features);

struct Contribution {
  Eigen::Index concept_index = 0;
  std::string name;
  double value = 0.0;
};

struct Explanation {
  std::uint32_t predicted_class = 0;
  std::vector<Contribution> top;
};

// Contribution of concept j to the predicted class s is W_f[s, j] * c_hat_j.
Explanation explain(const ConceptEncoder& encoder, const FinalClassifier& classifier,
                    const Eigen::Ref<const Eigen::RowVectorXd>& features, Eigen::Index k,
                    std::span<const std::string> concept_names = {});

struct AuditReport {
  Eigen::MatrixXd composed_weight;  // S x d_b
  Eigen::VectorXd composed_bias;
  Nonlinearity nonlinearity = Nonlinearity::relu;
  double max_deviation = 0.0;
  double agreement = 0.0;
  Eigen::Index probes = 0;

  nlohmann::json to_json() const;
};

AuditReport linearity_audit(const ConceptEncoder& encoder, const FinalClassifier& classifier,
                            const Eigen::Ref<const Eigen::MatrixXd>& probe_features);

// Teacher, encoder and classifier trained in sequence; accuracies on the test split.
struct PipelineResult {
  ConceptEncoder encoder;
  FinalClassifier classifier;
  TeacherProbe teacher;
  double test_accuracy = 0.0;
  double teacher_accuracy = 0.0;
};

double test_accuracy(const ConceptEncoder& encoder, const FinalClassifier& classifier, const EmbeddingBundle& bundle);
double test_accuracy(const TeacherProbe& teacher, const EmbeddingBundle& bundle);

struct ConditionSummary {
  std::string architecture;  // "non-linear" or "linear"
  std::string concept_set;   // "relevant" or "irrelevant"
  std::vector<double> accuracies;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
};

struct SensitivityReport {
  std::vector<ConditionSummary> conditions;
  std::vector<double> oracle_accuracies;
  int runs = 0;

  const ConditionSummary& find(const std::string& architecture, const std::string& concept_set) const;
  nlohmann::json to_json() const;
};

// Runs seeds 0..runs-1 (offset by cfg.seed) over {non-linear, linear} x
// {relevant, irrelevant}. Bundles must share features, labels and splits.
SensitivityReport concept_sensitivity_test(const EmbeddingBundle& relevant, const EmbeddingBundle& irrelevant,
                                           const TrainConfig& cfg, int runs);

struct DistillationReport {
  std::vector<double> oracle, distilled, vanilla;
  nlohmann::json to_json() const;
};

// Paired runs: the same encoder and teacher per seed, classifier trained
// with the configured beta (distilled) and with beta = 0 (vanilla).
DistillationReport distillation_comparison(const EmbeddingBundle& bundle, const TrainConfig& cfg, int runs);

}  // namespace conceptlab
