#include "conceptlab/checkpoint.hpp"

#include "conceptlab/error.hpp"

namespace conceptlab {

namespace {

void add_dense(Container& c, const std::string& prefix, const DenseParams<double>& p, const DenseAdam<double>* adam) {
  c.add_matrix(prefix + ".weight", p.weight);
  c.add_matrix(prefix + ".bias", p.bias);
  if (adam == nullptr) return;
  c.add_matrix(prefix + ".weight.adam_m", adam->weight.m);
  c.add_matrix(prefix + ".weight.adam_v", adam->weight.v);
  c.add_matrix(prefix + ".bias.adam_m", adam->bias.m);
  c.add_matrix(prefix + ".bias.adam_v", adam->bias.v);
  c.meta["adam_step"][prefix] = adam->weight.step;
}

DenseParams<double> read_dense(const Container& c, const std::string& prefix) {
  DenseParams<double> p;
  const NamedArray& w = c.at(prefix + ".weight");
  p.weight = c.matrix(prefix + ".weight");
  // A 1-D weight array is an out x 1 matrix.
  if (w.shape.size() == 1) p.weight.resize(static_cast<Eigen::Index>(w.shape[0]), 1);
  p.bias = c.vector(prefix + ".bias");
  require(p.bias.size() == p.weight.rows(), "checkpoint: '" + prefix + "' bias does not match weight rows");
  require(p.weight.allFinite() && p.bias.allFinite(), "checkpoint: non-finite parameters in '" + prefix + "'");
  return p;
}

const DenseAdam<double>* at_or_null(std::span<const DenseAdam<double>> v, std::size_t i) {
  return i < v.size() ? &v[i] : nullptr;
}

void expect_kind(const Container& c, const char* kind) {
  require(c.kind == kind, "expected a " + std::string(kind) + " checkpoint, found '" + c.kind + "'");
}

}  // namespace

Container encoder_container(const ConceptEncoder& encoder, std::span<const DenseAdam<double>> optimizer,
                            std::span<const std::string> concept_names) {
  Container c;
  c.kind = "concept_encoder";
  c.meta["nonlinearity"] = to_string(encoder.nonlinearity);
  add_dense(c, "layer1", encoder.layer1, at_or_null(optimizer, 0));
  add_dense(c, "layer2", encoder.layer2, at_or_null(optimizer, 1));
  if (!concept_names.empty())
    c.add("concept_names", {concept_names.size()},
          std::vector<std::string>(concept_names.begin(), concept_names.end()));
  return c;
}

Container teacher_container(const TeacherProbe& teacher, std::span<const DenseAdam<double>> optimizer) {
  Container c;
  c.kind = "teacher_probe";
  add_dense(c, "linear", teacher.linear, at_or_null(optimizer, 0));
  return c;
}

Container classifier_container(const FinalClassifier& classifier, std::span<const DenseAdam<double>> optimizer) {
  Container c;
  c.kind = "final_classifier";
  add_dense(c, "linear", classifier.linear, at_or_null(optimizer, 0));
  return c;
}

Container history_container(const TrainingHistory& h, const std::string& stage) {
  Container c;
  c.kind = "training_history";
  c.meta["stage"] = stage;
  auto add = [&](const char* name, const std::vector<double>& v) { c.add(name, {v.size()}, v); };
  add("ce", h.ce);
  add("elastic", h.elastic);
  add("kd", h.kd);
  add("total", h.total);
  add("val_acc", h.val_acc);
  add("lr", h.lr);
  return c;
}

ConceptEncoder encoder_from_container(const Container& c) {
  expect_kind(c, "concept_encoder");
  ConceptEncoder e;
  e.layer1 = read_dense(c, "layer1");
  e.layer2 = read_dense(c, "layer2");
  e.nonlinearity = parse_nonlinearity(c.meta.value("nonlinearity", "relu"));
  e.validate();
  return e;
}

TeacherProbe teacher_from_container(const Container& c) {
  expect_kind(c, "teacher_probe");
  return {read_dense(c, "linear")};
}

FinalClassifier classifier_from_container(const Container& c) {
  expect_kind(c, "final_classifier");
  return {read_dense(c, "linear")};
}

TrainingHistory history_from_container(const Container& c) {
  expect_kind(c, "training_history");
  auto get = [&](const char* name) {
    const auto& a = c.at(name);
    require(a.dtype() == DType::f64, std::string("history array '") + name + "' must be f64");
    return std::get<std::vector<double>>(a.data);
  };
  return {get("ce"), get("elastic"), get("kd"), get("total"), get("val_acc"), get("lr")};
}

ConceptEncoder load_encoder(const std::filesystem::path& path) { return encoder_from_container(read_container(path)); }
TeacherProbe load_teacher(const std::filesystem::path& path) { return teacher_from_container(read_container(path)); }
FinalClassifier load_classifier(const std::filesystem::path& path) {
  return classifier_from_container(read_container(path));
}

}  // namespace conceptlab
