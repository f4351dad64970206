#include "conceptlab/fixtures.hpp"

namespace conceptlab::fixtures {

SyntheticSpec goodness_spec(std::uint64_t seed) {
  SyntheticSpec s;
  s.rows = 1000;
  s.concepts = 600;
  s.classes = 20;
  s.feature_dim = 48;
  s.vlm_dim = 32;
  s.separation = 3.0;
  s.relevant_fraction = 0.5;
  s.noise_scale = 1.5;
  s.seed = seed;
  return s;
}

SyntheticSpec refinement_spec(std::uint64_t seed) {
  SyntheticSpec s = goodness_spec(seed);
  s.rows = 400;
  s.concepts = 240;
  s.relevant_fraction = 0.75;
  return s;
}

RefineOptions refinement_options(std::uint64_t seed) {
  RefineOptions o;
  o.cutoff = 100;
  o.steps = 70;
  o.seed = seed;
  return o;
}

SyntheticSpec sensitivity_spec(bool relevant, std::uint64_t seed) {
  SyntheticSpec s;
  s.rows = 1000;
  s.concepts = 200;
  s.classes = 10;
  s.feature_dim = 48;
  s.vlm_dim = 32;
  s.separation = 1.0;
  s.noise_scale = 1.0;
  s.relevant_fraction = relevant ? 1.0 : 0.0;
  s.orthogonal_random = true;
  s.seed = seed;
  return s;
}

TrainConfig sensitivity_config() {
  TrainConfig c;
  c.encoder_epochs = 40;
  c.teacher_epochs = 60;
  c.classifier_epochs = 60;
  c.batch_size = 64;
  c.encoder_schedule = {ScheduleKind::cosine, 1e-3, 1e-4, 20};
  c.classifier_schedule = {ScheduleKind::constant, 1e-3, 1e-4, 20};
  c.teacher_schedule = {ScheduleKind::constant, 1e-2, 1e-4, 20};
  return c;
}

SyntheticSpec distillation_spec(std::uint64_t seed) {
  SyntheticSpec s = sensitivity_spec(true, seed);
  s.rows = 400;
  s.concepts = 400;
  return s;
}

TrainConfig distillation_config() {
  TrainConfig c = sensitivity_config();
  c.classifier_epochs = 200;
  c.temperature = 4.0;
  return c;
}

std::optional<SyntheticSpec> preset(const std::string& name, std::uint64_t seed) {
  if (name == "standard") return goodness_spec(seed);
  if (name == "mixed") return refinement_spec(seed);
  if (name == "relevant") return sensitivity_spec(true, seed);
  if (name == "irrelevant") return sensitivity_spec(false, seed);
  if (name == "lossy") return distillation_spec(seed);
  return std::nullopt;
}

std::vector<std::string> preset_names() { return {"standard", "mixed", "relevant", "irrelevant", "lossy"}; }

}  // namespace conceptlab::fixtures
