#include "conceptlab/config.hpp"

#include <fstream>
#include <functional>
#include <map>

#include "conceptlab/error.hpp"

namespace conceptlab {

namespace {

double as_number(const nlohmann::json& v, const std::string& key) {
  require(v.is_number(), "config key '" + key + "': expected a number");
  return v.get<double>();
}

std::int64_t as_integer(const nlohmann::json& v, const std::string& key) {
  require(v.is_number_integer(), "config key '" + key + "': expected an integer");
  return v.get<std::int64_t>();
}

std::uint64_t as_unsigned(const nlohmann::json& v, const std::string& key) {
  require((v.is_number_integer() && v.get<std::int64_t>() >= 0) || v.is_number_unsigned(),
          "config key '" + key + "': expected a non-negative integer");
  return v.get<std::uint64_t>();
}

bool as_bool(const nlohmann::json& v, const std::string& key) {
  require(v.is_boolean(), "config key '" + key + "': expected a boolean");
  return v.get<bool>();
}

std::string as_string(const nlohmann::json& v, const std::string& key) {
  require(v.is_string(), "config key '" + key + "': expected a string");
  return v.get<std::string>();
}

template <typename Fn>
auto keyed(const std::string& key, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    const std::string what = e.what();
    if (what.find("config key") == 0) throw;
    fail("config key '" + key + "': " + what);
  }
}

using Setter = std::function<void(const nlohmann::json&, const std::string&)>;

void apply(const nlohmann::json& doc, const std::map<std::string, Setter>& setters, const std::string& scope) {
  require(doc.is_object(), scope.empty() ? "config must be a JSON object" : "config key '" + scope + "': expected an object");
  for (const auto& [key, value] : doc.items()) {
    const std::string full = scope.empty() ? key : scope + "." + key;
    const auto it = setters.find(key);
    require(it != setters.end(), "unknown config key '" + full + "'");
    it->second(value, full);
  }
}

ScheduleKind kind_of(bool cosine) { return cosine ? ScheduleKind::cosine : ScheduleKind::constant; }

}  // namespace

RunConfig config_from_json(const nlohmann::json& doc) {
  RunConfig c;
  TrainConfig& t = c.train;
  SyntheticSpec& s = c.synthetic;
  const std::map<std::string, Setter> synthetic_setters = {
      {"rows", [&](auto& v, auto& k) { s.rows = as_integer(v, k); }},
      {"concepts", [&](auto& v, auto& k) { s.concepts = as_integer(v, k); }},
      {"classes", [&](auto& v, auto& k) { s.classes = as_integer(v, k); }},
      {"feature_dim", [&](auto& v, auto& k) { s.feature_dim = as_integer(v, k); }},
      {"vlm_dim", [&](auto& v, auto& k) { s.vlm_dim = as_integer(v, k); }},
      {"separation", [&](auto& v, auto& k) { s.separation = as_number(v, k); }},
      {"relevant_fraction", [&](auto& v, auto& k) { s.relevant_fraction = as_number(v, k); }},
      {"noise_scale", [&](auto& v, auto& k) { s.noise_scale = as_number(v, k); }},
      {"seed", [&](auto& v, auto& k) { s.seed = as_unsigned(v, k); }},
      {"orthogonal_random", [&](auto& v, auto& k) { s.orthogonal_random = as_bool(v, k); }},
      {"private_fraction", [&](auto& v, auto& k) { s.private_fraction = as_number(v, k); }},
      {"random_coherence", [&](auto& v, auto& k) { s.random_coherence = as_number(v, k); }},
  };
  const std::map<std::string, Setter> setters = {
      {"alpha", [&](auto& v, auto& k) { t.alpha = as_number(v, k); }},
      {"beta", [&](auto& v, auto& k) { t.beta = as_number(v, k); }},
      {"temperature", [&](auto& v, auto& k) { t.temperature = as_number(v, k); }},
      {"lambda", [&](auto& v, auto& k) { t.lambda = as_number(v, k); }},
      {"encoder_lr", [&](auto& v, auto& k) { t.encoder_schedule.base_lr = as_number(v, k); }},
      {"classifier_lr", [&](auto& v, auto& k) { t.classifier_schedule.base_lr = as_number(v, k); }},
      {"teacher_lr", [&](auto& v, auto& k) { t.teacher_schedule.base_lr = as_number(v, k); }},
      {"encoder_scheduler", [&](auto& v, auto& k) { t.encoder_schedule.kind = kind_of(as_bool(v, k)); }},
      {"classifier_scheduler", [&](auto& v, auto& k) { t.classifier_schedule.kind = kind_of(as_bool(v, k)); }},
      {"teacher_scheduler", [&](auto& v, auto& k) { t.teacher_schedule.kind = kind_of(as_bool(v, k)); }},
      {"min_lr",
       [&](auto& v, auto& k) {
         const double m = as_number(v, k);
         t.encoder_schedule.min_lr = t.classifier_schedule.min_lr = t.teacher_schedule.min_lr = m;
       }},
      {"cycle_epochs",
       [&](auto& v, auto& k) {
         const int n = static_cast<int>(as_integer(v, k));
         t.encoder_schedule.cycle_epochs = t.classifier_schedule.cycle_epochs = t.teacher_schedule.cycle_epochs = n;
       }},
      {"encoder_epochs", [&](auto& v, auto& k) { t.encoder_epochs = static_cast<int>(as_integer(v, k)); }},
      {"teacher_epochs", [&](auto& v, auto& k) { t.teacher_epochs = static_cast<int>(as_integer(v, k)); }},
      {"classifier_epochs", [&](auto& v, auto& k) { t.classifier_epochs = static_cast<int>(as_integer(v, k)); }},
      {"batch_size", [&](auto& v, auto& k) { t.batch_size = static_cast<int>(as_integer(v, k)); }},
      {"hidden_width", [&](auto& v, auto& k) { t.hidden_width = as_integer(v, k); }},
      {"seed", [&](auto& v, auto& k) { t.seed = as_unsigned(v, k); }},
      {"encoder_nonlinearity",
       [&](auto& v, auto& k) { t.encoder_nonlinearity = keyed(k, [&] { return parse_nonlinearity(as_string(v, k)); }); }},
      {"norm_epsilon", [&](auto& v, auto& k) { t.norm_epsilon = as_number(v, k); }},
      {"norm_mode",
       [&](auto& v, auto& k) {
         const std::string m = as_string(v, k);
         require(m == "per_concept" || m == "scalar", "config key '" + k + "': expected per_concept or scalar");
         t.norm_mode = m == "scalar" ? NormMode::scalar : NormMode::per_concept;
       }},
      {"cutoff", [&](auto& v, auto& k) { c.cutoff = as_integer(v, k); }},
      {"mode", [&](auto& v, auto& k) { c.mode = keyed(k, [&] { return parse_goodness_mode(as_string(v, k)); }); }},
      {"cutoff_order",
       [&](auto& v, auto& k) { c.cutoff_order = keyed(k, [&] { return parse_cutoff_order(as_string(v, k)); }); }},
      {"synthetic", [&](auto& v, auto& k) { apply(v, synthetic_setters, k); }},
  };
  apply(doc, setters, "");
  keyed("train", [&] {
    t.validate();
    return 0;
  });
  require(c.cutoff >= 1, "config key 'cutoff': must be >= 1");
  keyed("synthetic", [&] {
    s.validate();
    return 0;
  });
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open config '" + path.string() + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail("malformed config '" + path.string() + "': " + e.what());
  }
  return config_from_json(doc);
}

nlohmann::json RunConfig::to_json() const {
  const TrainConfig& t = train;
  const SyntheticSpec& s = synthetic;
  return {
      {"alpha", t.alpha},
      {"beta", t.beta},
      {"temperature", t.temperature},
      {"lambda", t.lambda},
      {"encoder_lr", t.encoder_schedule.base_lr},
      {"classifier_lr", t.classifier_schedule.base_lr},
      {"teacher_lr", t.teacher_schedule.base_lr},
      {"encoder_scheduler", t.encoder_schedule.kind == ScheduleKind::cosine},
      {"classifier_scheduler", t.classifier_schedule.kind == ScheduleKind::cosine},
      {"teacher_scheduler", t.teacher_schedule.kind == ScheduleKind::cosine},
      {"min_lr", t.encoder_schedule.min_lr},
      {"cycle_epochs", t.encoder_schedule.cycle_epochs},
      {"encoder_epochs", t.encoder_epochs},
      {"teacher_epochs", t.teacher_epochs},
      {"classifier_epochs", t.classifier_epochs},
      {"batch_size", t.batch_size},
      {"hidden_width", t.hidden_width},
      {"seed", t.seed},
      {"encoder_nonlinearity", to_string(t.encoder_nonlinearity)},
      {"norm_epsilon", t.norm_epsilon},
      {"norm_mode", t.norm_mode == NormMode::scalar ? "scalar" : "per_concept"},
      {"cutoff", cutoff},
      {"mode", to_string(mode)},
      {"cutoff_order", to_string(cutoff_order)},
      {"synthetic",
       {{"rows", s.rows},
        {"concepts", s.concepts},
        {"classes", s.classes},
        {"feature_dim", s.feature_dim},
        {"vlm_dim", s.vlm_dim},
        {"separation", s.separation},
        {"relevant_fraction", s.relevant_fraction},
        {"noise_scale", s.noise_scale},
        {"seed", s.seed},
        {"orthogonal_random", s.orthogonal_random},
        {"private_fraction", s.private_fraction},
        {"random_coherence", s.random_coherence}}},
  };
}

}  // namespace conceptlab
