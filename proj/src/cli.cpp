#include "conceptlab/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "conceptlab/activation.hpp"
#include "conceptlab/cbm.hpp"
#include "conceptlab/checkpoint.hpp"
#include "conceptlab/config.hpp"
#include "conceptlab/error.hpp"
#include "conceptlab/fixtures.hpp"
#include "conceptlab/goodness.hpp"

namespace conceptlab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

struct Flags {
  std::string bundle, config, out, encoder, classifier, teacher, relevant, irrelevant, mode, range;
  std::uint64_t seed = 0;
  Eigen::Index cutoff = 100;
  int runs = 10;
  Eigen::Index steps = 10;
  std::size_t trials = 0;
  Eigen::Index k = 5;
  Eigen::Index row = 0;
  double bin_width = 0.1;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* cutoff_opt = nullptr;
};

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), "cannot write '" + path.string() + "'");
  out << text;
  require(static_cast<bool>(out), "write failed for '" + path.string() + "'");
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

bool is_json(const fs::path& p) { return p.extension() == ".json"; }

fs::path sibling(const fs::path& out, const std::string& suffix) {
  fs::path p = out;
  p.replace_extension(suffix);
  return p;
}

RunConfig resolve_config(const Flags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (f.seed_opt->count() > 0) {
    c.train.seed = f.seed;
    c.synthetic.seed = f.seed;
  }
  if (f.cutoff_opt->count() > 0) c.cutoff = f.cutoff;
  return c;
}

class Report {
 public:
  Report(const RunConfig& cfg, std::string command) : cfg_(cfg), command_(std::move(command)) {}

  void input(const std::string& role, const std::string& path) {
    if (path.empty()) return;
    inputs_[role] = {{"file", fs::path(path).filename().string()}, {"fnv1a64", hex(fnv1a(read_file(path)))}};
  }

  json wrap(json body) const {
    const json config = cfg_.to_json();
    body["command"] = command_;
    body["config"] = config;
    body["provenance"] = {{"config_fnv1a64", hex(fnv1a(config.dump()))},
                          {"seed", cfg_.train.seed},
                          {"inputs", inputs_}};
    return body;
  }

 private:
  const RunConfig& cfg_;
  std::string command_;
  json inputs_ = json::object();
};

ActivationMatrix activations_of(const EmbeddingBundle& b, const RunConfig& cfg) {
  return compute_activations(b, cfg.train.norm_epsilon, cfg.train.norm_mode);
}

void write_history(const fs::path& out, const TrainingHistory& h, const std::string& stage) {
  write_container(history_container(h, stage), sibling(out, ".history.cbmb"));
  write_text(sibling(out, ".history.csv"), h.to_csv());
}

int cmd_synth(const Flags& f, std::ostream& out) {
  RunConfig cfg = resolve_config(f);
  SyntheticSpec spec = cfg.synthetic;
  if (!f.mode.empty()) {
    const auto p = fixtures::preset(f.mode, spec.seed);
    require(p.has_value(), "unknown preset '" + f.mode + "'");
    spec = *p;
  }
  const EmbeddingBundle b = make_synthetic_bundle(spec);
  write_bundle(b, f.out);
  out << "wrote " << f.out << ": " << b.rows() << " rows, " << b.concept_count() << " concepts, "
      << b.class_count() << " classes\n";
  return 0;
}

int cmd_goodness(const Flags& f, std::ostream&) {
  RunConfig cfg = resolve_config(f);
  if (!f.mode.empty()) cfg.mode = parse_goodness_mode(f.mode);
  const EmbeddingBundle b = read_bundle(f.bundle);
  const ActivationMatrix acts = activations_of(b, cfg);
  GoodnessReport r = cfg.mode == GoodnessMode::task_agnostic
                         ? task_agnostic_goodness(acts, cfg.cutoff, cfg.cutoff_order)
                         : task_specific_goodness(acts, b.labels, b.class_count(), cfg.cutoff, cfg.cutoff_order);
  r.concept_set = fs::path(f.bundle).filename().string();
  if (!is_json(f.out)) {
    write_text(f.out, r.to_csv());
    return 0;
  }
  Report rep(cfg, "goodness");
  rep.input("bundle", f.bundle);
  write_json(f.out, rep.wrap(r.to_json()));
  return 0;
}

std::pair<double, double> parse_range(const std::string& s) {
  const auto comma = s.find(',');
  require(comma != std::string::npos, "--range expects lo,hi");
  try {
    std::size_t used = 0;
    const std::string a = s.substr(0, comma), b = s.substr(comma + 1);
    const double lo = std::stod(a, &used);
    require(used == a.size(), "--range expects lo,hi");
    const double hi = std::stod(b, &used);
    require(used == b.size(), "--range expects lo,hi");
    return {lo, hi};
  } catch (const std::logic_error&) {
    fail("--range expects lo,hi");
  }
}

int cmd_histogram(const Flags& f, std::ostream&) {
  const RunConfig cfg = resolve_config(f);
  const EmbeddingBundle b = read_bundle(f.bundle);
  const std::vector<double> values = top_activation_values(activations_of(b, cfg), cfg.cutoff);
  double lo = 0.0, hi = 0.0;
  if (f.range.empty()) {
    require(!values.empty(), "histogram: no values");
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    lo = std::floor(*mn);
    hi = std::max(std::ceil(*mx), lo + f.bin_width);
  } else {
    std::tie(lo, hi) = parse_range(f.range);
  }
  const HistogramReport h = histogram(values, f.bin_width, lo, hi);
  if (!is_json(f.out)) {
    write_text(f.out, h.to_csv());
    return 0;
  }
  Report rep(cfg, "histogram");
  rep.input("bundle", f.bundle);
  write_json(f.out, rep.wrap({{"edges", h.edges},
                              {"counts", h.counts},
                              {"total", h.total},
                              {"below_range", h.below_range},
                              {"above_range", h.above_range}}));
  return 0;
}

int cmd_refine(const Flags& f, std::ostream&) {
  RunConfig cfg = resolve_config(f);
  if (!f.mode.empty()) cfg.mode = parse_goodness_mode(f.mode);
  const EmbeddingBundle b = read_bundle(f.bundle);
  const ActivationMatrix acts = activations_of(b, cfg);
  std::optional<RefineLabels> labels;
  if (cfg.mode == GoodnessMode::task_specific) labels = RefineLabels{b.labels, b.class_count()};
  RefineOptions o;
  o.cutoff = cfg.cutoff;
  o.steps = f.steps;
  o.seed = cfg.train.seed;
  const RefinementTrace guided = refine_entropy_guided(acts, labels, o);
  std::optional<RefinementTrace> random;
  if (f.trials > 0) random = refine_random_baseline(acts, labels, o, f.trials);
  if (is_json(f.out)) {
    Report rep(cfg, "refine");
    rep.input("bundle", f.bundle);
    json body = {{"guided", guided.to_json()}, {"steps", f.steps}, {"trials", f.trials}};
    if (random) body["random"] = random->to_json();
    write_json(f.out, rep.wrap(body));
    return 0;
  }
  write_text(f.out, guided.to_csv());
  if (random) write_text(sibling(f.out, ".random.csv"), random->to_csv());
  return 0;
}

int cmd_train_encoder(const Flags& f, std::ostream&) {
  const RunConfig cfg = resolve_config(f);
  const EmbeddingBundle b = read_bundle(f.bundle);
  const auto t = train_concept_encoder(b, activations_of(b, cfg), cfg.train);
  write_container(encoder_container(t.model, t.optimizer, b.concept_names), f.out);
  write_history(f.out, t.history, "encoder");
  return 0;
}

int cmd_train_teacher(const Flags& f, std::ostream&) {
  const RunConfig cfg = resolve_config(f);
  const EmbeddingBundle b = read_bundle(f.bundle);
  const auto t = train_teacher(b, cfg.train);
  write_container(teacher_container(t.model, t.optimizer), f.out);
  write_history(f.out, t.history, "teacher");
  return 0;
}

int cmd_train_classifier(const Flags& f, std::ostream&) {
  const RunConfig cfg = resolve_config(f);
  const EmbeddingBundle b = read_bundle(f.bundle);
  const ConceptEncoder enc = load_encoder(f.encoder);
  std::optional<TeacherProbe> teacher;
  if (!f.teacher.empty()) teacher = load_teacher(f.teacher);
  const auto t = train_classifier(enc, teacher ? &*teacher : nullptr, b, cfg.train);
  write_container(classifier_container(t.model, t.optimizer), f.out);
  write_history(f.out, t.history, "classifier");
  return 0;
}

int cmd_evaluate(const Flags& f, std::ostream& out) {
  const RunConfig cfg = resolve_config(f);
  const EmbeddingBundle b = read_bundle(f.bundle);
  const ConceptEncoder enc = load_encoder(f.encoder);
  const FinalClassifier clf = load_classifier(f.classifier);
  Report rep(cfg, "evaluate");
  rep.input("bundle", f.bundle);
  rep.input("encoder", f.encoder);
  rep.input("classifier", f.classifier);
  const StageData test = stage_data(b, Split::test);
  json body = {{"test_accuracy", test_accuracy(enc, clf, b)}, {"test_rows", test.rows.size()}};
  if (!f.teacher.empty()) {
    rep.input("teacher", f.teacher);
    body["oracle_accuracy"] = test_accuracy(load_teacher(f.teacher), b);
  }
  out << "test accuracy " << body["test_accuracy"].get<double>() << "\n";
  write_json(f.out, rep.wrap(body));
  return 0;
}

int cmd_explain(const Flags& f, std::ostream&) {
  const RunConfig cfg = resolve_config(f);
  const EmbeddingBundle b = read_bundle(f.bundle);
  const ConceptEncoder enc = load_encoder(f.encoder);
  const FinalClassifier clf = load_classifier(f.classifier);
  require(f.row >= 0 && f.row < b.rows(), "explain: row " + std::to_string(f.row) + " out of range");
  const Eigen::RowVectorXd x = b.features.row(f.row).cast<double>();
  const Explanation e = explain(enc, clf, x, f.k, b.concept_names);
  json top = json::array();
  for (const auto& c : e.top) top.push_back({{"concept_index", c.concept_index}, {"name", c.name}, {"contribution", c.value}});
  Report rep(cfg, "explain");
  rep.input("bundle", f.bundle);
  rep.input("encoder", f.encoder);
  rep.input("classifier", f.classifier);
  write_json(f.out, rep.wrap({{"row", f.row},
                              {"label", b.labels[static_cast<std::size_t>(f.row)]},
                              {"predicted_class", e.predicted_class},
                              {"predicted_name", b.class_names.at(e.predicted_class)},
                              {"top", top}}));
  return 0;
}

int cmd_audit(const Flags& f, std::ostream& out) {
  const RunConfig cfg = resolve_config(f);
  const EmbeddingBundle b = read_bundle(f.bundle);
  const ConceptEncoder enc = load_encoder(f.encoder);
  const FinalClassifier clf = load_classifier(f.classifier);
  const AuditReport a = linearity_audit(enc, clf, b.features.cast<double>());
  Report rep(cfg, "audit");
  rep.input("bundle", f.bundle);
  rep.input("encoder", f.encoder);
  rep.input("classifier", f.classifier);
  out << "max deviation " << a.max_deviation << ", agreement " << a.agreement << "\n";
  write_json(f.out, rep.wrap(a.to_json()));
  return 0;
}

int cmd_sensitivity(const Flags& f, std::ostream& out) {
  const RunConfig cfg = resolve_config(f);
  const EmbeddingBundle rel = read_bundle(f.relevant);
  const EmbeddingBundle irr = read_bundle(f.irrelevant);
  const SensitivityReport s = concept_sensitivity_test(rel, irr, cfg.train, f.runs);
  Report rep(cfg, "sensitivity");
  rep.input("relevant", f.relevant);
  rep.input("irrelevant", f.irrelevant);
  for (const auto& c : s.conditions)
    out << c.architecture << " / " << c.concept_set << ": " << c.mean << " +- " << c.stddev << "\n";
  write_json(f.out, rep.wrap(s.to_json()));
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Concept bottleneck toolkit over CBMB embedding bundles", "conceptlab"};
  app.require_subcommand(1);
  Flags f;

  using Handler = int (*)(const Flags&, std::ostream&);
  std::vector<std::pair<CLI::App*, Handler>> commands;
  auto sub = [&](const char* name, const char* help, Handler h) {
    CLI::App* s = app.add_subcommand(name, help);
    s->add_option("--out", f.out, "output path")->required();
    s->add_option("--config", f.config, "JSON run configuration");
    f.seed_opt = s->add_option("--seed", f.seed, "random seed");
    commands.emplace_back(s, h);
    return s;
  };
  auto seed_opts = std::vector<CLI::Option*>{};
  auto cutoff_opts = std::vector<CLI::Option*>{};

  auto track = [&](CLI::App* s) {
    seed_opts.push_back(s->get_option("--seed"));
    return s;
  };
  auto with_cutoff = [&](CLI::App* s) {
    cutoff_opts.push_back(s->add_option("--cutoff", f.cutoff, "top-K cutoff"));
    return s;
  };
  auto bundle = [&](CLI::App* s) { s->add_option("--bundle", f.bundle, "input bundle")->required(); };
  auto models = [&](CLI::App* s, bool classifier) {
    s->add_option("--encoder", f.encoder, "encoder checkpoint")->required();
    if (classifier) s->add_option("--classifier", f.classifier, "classifier checkpoint")->required();
  };
  const auto modes = std::vector<std::string>{"task-agnostic", "task-specific"};

  CLI::App* synth = track(sub("synth", "write a synthetic bundle", cmd_synth));
  synth->add_option("--mode", f.mode, "preset")->check(CLI::IsMember(fixtures::preset_names()));
  with_cutoff(synth)->get_option("--cutoff")->group("");

  CLI::App* good = with_cutoff(track(sub("goodness", "goodness of a concept set", cmd_goodness)));
  bundle(good);
  good->add_option("--mode", f.mode, "goodness mode")->check(CLI::IsMember(modes));

  CLI::App* hist = with_cutoff(track(sub("histogram", "histogram of top activations", cmd_histogram)));
  bundle(hist);
  hist->add_option("--bin-width", f.bin_width, "bin width")->check(CLI::PositiveNumber);
  hist->add_option("--range", f.range, "lo,hi");

  CLI::App* refine = with_cutoff(track(sub("refine", "entropy-guided concept removal", cmd_refine)));
  bundle(refine);
  refine->add_option("--mode", f.mode, "objective")->check(CLI::IsMember(modes));
  refine->add_option("--steps", f.steps, "removal steps")->check(CLI::NonNegativeNumber);
  refine->add_option("--trials", f.trials, "random-removal trials");

  CLI::App* te = with_cutoff(track(sub("train-encoder", "train the concept encoder", cmd_train_encoder)));
  bundle(te);
  CLI::App* tt = with_cutoff(track(sub("train-teacher", "train the linear teacher probe", cmd_train_teacher)));
  bundle(tt);
  CLI::App* tc = with_cutoff(track(sub("train-classifier", "train the final classifier", cmd_train_classifier)));
  bundle(tc);
  models(tc, false);
  tc->add_option("--teacher", f.teacher, "teacher checkpoint");

  CLI::App* ev = with_cutoff(track(sub("evaluate", "test-split accuracy", cmd_evaluate)));
  bundle(ev);
  models(ev, true);
  ev->add_option("--teacher", f.teacher, "teacher checkpoint");

  CLI::App* ex = with_cutoff(track(sub("explain", "top concept contributions for one row", cmd_explain)));
  bundle(ex);
  models(ex, true);
  ex->add_option("--k", f.k, "concepts to list")->check(CLI::PositiveNumber);
  ex->add_option("--row", f.row, "bundle row");

  CLI::App* au = with_cutoff(track(sub("audit", "linear collapse audit", cmd_audit)));
  bundle(au);
  models(au, true);

  CLI::App* se = with_cutoff(track(sub("sensitivity", "relevant vs irrelevant concept sets", cmd_sensitivity)));
  se->add_option("--relevant", f.relevant, "bundle with relevant concepts")->required();
  se->add_option("--irrelevant", f.irrelevant, "bundle with irrelevant concepts")->required();
  se->add_option("--runs", f.runs, "seeds per condition")->check(CLI::PositiveNumber);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      for (CLI::App* s : app.get_subcommands()) out << s->help();
      return 0;
    }
    err << "usage error: " << e.what() << "\n" << "run 'conceptlab --help' for usage\n";
    return 2;
  }

  for (std::size_t i = 0; i < commands.size(); ++i) {
    auto [cmd, handler] = commands[i];
    if (!cmd->parsed()) continue;
    f.seed_opt = seed_opts[i];
    f.cutoff_opt = cutoff_opts[i];
    try {
      return handler(f, out);
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 2;
}

int run(const std::vector<std::string>& args) { return run(args, std::cout, std::cerr); }

}  // namespace conceptlab::cli
