#include <fstream>
#include <set>
#include <sstream>

#include "toml.hpp"

#include "bood/error.hpp"
#include "bood/pipeline.hpp"

namespace bood {

ScoreKind EvalConfig::resolved_score(double beta) const {
  if (score == "auto") return beta > 0.0 ? ScoreKind::detector : ScoreKind::energy;
  return parse_score_kind(score);
}

std::uint64_t stage_seed(std::uint64_t global_seed, const std::string& stage) {
  return Rng(global_seed).split(stage).seed();
}

RunConfig default_config() {
  RunConfig c;
  c.encoder.train.epochs = 30;
  c.detector.train.epochs = 30;
  c.finalize();
  return c;
}

void RunConfig::finalize() {
  data.seed = stage_seed(seed, "gen-data");
  encoder.train.seed = stage_seed(seed, "train-encoder");
  detector.train.seed = stage_seed(seed, "train-detector");
}

void RunConfig::validate() const {
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  data.validate();
  if (anchors.mode == AnchorMode::from_file && anchors.path.empty()) {
    throw ConfigError("anchors.mode = from_file needs anchors.path");
  }
  if (encoder.latent_dim < 1) throw ConfigError("encoder.latent_dim must be >= 1");
  if (!(encoder.temperature > 0.0)) throw ConfigError("encoder.temperature must be > 0");
  for (auto w : encoder.hidden) {
    if (w < 1) throw ConfigError("encoder.hidden widths must be >= 1");
  }
  encoder.train.validate();
  boundary.validate();
  synthesis.config.validate();
  if (synthesis.per_origin_count < 1) throw ConfigError("synthesis.per_origin_count must be >= 1");
  if (!(detector.beta >= 0.0)) throw ConfigError("detector.beta must be >= 0");
  if (detector.arch.head_hidden < 1) throw ConfigError("detector.head_hidden must be >= 1");
  for (auto w : detector.arch.hidden) {
    if (w < 1) throw ConfigError("detector.hidden widths must be >= 1");
  }
  detector.train.validate();
  if (!(eval.tpr_target > 0.0 && eval.tpr_target <= 1.0)) throw ConfigError("eval.tpr_target must be in (0, 1]");
  eval.resolved_score(detector.beta);
  if (eval.ood_count < 1) throw ConfigError("eval.ood_count must be >= 1");
  if (!(eval.radial_factor >= 2.0)) throw ConfigError("eval.radial_factor must be >= 2");
  if (!(eval.box_inflation > 1.0)) throw ConfigError("eval.box_inflation must be > 1");
}

namespace {

nlohmann::json train_json(const TrainConfig& t) {
  return {{"epochs", t.epochs}, {"batch_size", t.batch_size}, {"lr_init", t.lr_init},
          {"lr_min", t.lr_min},  {"seed", t.seed},             {"shuffle", t.shuffle}};
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  j["threads"] = threads;
  j["data"] = {{"kind", to_string(data.kind)},
               {"classes", data.classes},
               {"input_dim", data.input_dim},
               {"latent_dim", data.latent_dim},
               {"train_per_class", data.train_per_class},
               {"test_per_class", data.test_per_class},
               {"center_scale", data.center_scale},
               {"noise_sigma", data.noise_sigma},
               {"mix", data.mix},
               {"seed", data.seed},
               {"csv_train", data.csv_train},
               {"csv_test", data.csv_test}};
  j["anchors"] = {{"mode", to_string(anchors.mode)}, {"path", anchors.path}};
  j["encoder"] = {{"hidden", encoder.hidden},
                  {"latent_dim", encoder.latent_dim},
                  {"activation", to_string(encoder.activation)},
                  {"temperature", encoder.temperature},
                  {"train", train_json(encoder.train)}};
  j["boundary"] = {{"alpha", boundary.alpha}, {"K", boundary.max_steps}, {"r", boundary.select_percent}};
  const char* fmt = synthesis.format == FeatureFormat::binary ? "binary"
                    : synthesis.format == FeatureFormat::jsonl ? "jsonl"
                                                               : "both";
  j["synthesis"] = {{"alpha", synthesis.config.alpha},
                    {"c", synthesis.config.extra_steps},
                    {"K", synthesis.config.max_steps},
                    {"per_origin_count", synthesis.per_origin_count},
                    {"format", fmt}};
  j["detector"] = {{"mode", to_string(detector.mode)},
                   {"hidden", detector.arch.hidden},
                   {"head_hidden", detector.arch.head_hidden},
                   {"activation", to_string(detector.arch.activation)},
                   {"beta", detector.beta},
                   {"train", train_json(detector.train)}};
  std::vector<std::string> sets;
  for (auto k : eval.ood_sets) sets.push_back(to_string(k));
  j["eval"] = {{"tpr_target", eval.tpr_target}, {"score", eval.score},
               {"ood_sets", sets},             {"ood_count", eval.ood_count},
               {"radial_factor", eval.radial_factor}, {"box_inflation", eval.box_inflation}};
  return j;
}

namespace {

// Typed access to one TOML table that remembers which keys were consumed.
class Section {
 public:
  Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  bool has(const std::string& key) const { return table_ && table_->contains(key); }

  void read(const std::string& key, double& out) {
    if (auto* n = node(key)) {
      if (auto v = n->value<double>()) {
        out = *v;
      } else {
        fail(key, "a number");
      }
    }
  }

  void read(const std::string& key, std::size_t& out) {
    if (auto* n = node(key)) {
      auto v = n->value<std::int64_t>();
      if (!v || *v < 0 || !n->is_integer()) fail(key, "a non-negative integer");
      out = static_cast<std::size_t>(*v);
    }
  }

  void read(const std::string& key, std::uint64_t& out, bool) {
    if (auto* n = node(key)) {
      auto v = n->value<std::int64_t>();
      if (!v || *v < 0 || !n->is_integer()) fail(key, "a non-negative integer");
      out = static_cast<std::uint64_t>(*v);
    }
  }

  void read(const std::string& key, bool& out) {
    if (auto* n = node(key)) {
      if (auto v = n->value<bool>()) {
        out = *v;
      } else {
        fail(key, "a boolean");
      }
    }
  }

  void read(const std::string& key, std::string& out) {
    if (auto* n = node(key)) {
      if (auto v = n->value<std::string>()) {
        out = *v;
      } else {
        fail(key, "a string");
      }
    }
  }

  void read(const std::string& key, std::vector<std::size_t>& out) {
    if (auto* n = node(key)) {
      auto* arr = n->as_array();
      if (!arr) fail(key, "an array of integers");
      out.clear();
      for (const auto& e : *arr) {
        auto v = e.value<std::int64_t>();
        if (!v || *v < 1 || !e.is_integer()) fail(key, "an array of positive integers");
        out.push_back(static_cast<std::size_t>(*v));
      }
    }
  }

  void read(const std::string& key, std::vector<std::string>& out) {
    if (auto* n = node(key)) {
      auto* arr = n->as_array();
      if (!arr) fail(key, "an array of strings");
      out.clear();
      for (const auto& e : *arr) {
        auto v = e.value<std::string>();
        if (!v) fail(key, "an array of strings");
        out.push_back(*v);
      }
    }
  }

  void reject_unknown() const {
    if (!table_) return;
    for (const auto& [k, _] : *table_) {
      const std::string key(k.str());
      if (!used_.count(key)) throw ConfigError("unknown config key '" + qualified(key) + "'");
    }
  }

 private:
  const toml::node* node(const std::string& key) {
    used_.insert(key);
    if (!table_) return nullptr;
    return table_->get(key);
  }

  std::string qualified(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  [[noreturn]] void fail(const std::string& key, const char* what) const {
    throw ConfigError("config key '" + qualified(key) + "' must be " + what);
  }

  const toml::table* table_;
  std::string name_;
  std::set<std::string> used_;
};

void read_train(Section& s, TrainConfig& t) {
  s.read("epochs", t.epochs);
  s.read("batch_size", t.batch_size);
  s.read("lr_init", t.lr_init);
  s.read("lr_min", t.lr_min);
  s.read("shuffle", t.shuffle);
}

void apply_override(toml::table& root, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + spec + "' must look like section.key=value");
  const std::string path = spec.substr(0, eq);
  const std::string value = spec.substr(eq + 1);
  const auto dot = path.find('.');
  const std::string section = dot == std::string::npos ? "" : path.substr(0, dot);
  const std::string key = dot == std::string::npos ? path : path.substr(dot + 1);
  toml::table parsed;
  try {
    parsed = toml::parse("v = " + value);
  } catch (const toml::parse_error&) {
    // Bare words are taken as strings.
    parsed = toml::table{{"v", value}};
  }
  toml::table* target = &root;
  if (!section.empty()) {
    if (!root.contains(section)) root.insert(section, toml::table{});
    target = root.get_as<toml::table>(section);
    if (!target) throw ConfigError("config key '" + section + "' is not a section");
  }
  target->insert_or_assign(key, *parsed.get("v"));
}

}  // namespace

RunConfig parse_config(const std::string& toml_text, const std::vector<std::string>& overrides) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "TOML parse error: " << e.description() << " at line " << e.source().begin.line;
    throw ConfigError(msg.str());
  }
  for (const auto& o : overrides) apply_override(root, o);

  RunConfig c = default_config();
  const std::set<std::string> sections = {"data", "anchors", "encoder", "boundary", "synthesis", "detector", "eval"};
  Section top(&root, "");
  top.read("seed", c.seed, true);
  top.read("output_dir", c.output_dir);
  top.read("threads", c.threads);
  for (const auto& [k, v] : root) {
    const std::string key(k.str());
    if (sections.count(key)) {
      if (!v.is_table()) throw ConfigError("'" + key + "' must be a section");
    } else if (key != "seed" && key != "output_dir" && key != "threads") {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  auto sec = [&](const char* name) { return Section(root.get_as<toml::table>(name), name); };

  {
    auto s = sec("data");
    std::string kind = to_string(c.data.kind);
    s.read("kind", kind);
    c.data.kind = parse_dataset_kind(kind);
    s.read("classes", c.data.classes);
    s.read("input_dim", c.data.input_dim);
    s.read("latent_dim", c.data.latent_dim);
    s.read("train_per_class", c.data.train_per_class);
    s.read("test_per_class", c.data.test_per_class);
    s.read("center_scale", c.data.center_scale);
    s.read("noise_sigma", c.data.noise_sigma);
    s.read("mix", c.data.mix);
    s.read("csv_train", c.data.csv_train);
    s.read("csv_test", c.data.csv_test);
    s.reject_unknown();
  }
  {
    auto s = sec("anchors");
    std::string mode = to_string(c.anchors.mode);
    s.read("mode", mode);
    c.anchors.mode = parse_anchor_mode(mode);
    s.read("path", c.anchors.path);
    s.reject_unknown();
  }
  {
    auto s = sec("encoder");
    s.read("hidden", c.encoder.hidden);
    s.read("latent_dim", c.encoder.latent_dim);
    std::string act = to_string(c.encoder.activation);
    s.read("activation", act);
    c.encoder.activation = parse_activation(act);
    s.read("temperature", c.encoder.temperature);
    read_train(s, c.encoder.train);
    s.reject_unknown();
  }
  {
    auto s = sec("boundary");
    s.read("alpha", c.boundary.alpha);
    s.read("K", c.boundary.max_steps);
    s.read("r", c.boundary.select_percent);
    s.reject_unknown();
  }
  {
    // Synthesis reuses the boundary step size and cap unless set explicitly.
    auto s = sec("synthesis");
    c.synthesis.config.alpha = c.boundary.alpha;
    c.synthesis.config.max_steps = c.boundary.max_steps;
    s.read("alpha", c.synthesis.config.alpha);
    s.read("K", c.synthesis.config.max_steps);
    s.read("c", c.synthesis.config.extra_steps);
    s.read("per_origin_count", c.synthesis.per_origin_count);
    std::string fmt = "both";
    s.read("format", fmt);
    c.synthesis.format = parse_feature_format(fmt);
    s.reject_unknown();
  }
  {
    auto s = sec("detector");
    std::string mode = to_string(c.detector.mode);
    s.read("mode", mode);
    c.detector.mode = parse_detector_mode(mode);
    s.read("hidden", c.detector.arch.hidden);
    s.read("head_hidden", c.detector.arch.head_hidden);
    std::string act = to_string(c.detector.arch.activation);
    s.read("activation", act);
    c.detector.arch.activation = parse_activation(act);
    s.read("beta", c.detector.beta);
    read_train(s, c.detector.train);
    s.reject_unknown();
  }
  {
    auto s = sec("eval");
    s.read("tpr_target", c.eval.tpr_target);
    s.read("score", c.eval.score);
    std::vector<std::string> sets;
    for (auto k : c.eval.ood_sets) sets.push_back(to_string(k));
    s.read("ood_sets", sets);
    c.eval.ood_sets.clear();
    for (const auto& n : sets) c.eval.ood_sets.push_back(parse_shift_kind(n));
    s.read("ood_count", c.eval.ood_count);
    s.read("radial_factor", c.eval.radial_factor);
    s.read("box_inflation", c.eval.box_inflation);
    s.reject_unknown();
  }
  c.finalize();
  c.validate();
  return c;
}

RunConfig load_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides) {
  std::string text;
  if (path) {
    std::ifstream is(*path);
    if (!is) throw IoError("cannot open config " + path->string());
    std::ostringstream ss;
    ss << is.rdbuf();
    text = ss.str();
  }
  return parse_config(text, overrides);
}

}  // namespace bood
