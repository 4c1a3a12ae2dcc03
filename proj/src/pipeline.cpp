#include "bood/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "bood/error.hpp"
#include "bood/plot.hpp"

namespace bood {

namespace fs = std::filesystem;

namespace {

// Artifact locations inside one run directory.
struct RunPaths {
  fs::path root;

  fs::path train() const { return root / "train.csv"; }
  fs::path id_test() const { return root / "id_test.csv"; }
  fs::path classes() const { return root / "classes.txt"; }
  fs::path ood(const std::string& name) const { return root / ("ood_" + name + ".csv"); }
  fs::path generator() const { return root / "generator.json"; }
  fs::path anchors() const { return root / "anchors.csv"; }
  fs::path encoder() const { return root / "encoder.ckpt"; }
  fs::path distances() const { return root / "distances.csv"; }
  fs::path selected() const { return root / "selected.csv"; }
  fs::path outliers() const { return root / "outliers.bin"; }
  fs::path decoder() const { return root / "decoder.json"; }
  fs::path decoded() const { return root / "decoded.csv"; }
  fs::path detector() const { return root / "detector"; }
  fs::path scores() const { return root / "scores.csv"; }
  fs::path metrics() const { return root / "metrics.json"; }
  fs::path manifest() const { return root / "manifest.json"; }
  fs::path latent_plot() const { return root / "latent2d.svg"; }
  fs::path score_plot() const { return root / "score_hist.svg"; }
};

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << j.dump(2) << '\n';
  if (!os) throw IoError("write failed for " + path.string());
}

void write_class_names(const std::vector<std::string>& names, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& n : names) os << n << '\n';
}

std::vector<std::string> read_class_names(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string() + " (run gen-data first)");
  std::vector<std::string> names;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) names.push_back(line);
  }
  return names;
}

Dataset load_split(const RunPaths& p, const fs::path& path, Split split) {
  Dataset d = load_embeddings_csv(path, read_class_names(p.classes()));
  d.split = split;
  return d;
}

EncoderModel load_encoder(const RunPaths& p, const RunConfig& cfg) {
  EncoderModel m{load_checkpoint(p.encoder(), cfg.encoder.activation), load_anchors_csv(p.anchors()),
                 cfg.encoder.temperature};
  m.validate();
  return m;
}

Matrix stack(const std::vector<Vector>& rows, std::size_t dim) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return m;
}

std::vector<FeatureRecord> load_features_jsonl(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<FeatureRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      FeatureRecord r;
      r.origin_index = j.at("origin_index").get<std::uint64_t>();
      r.origin_label = j.at("origin_label").get<std::uint32_t>();
      r.flip_step = j.at("flip_step").get<std::uint32_t>();
      const auto z = j.at("z").get<std::vector<double>>();
      r.z = Eigen::Map<const Vector>(z.data(), static_cast<Eigen::Index>(z.size()));
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("cannot parse " + path.string() + ": " + e.what());
    }
  }
  return out;
}

std::vector<FeatureRecord> load_outliers(const RunPaths& p, const RunConfig& cfg) {
  return cfg.synthesis.format == FeatureFormat::jsonl ? load_features_jsonl(jsonl_sibling(p.outliers()))
                                                      : load_features_bin(p.outliers());
}

Matrix outlier_matrix(const std::vector<FeatureRecord>& recs) {
  if (recs.empty()) return Matrix(0, 0);
  std::vector<Vector> rows;
  rows.reserve(recs.size());
  for (const auto& r : recs) rows.push_back(r.z);
  return stack(rows, static_cast<std::size_t>(recs.front().z.size()));
}

/// Selected distance records matched back to their encoded features.
std::vector<LatentFeature> selected_features(const RunPaths& p, const EncoderModel& enc, const Dataset& train) {
  const auto selected = load_distance_csv(p.selected());
  const auto features = encode_dataset(enc, train);
  std::vector<LatentFeature> out;
  out.reserve(selected.size());
  for (const auto& r : selected) {
    if (r.source_index >= features.size() || features[r.source_index].label != r.label) {
      throw IoError("selected.csv does not match the training set at index " + std::to_string(r.source_index));
    }
    out.push_back(features[r.source_index]);
  }
  return out;
}

Dataset encoded_dataset(const EncoderModel& enc, const Dataset& d) {
  Dataset out = d;
  out.rows = mlp_forward(enc.mlp, d.rows);
  return out;
}

// -- plots ------------------------------------------------------------------

constexpr std::size_t kMaxPlotPoints = 2000;
constexpr std::size_t kMaxTrajectories = 40;

void render_latent2d(const RunConfig& cfg, const fs::path& out) {
  const RunPaths p{cfg.output_dir};
  const auto enc = load_encoder(p, cfg);
  const Dataset train = load_split(p, p.train(), Split::train);
  const auto features = encode_dataset(enc, train);
  std::vector<LatentFeature> selected;
  if (fs::exists(p.selected())) selected = selected_features(p, enc, train);

  std::vector<Vector> all;
  for (const auto& f : features) all.push_back(f.z);
  const auto proj = Projection2d::fit(stack(all, enc.anchors.dim()));

  std::vector<bool> is_selected(features.size(), false);
  for (const auto& s : selected) is_selected[s.source_index] = true;
  const std::size_t stride = std::max<std::size_t>(1, features.size() / kMaxPlotPoints);

  Latent2dPlot plot;
  plot.class_count = enc.anchors.class_count();
  plot.title = "latent features (" + std::to_string(enc.anchors.dim()) + "-d, PCA)";
  std::vector<Vector> kept;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (i % stride != 0 && !is_selected[i]) continue;
    if (is_selected[i]) plot.highlighted.push_back(kept.size());
    kept.push_back(features[i].z);
    plot.labels.push_back(features[i].label);
  }
  plot.points = proj.apply(stack(kept, enc.anchors.dim()));

  const auto clf = enc.classifier();
  for (std::size_t i = 0; i < selected.size() && i < kMaxTrajectories; ++i) {
    try {
      const auto o = synthesize_ood(clf, selected[i], cfg.synthesis.config, true);
      std::vector<Eigen::Vector2d> line;
      for (const auto& z : o.trajectory) line.push_back(proj.apply(z));
      plot.trajectories.push_back(std::move(line));
    } catch (const SynthesisError&) {
      // Failed origins have no trajectory to draw.
    }
  }
  plot_latent2d(plot, out);
}

void render_score_hist(const RunConfig& cfg, const fs::path& out) {
  const RunPaths p{cfg.output_dir};
  const auto rows = load_score_csv(p.scores());
  std::vector<double> id;
  std::vector<std::pair<std::string, std::vector<double>>> ood;
  for (const auto& r : rows) {
    if (r.split == "id_test") {
      id.push_back(r.score);
      continue;
    }
    const std::string set = r.sample_id.substr(0, r.sample_id.find(':'));
    auto it = std::find_if(ood.begin(), ood.end(), [&](const auto& e) { return e.first == set; });
    if (it == ood.end()) {
      ood.emplace_back(set, std::vector<double>{});
      it = std::prev(ood.end());
    }
    it->second.push_back(r.score);
  }
  if (id.empty()) throw std::invalid_argument("score_hist: no ID scores in " + p.scores().string());
  plot_score_hist(id, ood, out, 30, "OOD scores (higher = more ID-like)");
}

// -- stages -----------------------------------------------------------------

void stage_gen_data(const RunConfig& cfg, RunManifest&) {
  const RunPaths p{cfg.output_dir};
  GeneratedData gd = generate_dataset(cfg.data);
  write_dataset_csv(gd.train, p.train());
  write_dataset_csv(gd.id_test, p.id_test());
  write_class_names(gd.train.class_names, p.classes());
  for (auto kind : cfg.eval.ood_sets) {
    const std::string name = to_string(kind);
    fs::remove(p.ood(name));
    // Held-out classes need known class centers; other sources leave the set absent.
    if (kind == ShiftKind::held_out_classes && cfg.data.kind != DatasetKind::gaussian_mixture) continue;
    const OodSpec spec{kind, cfg.eval.ood_count, cfg.eval.radial_factor, cfg.eval.box_inflation,
                       stage_seed(cfg.seed, "ood:" + name)};
    write_dataset_csv(gen_ood_testset(cfg.data, gd, spec, gd.record), p.ood(name));
  }
  write_json(gd.record.to_json(), p.generator());
}

void stage_train_encoder(const RunConfig& cfg, RunManifest& m) {
  const RunPaths p{cfg.output_dir};
  const Dataset train = load_split(p, p.train(), Split::train);
  const Dataset test = load_split(p, p.id_test(), Split::id_test);
  AnchorSet anchors;
  if (cfg.anchors.mode == AnchorMode::from_file) {
    anchors = load_anchors_csv(cfg.anchors.path);
    if (anchors.class_count() != train.class_count) {
      throw ConfigError("anchor file has " + std::to_string(anchors.class_count()) + " classes, data has " +
                        std::to_string(train.class_count));
    }
    if (anchors.dim() != cfg.encoder.latent_dim) {
      throw ConfigError("anchor dim " + std::to_string(anchors.dim()) + " != encoder.latent_dim " +
                        std::to_string(cfg.encoder.latent_dim));
    }
  } else {
    anchors = make_orthonormal_anchors(train.class_count, cfg.encoder.latent_dim, stage_seed(cfg.seed, "anchors"),
                                       train.class_names);
  }
  MlpSpec spec;
  spec.widths.push_back(train.dim());
  spec.widths.insert(spec.widths.end(), cfg.encoder.hidden.begin(), cfg.encoder.hidden.end());
  spec.widths.push_back(cfg.encoder.latent_dim);
  spec.activation = cfg.encoder.activation;
  Rng init(stage_seed(cfg.seed, "encoder-init"));
  auto res = train_encoder(train, make_encoder(spec, anchors, cfg.encoder.temperature, init), cfg.encoder.train);
  save_checkpoint(res.model.mlp, p.encoder());
  write_anchors_csv(res.model.anchors, p.anchors());
  m.encoder_history = res.history;
  m.encoder_test_acc = encoder_accuracy(res.model, test);
}

void stage_distances(const RunConfig& cfg, RunManifest& m) {
  const RunPaths p{cfg.output_dir};
  const auto enc = load_encoder(p, cfg);
  const auto features = encode_dataset(enc, load_split(p, p.train(), Split::train));
  const auto table = estimate_distances(enc.classifier(), features, cfg.boundary, cfg.threads);
  write_distance_csv(table, p.distances());
  m.distances = summarize(table);
}

void stage_select(const RunConfig& cfg, RunManifest&) {
  const RunPaths p{cfg.output_dir};
  write_distance_csv(select_boundary(load_distance_csv(p.distances()), cfg.boundary.select_percent), p.selected());
}

void stage_synthesize(const RunConfig& cfg, RunManifest& m) {
  const RunPaths p{cfg.output_dir};
  const auto enc = load_encoder(p, cfg);
  auto selected = selected_features(p, enc, load_split(p, p.train(), Split::train));
  const std::size_t n_selected = selected.size();
  const auto batch = synthesize_batch(enc.classifier(), std::move(selected), cfg.synthesis.config,
                                      cfg.synthesis.per_origin_count, cfg.threads);
  if (batch.outliers.empty()) throw std::runtime_error("every selected feature failed synthesis");
  export_features(batch.outliers, p.outliers(), cfg.synthesis.format);
  SynthesisSummary s;
  s.selected = n_selected;
  s.outliers = batch.outliers.size();
  s.failures = batch.failures.size();
  s.flip_back_rate = batch.flip_back_rate();
  double sum = 0.0;
  for (const auto& o : batch.outliers) sum += static_cast<double>(o.flip_step);
  s.mean_flip_step = sum / static_cast<double>(batch.outliers.size());
  m.synthesis = s;
}

void stage_decode(const RunConfig& cfg, RunManifest& m) {
  if (cfg.detector.mode == DetectorMode::latent) return;
  const RunPaths p{cfg.output_dir};
  const auto enc = load_encoder(p, cfg);
  const Dataset train = load_split(p, p.train(), Split::train);
  const ToyDecoder dec = fit_toy_decoder(mlp_forward(enc.mlp, train.rows), train.rows);
  dec.validate();
  write_json(dec.to_json(), p.decoder());
  const auto recs = load_outliers(p, cfg);
  Dataset decoded;
  decoded.rows = toy_decode(dec, outlier_matrix(recs));
  decoded.class_count = train.class_count;
  decoded.class_names = train.class_names;
  decoded.split = Split::ood_test;
  for (const auto& r : recs) decoded.labels.push_back(r.origin_label);
  write_dataset_csv(decoded, p.decoded());
  m.decoder_min_singular_value = dec.min_singular_value();
}

void stage_train_detector(const RunConfig& cfg, RunManifest& m) {
  const RunPaths p{cfg.output_dir};
  Dataset id = load_split(p, p.train(), Split::train);
  Matrix ood(0, 0);
  if (cfg.detector.mode == DetectorMode::latent) {
    id = encoded_dataset(load_encoder(p, cfg), id);
    if (cfg.detector.beta > 0.0) ood = outlier_matrix(load_outliers(p, cfg));
  } else if (cfg.detector.beta > 0.0) {
    ood = load_embeddings_csv(p.decoded()).rows;
  }
  Rng init(stage_seed(cfg.seed, "detector-init"));
  auto model = make_detector(id.dim(), id.class_count, cfg.detector.arch, cfg.detector.mode, init);
  auto res = train_detector(id, ood, std::move(model), {cfg.detector.beta, cfg.detector.train});
  fs::create_directories(p.detector());
  save_detector(res.model, p.detector());
  m.detector_history = res.history;
}

void stage_eval(const RunConfig& cfg, RunManifest& m) {
  const RunPaths p{cfg.output_dir};
  const auto det = load_detector(p.detector(), cfg.detector.arch.activation, cfg.detector.mode);
  Dataset id_test = load_split(p, p.id_test(), Split::id_test);
  std::vector<NamedSet> sets;
  for (auto kind : cfg.eval.ood_sets) {
    const std::string name = to_string(kind);
    const auto path = p.ood(name);
    sets.push_back({name, fs::exists(path) ? load_embeddings_csv(path).rows : Matrix(0, 0)});
  }
  if (cfg.detector.mode == DetectorMode::latent) {
    const auto enc = load_encoder(p, cfg);
    id_test = encoded_dataset(enc, id_test);
    for (auto& s : sets) {
      if (s.inputs.rows() > 0) s.inputs = mlp_forward(enc.mlp, s.inputs);
    }
  }
  const ScoreKind primary = cfg.eval.resolved_score(cfg.detector.beta);
  std::vector<ScoreKind> kinds;
  if (cfg.detector.beta > 0.0 || primary == ScoreKind::detector) kinds.push_back(ScoreKind::detector);
  kinds.push_back(ScoreKind::energy);
  kinds.push_back(ScoreKind::msp);
  m.comparisons.clear();
  for (auto k : kinds) {
    auto report = evaluate_run(det, k, id_test, sets, cfg.eval.tpr_target);
    if (k == primary) m.metrics = report;
    m.comparisons.push_back(std::move(report));
  }

  std::vector<ScoreRow> rows;
  const auto id_scores = score_inputs(primary, det, id_test.rows);
  for (std::size_t i = 0; i < id_scores.size(); ++i) rows.push_back({"id_test:" + std::to_string(i), "id_test", id_scores[i]});
  for (const auto& s : sets) {
    if (s.inputs.rows() == 0) continue;
    const auto sc = score_inputs(primary, det, s.inputs);
    for (std::size_t i = 0; i < sc.size(); ++i) rows.push_back({s.name + ":" + std::to_string(i), "ood_test", sc[i]});
  }
  write_score_csv(rows, p.scores());
  write_json(m.metrics->to_json(), p.metrics());
  render_score_hist(cfg, p.score_plot());
  render_latent2d(cfg, p.latent_plot());
}

using StageFn = void (*)(const RunConfig&, RunManifest&);

const std::map<std::string, StageFn>& stage_table() {
  static const std::map<std::string, StageFn> t = {
      {"gen-data", stage_gen_data},   {"train-encoder", stage_train_encoder},
      {"distances", stage_distances}, {"select", stage_select},
      {"synthesize", stage_synthesize}, {"decode", stage_decode},
      {"train-detector", stage_train_detector}, {"eval", stage_eval}};
  return t;
}

void record_failure(RunManifest& m, const RunPaths& p, const std::string& stage, const std::string& what) {
  m.status = "failed";
  m.failed_stage = stage;
  m.error = what;
  try {
    save_manifest(m, p.manifest());
  } catch (const IoError&) {
    // The original failure is the one worth reporting.
  }
}

}  // namespace

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"gen-data", "train-encoder",  "distances", "select",
                                                 "synthesize", "decode", "train-detector", "eval"};
  return names;
}

void run_stage(const std::string& stage, const RunConfig& cfg, RunManifest& manifest) {
  const auto it = stage_table().find(stage);
  if (it == stage_table().end()) throw ConfigError("unknown stage '" + stage + "'");
  cfg.validate();
  const RunPaths p{cfg.output_dir};
  try {
    fs::create_directories(p.root);
  } catch (const fs::filesystem_error& e) {
    throw StageError(stage, e.what(), true);
  }
  manifest.tool_version = kToolVersion;
  manifest.seed = cfg.seed;
  manifest.config = cfg.to_json();

  const auto t0 = std::chrono::steady_clock::now();
  try {
    it->second(cfg, manifest);
  } catch (const IoError& e) {
    record_failure(manifest, p, stage, e.what());
    throw StageError(stage, e.what(), true);
  } catch (const std::exception& e) {
    record_failure(manifest, p, stage, e.what());
    throw StageError(stage, e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  auto t = std::find_if(manifest.timings.begin(), manifest.timings.end(),
                        [&](const StageTiming& s) { return s.stage == stage; });
  if (t == manifest.timings.end()) {
    manifest.timings.push_back({stage, secs});
  } else {
    t->seconds = secs;
  }
  manifest.status = stage == stage_names().back() ? "complete" : "incomplete";
  manifest.failed_stage.clear();
  manifest.error.clear();
  try {
    save_manifest(manifest, p.manifest());
  } catch (const IoError& e) {
    throw StageError(stage, e.what(), true);
  }
}

RunManifest run_all(const RunConfig& cfg) {
  RunManifest m;
  for (const auto& s : stage_names()) run_stage(s, cfg, m);
  return m;
}

// -- sweep ------------------------------------------------------------------

namespace {

const std::vector<std::string> kSweepParams = {"alpha", "c", "r", "beta", "K"};

bool is_integral(double v) { return std::isfinite(v) && v == std::floor(v); }

void check_sweep_value(const std::string& param, double v) {
  if (param == "alpha" && !(v > 0.0)) throw ConfigError("sweep alpha values must be > 0");
  if (param == "c" && !(is_integral(v) && v >= 0.0)) throw ConfigError("sweep c values must be integers >= 0");
  if (param == "r" && !(v > 0.0 && v <= 100.0)) throw ConfigError("sweep r values must be in (0, 100]");
  if (param == "beta" && !(v >= 0.0 && std::isfinite(v))) throw ConfigError("sweep beta values must be >= 0");
  if (param == "K" && !(is_integral(v) && v >= 1.0)) throw ConfigError("sweep K values must be integers >= 1");
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

fs::path sweep_csv_path(const RunConfig& base, const std::string& param) {
  return fs::path(base.output_dir) / ("sweep_" + param + ".csv");
}

void render_sweep_table(const fs::path& csv, const std::string& param, const fs::path& out);

}  // namespace

void SweepSpec::validate() const {
  if (std::find(kSweepParams.begin(), kSweepParams.end(), parameter) == kSweepParams.end()) {
    throw ConfigError("unknown sweep parameter '" + parameter + "' (alpha, c, r, beta, K)");
  }
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  for (double v : values) check_sweep_value(parameter, v);
  base.validate();
}

RunConfig apply_sweep_value(const RunConfig& base, const std::string& parameter, double value) {
  check_sweep_value(parameter, value);
  RunConfig c = base;
  if (parameter == "alpha") {
    c.boundary.alpha = value;
    c.synthesis.config.alpha = value;
  } else if (parameter == "c") {
    c.synthesis.config.extra_steps = static_cast<std::size_t>(value);
  } else if (parameter == "r") {
    c.boundary.select_percent = value;
  } else if (parameter == "beta") {
    c.detector.beta = value;
  } else if (parameter == "K") {
    c.boundary.max_steps = static_cast<std::size_t>(value);
    c.synthesis.config.max_steps = static_cast<std::size_t>(value);
  } else {
    throw ConfigError("unknown sweep parameter '" + parameter + "'");
  }
  c.validate();
  return c;
}

std::vector<SweepRow> sweep(const SweepSpec& spec) {
  spec.validate();
  const fs::path root = fs::path(spec.base.output_dir);
  std::vector<SweepRow> rows;
  for (double v : spec.values) {
    SweepRow row;
    row.value = v;
    try {
      RunConfig c = apply_sweep_value(spec.base, spec.parameter, v);
      c.output_dir = (root / ("sweep_" + spec.parameter) / (spec.parameter + "_" + format_value(v))).string();
      const auto m = run_all(c);
      row.ok = true;
      row.fpr95_avg = m.metrics->average ? m.metrics->average->fpr95 : 0.0;
      row.auroc_avg = m.metrics->average ? m.metrics->average->auroc : 0.0;
      row.id_acc = m.metrics->id_acc;
      row.mean_k = m.distances ? m.distances->mean_steps : 0.0;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }

  fs::create_directories(root);
  const auto csv = sweep_csv_path(spec.base, spec.parameter);
  std::ofstream os(csv);
  if (!os) throw IoError("cannot open " + csv.string() + " for writing");
  os << spec.parameter << ",ok,fpr95_avg,auroc_avg,id_acc,mean_k,error\n";
  char buf[160];
  for (const auto& r : rows) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    std::snprintf(buf, sizeof buf, "%.17g,%d,%.17g,%.17g,%.17g,%.17g,", r.value, r.ok ? 1 : 0, r.fpr95_avg,
                  r.auroc_avg, r.id_acc, r.mean_k);
    os << buf << err << '\n';
  }
  os.close();
  if (std::any_of(rows.begin(), rows.end(), [](const SweepRow& r) { return r.ok; })) {
    render_sweep_table(csv, spec.parameter, root / ("sweep_" + spec.parameter + ".svg"));
  }
  return rows;
}

// -- plots ------------------------------------------------------------------

PlotKind parse_plot_kind(const std::string& s) {
  if (s == "latent2d") return PlotKind::latent2d;
  if (s == "score_hist") return PlotKind::score_hist;
  if (s == "sweep_line") return PlotKind::sweep_line;
  throw ConfigError("unknown plot kind '" + s + "' (latent2d, score_hist, sweep_line)");
}

namespace {

void render_sweep_table(const fs::path& csv, const std::string& param, const fs::path& out) {
  std::ifstream is(csv);
  if (!is) throw IoError("cannot open " + csv.string());
  std::string line;
  std::getline(is, line);
  std::vector<double> x, fpr, au, acc;
  while (std::getline(is, line)) {
    std::istringstream ss(line);
    std::string f;
    std::vector<std::string> fields;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() < 6) throw IoError("malformed row in " + csv.string());
    if (fields[1] != "1") continue;
    x.push_back(std::stod(fields[0]));
    fpr.push_back(std::stod(fields[2]));
    au.push_back(std::stod(fields[3]));
    acc.push_back(std::stod(fields[4]));
  }
  if (x.empty()) throw std::invalid_argument("sweep has no successful rows to plot");
  plot_sweep_line(param, x, {{"FPR95 (avg)", fpr}, {"AUROC (avg)", au}, {"ID ACC", acc}}, out);
}

void render_sweep_line(const RunConfig& cfg, const fs::path& out) {
  // Most recently written sweep table in the run directory.
  fs::path csv;
  std::string param;
  for (const auto& p : kSweepParams) {
    const auto candidate = sweep_csv_path(cfg, p);
    if (fs::exists(candidate) && (csv.empty() || fs::last_write_time(candidate) > fs::last_write_time(csv))) {
      csv = candidate;
      param = p;
    }
  }
  if (csv.empty()) throw IoError("no sweep_<param>.csv in " + cfg.output_dir);
  render_sweep_table(csv, param, out);
}

}  // namespace

void plot_from_run(PlotKind kind, const RunConfig& cfg, const fs::path& out) {
  switch (kind) {
    case PlotKind::latent2d: render_latent2d(cfg, out); return;
    case PlotKind::score_hist: render_score_hist(cfg, out); return;
    case PlotKind::sweep_line: render_sweep_line(cfg, out); return;
  }
}

}  // namespace bood
