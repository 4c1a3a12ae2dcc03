#include <fstream>
#include <sstream>

#include "bood/error.hpp"
#include "bood/pipeline.hpp"

namespace bood {

namespace {

nlohmann::json distances_json(const DistanceSummary& d) {
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [k, count] : d.histogram) hist[std::to_string(k)] = count;
  return {{"total", d.total},
          {"never_crossed", d.never_crossed},
          {"already_misclassified", d.already_misclassified},
          {"mean_steps", d.mean_steps},
          {"histogram", hist}};
}

DistanceSummary distances_from_json(const nlohmann::json& j) {
  DistanceSummary d;
  d.total = j.at("total").get<std::size_t>();
  d.never_crossed = j.at("never_crossed").get<std::size_t>();
  d.already_misclassified = j.at("already_misclassified").get<std::size_t>();
  d.mean_steps = j.at("mean_steps").get<double>();
  for (const auto& [k, v] : j.at("histogram").items()) d.histogram[std::stoul(k)] = v.get<std::size_t>();
  return d;
}

nlohmann::json synthesis_json(const SynthesisSummary& s) {
  return {{"selected", s.selected},
          {"outliers", s.outliers},
          {"failures", s.failures},
          {"flip_back_rate", s.flip_back_rate},
          {"mean_flip_step", s.mean_flip_step}};
}

SynthesisSummary synthesis_from_json(const nlohmann::json& j) {
  return {j.at("selected").get<std::size_t>(), j.at("outliers").get<std::size_t>(),
          j.at("failures").get<std::size_t>(), j.at("flip_back_rate").get<double>(),
          j.at("mean_flip_step").get<double>()};
}

}  // namespace

nlohmann::json RunManifest::metrics_section() const {
  nlohmann::json j;
  j["tool_version"] = tool_version;
  j["seed"] = seed;
  j["config"] = config;
  j["status"] = status;
  j["failed_stage"] = failed_stage;
  j["error"] = error;
  auto enc = nlohmann::json::array();
  for (const auto& e : encoder_history) enc.push_back({{"loss", e.loss}, {"accuracy", e.accuracy}});
  j["encoder_history"] = enc;
  j["encoder_test_acc"] = encoder_test_acc;
  j["distances"] = distances ? distances_json(*distances) : nlohmann::json(nullptr);
  j["synthesis"] = synthesis ? synthesis_json(*synthesis) : nlohmann::json(nullptr);
  j["decoder_min_singular_value"] = decoder_min_singular_value;
  auto det = nlohmann::json::array();
  for (const auto& e : detector_history) {
    det.push_back({{"ce_loss", e.ce_loss}, {"ood_loss", e.ood_loss}, {"id_acc", e.id_acc}});
  }
  j["detector_history"] = det;
  j["metrics"] = metrics ? metrics->to_json() : nlohmann::json(nullptr);
  auto cmp = nlohmann::json::array();
  for (const auto& m : comparisons) cmp.push_back(m.to_json());
  j["comparisons"] = cmp;
  return j;
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j = metrics_section();
  auto t = nlohmann::json::array();
  for (const auto& s : timings) t.push_back({{"stage", s.stage}, {"seconds", s.seconds}});
  j["timings"] = t;
  return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  validate_manifest_json(j);
  RunManifest m;
  try {
    m.tool_version = j.at("tool_version").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config = j.at("config");
    m.status = j.at("status").get<std::string>();
    m.failed_stage = j.value("failed_stage", "");
    m.error = j.value("error", "");
    for (const auto& t : j.value("timings", nlohmann::json::array())) {
      m.timings.push_back({t.at("stage").get<std::string>(), t.at("seconds").get<double>()});
    }
    for (const auto& e : j.value("encoder_history", nlohmann::json::array())) {
      m.encoder_history.push_back({e.at("loss").get<double>(), e.at("accuracy").get<double>()});
    }
    m.encoder_test_acc = j.value("encoder_test_acc", 0.0);
    if (j.contains("distances") && !j["distances"].is_null()) m.distances = distances_from_json(j["distances"]);
    if (j.contains("synthesis") && !j["synthesis"].is_null()) m.synthesis = synthesis_from_json(j["synthesis"]);
    m.decoder_min_singular_value = j.value("decoder_min_singular_value", 0.0);
    for (const auto& e : j.value("detector_history", nlohmann::json::array())) {
      m.detector_history.push_back(
          {e.at("ce_loss").get<double>(), e.at("ood_loss").get<double>(), e.at("id_acc").get<double>()});
    }
    if (j.contains("metrics") && !j["metrics"].is_null()) m.metrics = MetricsReport::from_json(j["metrics"]);
    for (const auto& c : j.value("comparisons", nlohmann::json::array())) {
      m.comparisons.push_back(MetricsReport::from_json(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void validate_manifest_json(const nlohmann::json& j) {
  auto require = [&](const nlohmann::json& obj, const char* key, auto check, const char* type) {
    if (!obj.is_object() || !obj.contains(key) || !check(obj.at(key))) {
      throw IoError(std::string("manifest field '") + key + "' missing or not " + type);
    }
  };
  auto is_string = [](const nlohmann::json& v) { return v.is_string(); };
  auto is_unsigned = [](const nlohmann::json& v) { return v.is_number_unsigned(); };
  auto is_object = [](const nlohmann::json& v) { return v.is_object(); };
  require(j, "tool_version", is_string, "a string");
  require(j, "seed", is_unsigned, "an unsigned integer");
  require(j, "status", is_string, "a string");
  require(j, "config", is_object, "an object");
  const auto& c = j.at("config");
  require(c, "seed", is_unsigned, "an unsigned integer");
  if (c.at("seed") != j.at("seed")) throw IoError("manifest seed disagrees with config echo");
  for (const char* section : {"data", "anchors", "encoder", "boundary", "synthesis", "detector", "eval"}) {
    require(c, section, is_object, "an object");
  }
}

void save_manifest(const RunManifest& m, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << m.to_json().dump(2) << '\n';
  if (!os) throw IoError("write failed for " + path.string());
}

RunManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("cannot parse " + path.string() + ": " + e.what());
  }
  return RunManifest::from_json(j);
}

}  // namespace bood
