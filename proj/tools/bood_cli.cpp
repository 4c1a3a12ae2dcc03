#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "bood/error.hpp"
#include "bood/pipeline.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;
constexpr int kExitIo = 4;

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> threads;
  std::vector<std::string> sets;
};

std::string toml_string(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

bood::RunConfig resolve_config(const GlobalFlags& g) {
  // Flags win over the file, which wins over defaults.
  std::vector<std::string> overrides = g.sets;
  if (g.seed) overrides.push_back("seed=" + std::to_string(*g.seed));
  if (!g.out.empty()) overrides.push_back("output_dir=" + toml_string(g.out));
  if (g.threads) overrides.push_back("threads=" + std::to_string(*g.threads));
  std::optional<std::filesystem::path> path;
  if (!g.config.empty()) path = g.config;
  return bood::load_config(path, overrides);
}

bood::RunManifest existing_manifest(const bood::RunConfig& cfg) {
  const auto path = std::filesystem::path(cfg.output_dir) / "manifest.json";
  if (!std::filesystem::exists(path)) return {};
  auto m = bood::load_manifest(path);
  if (m.seed != cfg.seed) {
    throw bood::ConfigError("manifest in " + cfg.output_dir + " was written with seed " + std::to_string(m.seed) +
                            "; use a fresh --out or run-all");
  }
  return m;
}

void print_metrics(const bood::RunManifest& m) {
  if (!m.metrics) return;
  for (const auto& r : m.comparisons) {
    std::cout << "score=" << r.score << " id_acc=" << r.id_acc;
    if (r.average) std::cout << " fpr95_avg=" << r.average->fpr95 << " auroc_avg=" << r.average->auroc;
    std::cout << (r.score == m.metrics->score ? "  (primary)" : "") << '\n';
    for (const auto& s : r.sets) std::cout << "  " << s.name << " fpr95=" << s.fpr95 << " auroc=" << s.auroc << '\n';
    for (const auto& a : r.absent) std::cout << "  " << a << " absent\n";
  }
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw bood::ConfigError("sweep value '" + item + "' is not a number");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boundary-based outlier synthesis pipeline"};
  app.set_version_flag("--version", std::string(bood::kToolVersion));
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  app.add_option("--config", g.config, "TOML config file");
  app.add_option("--seed", g.seed, "global seed");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--threads", g.threads, "worker threads for distance and synthesis loops")->check(CLI::PositiveNumber);
  app.add_option("--set", g.sets, "override a config key, e.g. --set detector.beta=0");

  std::string stage;
  for (const auto& name : bood::stage_names()) {
    app.add_subcommand(name, "run the " + name + " stage")->callback([&stage, name] { stage = name; });
  }
  auto* run_all = app.add_subcommand("run-all", "run every stage in order");

  std::string sweep_param;
  std::string sweep_values;
  auto* sweep = app.add_subcommand("sweep", "one full run per value of a hyperparameter");
  sweep->add_option("--param", sweep_param, "alpha | c | r | beta | K")->required();
  sweep->add_option("--values", sweep_values, "comma-separated values")->required();

  std::string plot_kind;
  std::string plot_path;
  auto* plot = app.add_subcommand("plot", "render an SVG from a finished run");
  plot->add_option("--kind", plot_kind, "latent2d | score_hist | sweep_line")->required();
  plot->add_option("--path", plot_path, "output SVG path (default: inside the run directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    const auto cfg = resolve_config(g);
    if (!stage.empty()) {
      auto m = existing_manifest(cfg);
      bood::run_stage(stage, cfg, m);
      print_metrics(m);
    } else if (run_all->parsed()) {
      const auto m = bood::run_all(cfg);
      print_metrics(m);
      std::cout << "manifest: " << (std::filesystem::path(cfg.output_dir) / "manifest.json").string() << '\n';
    } else if (sweep->parsed()) {
      bood::SweepSpec spec{sweep_param, parse_values(sweep_values), cfg};
      const auto rows = bood::sweep(spec);
      std::cout << sweep_param << ",ok,fpr95_avg,auroc_avg,id_acc,mean_k\n";
      for (const auto& r : rows) {
        std::cout << r.value << ',' << r.ok << ',' << r.fpr95_avg << ',' << r.auroc_avg << ',' << r.id_acc << ','
                  << r.mean_k;
        if (!r.ok) std::cout << "  error: " << r.error;
        std::cout << '\n';
      }
    } else if (plot->parsed()) {
      const auto kind = bood::parse_plot_kind(plot_kind);
      std::filesystem::path out = plot_path;
      if (out.empty()) out = std::filesystem::path(cfg.output_dir) / (plot_kind + ".svg");
      bood::plot_from_run(kind, cfg, out);
      std::cout << out.string() << '\n';
    }
  } catch (const bood::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const bood::StageError& e) {
    std::cerr << "stage '" << e.stage() << "' failed: " << e.what() << '\n';
    return e.io_failure() ? kExitIo : kExitStage;
  } catch (const bood::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  }
  return 0;
}
