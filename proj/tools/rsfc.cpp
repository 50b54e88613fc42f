// rsfc: command-line front end for the pipeline.
//
// Exit codes: 0 ok, 2 bad configuration, 3 bad input data, 4 stage failure.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "rsfc/io.hpp"
#include "rsfc/parallel.hpp"
#include "rsfc/pipeline.hpp"
#include "rsfc/synth.hpp"

namespace fs = std::filesystem;
using namespace rsfc;

namespace {

struct Globals {
  std::string config = "config.json";
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> workers;
};

pipeline::PipelineConfig load_config(const Globals& g) {
  auto cfg = pipeline::PipelineConfig::load(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out.empty()) cfg.out_dir = g.out;
  if (g.workers) cfg.workers = *g.workers;
  return cfg;
}

void run_command(const Globals& g, const std::string& command) {
  const auto cfg = load_config(g);
  const auto result = pipeline::run_pipeline(cfg, pipeline::stages_for_command(command), &std::cout);
  int skipped = 0;
  for (const auto& s : result.stages) skipped += s.skipped ? 1 : 0;
  std::cout << result.stages.size() - static_cast<std::size_t>(skipped) << " stage(s) ran, "
            << skipped << " skipped\n";
  if (command == "run") pipeline::write_report(cfg.out_dir);
}

struct SynthArgs {
  int subjects = 120;
  int t_points = 2000;
  std::string preset = "planted";
  double noise_sd = 0.02;
};

// DMN within-network coupling weakens with age and ON strengthens; every
// other cell is flat.
synth::TrendSpec preset_spec(const SynthArgs& a) {
  synth::TrendSpec spec = synth::default_trend_spec();
  spec.t_points = a.t_points;
  spec.noise_sd = a.noise_sd;
  if (a.preset == "planted") {
    for (auto& n : spec.networks) {
      if (n.network == Network::DMN) n.wnc = {0.6, -0.004};
      if (n.network == Network::ON) n.wnc = {0.3, 0.003};
    }
  } else if (a.preset != "flat") {
    throw ConfigError("synth: unknown preset '" + a.preset + "' (planted|flat)");
  }
  return spec;
}

void run_synth(const Globals& g, const SynthArgs& a) {
  if (g.out.empty()) throw ConfigError("synth: --out is required");
  if (a.subjects < 3) throw ConfigError("synth: need at least three subjects");
  const std::uint64_t seed = g.seed.value_or(0);
  const synth::TrendSpec spec = preset_spec(a);
  spec.validate();
  const auto ages = synth::spread_ages(a.subjects, 7.0, 89.0, derive_seed(seed, 1));
  const auto cohort = synth::generate_cohort(spec, ages, derive_seed(seed, 2));
  const fs::path dir(g.out);
  synth::write_cohort(dir, spec, cohort);
  const nlohmann::json config = {{"manifest", "manifest.csv"},
                                 {"roi_table", "rois.csv"},
                                 {"ground_truth", "ground_truth.json"},
                                 {"out_dir", "out"},
                                 {"seed", seed}};
  io::write_file_atomic(dir / "config.json", config.dump(2) + "\n");
  std::cout << "wrote " << cohort.subjects.size() << " subjects (" << spec.roi_count() << " ROIs, "
            << spec.t_points << " time points) to " << dir.string() << '\n';
  if (cohort.repaired_subjects > 0)
    std::cout << cohort.repaired_subjects << " target matrices needed a positive-definite repair\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Resting-state entropy and functional connectivity pipeline"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "pipeline config JSON")->capture_default_str();
  app.add_option("--seed", g.seed, "override the config seed");
  app.add_option("--out", g.out, "override the output directory");
  app.add_option("--workers", g.workers, "worker threads")->check(CLI::PositiveNumber);

  std::string command;
  auto leaf = [&](CLI::App* parent, const std::string& name, const std::string& help,
                  const std::string& full) {
    auto* sub = parent->add_subcommand(name, help);
    sub->fallthrough();
    sub->callback([&command, full] { command = full; });
    return sub;
  };

  SynthArgs sa;
  auto* synth_cmd = leaf(&app, "synth", "write a synthetic cohort and config.json to --out", "synth");
  synth_cmd->add_option("--subjects", sa.subjects)->capture_default_str();
  synth_cmd->add_option("--t-points", sa.t_points)->capture_default_str();
  synth_cmd->add_option("--preset", sa.preset, "planted|flat")->capture_default_str();
  synth_cmd->add_option("--noise-sd", sa.noise_sd, "per-subject target jitter (r units)")
      ->capture_default_str();

  leaf(&app, "entropy", "per-ROI sample entropy features", "entropy");
  auto* stages = app.add_subcommand("stages", "developmental stage analyses");
  stages->require_subcommand(1);
  stages->fallthrough();
  leaf(stages, "cluster", "k-means on entropy features", "stages cluster");
  leaf(stages, "classify", "stage classifiers", "stages classify");
  auto* fc = app.add_subcommand("fc", "functional connectivity");
  fc->require_subcommand(1);
  fc->fallthrough();
  leaf(fc, "build", "correlation and Fisher-z matrices", "fc build");
  leaf(fc, "scan", "edge counts across thresholds", "fc scan");
  leaf(fc, "export", "group prevalence and BrainNet files", "fc export");
  auto* nets = app.add_subcommand("networks", "network analyses");
  nets->require_subcommand(1);
  nets->fallthrough();
  leaf(nets, "cluster", "ROI k-means on the group matrix", "networks cluster");
  leaf(nets, "embed", "t-SNE of the group matrix", "networks embed");
  leaf(nets, "trends", "WNC/BNC/NS and their age trends", "networks trends");
  leaf(&app, "run", "every stage, then report.json", "run");
  leaf(&app, "report", "rebuild report.json from stage summaries", "report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (command == "synth") {
      run_synth(g, sa);
    } else if (command == "report") {
      const auto cfg = load_config(g);
      pipeline::write_report(cfg.out_dir);
      std::cout << "wrote " << (cfg.out_dir / "report.json").string() << '\n';
    } else {
      run_command(g, command);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
