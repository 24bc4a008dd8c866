#include <cstdio>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "tactile/pipeline.hpp"

namespace {

// Process exit codes.
constexpr int kOk = 0;
constexpr int kInternal = 1;
constexpr int kConfig = 2;
constexpr int kIo = 3;
constexpr int kNoConvergence = 4;
constexpr int kModeMismatch = 5;
constexpr int kFormat = 6;

int run(const std::string& command, const std::string& config_path, const tactile::CommandOptions& opt) {
  const tactile::PipelineConfig cfg = tactile::apply_overrides(tactile::load_pipeline_config(config_path), opt);
  std::filesystem::path out;
  if (command == "gen-dataset") out = tactile::cmd_gen_dataset(cfg, opt);
  else if (command == "train") out = tactile::cmd_train(cfg, opt);
  else if (command == "build-lut") out = tactile::cmd_build_lut(cfg, opt);
  else if (command == "reconstruct") out = tactile::cmd_reconstruct(cfg, opt);
  else if (command == "eval") out = tactile::cmd_eval(cfg, opt);
  else if (command == "export-ply") out = tactile::cmd_export_ply(cfg, opt);
  else if (command == "plot") out = tactile::cmd_plot(cfg, opt);
  std::cout << command << ": wrote " << out.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic visuotactile calibration and 3D reconstruction"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string channel_mode, prior = "cad-edges", out, input, estimator = "psnn";
  std::size_t sample = 0;
  std::vector<std::string> estimators;

  const std::map<std::string, std::string> commands{
      {"gen-dataset", "Render a calibration dataset"},
      {"train", "Train a PSNN checkpoint on the dataset"},
      {"build-lut", "Build the lookup-table baseline"},
      {"reconstruct", "Estimate normals and integrate depth for one frame"},
      {"eval", "Gradient and depth error on the held-out split"},
      {"export-ply", "Convert a depth raster to a PLY point cloud"},
      {"plot", "Heatmap PNGs of a raster or dataset sample"}};
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "Pipeline config JSON")->required();
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--channel-mode", channel_mode, "Estimator input channels")->check(CLI::IsMember({"rgb", "rgbnir"}));
    sub->add_option("--prior", prior, "Depth prior for integration")->check(CLI::IsMember({"none", "cad-edges"}));
    sub->add_option("--out", out, "Output path (file or directory, per command)");
    if (name == "reconstruct" || name == "export-ply" || name == "plot")
      sub->add_option("--input", input, "Input raster (.tras)");
    if (name == "reconstruct" || name == "plot") sub->add_option("--sample", sample, "Dataset sample index");
    if (name == "reconstruct")
      sub->add_option("--estimator", estimator, "Estimator kind")->check(CLI::IsMember({"psnn", "lut"}));
    if (name == "eval") sub->add_option("--estimator", estimators, "KIND:PATH, repeatable (psnn or lut)");
    subs[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  CLI::App* sub = subs.at(command);
  tactile::CommandOptions opt;
  try {
    if (sub->count("--seed")) opt.seed = seed;
    if (sub->count("--channel-mode")) opt.channel_mode = tactile::channel_mode_from_string(channel_mode);
    opt.prior = tactile::prior_mode_from_string(prior);
    if (sub->count("--out")) opt.out = out;
    if (!input.empty()) opt.input = input;
    if (command == "reconstruct" || command == "plot")
      if (sub->count("--sample")) opt.sample = sample;
    opt.estimator = estimator;
    opt.estimators = estimators;
    return run(command, config_path, opt);
  } catch (const tactile::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const tactile::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const tactile::ConvergenceError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return kNoConvergence;
  } catch (const tactile::ModeMismatch& e) {
    std::cerr << "mode mismatch: " << e.what() << "\n";
    return kModeMismatch;
  } catch (const tactile::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kFormat;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInternal;
  }
}
