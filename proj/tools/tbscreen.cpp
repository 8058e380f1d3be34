// Command-line front end: subcommands wrap the command functions one-to-one,
// flags become config overrides applied on top of the optional config file.

#include <exception>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "tbscreen/commands.hpp"
#include "tbscreen/config.hpp"
#include "tbscreen/error.hpp"

namespace {

struct CliArgs {
  std::string config_path;
  std::string manifest;
  std::string out_dir;
  std::string families;
  std::string experiment;
  std::string seed;
  std::string jobs;
};

void add_common_flags(CLI::App* cmd, CliArgs* args) {
  cmd->add_option("--config", args->config_path, "config file (key = value lines)");
  cmd->add_option("--manifest", args->manifest, "manifest CSV path");
  cmd->add_option("--out", args->out_dir, "output directory");
  cmd->add_option("--seed", args->seed, "base random seed");
  cmd->add_option("--jobs", args->jobs, "worker threads");
  cmd->add_option("--families", args->families, "comma-separated model families (lr,mlp,rf,ab)");
  cmd->add_option("--experiment", args->experiment, "cough-only or cough-metadata")
      ->check(CLI::IsMember({"cough-only", "cough-metadata"}));
}

tbscreen::PipelineConfig build_config(const CliArgs& args) {
  std::vector<std::pair<std::string, std::string>> overrides;
  if (!args.manifest.empty()) overrides.emplace_back("manifest", args.manifest);
  if (!args.out_dir.empty()) overrides.emplace_back("out_dir", args.out_dir);
  if (!args.seed.empty()) overrides.emplace_back("seed", args.seed);
  if (!args.jobs.empty()) overrides.emplace_back("jobs", args.jobs);
  if (!args.families.empty()) overrides.emplace_back("families", args.families);
  if (!args.experiment.empty()) overrides.emplace_back("experiment", args.experiment);
  return tbscreen::load_config(args.config_path, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TB cough screening pipeline"};
  app.require_subcommand(1);

  CliArgs args;
  std::string final_family = "ab";
  std::string model_path;

  CLI::App* extract = app.add_subcommand("extract", "decode clips and write feature tables");
  add_common_flags(extract, &args);

  CLI::App* crossvalidate =
      app.add_subcommand("crossvalidate", "nested cross-validation per model family");
  add_common_flags(crossvalidate, &args);

  CLI::App* train_final =
      app.add_subcommand("train-final", "tune and fit one family on the full dataset");
  add_common_flags(train_final, &args);
  train_final->add_option("--family", final_family, "model family to train")
      ->required()
      ->check(CLI::IsMember({"lr", "mlp", "rf", "ab"}));

  CLI::App* predict = app.add_subcommand("predict", "score a manifest with a saved pipeline");
  add_common_flags(predict, &args);
  predict->add_option("--model", model_path, "pipeline file from train-final")->required();

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic labeled corpus");
  add_common_flags(synth, &args);

  CLI::App* report = app.add_subcommand("report", "summarize run reports in the output dir");
  add_common_flags(report, &args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const tbscreen::PipelineConfig config = build_config(args);
    if (app.got_subcommand(extract)) return tbscreen::cmd_extract(config);
    if (app.got_subcommand(crossvalidate)) {
      tbscreen::cmd_crossvalidate(config);
      return 0;
    }
    if (app.got_subcommand(train_final)) {
      tbscreen::cmd_train_final(config, tbscreen::model_family_from_string(final_family));
      return 0;
    }
    if (app.got_subcommand(predict)) {
      tbscreen::cmd_predict(config, model_path);
      return 0;
    }
    if (app.got_subcommand(synth)) {
      tbscreen::cmd_synth(config);
      return 0;
    }
    if (app.got_subcommand(report)) {
      std::cout << tbscreen::cmd_report(config);
      return 0;
    }
    return 1;
  } catch (const tbscreen::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
