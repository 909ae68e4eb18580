#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "advrec/errors.hpp"
#include "advrec/runner.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
  auto* opt = cmd->add_option("--config", args.config_path, "experiment config file");
  if (config_required) opt->required();
  cmd->add_option("--override", args.overrides,
                  "config override, section.key=value (repeatable)");
  cmd->add_option("--seed", args.seed, "global seed (overrides the config)");
  cmd->add_option("--out", args.out_dir, "run directory (overrides the config)");
}

advrec::ExperimentConfig load(const CommonArgs& args) {
  std::vector<std::string> overrides = args.overrides;
  if (args.seed) overrides.push_back("global.seed=" + std::to_string(*args.seed));
  if (!args.out_dir.empty()) overrides.push_back("output.dir=" + args.out_dir);
  return advrec::load_config(args.config_path, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adversarial perturbation harness for pairwise-ranking "
               "matrix factorization recommenders"};
  app.require_subcommand(1);

  CommonArgs prepare_args, train_args, attack_args, kcore_args;
  std::string attack_model;
  std::string report_dir;

  auto* prepare = app.add_subcommand("prepare",
                                     "load, binarize and split the dataset");
  add_common(prepare, prepare_args);

  auto* train = app.add_subcommand("train", "train the recommender models");
  add_common(train, train_args);

  auto* attack = app.add_subcommand("attack",
                                    "perturb a trained model and evaluate");
  add_common(attack, attack_args);
  attack->add_option("--model", attack_model, "trained model file")->required();

  auto* kcore = app.add_subcommand(
      "kcore-study", "relate accuracy degradation to dataset structure");
  add_common(kcore, kcore_args);

  auto* report = app.add_subcommand("report", "merge run CSVs into report files");
  report->add_option("--out", report_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // help/version exit 0, usage errors exit 2
  }

  try {
    if (prepare->parsed()) advrec::cmd_prepare(load(prepare_args));
    if (train->parsed()) advrec::cmd_train(load(train_args));
    if (attack->parsed()) advrec::cmd_attack(load(attack_args), attack_model);
    if (kcore->parsed()) advrec::cmd_kcore_study(load(kcore_args));
    if (report->parsed()) advrec::cmd_report(report_dir);
  } catch (const advrec::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
