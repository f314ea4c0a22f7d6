#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"

#include "forge/config.hpp"
#include "forge/error.hpp"
#include "forge/metrics.hpp"
#include "forge/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"forge: sarcasm reasoning data mining, distillation and GRPO alignment"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string backend;
  std::string strategy;
  std::string prompt_template;
  std::string output_dir;
  bool no_sft = false;
  bool no_genrm = false;
  bool verbose = false;
  std::vector<std::string> overrides;

  app.add_option("-c,--config", config_path, "Config file (sectioned key = value)");
  app.add_option("--seed", seed, "Global seed (overrides run.seed)");
  app.add_option("--backend", backend, "Teacher backend")->check(CLI::IsMember({"mock", "http"}));
  app.add_option("--strategy", strategy, "SFT selection strategy")
      ->check(CLI::IsMember({"greedy", "best-of-n", "diverse"}));
  app.add_option("--template", prompt_template, "Teacher prompt template")
      ->check(CLI::IsMember({"thinking", "instruct"}));
  app.add_option("-o,--output", output_dir, "Output directory (overrides run.output_dir)");
  app.add_flag("--no-sft", no_sft, "Skip the behavior-cloning warm start (cold-start GRPO)");
  app.add_flag("--no-genrm", no_genrm, "Drop the judge reward (reward.lambda_g = 0)");
  app.add_option("--set", overrides, "Extra section.key=value assignment; repeatable");
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  auto* synth_cmd = app.add_subcommand("synth", "Generate or load the dataset and write the split");
  auto* mine_cmd = app.add_subcommand("mine", "Sample teacher trajectories for the train split");
  auto* distill_cmd = app.add_subcommand("distill", "Build the SFT and judge datasets");
  auto* judge_cmd = app.add_subcommand("judge-train", "Train the toy judge");
  auto* grpo_cmd = app.add_subcommand("grpo", "Warm-start and GRPO-train the toy policy");
  bool resume = false;
  grpo_cmd->add_flag("--resume", resume, "Continue from the checkpoint left by a failed run");
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate on the test split");
  std::string predictions;
  eval_cmd->add_option("--predictions", predictions, "Score a label-per-line file instead");
  auto* report_cmd = app.add_subcommand("report", "Summarize history and evaluation");
  auto* config_cmd = app.add_subcommand("config", "Print the effective configuration");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
  spdlog::set_pattern("[%l] %v");

  try {
    forge::PipelineConfig cfg = config_path.empty() ? forge::PipelineConfig{}
                                                    : forge::load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (!backend.empty()) forge::set_config_value(cfg, "run.backend", backend);
    if (!strategy.empty()) forge::set_config_value(cfg, "distill.strategy", strategy);
    if (!prompt_template.empty()) forge::set_config_value(cfg, "mine.template", prompt_template);
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    if (no_sft) cfg.warm_start = false;
    if (no_genrm) cfg.weights.lambda_g = 0.0;
    for (const auto& assignment : overrides) {
      const auto eq = assignment.find('=');
      if (eq == std::string::npos) {
        throw forge::Error(forge::ErrorCode::kConfig, "--set expects section.key=value");
      }
      forge::set_config_value(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
    }
    cfg.validate();

    if (config_cmd->parsed()) {
      for (const auto& [k, v] : forge::effective_config(cfg)) std::cout << k << " = " << v << '\n';
      return 0;
    }
    if (report_cmd->parsed()) {
      std::cout << forge::cmd_report(cfg);
      return 0;
    }

    forge::OutputLock lock(cfg.output_dir);
    if (synth_cmd->parsed()) {
      forge::cmd_prepare(cfg);
    } else if (mine_cmd->parsed()) {
      forge::cmd_mine(cfg);
    } else if (distill_cmd->parsed()) {
      forge::cmd_distill(cfg);
    } else if (judge_cmd->parsed()) {
      forge::cmd_judge_train(cfg);
    } else if (grpo_cmd->parsed()) {
      forge::cmd_grpo(cfg, resume);
    } else if (eval_cmd->parsed()) {
      const auto report = forge::cmd_eval(
          cfg, predictions.empty() ? std::nullopt : std::optional<std::filesystem::path>(predictions));
      std::cout << forge::report_table(report, "test split");
    }
  } catch (const forge::Error& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
