// SPDX-License-Identifier: Apache-2.0
//
// rlvr: train / evaluate / gradcheck / export / validate.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

#include "rlvr/runner.hpp"

namespace {

std::vector<int> parse_k_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    const int k = std::stoi(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad K value '" + item + "'");
    out.push_back(k);
  }
  if (out.empty()) throw std::invalid_argument("empty K list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tabular RLVR trainer with SimKO, GRPO, PSR and NSR updates"};
  app.require_subcommand(1);

  std::string config_path;
  bool resume = false;
  int stop_after = 0;
  auto* train = app.add_subcommand("train", "Run a training schedule from a config file");
  train->add_option("--config", config_path, "INI config")->required()->check(CLI::ExistingFile);
  train->add_flag("--resume", resume, "Continue from <output_dir>/checkpoint.json");
  train->add_option("--stop-after", stop_after, "Stop after this step (no final checkpoint)");

  std::string ckpt_path, k_text = "1,2,4,8,16,32,64,128";
  int n_samples = 128;
  std::uint64_t eval_seed = 0;
  auto* eval = app.add_subcommand("evaluate", "pass@K and Lambda metrics for a checkpoint");
  eval->add_option("--checkpoint", ckpt_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--n", n_samples, "Samples per prompt");
  eval->add_option("--k", k_text, "Comma-separated K values");
  eval->add_option("--seed", eval_seed)->required();

  int trials = 20;
  std::uint64_t gc_seed = 1;
  double gc_tol = 1e-4;
  auto* gc = app.add_subcommand("gradcheck", "Analytic update gradients against finite differences");
  gc->add_option("--trials", trials);
  gc->add_option("--seed", gc_seed);
  gc->add_option("--tol", gc_tol, "Fail when any relative error exceeds this");

  std::string metrics_path, kind_text, out_dir;
  auto* exp = app.add_subcommand("export", "Write tidy CSV plot data from metrics.jsonl");
  exp->add_option("--metrics", metrics_path)->required()->check(CLI::ExistingFile);
  exp->add_option("--kind", kind_text)->required()->check(CLI::IsMember({"lambda", "passk", "entropy"}));
  exp->add_option("--out", out_dir)->required();

  std::string validate_path;
  auto* val = app.add_subcommand("validate", "Parse and check a config; prints the canonical form");
  val->add_option("--config", validate_path)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      rlvr::TrainOptions opts;
      opts.resume = resume;
      if (stop_after > 0) opts.stop_after = stop_after;
      const auto result = rlvr::train(rlvr::load_config(config_path), opts);
      std::cout << "trained through step " << result.last_step << "\nmetrics: " << result.metrics_path.string()
                << "\ncheckpoint: " << result.checkpoint_path.string() << "\n";
    } else if (*eval) {
      const rlvr::Checkpoint ckpt = rlvr::load_checkpoint(ckpt_path);
      const rlvr::TaskSpec task = rlvr::make_task(ckpt.config.task);
      const auto ks = parse_k_list(k_text);
      const auto r = rlvr::evaluate(ckpt.policy, task, n_samples, ks, eval_seed, ckpt.config.algorithm.temperature,
                                    ckpt.config.schedule.lambda_k_max);
      nlohmann::json out;
      for (std::size_t i = 0; i < ks.size(); ++i) out["pass_at_k"][std::to_string(ks[i])] = r.pass_at_k[i];
      out["mean_reward"] = r.mean_reward;
      out["lambda_sampled"] = r.lambda.lambda_sampled;
      out["lambda_rank"] = r.lambda.lambda_rank;
      std::cout << out.dump(2) << "\n";
    } else if (*gc) {
      const auto cases = rlvr::default_gradcheck_cases();
      const auto summaries = rlvr::gradcheck(cases, trials, gc_seed);
      bool ok = true;
      for (const auto& s : summaries) {
        const bool pass = s.max_rel_error <= gc_tol;
        ok = ok && pass;
        std::printf("%-32s trials=%d max_rel=%.3e max_abs=%.3e %s\n", s.label.c_str(), s.trials, s.max_rel_error,
                    s.max_abs_error, pass ? "ok" : "FAIL");
      }
      return ok ? 0 : 1;
    } else if (*exp) {
      const auto r = rlvr::export_plot_data(metrics_path, rlvr::plot_kind_from_string(kind_text), out_dir);
      std::cout << r.csv_path.string() << ": " << r.rows_written << " rows";
      if (r.malformed_rows) std::cout << ", " << r.malformed_rows << " malformed rows skipped";
      std::cout << "\n";
    } else if (*val) {
      std::cout << rlvr::to_ini(rlvr::load_config(validate_path));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
