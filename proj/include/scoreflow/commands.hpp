#pragma once

#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "scoreflow/flow.hpp"

namespace scoreflow::io {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

struct VerifyOptions {
  std::string report_path = "verify_report.csv";
  bool include_training = true;
};

struct PretrainOptions {
  std::string config_path;
  std::string demos_path;  // optional CSV; scripted demos otherwise
  std::string out_dir;     // defaults to the config's output_dir
};

struct FinetuneOptions {
  std::string config_path;  // optional; the checkpoint's config otherwise
  std::string checkpoint_path;
  std::string demos_path;
  std::string out_dir;
};

struct EvalOptions {
  std::vector<std::string> runs;  // checkpoint paths
  std::size_t seeds = 5;
  std::string mode = "stochastic";  // or "ode"
  std::string out_path = "eval.csv";
};

struct SweepOptions {
  std::vector<std::string> checkpoints;
  std::size_t grid = 11;
  std::string out_path = "alpha_sweep.csv";
};

/// Each command returns an exit status and writes progress to `log`.
int cmd_verify(const VerifyOptions& options, std::ostream& log);
int cmd_pretrain(const PretrainOptions& options, std::ostream& log);
int cmd_finetune(const FinetuneOptions& options, std::ostream& log);
int cmd_eval(const EvalOptions& options, std::ostream& log);
int cmd_sweep_alpha(const SweepOptions& options, std::ostream& log);

/// Demonstration CSV: header `obs_0,...,obs_{n-1},act_0,...,act_{d-1}`, one row per pair, raw actions.
struct DemoTable {
  std::size_t obs_dim = 0;
  std::size_t action_dim = 0;
  std::vector<double> observations;
  std::vector<double> actions;
};

DemoTable read_demo_csv(const std::string& path);
void write_demo_csv(const std::string& path, const DemoTable& table);

/// Shortest round-trip decimal form, used for every CSV number.
std::string format_number(double x);

}  // namespace scoreflow::io
