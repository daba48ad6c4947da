#include "scoreflow/commands.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "scoreflow/checkpoint.hpp"
#include "scoreflow/config.hpp"
#include "scoreflow/error.hpp"
#include "scoreflow/stats.hpp"
#include "scoreflow/verify.hpp"

namespace scoreflow::io {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write '" + path.string() + "'");
  return out;
}

RunConfig config_for(const std::string& path, std::ostream& log) {
  RunConfig cfg = path.empty() ? parse_config("") : load_config(path);
  if (apply_env_overrides(cfg)) log << "seed overridden by SCOREFLOW_SEED: " << cfg.seed << "\n";
  return cfg;
}

flow::DemoDataset with_normalizer(const DemoTable& table, const flow::ActionNormalizer& norm) {
  flow::DemoDataset data;
  data.obs_dim = table.obs_dim;
  data.action_dim = table.action_dim;
  data.observations = table.observations;
  data.normalizer = norm;
  for (std::size_t i = 0; i * table.action_dim < table.actions.size(); ++i) {
    const auto row = norm.normalize(std::span<const double>(table.actions).subspan(i * table.action_dim, table.action_dim));
    data.actions.insert(data.actions.end(), row.begin(), row.end());
  }
  return data;
}

flow::DemoDataset load_demos(const RunConfig& cfg, const std::string& demos_path, const flow::ActionNormalizer* norm) {
  if (demos_path.empty()) {
    auto data = rl::generate_demos(cfg.finetune.env, cfg.demos);
    if (norm != nullptr && !(data.normalizer == *norm)) {
      throw UsageError("scripted demonstrations do not match the checkpoint normalization; pass --demos");
    }
    return data;
  }
  const auto table = read_demo_csv(demos_path);
  if (norm != nullptr) return with_normalizer(table, *norm);
  return flow::DemoDataset::from_raw(table.obs_dim, table.action_dim, table.observations, table.actions);
}

sampler::Policy policy_from(const Checkpoint& ckpt, const RunConfig& cfg) {
  if (ckpt.learner) return ckpt.learner->policy;
  return rl::make_learner(ckpt.velocity, cfg.finetune, cfg.seed).policy;
}

std::vector<std::string> split_header(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) {
    while (!item.empty() && (item.back() == '\r' || item.back() == ' ')) item.pop_back();
    out.push_back(item);
  }
  return out;
}

}  // namespace

std::string format_number(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

DemoTable read_demo_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open demonstrations '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("demonstration file '" + path + "' is empty");
  const auto header = split_header(line);
  DemoTable t;
  bool in_actions = false;
  for (const auto& h : header) {
    if (h.rfind("obs_", 0) == 0 && !in_actions) {
      ++t.obs_dim;
    } else if (h.rfind("act_", 0) == 0) {
      in_actions = true;
      ++t.action_dim;
    } else {
      throw ConfigError("demonstration header column '" + h + "' is not obs_* or act_* in order");
    }
  }
  if (t.action_dim == 0) throw ConfigError("demonstration file '" + path + "' has no act_* columns");
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_header(line);
    if (cells.size() != header.size()) {
      throw ConfigError("demonstration row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                        " cells, expected " + std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double x = 0.0;
      const auto res = std::from_chars(cells[c].data(), cells[c].data() + cells[c].size(), x);
      if (res.ec != std::errc{} || res.ptr != cells[c].data() + cells[c].size()) {
        throw ConfigError("demonstration row " + std::to_string(row) + ": bad number '" + cells[c] + "'");
      }
      (c < t.obs_dim ? t.observations : t.actions).push_back(x);
    }
  }
  if (t.actions.empty()) throw ConfigError("demonstration file '" + path + "' has no rows");
  return t;
}

void write_demo_csv(const std::string& path, const DemoTable& t) {
  auto out = open_out(path);
  for (std::size_t i = 0; i < t.obs_dim; ++i) out << "obs_" << i << ",";
  for (std::size_t i = 0; i < t.action_dim; ++i) out << "act_" << i << (i + 1 < t.action_dim ? "," : "\n");
  const std::size_t n = t.actions.size() / t.action_dim;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < t.obs_dim; ++i) out << format_number(t.observations[r * t.obs_dim + i]) << ",";
    for (std::size_t i = 0; i < t.action_dim; ++i) {
      out << format_number(t.actions[r * t.action_dim + i]) << (i + 1 < t.action_dim ? "," : "\n");
    }
  }
}

int cmd_verify(const VerifyOptions& options, std::ostream& log) {
  const auto results = verify::run_battery(options.include_training);
  auto out = open_out(options.report_path);
  out << "check,max_residual,threshold,pass\n";
  bool all = true;
  for (const auto& r : results) {
    out << r.name << "," << format_number(r.value) << "," << format_number(r.threshold) << ","
        << (r.pass ? "true" : "false") << "\n";
    log << (r.pass ? "PASS " : "FAIL ") << r.name << "  value=" << r.value << " threshold=" << r.threshold;
    if (!r.detail.empty()) log << "  (" << r.detail << ")";
    log << "\n";
    all = all && r.pass;
  }
  log << (all ? "all checks passed" : "some checks failed") << "; report written to " << options.report_path << "\n";
  return all ? kExitOk : kExitCheckFailed;
}

int cmd_pretrain(const PretrainOptions& options, std::ostream& log) {
  const RunConfig cfg = config_for(options.config_path, log);
  const fs::path dir = options.out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(options.out_dir);
  const auto data = load_demos(cfg, options.demos_path, nullptr);
  log << "pretraining on " << data.size() << " demonstration pairs\n";
  auto pc = cfg.flow;
  pc.seed = cfg.seed;
  const auto result = flow::pretrain(data, pc);

  {
    auto out = open_out(dir / "pretrain_loss.csv");
    out << "step,loss\n";
    for (std::size_t i = 0; i < result.losses.size(); ++i) out << i << "," << format_number(result.losses[i]) << "\n";
  }
  Checkpoint ckpt;
  ckpt.config_text = to_text(cfg);
  ckpt.normalizer = data.normalizer;
  ckpt.velocity = result.field;
  ckpt.velocity_optimizer = result.optimizer;
  save_checkpoint(ckpt, (dir / "pretrain.ckpt").string());
  log << "final FM loss " << result.final_loss << "; checkpoint " << (dir / "pretrain.ckpt").string() << "\n";
  if (result.diverged) {
    log << "pretraining diverged; kept the last finite parameters\n";
    return kExitCheckFailed;
  }
  return kExitOk;
}

int cmd_finetune(const FinetuneOptions& options, std::ostream& log) {
  if (options.checkpoint_path.empty()) throw UsageError("finetune needs --checkpoint");
  const Checkpoint start = load_checkpoint(options.checkpoint_path);
  RunConfig cfg = options.config_path.empty() ? parse_config(start.config_text) : load_config(options.config_path);
  if (apply_env_overrides(cfg)) log << "seed overridden by SCOREFLOW_SEED: " << cfg.seed << "\n";
  const fs::path dir = options.out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(options.out_dir);
  const auto demos = load_demos(cfg, options.demos_path, &start.normalizer);

  rl::Learner learner = start.learner ? *start.learner : rl::make_learner(start.velocity, cfg.finetune, cfg.seed);
  log << "fine-tuning variant " << sampler::variant_name(cfg.finetune.sampler.variant) << " from iteration "
      << learner.iteration << " to " << cfg.finetune.n_iters << "\n";

  auto metrics = open_out(dir / "metrics.csv");
  metrics << "iter,return_mean,return_std,approx_kl,clip_frac,entropy,sigma_mean,alpha_mean_at_t0,actor_lr,critic_lr\n";
  const auto result = rl::finetune(learner, demos, cfg.finetune, cfg.seed, [&](const rl::IterationMetrics& m,
                                                                                 const rl::Learner&) {
    metrics << m.iter << "," << format_number(m.return_mean) << "," << format_number(m.return_std) << ","
            << format_number(m.approx_kl) << "," << format_number(m.clip_frac) << "," << format_number(m.entropy)
            << "," << format_number(m.sigma_mean) << "," << format_number(m.alpha_mean_at_t0) << ","
            << format_number(m.actor_lr) << "," << format_number(m.critic_lr) << "\n";
    if (m.iter % 10 == 0) log << "iter " << m.iter << " return " << m.return_mean << "\n";
  });

  Checkpoint ckpt;
  ckpt.config_text = to_text(cfg);
  ckpt.normalizer = start.normalizer;
  ckpt.velocity = start.velocity;
  ckpt.velocity_optimizer = start.velocity_optimizer;
  ckpt.learner = result.learner;
  save_checkpoint(ckpt, (dir / "finetune.ckpt").string());
  log << "checkpoint " << (dir / "finetune.ckpt").string() << "\n";
  return kExitOk;
}

int cmd_eval(const EvalOptions& options, std::ostream& log) {
  if (options.runs.empty()) throw UsageError("eval needs at least one run");
  if (options.seeds < 1) throw UsageError("eval needs at least one seed");
  rl::EvalMode mode;
  if (options.mode == "stochastic") {
    mode = rl::EvalMode::kStochastic;
  } else if (options.mode == "ode") {
    mode = rl::EvalMode::kDeterministicOde;
  } else {
    throw UsageError("unknown eval mode '" + options.mode + "' (stochastic or ode)");
  }

  std::vector<std::vector<double>> samples;
  auto out = open_out(options.out_path);
  out << "run,seed,return_mean\n";
  for (const auto& run : options.runs) {
    const auto ckpt = load_checkpoint(run);
    const auto cfg = parse_config(ckpt.config_text);
    const auto policy = policy_from(ckpt, cfg);
    std::vector<double> per_seed;
    for (std::size_t s = 0; s < options.seeds; ++s) {
      const auto returns = rl::evaluate_policy(policy, cfg.finetune.sampler, ckpt.normalizer, cfg.finetune.env,
                                               cfg.eval_episodes, s, mode);
      per_seed.push_back(stats::mean(returns));
      out << run << "," << s << "," << format_number(per_seed.back()) << "\n";
    }
    const double m = stats::mean(per_seed);
    const double sd = per_seed.size() > 1 ? std::sqrt(stats::sample_variance(per_seed)) : 0.0;
    log << run << ": return " << m << " +- " << sd << " over " << per_seed.size() << " seeds\n";
    samples.push_back(std::move(per_seed));
  }
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (options.seeds < 2) {
      log << "welch test needs at least two seeds per run\n";
      break;
    }
    const auto w = stats::welch_t_test(samples[0], samples[i]);
    log << "welch " << options.runs[0] << " vs " << options.runs[i] << ": t = " << w.t << ", df = " << w.df
        << ", p = " << w.p << "\n";
  }
  return kExitOk;
}

int cmd_sweep_alpha(const SweepOptions& options, std::ostream& log) {
  if (options.checkpoints.empty()) throw UsageError("sweep-alpha needs --checkpoint");
  if (options.grid < 2) throw UsageError("sweep-alpha grid needs at least two points");
  auto out = open_out(options.out_path);
  out << "training_stage,t,alpha_scaled\n";
  for (const auto& path : options.checkpoints) {
    const auto ckpt = load_checkpoint(path);
    const auto cfg = parse_config(ckpt.config_text);
    const auto policy = policy_from(ckpt, cfg);
    const std::int64_t stage = ckpt.learner ? ckpt.learner->iteration : 0;
    for (std::size_t i = 0; i < options.grid; ++i) {
      const double t = static_cast<double>(i) / static_cast<double>(options.grid - 1);
      out << stage << "," << format_number(t) << ","
          << format_number(control::alpha_scaled(policy.heads.scheduler, t)) << "\n";
    }
    log << path << ": stage " << stage << ", alpha_scaled(0) = " << control::alpha_scaled(policy.heads.scheduler, 0.0)
        << "\n";
  }
  return kExitOk;
}

}  // namespace scoreflow::io
