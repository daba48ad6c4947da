#include <iostream>

#include "CLI11.hpp"
#include "scoreflow/checkpoint.hpp"
#include "scoreflow/commands.hpp"
#include "scoreflow/error.hpp"

using namespace scoreflow;

int main(int argc, char** argv) {
  CLI::App app{"scoreflow: flow-policy fine-tuning with score drift and learned variance"};
  app.require_subcommand(1);

  io::VerifyOptions verify;
  bool quick = false;
  auto* v = app.add_subcommand("verify", "run the oracle and invariant battery");
  v->add_option("--report", verify.report_path, "CSV report path")->capture_default_str();
  v->add_flag("--quick", quick, "skip the check that trains a network");

  io::PretrainOptions pre;
  auto* p = app.add_subcommand("pretrain", "flow-matching pretraining on demonstrations");
  p->add_option("--config", pre.config_path, "config file");
  p->add_option("--demos", pre.demos_path, "demonstration CSV (scripted demos when omitted)");
  p->add_option("--out", pre.out_dir, "output directory (config output_dir when omitted)");

  io::FinetuneOptions ft;
  auto* f = app.add_subcommand("finetune", "online fine-tuning from a checkpoint");
  f->add_option("--config", ft.config_path, "config file (checkpoint config when omitted)");
  f->add_option("--checkpoint", ft.checkpoint_path, "pretrain or finetune checkpoint")->required();
  f->add_option("--demos", ft.demos_path, "demonstration CSV for the BC term");
  f->add_option("--out", ft.out_dir, "output directory");

  io::EvalOptions ev;
  auto* e = app.add_subcommand("eval", "evaluate checkpoints and compare them");
  e->add_option("--runs", ev.runs, "comma-separated checkpoint paths")->required()->delimiter(',');
  e->add_option("--seeds", ev.seeds, "evaluation seeds per run")->capture_default_str();
  e->add_option("--mode", ev.mode, "stochastic or ode")->capture_default_str();
  e->add_option("--out", ev.out_path, "per-seed CSV")->capture_default_str();

  io::SweepOptions sw;
  auto* s = app.add_subcommand("sweep-alpha", "export alpha_scaled(t) per checkpoint");
  s->add_option("--checkpoint", sw.checkpoints, "comma-separated checkpoint paths")->required()->delimiter(',');
  s->add_option("--grid", sw.grid, "number of t points on [0, 1]")->capture_default_str();
  s->add_option("--out", sw.out_path, "CSV path")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? io::kExitOk : io::kExitUsage;
  }

  try {
    if (*v) {
      verify.include_training = !quick;
      return io::cmd_verify(verify, std::cout);
    }
    if (*p) return io::cmd_pretrain(pre, std::cout);
    if (*f) return io::cmd_finetune(ft, std::cout);
    if (*e) return io::cmd_eval(ev, std::cout);
    if (*s) return io::cmd_sweep_alpha(sw, std::cout);
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return io::kExitUsage;
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return io::kExitUsage;
  } catch (const io::CheckpointError& err) {
    std::cerr << "checkpoint error: " << err.what() << "\n";
    return io::kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return io::kExitCheckFailed;
  }
  return io::kExitUsage;
}
