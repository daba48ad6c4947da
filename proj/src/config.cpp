#include "scoreflow/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <type_traits>

#include "scoreflow/error.hpp"

namespace scoreflow::io {

namespace {

static_assert(std::is_same_v<std::uint64_t, std::size_t>);

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(value) + "' as " +
                    expected);
}

template <class T>
T parse_number(std::string_view key, std::string_view v, const char* expected) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc{} || res.ptr != end) bad_value(key, v, expected);
  return out;
}

void parse_into(std::string_view key, std::string_view v, double& out) {
  out = parse_number<double>(key, v, "a real number");
}
void parse_into(std::string_view key, std::string_view v, std::size_t& out) {
  out = parse_number<std::size_t>(key, v, "a non-negative integer");
}
void parse_into(std::string_view key, std::string_view v, std::int64_t& out) {
  out = parse_number<std::int64_t>(key, v, "an integer");
}
void parse_into(std::string_view key, std::string_view v, bool& out) {
  if (v == "true" || v == "1") {
    out = true;
  } else if (v == "false" || v == "0") {
    out = false;
  } else {
    bad_value(key, v, "a boolean");
  }
}
void parse_into(std::string_view, std::string_view v, std::string& out) { out = std::string(v); }
void parse_into(std::string_view key, std::string_view v, sampler::Variant& out) {
  try {
    out = sampler::variant_from_name(v);
  } catch (const std::exception&) {
    bad_value(key, v, "a sampler variant");
  }
}
template <class T>
void parse_into(std::string_view key, std::string_view v, std::vector<T>& out) {
  out.clear();
  if (trim(v).empty()) return;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const auto item = trim(v.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    T x{};
    parse_into(key, item, x);
    out.push_back(x);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
}

std::string format(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}
std::string format(std::size_t x) { return std::to_string(x); }
std::string format(std::int64_t x) { return std::to_string(x); }
std::string format(bool x) { return x ? "true" : "false"; }
std::string format(const std::string& x) { return x; }
std::string format(sampler::Variant v) { return std::string(sampler::variant_name(v)); }
template <class T>
std::string format(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += format(xs[i]);
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class Ref>
Field field(std::string key, Ref ref) {
  Field f;
  f.key = key;
  f.set = [ref, key](RunConfig& c, std::string_view v) { parse_into(key, v, ref(c)); };
  f.get = [ref](const RunConfig& c) { return format(ref(const_cast<RunConfig&>(c))); };
  return f;
}

#define SF_FIELD(key, expr) field(key, [](RunConfig& c) -> auto& { return expr; })

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      SF_FIELD("seed", c.seed),
      SF_FIELD("seeds", c.seeds),
      SF_FIELD("output_dir", c.output_dir),
      SF_FIELD("env.horizon", c.finetune.env.horizon),
      SF_FIELD("env.action_scale", c.finetune.env.action_scale),
      SF_FIELD("env.arena_bound", c.finetune.env.arena_bound),
      SF_FIELD("env.init_range", c.finetune.env.init_range),
      SF_FIELD("demos.episodes", c.demos.episodes),
      SF_FIELD("demos.gain", c.demos.gain),
      SF_FIELD("demos.noise_std", c.demos.noise_std),
      SF_FIELD("demos.seed", c.demos.seed),
      SF_FIELD("flow.hidden", c.flow.hidden),
      SF_FIELD("flow.steps", c.flow.steps),
      SF_FIELD("flow.batch_size", c.flow.batch_size),
      SF_FIELD("flow.lr", c.flow.lr),
      SF_FIELD("flow.min_lr", c.flow.min_lr),
      SF_FIELD("flow.warmup_steps", c.flow.warmup_steps),
      SF_FIELD("sampler.variant", c.finetune.sampler.variant),
      SF_FIELD("sampler.steps", c.finetune.sampler.steps),
      SF_FIELD("sampler.clip_enabled", c.finetune.sampler.clip.enabled),
      SF_FIELD("sampler.clip_intermediate", c.finetune.sampler.clip.intermediate),
      SF_FIELD("sampler.clip_final", c.finetune.sampler.clip.final),
      SF_FIELD("sampler.lambda_max", c.finetune.sampler.lambda_max),
      SF_FIELD("score_control.hidden_dim", c.finetune.score_hidden_dim),
      SF_FIELD("score_control.variance_hidden", c.finetune.variance_hidden),
      SF_FIELD("score_control.sigma_min", c.finetune.sigma_min),
      SF_FIELD("score_control.sigma_max", c.finetune.sigma_max),
      SF_FIELD("schedule.hold_ratio", c.finetune.noise.hold_ratio),
      SF_FIELD("schedule.decay_target_mix", c.finetune.noise.decay_target_mix),
      SF_FIELD("ppo.clip_eps", c.finetune.ppo.clip_eps),
      SF_FIELD("ppo.gamma", c.finetune.ppo.gamma),
      SF_FIELD("ppo.gae_lambda", c.finetune.ppo.gae_lambda),
      SF_FIELD("ppo.update_epochs", c.finetune.ppo.update_epochs),
      SF_FIELD("ppo.minibatch_size", c.finetune.ppo.minibatch_size),
      SF_FIELD("ppo.entropy_coef", c.finetune.ppo.entropy_coef),
      SF_FIELD("ppo.bc_coef", c.finetune.ppo.bc_coef),
      SF_FIELD("ppo.critic_coef", c.finetune.ppo.critic_coef),
      SF_FIELD("ppo.target_kl", c.finetune.ppo.target_kl),
      SF_FIELD("ppo.max_grad_norm", c.finetune.ppo.max_grad_norm),
      SF_FIELD("ppo.normalize_advantage", c.finetune.ppo.normalize_advantage),
      SF_FIELD("ppo.normalize_reward", c.finetune.ppo.normalize_reward),
      SF_FIELD("ppo.critic_warmup_iters", c.finetune.ppo.critic_warmup_iters),
      SF_FIELD("ppo.train_velocity", c.finetune.ppo.train_velocity),
      SF_FIELD("finetune.n_envs", c.finetune.n_envs),
      SF_FIELD("finetune.n_iters", c.finetune.n_iters),
      SF_FIELD("finetune.critic_hidden", c.finetune.critic_hidden),
      SF_FIELD("finetune.actor_lr", c.finetune.actor_lr.base),
      SF_FIELD("finetune.actor_min_lr", c.finetune.actor_lr.min),
      SF_FIELD("finetune.actor_lr_cycle", c.finetune.actor_lr.cycle_steps),
      SF_FIELD("finetune.actor_lr_warmup", c.finetune.actor_lr.warmup_steps),
      SF_FIELD("finetune.critic_lr", c.finetune.critic_lr.base),
      SF_FIELD("finetune.critic_min_lr", c.finetune.critic_lr.min),
      SF_FIELD("finetune.critic_lr_cycle", c.finetune.critic_lr.cycle_steps),
      SF_FIELD("finetune.critic_lr_warmup", c.finetune.critic_lr.warmup_steps),
      SF_FIELD("eval.episodes", c.eval_episodes),
  };
  return table;
}

#undef SF_FIELD

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

void require_hidden(const std::vector<std::size_t>& h, const char* key) {
  require(!h.empty(), std::string(key) + " needs at least one hidden layer");
  for (auto w : h) require(w > 0, std::string(key) + " has a zero-width layer");
}

void require_lr(const rl::LrSchedule& s, const char* base, const char* min, const char* cycle, const char* warm) {
  require(s.base > 0.0, std::string(base) + " must be positive");
  require(s.min > 0.0 && s.min <= s.base, std::string(min) + " must lie in (0, " + base + "]");
  require(s.cycle_steps >= 1, std::string(cycle) + " must be at least 1");
  require(s.warmup_steps >= 0 && s.warmup_steps < s.cycle_steps,
          std::string(warm) + " must lie in [0, " + cycle + ")");
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

void validate(const RunConfig& c) {
  const auto& ft = c.finetune;
  require(!c.seeds.empty(), "seeds must list at least one seed");
  require(!c.output_dir.empty(), "output_dir must not be empty");
  require(c.finetune.env.horizon >= 1, "env.horizon must be at least 1");
  require(c.finetune.env.action_scale > 0.0, "env.action_scale must be positive");
  require(c.finetune.env.arena_bound > 0.0, "env.arena_bound must be positive");
  require(c.finetune.env.init_range > 0.0 && c.finetune.env.init_range <= c.finetune.env.arena_bound,
          "env.init_range must lie in (0, env.arena_bound]");
  require(c.demos.episodes >= 1, "demos.episodes must be at least 1");
  require(c.demos.noise_std >= 0.0, "demos.noise_std must be non-negative");
  require_hidden(c.flow.hidden, "flow.hidden");
  require(c.flow.steps >= 1, "flow.steps must be at least 1");
  require(c.flow.batch_size >= 1, "flow.batch_size must be at least 1");
  require(c.flow.lr > 0.0, "flow.lr must be positive");
  require(c.flow.min_lr > 0.0 && c.flow.min_lr <= c.flow.lr, "flow.min_lr must lie in (0, flow.lr]");
  require(c.flow.warmup_steps < c.flow.steps, "flow.warmup_steps must be below flow.steps");
  require(ft.sampler.steps >= 1, "sampler.steps must be at least 1");
  require(ft.sampler.clip.intermediate > 0.0, "sampler.clip_intermediate must be positive");
  require(ft.sampler.clip.final > 0.0, "sampler.clip_final must be positive");
  require(ft.sampler.clip.final <= ft.sampler.clip.intermediate,
          "sampler.clip_final must not exceed sampler.clip_intermediate");
  require(ft.sampler.lambda_max >= 0.0, "sampler.lambda_max must be non-negative");
  require(ft.score_hidden_dim >= 1, "score_control.hidden_dim must be at least 1");
  require_hidden(ft.variance_hidden, "score_control.variance_hidden");
  require(ft.sigma_min > 0.0, "score_control.sigma_min must be positive");
  require(ft.sigma_min < ft.sigma_max, "score_control.sigma_min must be below score_control.sigma_max");
  require(ft.noise.hold_ratio >= 0.0 && ft.noise.hold_ratio <= 1.0, "schedule.hold_ratio must lie in [0, 1]");
  require(ft.noise.decay_target_mix >= 0.0 && ft.noise.decay_target_mix <= 1.0,
          "schedule.decay_target_mix must lie in [0, 1]");
  require(ft.ppo.clip_eps > 0.0, "ppo.clip_eps must be positive");
  require(ft.ppo.gamma >= 0.0 && ft.ppo.gamma < 1.0, "ppo.gamma must lie in [0, 1)");
  require(ft.ppo.gae_lambda >= 0.0 && ft.ppo.gae_lambda <= 1.0, "ppo.gae_lambda must lie in [0, 1]");
  require(ft.ppo.update_epochs >= 1, "ppo.update_epochs must be at least 1");
  require(ft.ppo.minibatch_size >= 1, "ppo.minibatch_size must be at least 1");
  require(ft.ppo.entropy_coef >= 0.0, "ppo.entropy_coef must be non-negative");
  require(ft.ppo.bc_coef >= 0.0, "ppo.bc_coef must be non-negative");
  require(ft.ppo.critic_coef > 0.0, "ppo.critic_coef must be positive");
  require(ft.ppo.target_kl > 0.0, "ppo.target_kl must be positive");
  require(ft.ppo.max_grad_norm > 0.0, "ppo.max_grad_norm must be positive");
  require(ft.n_envs >= 1, "finetune.n_envs must be at least 1");
  require(ft.n_iters >= 1, "finetune.n_iters must be at least 1");
  require_hidden(ft.critic_hidden, "finetune.critic_hidden");
  require_lr(ft.actor_lr, "finetune.actor_lr", "finetune.actor_min_lr", "finetune.actor_lr_cycle",
             "finetune.actor_lr_warmup");
  require_lr(ft.critic_lr, "finetune.critic_lr", "finetune.critic_min_lr", "finetune.critic_lr_cycle",
             "finetune.critic_lr_warmup");
  require(c.eval_episodes >= 1, "eval.episodes must be at least 1");
}

RunConfig parse_config(std::string_view text) {
  RunConfig c;
  const auto& table = fields();
  for (const auto& f : table) c.provenance[f.key] = "default";
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    const auto value = trim(line.substr(eq + 1));
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError("config key '" + key + "' given twice");
    it->set(c, value);
    c.provenance[key] = "file";
  }
  c.flow.seed = c.seed;
  validate(c);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const RunConfig& c) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(c) + "\n";
  return out;
}

bool apply_env_overrides(RunConfig& c) {
  const char* env = std::getenv("SCOREFLOW_SEED");
  if (env == nullptr || *env == '\0') return false;
  const std::string_view v(env);
  std::uint64_t seed = 0;
  parse_into("SCOREFLOW_SEED", v, seed);
  c.seed = seed;
  c.flow.seed = seed;
  c.provenance["seed"] = "env";
  return true;
}

bool same_settings(const RunConfig& a, const RunConfig& b) { return to_text(a) == to_text(b); }

}  // namespace scoreflow::io
