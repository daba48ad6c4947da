#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "scoreflow/env.hpp"
#include "scoreflow/flow.hpp"
#include "scoreflow/rl.hpp"

namespace scoreflow::io {

/// Every tunable of a run. Keys in the text format are `section.field`; the
/// `env.*` keys fill `finetune.env`.
struct RunConfig {
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::string output_dir = "runs";

  rl::DemoConfig demos;
  flow::PretrainConfig flow;
  rl::FinetuneConfig finetune;
  std::size_t eval_episodes = 32;

  /// Key -> "default", "file" or "env".
  std::map<std::string, std::string> provenance;
};

/// Parses `key = value` lines; `#` starts a comment. Unknown keys, malformed
/// values and violated cross-field constraints raise ConfigError naming the key.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::string& path);

/// Checks every cross-field constraint; throws ConfigError.
void validate(const RunConfig& config);

/// Canonical text form listing every key; parse_config(to_text(c)) == c.
std::string to_text(const RunConfig& config);

/// Applies SCOREFLOW_SEED when set. Returns true if it changed anything.
bool apply_env_overrides(RunConfig& config);

/// All recognised keys in canonical order.
std::vector<std::string> config_keys();

/// Field-wise equality ignoring provenance.
bool same_settings(const RunConfig& a, const RunConfig& b);

}  // namespace scoreflow::io
