#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "scoreflow/flow.hpp"
#include "scoreflow/rl.hpp"

namespace scoreflow::io {

inline constexpr char kCheckpointMagic[8] = {'S', 'C', 'O', 'R', 'E', 'F', 'L', 'W'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { kIo, kBadMagic, kTruncated, kVersionMismatch, kMalformed };

  CheckpointError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Persisted run state. After pretraining only the velocity field and its
/// optimizer exist; once fine-tuning starts `learner` carries every network.
struct Checkpoint {
  std::string config_text;
  flow::ActionNormalizer normalizer;
  flow::VelocityField velocity;
  nn::OptimizerState velocity_optimizer;
  std::optional<rl::Learner> learner;

  /// Velocity field currently in force.
  const flow::VelocityField& current_velocity() const {
    return learner ? learner->policy.velocity : velocity;
  }

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::string serialize(const Checkpoint& ckpt);
Checkpoint deserialize(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace scoreflow::io
