#include "scoreflow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace scoreflow::io {

namespace {

using Kind = CheckpointError::Kind;

class Writer {
 public:
  void u64(std::uint64_t x) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
  }
  void u32(std::uint32_t x) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
  }
  void f64(double x) { u64(std::bit_cast<std::uint64_t>(x)); }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }

  void f64s(std::span<const double> xs) {
    u64(xs.size());
    for (double x : xs) f64(x);
  }
  void u64s(std::span<const std::uint64_t> xs) {
    u64(xs.size());
    for (auto x : xs) u64(x);
  }
  void bytes(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }

  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw CheckpointError(Kind::kTruncated, std::string("checkpoint truncated while reading ") + what);
    }
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return x;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return x;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::size_t length(std::size_t item, const char* what) {
    const auto n = u64(what);
    if (n > (in_.size() - pos_) / item) {
      throw CheckpointError(Kind::kTruncated, std::string("checkpoint truncated in ") + what);
    }
    return static_cast<std::size_t>(n);
  }
  std::vector<double> f64s(const char* what) {
    const auto n = length(8, what);
    std::vector<double> xs(n);
    for (auto& x : xs) x = f64(what);
    return xs;
  }
  std::vector<std::uint64_t> u64s(const char* what) {
    const auto n = length(8, what);
    std::vector<std::uint64_t> xs(n);
    for (auto& x : xs) x = u64(what);
    return xs;
  }
  std::string bytes(const char* what) {
    const auto n = length(1, what);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string_view raw(std::size_t n, const char* what) {
    need(n, what);
    std::string_view v(in_.data() + pos_, n);
    pos_ += n;
    return v;
  }
  bool at_end() const { return pos_ == in_.size(); }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

// Bundle layout: [n_layers, (in, out, act) per layer] then the flat values.
void write_bundle(Writer& w, const std::vector<nn::LayerSpec>& layers, std::span<const double> values) {
  std::vector<std::uint64_t> shape{layers.size()};
  for (const auto& l : layers) {
    shape.push_back(l.in);
    shape.push_back(l.out);
    shape.push_back(static_cast<std::uint64_t>(l.act));
  }
  w.u64s(shape);
  w.f64s(values);
}

std::vector<nn::LayerSpec> read_layers(Reader& r, const char* what) {
  const auto shape = r.u64s(what);
  if (shape.empty() || shape.size() != 1 + 3 * shape[0]) {
    throw CheckpointError(Kind::kMalformed, std::string("malformed layer table in ") + what);
  }
  std::vector<nn::LayerSpec> layers;
  for (std::size_t i = 0; i < shape[0]; ++i) {
    const auto act = shape[1 + 3 * i + 2];
    if (act > static_cast<std::uint64_t>(nn::Activation::kSoftplus)) {
      throw CheckpointError(Kind::kMalformed, std::string("unknown activation in ") + what);
    }
    layers.push_back({shape[1 + 3 * i], shape[2 + 3 * i], static_cast<nn::Activation>(act)});
  }
  return layers;
}

nn::ParamBundle read_bundle(Reader& r, const char* what) {
  nn::ParamBundle p;
  try {
    p = nn::ParamBundle(read_layers(r, what));
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(Kind::kMalformed, std::string(what) + ": " + e.what());
  }
  const auto values = r.f64s(what);
  if (values.size() != p.size()) throw CheckpointError(Kind::kMalformed, std::string("size mismatch in ") + what);
  std::copy(values.begin(), values.end(), p.values().begin());
  return p;
}

void write_optimizer(Writer& w, const nn::OptimizerState& s) {
  write_bundle(w, s.layers, s.first_moment);
  w.f64s(s.second_moment);
  w.u64(static_cast<std::uint64_t>(s.step));
  const double hyper[3] = {s.beta1, s.beta2, s.eps};
  w.f64s(hyper);
}

nn::OptimizerState read_optimizer(Reader& r, const char* what) {
  nn::OptimizerState s;
  s.layers = read_layers(r, what);
  s.first_moment = r.f64s(what);
  s.second_moment = r.f64s(what);
  if (s.first_moment.size() != s.second_moment.size()) {
    throw CheckpointError(Kind::kMalformed, std::string("moment size mismatch in ") + what);
  }
  s.step = static_cast<std::int64_t>(r.u64(what));
  const auto hyper = r.f64s(what);
  if (hyper.size() != 3) throw CheckpointError(Kind::kMalformed, std::string("bad hyperparameters in ") + what);
  s.beta1 = hyper[0];
  s.beta2 = hyper[1];
  s.eps = hyper[2];
  return s;
}

}  // namespace

std::string serialize(const Checkpoint& c) {
  Writer w;
  w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.bytes(c.config_text);
  w.f64s(c.normalizer.low);
  w.f64s(c.normalizer.high);
  const std::uint64_t dims[2] = {c.velocity.action_dim, c.velocity.obs_dim};
  w.u64s(dims);
  write_bundle(w, c.velocity.params.layers(), c.velocity.params.values());
  write_optimizer(w, c.velocity_optimizer);
  w.u64(c.learner ? 1 : 0);
  if (c.learner) {
    const auto& l = *c.learner;
    const std::uint64_t ldims[2] = {l.policy.velocity.action_dim, l.policy.velocity.obs_dim};
    w.u64s(ldims);
    write_bundle(w, l.policy.velocity.params.layers(), l.policy.velocity.params.values());
    write_bundle(w, l.policy.heads.scheduler.params.layers(), l.policy.heads.scheduler.params.values());
    const auto& v = l.policy.heads.variance;
    const std::uint64_t vdims[2] = {v.action_dim, v.obs_dim};
    w.u64s(vdims);
    write_bundle(w, v.params.layers(), v.params.values());
    const double bounds[3] = {v.sigma_min, v.sigma_max, v.sigma_max_effective};
    w.f64s(bounds);
    write_bundle(w, l.critic.params.layers(), l.critic.params.values());
    write_optimizer(w, l.opt_velocity);
    write_optimizer(w, l.opt_scheduler);
    write_optimizer(w, l.opt_variance);
    write_optimizer(w, l.opt_critic);
    const auto& rn = l.reward_norm;
    const double stat[5] = {rn.stat.count, rn.stat.mean, rn.stat.m2, rn.gamma, rn.eps};
    w.f64s(stat);
    w.f64s(rn.running_returns);
    w.u64(static_cast<std::uint64_t>(l.iteration));
  }
  return w.take();
}

Checkpoint deserialize(const std::string& bytes) {
  Reader r(bytes);
  const auto magic = r.raw(sizeof kCheckpointMagic, "magic");
  if (std::memcmp(magic.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw CheckpointError(Kind::kBadMagic, "bad magic: not a scoreflow checkpoint");
  }
  const auto version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(Kind::kVersionMismatch, "checkpoint version " + std::to_string(version) +
                                                      " does not match supported version " +
                                                      std::to_string(kCheckpointVersion));
  }
  Checkpoint c;
  c.config_text = r.bytes("config");
  c.normalizer.low = r.f64s("normalizer");
  c.normalizer.high = r.f64s("normalizer");
  const auto dims = r.u64s("velocity dims");
  if (dims.size() != 2) throw CheckpointError(Kind::kMalformed, "bad velocity dims");
  c.velocity.action_dim = dims[0];
  c.velocity.obs_dim = dims[1];
  c.velocity.params = read_bundle(r, "velocity");
  c.velocity_optimizer = read_optimizer(r, "velocity optimizer");
  const auto has_learner = r.u64("learner flag");
  if (has_learner > 1) throw CheckpointError(Kind::kMalformed, "bad learner flag");
  if (has_learner) {
    rl::Learner l;
    const auto ld = r.u64s("policy dims");
    if (ld.size() != 2) throw CheckpointError(Kind::kMalformed, "bad policy dims");
    l.policy.velocity.action_dim = ld[0];
    l.policy.velocity.obs_dim = ld[1];
    l.policy.velocity.params = read_bundle(r, "policy velocity");
    l.policy.heads.scheduler.params = read_bundle(r, "scheduler");
    auto& v = l.policy.heads.variance;
    const auto vd = r.u64s("variance dims");
    if (vd.size() != 2) throw CheckpointError(Kind::kMalformed, "bad variance dims");
    v.action_dim = vd[0];
    v.obs_dim = vd[1];
    v.params = read_bundle(r, "variance");
    const auto bounds = r.f64s("variance bounds");
    if (bounds.size() != 3) throw CheckpointError(Kind::kMalformed, "bad variance bounds");
    v.sigma_min = bounds[0];
    v.sigma_max = bounds[1];
    v.sigma_max_effective = bounds[2];
    l.critic.params = read_bundle(r, "critic");
    l.opt_velocity = read_optimizer(r, "velocity optimizer");
    l.opt_scheduler = read_optimizer(r, "scheduler optimizer");
    l.opt_variance = read_optimizer(r, "variance optimizer");
    l.opt_critic = read_optimizer(r, "critic optimizer");
    const auto stat = r.f64s("reward normalizer");
    if (stat.size() != 5) throw CheckpointError(Kind::kMalformed, "bad reward normalizer");
    l.reward_norm.stat = {stat[0], stat[1], stat[2]};
    l.reward_norm.gamma = stat[3];
    l.reward_norm.eps = stat[4];
    l.reward_norm.running_returns = r.f64s("running returns");
    l.iteration = static_cast<std::int64_t>(r.u64("iteration"));
    c.learner = std::move(l);
  }
  if (!r.at_end()) throw CheckpointError(Kind::kMalformed, "trailing bytes after checkpoint");
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const auto bytes = serialize(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(Kind::kIo, "cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(Kind::kIo, "short write to '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Kind::kIo, "cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

}  // namespace scoreflow::io
