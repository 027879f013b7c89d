#include "dualglob/config.hpp"

#include <fstream>
#include <set>

#include "dualglob/error.hpp"

namespace dualglob {

using nlohmann::json;

std::string_view to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision parse_precision(std::string_view s) {
  if (s == "f32" || s == "float") return Precision::f32;
  if (s == "f64" || s == "double") return Precision::f64;
  throw ConfigError("precision must be f32 or f64, got '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  objective.validate();
  params.validate();
  nn::EncoderConfig::standard(d_emb);
  optimizer().validate();
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (folds < 2) throw ConfigError("folds must be >= 2");
  if (keep_last < 1) throw ConfigError("keep_last must be >= 1");
}

nn::OptimizerConfig TrainConfig::optimizer() const {
  nn::OptimizerConfig o;
  o.lr = lr;
  o.weight_decay = weight_decay;
  return o;
}

json to_json(const TrainConfig& c) {
  const auto& p = c.params;
  return json{
      {"objective", std::string(objective_key(c.objective.kind))},
      {"tau", c.objective.tau},
      {"lambda1", c.objective.lambda1},
      {"lambda2", c.objective.lambda2},
      {"strategy", c.strategy.name()},
      {"jitter_sd", p.jitter_sd},
      {"scale_min", p.scale_range.first},
      {"scale_max", p.scale_range.second},
      {"mask_ratio", p.mask_ratio},
      {"shift_min", p.shift_range.first},
      {"shift_max", p.shift_range.second},
      {"shift_in_log_space", p.shift_in_log_space},
      {"warp_knots", p.warp_knots},
      {"warp_sd", p.warp_sd},
      {"d_emb", c.d_emb},
      {"lr", c.lr},
      {"weight_decay", c.weight_decay},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"seed", c.seed},
      {"batch_duplication", c.batch_duplication},
      {"folds", c.folds},
      {"fold_seed", c.fold_seed},
      {"keep_last", c.keep_last},
      {"precision", std::string(to_string(c.precision))},
  };
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  TrainConfig c;
  const std::set<std::string> known = [] {
    const json defaults = to_json(TrainConfig{});
    std::set<std::string> k;
    for (auto it = defaults.begin(); it != defaults.end(); ++it) k.insert(it.key());
    return k;
  }();
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ConfigError("unknown config key '" + it.key() + "'");

  auto get = [&](const char* key, auto& dst) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(dst);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
  };
  std::string s;
  if (j.contains("objective")) {
    get("objective", s);
    c.objective.kind = parse_objective(s);
  }
  get("tau", c.objective.tau);
  get("lambda1", c.objective.lambda1);
  get("lambda2", c.objective.lambda2);
  if (j.contains("strategy")) {
    get("strategy", s);
    c.strategy = SelectionStrategy::parse(s);
  }
  auto& p = c.params;
  get("jitter_sd", p.jitter_sd);
  get("scale_min", p.scale_range.first);
  get("scale_max", p.scale_range.second);
  get("mask_ratio", p.mask_ratio);
  get("shift_min", p.shift_range.first);
  get("shift_max", p.shift_range.second);
  get("shift_in_log_space", p.shift_in_log_space);
  get("warp_knots", p.warp_knots);
  get("warp_sd", p.warp_sd);
  get("d_emb", c.d_emb);
  get("lr", c.lr);
  get("weight_decay", c.weight_decay);
  get("batch_size", c.batch_size);
  get("epochs", c.epochs);
  get("seed", c.seed);
  get("batch_duplication", c.batch_duplication);
  get("folds", c.folds);
  get("fold_seed", c.fold_seed);
  get("keep_last", c.keep_last);
  if (j.contains("precision")) {
    get("precision", s);
    c.precision = parse_precision(s);
  }
  c.validate();
  return c;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return out;
}

std::string config_hash(const TrainConfig& c) { return hex64(fnv1a64(to_json(c).dump())); }

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace dualglob
