#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>

#include <json.hpp>

#include "restyle/diffusion.hpp"
#include "restyle/error.hpp"
#include "restyle/lift.hpp"
#include "restyle/scene_io.hpp"
#include "restyle/segmatch.hpp"
#include "restyle/warpgeom.hpp"

namespace restyle {

struct PipelineConfig {
  struct Diffusion {
    int steps = 50;
    ScheduleKind schedule = ScheduleKind::Cosine;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    double alpha = 7.5;
    double lambda_s = 0.5;
    double lambda_d = 0.5;
    double strength = 0.3;
  } diffusion;

  struct Warp {
    double beta = 10.0;
    double gamma = 1.0;
    double eps_cov = 1e-4;
    double margin = 0.0;
    FrameStrategy strategy = FrameStrategy::LastPlusTwoRandom;
    LiftDirection direction = LiftDirection::Forward;
    bool reimpose = true;
  } warp;

  struct Attention {
    int d = 16;
    double temperature = 1.0;
    UnmatchedPolicy unmatched = UnmatchedPolicy::GlobalAttend;
  } attention;

  std::uint64_t seed = 0;

  NoiseSchedule schedule() const {
    ScheduleParams p;
    p.beta_start = diffusion.beta_start;
    p.beta_end = diffusion.beta_end;
    return make_schedule(diffusion.steps, diffusion.schedule, p);
  }
  GuidanceParams guidance() const { return {diffusion.alpha, diffusion.lambda_s, diffusion.lambda_d}; }
  LiftConfig lift() const {
    LiftConfig c;
    c.strategy = warp.strategy;
    c.gamma = warp.gamma;
    c.beta = warp.beta;
    c.eps_cov = warp.eps_cov;
    c.margin = warp.margin;
    c.direction = warp.direction;
    return c;
  }
};

// Enum spellings used in config files and on the command line.

inline std::string to_string(ScheduleKind k) { return k == ScheduleKind::Cosine ? "cosine" : "linear"; }
inline std::string to_string(FrameStrategy s) {
  switch (s) {
    case FrameStrategy::LastOnly: return "last";
    case FrameStrategy::AllHistory: return "all";
    case FrameStrategy::LastPlusTwoRandom: return "ours";
  }
  return "ours";
}
inline std::string to_string(LiftDirection d) { return d == LiftDirection::Both ? "both" : "forward"; }
inline std::string to_string(UnmatchedPolicy p) { return p == UnmatchedPolicy::KeepSource ? "keep" : "global"; }

namespace detail {

[[noreturn]] inline void bad_key(const std::string& key, const std::string& why) {
  fail(ErrorCode::ConfigValidation, key + ": " + why);
}

template <typename E>
E parse_enum(const std::string& key, const std::string& value, std::initializer_list<std::pair<const char*, E>> table) {
  std::string allowed;
  for (const auto& [name, e] : table) {
    if (value == name) return e;
    allowed += (allowed.empty() ? "" : "|") + std::string(name);
  }
  bad_key(key, "'" + value + "' is not one of " + allowed);
}

}  // namespace detail

inline ScheduleKind parse_schedule(const std::string& v, const std::string& key = "diffusion.schedule") {
  return detail::parse_enum<ScheduleKind>(key, v, {{"cosine", ScheduleKind::Cosine}, {"linear", ScheduleKind::LinearBeta}});
}
inline FrameStrategy parse_strategy(const std::string& v, const std::string& key = "warp.strategy") {
  return detail::parse_enum<FrameStrategy>(
      key, v,
      {{"last", FrameStrategy::LastOnly}, {"all", FrameStrategy::AllHistory}, {"ours", FrameStrategy::LastPlusTwoRandom}});
}
inline LiftDirection parse_direction(const std::string& v, const std::string& key = "warp.direction") {
  return detail::parse_enum<LiftDirection>(key, v, {{"forward", LiftDirection::Forward}, {"both", LiftDirection::Both}});
}
inline UnmatchedPolicy parse_unmatched(const std::string& v, const std::string& key = "attention.unmatched") {
  return detail::parse_enum<UnmatchedPolicy>(key, v,
                                             {{"global", UnmatchedPolicy::GlobalAttend}, {"keep", UnmatchedPolicy::KeepSource}});
}

inline nlohmann::json config_to_json(const PipelineConfig& c) {
  return {
      {"diffusion",
       {{"steps", c.diffusion.steps},
        {"schedule", to_string(c.diffusion.schedule)},
        {"beta_start", c.diffusion.beta_start},
        {"beta_end", c.diffusion.beta_end},
        {"alpha", c.diffusion.alpha},
        {"lambda_s", c.diffusion.lambda_s},
        {"lambda_d", c.diffusion.lambda_d},
        {"strength", c.diffusion.strength}}},
      {"warp",
       {{"beta", c.warp.beta},
        {"gamma", c.warp.gamma},
        {"eps_cov", c.warp.eps_cov},
        {"margin", c.warp.margin},
        {"strategy", to_string(c.warp.strategy)},
        {"direction", to_string(c.warp.direction)},
        {"reimpose", c.warp.reimpose}}},
      {"attention",
       {{"d", c.attention.d},
        {"temperature", c.attention.temperature},
        {"unmatched", to_string(c.attention.unmatched)}}},
      {"seed", c.seed},
  };
}

/// Checks every documented range; messages start with the offending key.
inline void validate(const PipelineConfig& c) {
  auto finite = [](double v) { return std::isfinite(v); };
  const auto& d = c.diffusion;
  if (d.steps < 1 || d.steps > 10000) detail::bad_key("diffusion.steps", "must lie in [1, 10000]");
  if (!finite(d.beta_start) || d.beta_start <= 0.0 || d.beta_start >= 1.0)
    detail::bad_key("diffusion.beta_start", "must lie in (0, 1)");
  if (!finite(d.beta_end) || d.beta_end <= 0.0 || d.beta_end >= 1.0)
    detail::bad_key("diffusion.beta_end", "must lie in (0, 1)");
  if (!finite(d.alpha) || d.alpha < 0.0) detail::bad_key("diffusion.alpha", "must be >= 0");
  if (!finite(d.lambda_s) || !finite(d.lambda_d) || std::abs(d.lambda_s + d.lambda_d - 1.0) > 1e-9)
    detail::bad_key("diffusion.lambda_s + diffusion.lambda_d",
                    "lambda weights must sum to 1, got " + std::to_string(d.lambda_s + d.lambda_d));
  if (!finite(d.strength) || d.strength < 0.0 || d.strength > 1.0)
    detail::bad_key("diffusion.strength", "must lie in [0, 1]");
  const auto& w = c.warp;
  if (!finite(w.beta) || w.beta < 0.0) detail::bad_key("warp.beta", "must be >= 0");
  if (!finite(w.gamma) || w.gamma < 0.0) detail::bad_key("warp.gamma", "must be >= 0");
  if (!finite(w.eps_cov) || w.eps_cov < 0.0 || w.eps_cov >= 1.0) detail::bad_key("warp.eps_cov", "must lie in [0, 1)");
  if (!finite(w.margin) || w.margin < 0.0) detail::bad_key("warp.margin", "must be >= 0");
  const auto& a = c.attention;
  if (a.d < 1 || a.d > 4096) detail::bad_key("attention.d", "must lie in [1, 4096]");
  if (!finite(a.temperature) || a.temperature <= 0.0) detail::bad_key("attention.temperature", "must be > 0");
}

/// Reads a JSON config over the defaults. Unknown keys are rejected.
inline PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig c = {}) {
  using nlohmann::json;
  if (!j.is_object()) detail::bad_key("config", "must be a JSON object");
  auto section = [&](const char* name, const std::set<std::string>& keys) -> const json* {
    if (!j.contains(name)) return nullptr;
    const json& s = j.at(name);
    if (!s.is_object()) detail::bad_key(name, "must be an object");
    for (const auto& [k, v] : s.items())
      if (!keys.count(k)) detail::bad_key(std::string(name) + "." + k, "unknown key");
    return &s;
  };
  for (const auto& [k, v] : j.items())
    if (k != "diffusion" && k != "warp" && k != "attention" && k != "seed") detail::bad_key(k, "unknown key");

  auto number = [](const json& s, const std::string& prefix, const char* key, double& out) {
    if (!s.contains(key)) return;
    if (!s.at(key).is_number()) detail::bad_key(prefix + key, "must be a number");
    out = s.at(key).get<double>();
  };
  auto integer = [](const json& s, const std::string& prefix, const char* key, int& out) {
    if (!s.contains(key)) return;
    if (!s.at(key).is_number_integer()) detail::bad_key(prefix + key, "must be an integer");
    out = s.at(key).get<int>();
  };
  auto text = [](const json& s, const std::string& prefix, const char* key) -> std::string {
    if (!s.at(key).is_string()) detail::bad_key(prefix + key, "must be a string");
    return s.at(key).get<std::string>();
  };

  if (const json* s = section("diffusion", {"steps", "schedule", "beta_start", "beta_end", "alpha", "lambda_s",
                                            "lambda_d", "strength"})) {
    integer(*s, "diffusion.", "steps", c.diffusion.steps);
    if (s->contains("schedule")) c.diffusion.schedule = parse_schedule(text(*s, "diffusion.", "schedule"));
    number(*s, "diffusion.", "beta_start", c.diffusion.beta_start);
    number(*s, "diffusion.", "beta_end", c.diffusion.beta_end);
    number(*s, "diffusion.", "alpha", c.diffusion.alpha);
    number(*s, "diffusion.", "lambda_s", c.diffusion.lambda_s);
    number(*s, "diffusion.", "lambda_d", c.diffusion.lambda_d);
    number(*s, "diffusion.", "strength", c.diffusion.strength);
  }
  if (const json* s = section("warp", {"beta", "gamma", "eps_cov", "margin", "strategy", "direction", "reimpose"})) {
    number(*s, "warp.", "beta", c.warp.beta);
    number(*s, "warp.", "gamma", c.warp.gamma);
    number(*s, "warp.", "eps_cov", c.warp.eps_cov);
    number(*s, "warp.", "margin", c.warp.margin);
    if (s->contains("strategy")) c.warp.strategy = parse_strategy(text(*s, "warp.", "strategy"));
    if (s->contains("direction")) c.warp.direction = parse_direction(text(*s, "warp.", "direction"));
    if (s->contains("reimpose")) {
      if (!s->at("reimpose").is_boolean()) detail::bad_key("warp.reimpose", "must be a boolean");
      c.warp.reimpose = s->at("reimpose").get<bool>();
    }
  }
  if (const json* s = section("attention", {"d", "temperature", "unmatched"})) {
    integer(*s, "attention.", "d", c.attention.d);
    number(*s, "attention.", "temperature", c.attention.temperature);
    if (s->contains("unmatched")) c.attention.unmatched = parse_unmatched(text(*s, "attention.", "unmatched"));
  }
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned() && !(j.at("seed").is_number_integer() && j.at("seed").get<long long>() >= 0))
      detail::bad_key("seed", "must be a non-negative integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = read_json_file(path);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::MissingFile) throw;
    fail(ErrorCode::ConfigValidation, "config: " + e.detail());
  }
  return config_from_json(j);
}

}  // namespace restyle
