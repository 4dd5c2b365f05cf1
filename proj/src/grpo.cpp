#include "analyze_rt/grpo.hpp"

#include <algorithm>
#include <cmath>

#include "analyze_rt/error.hpp"

namespace analyze_rt::grpo {

namespace {

bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

void RolloutGroup::validate() const {
  const auto g = rewards.size();
  if (g == 0) throw Error(ErrorCode::InvalidConfig, "group " + question_id + " is empty");
  if (logp_policy.size() != g || logp_old.size() != g || logp_ref.size() != g) {
    throw Error(ErrorCode::InvalidConfig, "group " + question_id + " has arrays of different lengths");
  }
  if (!all_finite(rewards) || !all_finite(logp_policy) || !all_finite(logp_old) || !all_finite(logp_ref)) {
    throw Error(ErrorCode::NonFiniteInput, "group " + question_id + " contains non-finite values");
  }
}

void GrpoConfig::validate() const {
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw Error(ErrorCode::InvalidConfig, "clip_epsilon must be in (0,1)");
  if (!(kl_beta >= 0.0)) throw Error(ErrorCode::InvalidConfig, "kl_beta must be >= 0");
  if (!(std_epsilon > 0.0)) throw Error(ErrorCode::InvalidConfig, "std_epsilon must be > 0");
}

std::vector<double> group_advantages(std::span<const double> rewards, double std_epsilon) {
  const auto g = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= g;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double denom = std::sqrt(var / g) + std_epsilon;
  std::vector<double> adv;
  adv.reserve(rewards.size());
  for (double r : rewards) adv.push_back((r - mean) / denom);
  return adv;
}

double clipped_surrogate(double ratio, double advantage, double clip_epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

double kl_penalty(double logp_policy, double logp_ref) {
  const double d = logp_ref - logp_policy;
  // expm1 keeps precision for small d; the clamp absorbs rounding below zero.
  return std::max(0.0, std::expm1(d) - d);
}

ObjectiveValue grpo_objective(const RolloutGroup& group, const GrpoConfig& config) {
  group.validate();
  config.validate();
  const auto adv = group_advantages(group.rewards, config.std_epsilon);
  ObjectiveValue out;
  out.per_sample.reserve(group.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < group.size(); ++i) {
    SampleTerms t;
    t.advantage = adv[i];
    t.ratio = std::exp(group.logp_policy[i] - group.logp_old[i]);
    if (!std::isfinite(t.ratio)) throw Error(ErrorCode::NonFiniteInput, "importance ratio overflow");
    t.surrogate = clipped_surrogate(t.ratio, t.advantage, config.clip_epsilon);
    t.kl = kl_penalty(group.logp_policy[i], group.logp_ref[i]);
    if (!std::isfinite(t.kl)) throw Error(ErrorCode::NonFiniteInput, "KL estimate overflow");
    sum += t.surrogate - config.kl_beta * t.kl;
    out.per_sample.push_back(t);
  }
  out.objective = sum / static_cast<double>(group.size());
  return out;
}

RolloutGroup group_from_json(const nlohmann::json& j) {
  RolloutGroup g;
  try {
    g.question_id = j.value("question_id", std::string());
    g.rewards = j.at("rewards").get<std::vector<double>>();
    g.logp_policy = j.at("logp_policy").get<std::vector<double>>();
    g.logp_old = j.at("logp_old").get<std::vector<double>>();
    g.logp_ref = j.at("logp_ref").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad rollout group: ") + e.what());
  }
  return g;
}

nlohmann::json group_to_json(const RolloutGroup& g) {
  return {{"question_id", g.question_id},
          {"rewards", g.rewards},
          {"logp_policy", g.logp_policy},
          {"logp_old", g.logp_old},
          {"logp_ref", g.logp_ref}};
}

nlohmann::json objective_to_json(const RolloutGroup& g, const ObjectiveValue& v) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : v.per_sample) {
    samples.push_back({{"advantage", s.advantage}, {"ratio", s.ratio}, {"surrogate", s.surrogate}, {"kl", s.kl}});
  }
  return {{"question_id", g.question_id}, {"objective", v.objective}, {"per_sample", std::move(samples)}};
}

}  // namespace analyze_rt::grpo
