#pragma once

// Group-relative policy optimization quantities, as values (no gradients):
// normalized group advantages, the clipped importance-ratio surrogate, the
// KL penalty estimator, and the per-group objective.

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace analyze_rt::grpo {

struct RolloutGroup {
  std::string question_id;
  std::vector<double> rewards;
  std::vector<double> logp_policy;  // sequence log-probs under the current policy
  std::vector<double> logp_old;     // ... under the sampling policy
  std::vector<double> logp_ref;     // ... under the reference model

  std::size_t size() const { return rewards.size(); }
  void validate() const;  // throws Error(InvalidConfig) or Error(NonFiniteInput)
};

struct GrpoConfig {
  double clip_epsilon = 0.2;
  double kl_beta = 0.04;
  double std_epsilon = 1e-8;

  void validate() const;
};

/// A_i = (r_i - mean) / (population std + std_epsilon).
std::vector<double> group_advantages(std::span<const double> rewards, double std_epsilon = 1e-8);

/// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A).
double clipped_surrogate(double ratio, double advantage, double clip_epsilon);

/// exp(d) - d - 1 with d = logp_ref - logp_policy; nonnegative, zero iff d = 0.
double kl_penalty(double logp_policy, double logp_ref);

struct SampleTerms {
  double advantage = 0.0;
  double ratio = 0.0;
  double surrogate = 0.0;
  double kl = 0.0;
};

struct ObjectiveValue {
  double objective = 0.0;
  std::vector<SampleTerms> per_sample;
};

/// (1/G) sum_i [clipped_surrogate(ratio_i, A_i) - beta * kl_i] with
/// ratio_i = exp(logp_policy_i - logp_old_i). Throws Error(NonFiniteInput).
ObjectiveValue grpo_objective(const RolloutGroup& group, const GrpoConfig& config);

RolloutGroup group_from_json(const nlohmann::json& j);
nlohmann::json group_to_json(const RolloutGroup& g);
nlohmann::json objective_to_json(const RolloutGroup& g, const ObjectiveValue& v);

}  // namespace analyze_rt::grpo
