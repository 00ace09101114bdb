#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace rlvr {

struct GrpoConfig {
  int group_size = 8;
  double clip_low = 0.20;
  double clip_high = 0.28;
  double kl_coef = 0.01;
  double advantage_std_epsilon = 1e-6;
};

/// Throws std::invalid_argument naming the offending field.
void validate(const GrpoConfig& cfg);

/// One sampled response. The three log-probability vectors are per token,
/// natural log, and must all have token_ids.size() entries.
struct Rollout {
  std::vector<int> token_ids;
  std::vector<double> logp_current;
  std::vector<double> logp_old;
  std::vector<double> logp_ref;
  double reward = 0.0;
  double advantage = 0.0;
};

struct RolloutGroup {
  std::string prompt_id;
  std::vector<Rollout> responses;
};

/// (R_i - mean) / (std + eps) with the population standard deviation.
/// eps = 0 is accepted; a constant group then yields all zeros.
/// Throws std::invalid_argument("degenerate group") when fewer than 2 rewards.
std::vector<double> compute_advantages(std::span<const double> rewards, double eps);

/// Fills Rollout::advantage from Rollout::reward for every response.
void compute_advantages(RolloutGroup& group, double eps);

inline double ratio(double logp_current, double logp_old);

/// min(r * adv, clip(r, 1 - clip_low, 1 + clip_high) * adv).
double clipped_term(double r, double adv, const GrpoConfig& cfg);

/// d clipped_term / d logp_current, given r = exp(logp_current - logp_old).
double clipped_term_dlogp(double r, double adv, const GrpoConfig& cfg);

/// True when the min selects the clipped branch strictly below r * adv.
bool is_clipped(double r, double adv, const GrpoConfig& cfg);

/// Bounds applied by the low-variance KL estimator: the log-ratio is clamped
/// to +-kKlLogRatioClamp and the estimate to [0, kKlValueClamp], so a token
/// whose probability collapsed far below the reference cannot produce an
/// exponentially large gradient.
inline constexpr double kKlLogRatioClamp = 20.0;
inline constexpr double kKlValueClamp = 10.0;

/// Low-variance KL estimator u - ln u - 1 with u = pi_ref / pi_theta,
/// clamped as described above.
double kl_low_var(double logp_current, double logp_ref);

/// d kl_low_var / d logp_current = 1 - u inside the clamps, 0 outside.
double kl_low_var_dlogp(double logp_current, double logp_ref);

struct GrpoDiagnostics {
  double objective = 0.0;  ///< Positive objective; loss = -objective.
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  double mean_kl = 0.0;
  std::size_t tokens = 0;
};

struct GrpoLoss {
  double loss = 0.0;
  GrpoDiagnostics diagnostics;
};

/// Negated GRPO objective averaged over groups. Within a group each rollout
/// is normalized by its own length before the 1/G mean. Advantages must
/// already be filled. Throws std::invalid_argument("empty response in group")
/// on a zero-length rollout.
GrpoLoss grpo_loss(std::span<const RolloutGroup> groups, const GrpoConfig& cfg);

/// d loss / d logp_current for every token, laid out [group][rollout][token].
/// Same normalization as grpo_loss.
std::vector<std::vector<std::vector<double>>> grpo_loss_logp_gradients(
    std::span<const RolloutGroup> groups, const GrpoConfig& cfg);

inline double ratio(double logp_current, double logp_old) {
  return std::exp(logp_current - logp_old);
}

}  // namespace rlvr
