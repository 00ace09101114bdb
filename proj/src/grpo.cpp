#include "rlvr/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rlvr {

void validate(const GrpoConfig& cfg) {
  if (cfg.group_size < 2) throw std::invalid_argument("group_size must be >= 2");
  if (!(cfg.clip_low > 0.0 && cfg.clip_low < 1.0)) {
    throw std::invalid_argument("clip_low must lie in (0, 1)");
  }
  if (!(cfg.clip_high > 0.0 && cfg.clip_high < 1.0)) {
    throw std::invalid_argument("clip_high must lie in (0, 1)");
  }
  if (!(cfg.kl_coef >= 0.0)) throw std::invalid_argument("kl_coef must be >= 0");
  if (!(cfg.advantage_std_epsilon > 0.0)) {
    throw std::invalid_argument("advantage_std_epsilon must be > 0");
  }
}

std::vector<double> compute_advantages(std::span<const double> rewards, double eps) {
  if (rewards.size() < 2) throw std::invalid_argument("degenerate group");
  if (!(eps >= 0.0)) throw std::invalid_argument("advantage eps must be >= 0");
  const auto n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double std_dev = std::sqrt(var / n);

  std::vector<double> adv(rewards.size(), 0.0);
  const double denom = std_dev + eps;
  if (denom == 0.0) return adv;
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / denom;
  return adv;
}

void compute_advantages(RolloutGroup& group, double eps) {
  std::vector<double> rewards;
  rewards.reserve(group.responses.size());
  for (const auto& r : group.responses) rewards.push_back(r.reward);
  const auto adv = compute_advantages(rewards, eps);
  for (std::size_t i = 0; i < adv.size(); ++i) group.responses[i].advantage = adv[i];
}

double clipped_term(double r, double adv, const GrpoConfig& cfg) {
  const double clipped = std::clamp(r, 1.0 - cfg.clip_low, 1.0 + cfg.clip_high);
  return std::min(r * adv, clipped * adv);
}

bool is_clipped(double r, double adv, const GrpoConfig& cfg) {
  const double clipped = std::clamp(r, 1.0 - cfg.clip_low, 1.0 + cfg.clip_high);
  return clipped * adv < r * adv;
}

double clipped_term_dlogp(double r, double adv, const GrpoConfig& cfg) {
  return is_clipped(r, adv, cfg) ? 0.0 : r * adv;
}

double kl_low_var(double logp_current, double logp_ref) {
  const double log_u = std::clamp(logp_ref - logp_current, -kKlLogRatioClamp, kKlLogRatioClamp);
  // expm1 keeps small differences accurate: u - 1 - log u.
  return std::clamp(std::expm1(log_u) - log_u, 0.0, kKlValueClamp);
}

double kl_low_var_dlogp(double logp_current, double logp_ref) {
  const double log_u = logp_ref - logp_current;
  if (std::abs(log_u) > kKlLogRatioClamp) return 0.0;
  if (std::expm1(log_u) - log_u > kKlValueClamp) return 0.0;
  return -std::expm1(log_u);
}

namespace {

void check_rollout(const Rollout& r) {
  const std::size_t n = r.token_ids.size();
  if (n == 0) throw std::invalid_argument("empty response in group");
  if (r.logp_current.size() != n || r.logp_old.size() != n || r.logp_ref.size() != n) {
    throw std::invalid_argument("log-probability length does not match token count");
  }
}

}  // namespace

GrpoLoss grpo_loss(std::span<const RolloutGroup> groups, const GrpoConfig& cfg) {
  GrpoLoss out;
  if (groups.empty()) return out;
  double objective = 0.0;
  double ratio_sum = 0.0;
  double kl_sum = 0.0;
  std::size_t clipped = 0;
  std::size_t tokens = 0;

  for (const auto& group : groups) {
    if (group.responses.empty()) throw std::invalid_argument("empty group");
    double group_sum = 0.0;
    for (const auto& ro : group.responses) {
      check_rollout(ro);
      double seq_sum = 0.0;
      for (std::size_t t = 0; t < ro.token_ids.size(); ++t) {
        const double r = ratio(ro.logp_current[t], ro.logp_old[t]);
        const double kl = kl_low_var(ro.logp_current[t], ro.logp_ref[t]);
        seq_sum += clipped_term(r, ro.advantage, cfg) - cfg.kl_coef * kl;
        ratio_sum += r;
        kl_sum += kl;
        clipped += is_clipped(r, ro.advantage, cfg) ? 1 : 0;
        ++tokens;
      }
      group_sum += seq_sum / static_cast<double>(ro.token_ids.size());
    }
    objective += group_sum / static_cast<double>(group.responses.size());
  }
  objective /= static_cast<double>(groups.size());

  out.loss = -objective;
  out.diagnostics.objective = objective;
  out.diagnostics.tokens = tokens;
  const auto nt = static_cast<double>(tokens);
  out.diagnostics.mean_ratio = ratio_sum / nt;
  out.diagnostics.mean_kl = kl_sum / nt;
  out.diagnostics.clip_fraction = static_cast<double>(clipped) / nt;
  return out;
}

std::vector<std::vector<std::vector<double>>> grpo_loss_logp_gradients(
    std::span<const RolloutGroup> groups, const GrpoConfig& cfg) {
  std::vector<std::vector<std::vector<double>>> grads(groups.size());
  if (groups.empty()) return grads;
  const double group_scale = 1.0 / static_cast<double>(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& group = groups[g];
    if (group.responses.empty()) throw std::invalid_argument("empty group");
    grads[g].resize(group.responses.size());
    const double rollout_scale = group_scale / static_cast<double>(group.responses.size());
    for (std::size_t i = 0; i < group.responses.size(); ++i) {
      const auto& ro = group.responses[i];
      check_rollout(ro);
      const double scale = rollout_scale / static_cast<double>(ro.token_ids.size());
      auto& out = grads[g][i];
      out.resize(ro.token_ids.size());
      for (std::size_t t = 0; t < ro.token_ids.size(); ++t) {
        const double r = ratio(ro.logp_current[t], ro.logp_old[t]);
        const double d_obj = clipped_term_dlogp(r, ro.advantage, cfg) -
                             cfg.kl_coef * kl_low_var_dlogp(ro.logp_current[t], ro.logp_ref[t]);
        out[t] = -scale * d_obj;
      }
    }
  }
  return grads;
}

}  // namespace rlvr
