#pragma once

// Deterministic reward-job batches drawn from the synthetic environment.

#include <cstdint>
#include <vector>

#include "rlvr/policy_env.hpp"
#include "rlvr/reward_pool.hpp"

namespace rlvr::fixtures {

/// `n` jobs whose responses are sampled from the initial policy, so rewards
/// spread over the whole range. Thinking report jobs include omitted
/// delimiters and therefore the missing-answer penalty.
inline std::vector<RewardJob> sampled_jobs(TaskKind track, bool thinking, int n,
                                           std::uint64_t seed) {
  EnvConfig cfg = EnvConfig::for_kind(track);
  cfg.thinking = thinking;
  const PolicyEnv env(cfg);
  const auto tasks = env.gen_tasks(n, seed);
  const PolicyParams p = env.initial_params();
  Rng rng(seed);
  std::vector<RewardJob> jobs;
  for (int i = 0; i < n; ++i) {
    const auto& task = tasks[static_cast<std::size_t>(i)];
    RewardJob job;
    job.job_id = static_cast<std::uint64_t>(i);
    job.response = env.sample(p, task, rng).response;
    job.track = track;
    job.reference_boxes = task.ground_truth_boxes;
    job.reference_text = task.ground_truth_text;
    jobs.push_back(std::move(job));
  }
  return jobs;
}

inline std::vector<double> rewards_of(const std::vector<RewardResult>& results) {
  std::vector<double> out;
  for (const auto& r : results) out.push_back(r.reward);
  return out;
}

}  // namespace rlvr::fixtures
