#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rlvr/evaluation.hpp"
#include "rlvr/grpo.hpp"
#include "rlvr/policy_env.hpp"

namespace rlvr {

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
  int steps = 150;
  int prompts_per_step = 64;
  int group_size = 8;
  int ppo_mini_batch = 16;
  double learning_rate = 0.05;
  OptimizerKind optimizer = OptimizerKind::adam;
  GrpoConfig grpo;
  TaskKind track = TaskKind::grounding;
  std::string reward = "soft_f1";
  int max_ngram = 4;
  /// Reward for a response without final answer; unset means 0 for
  /// grounding and -3 for report.
  std::optional<double> missing_answer_penalty;
  bool thinking = false;
  double omit_probability = 0.3;
  /// Initial per-step STOP probability of the policy (see EnvConfig).
  double stop_probability = 0.35;
  std::uint64_t seed = 7;
  int save_freq = 20;
  int test_freq = 20;
  int eval_tasks = 200;
  int threads = 1;
  /// Checkpoints go here every save_freq steps when set.
  std::optional<std::filesystem::path> checkpoint_dir;

  double effective_missing_penalty() const {
    return missing_answer_penalty.value_or(track == TaskKind::report ? -3.0 : 0.0);
  }
};

/// Throws std::invalid_argument naming the offending field.
void validate(const TrainConfig& cfg);

EnvConfig env_config(const TrainConfig& cfg);

struct StepLog {
  int step = 0;
  double mean_reward = 0.0;
  double mean_response_length = 0.0;  ///< characters of the raw response
  double mean_kl = 0.0;               ///< sampling policy vs reference, per token
  double clip_fraction = 0.0;
  double loss = 0.0;
  std::int64_t wall_ms = 0;
  double missing_answer_rate = 0.0;
};

struct GroundingEval {
  CorpusSummary corpus;
  double mean_soft_f1 = 0.0;
  double missing_answer_rate = 0.0;
};

struct ReportEval {
  double mean_gleu = 0.0;
  double mean_rouge_l = 0.0;
  double mean_response_length = 0.0;   ///< characters of the final answer
  double mean_reference_length = 0.0;  ///< characters of the reference
  double missing_answer_rate = 0.0;
};

struct EvalPoint {
  int step = 0;
  double score = 0.0;  ///< map_at_50 (grounding) or mean GLEU (report)
};

struct TrainResult {
  PolicyParams params;
  std::vector<StepLog> log;
  std::vector<EvalPoint> evals;
};

/// Raised when the loss or parameters stop being finite. what() carries a
/// dump of the offending group.
class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using StepCallback = std::function<void(const StepLog&)>;

/// GRPO training loop: per step, sample group_size rollouts per prompt under
/// a frozen copy of the policy, score them through the reward pool, normalize
/// rewards within each group, then take one gradient step per mini-batch.
/// The reference policy is the initial policy for the whole run.
TrainResult train(const TrainConfig& cfg, const StepCallback& on_step = {});

/// Greedy decode on every task, scored with mAP at `threshold` and soft-F1.
/// Throws std::invalid_argument("no examples") for an empty task list.
GroundingEval evaluate_grounding(const PolicyEnv& env, const PolicyParams& params,
                                 std::span<const SyntheticTask> tasks, double threshold = 0.5);

ReportEval evaluate_report(const PolicyEnv& env, const PolicyParams& params,
                           std::span<const SyntheticTask> tasks, int max_ngram = 4);

/// Held-out tasks used by train() for periodic evaluation.
std::vector<SyntheticTask> held_out_tasks(const PolicyEnv& env, const TrainConfig& cfg);

/// Writes the StepLog CSV with header
/// step,mean_reward,mean_response_length,mean_kl,clip_fraction,loss,wall_ms.
void write_steplog_csv(const std::filesystem::path& path, std::span<const StepLog> log);

}  // namespace rlvr
