#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "rlvr/boxformat.hpp"
#include "rlvr/geometry.hpp"
#include "rlvr/policy_env.hpp"
#include "rlvr/rewards_text.hpp"

namespace rlvr {

struct RewardJob {
  std::uint64_t job_id = 0;
  ModelResponse response;
  TaskKind track = TaskKind::grounding;
  std::vector<BoundingBox> reference_boxes;  ///< grounding track
  TokenSequence reference_text;              ///< report track
};

struct RewardResult {
  std::uint64_t job_id = 0;
  double reward = 0.0;
  std::size_t response_chars = 0;
  std::int64_t latency_ms = 0;
};

/// A reward the pool can call. Implementations must be safe to call from
/// several threads at once.
class RewardFunction {
 public:
  virtual ~RewardFunction() = default;
  virtual double score(const RewardJob& job) const = 0;
  virtual TaskKind track() const = 0;
  virtual std::string name() const = 0;
};

/// Hungarian soft-F1 on parsed boxes; 0 without a final answer.
class SoftF1Reward final : public RewardFunction {
 public:
  double score(const RewardJob& job) const override;
  TaskKind track() const override { return TaskKind::grounding; }
  std::string name() const override { return "soft_f1"; }
};

class TextReward final : public RewardFunction {
 public:
  explicit TextReward(TextRewardSpec spec);
  double score(const RewardJob& job) const override;
  TaskKind track() const override { return TaskKind::report; }
  std::string name() const override;

 private:
  TextRewardSpec spec_;
};

/// Builds a reward by name: soft_f1, gleu, rouge_l or unigram_precision.
/// Throws std::invalid_argument("reward/track mismatch") when the reward does
/// not belong to `track`, and for unknown names.
std::shared_ptr<const RewardFunction> make_reward(std::string_view name, TaskKind track,
                                                  std::optional<double> missing_answer_penalty = {});

/// Fixed set of worker threads consuming a bounded shared job queue.
///
/// Submitters block while the queue is full. Results come back sorted by
/// job_id and do not depend on the number of workers.
class RewardPool {
 public:
  RewardPool(std::shared_ptr<const RewardFunction> reward, int workers,
             std::size_t queue_capacity = 256);
  ~RewardPool();

  RewardPool(const RewardPool&) = delete;
  RewardPool& operator=(const RewardPool&) = delete;

  /// Throws std::invalid_argument("duplicate job_id") before scoring anything
  /// if two jobs share an id.
  std::vector<RewardResult> score_batch(
      std::span<const RewardJob> jobs,
      std::chrono::milliseconds simulated_latency = std::chrono::milliseconds{0});

  int workers() const { return static_cast<int>(threads_.size()); }
  /// Worker threads currently running; 0 after shutdown().
  int live_workers() const { return live_.load(); }
  /// Total jobs scored over the pool's lifetime.
  std::uint64_t jobs_scored() const { return scored_.load(); }

  /// Lets queued work finish, then joins all workers. Idempotent.
  void shutdown();

 private:
  struct Batch;
  struct Task {
    Batch* batch;
    std::size_t index;
  };

  void worker_loop();
  void push(Task task);

  std::shared_ptr<const RewardFunction> reward_;
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::deque<Task> queue_;
  bool closed_ = false;
  std::vector<std::thread> threads_;
  std::atomic<int> live_{0};
  std::atomic<std::uint64_t> scored_{0};
};

/// One-shot convenience: builds a pool, scores, and shuts it down.
/// Throws std::invalid_argument when workers < 1.
std::vector<RewardResult> score_batch(std::span<const RewardJob> jobs,
                                      std::shared_ptr<const RewardFunction> reward, int workers,
                                      std::optional<std::chrono::milliseconds> simulated_latency = {});

/// Serializes a job as one JSON line: {job_id, track, response, reference}.
std::string job_to_json_line(const RewardJob& job);

/// Delegates scoring to child processes speaking JSON lines on stdin/stdout.
///
/// Each request is a job_to_json_line() line; each reply must be
/// {"job_id": N, "reward": R}. `copies` children are started and used
/// concurrently, one request at a time each.
class ExternalScorer final : public RewardFunction {
 public:
  ExternalScorer(std::vector<std::string> argv, TaskKind track, int copies = 1);
  ~ExternalScorer() override;

  double score(const RewardJob& job) const override;
  TaskKind track() const override { return track_; }
  std::string name() const override { return "external"; }

 private:
  struct Child;
  TaskKind track_;
  std::vector<std::unique_ptr<Child>> children_;
};

}  // namespace rlvr
