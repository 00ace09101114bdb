#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rlvr/boxformat.hpp"
#include "rlvr/geometry.hpp"
#include "rlvr/random.hpp"
#include "rlvr/rewards_text.hpp"

namespace rlvr {

enum class TaskKind { grounding, report };

std::string_view to_string(TaskKind kind);
/// Throws std::invalid_argument for anything but "grounding" / "report".
TaskKind parse_task_kind(std::string_view name);

inline constexpr int kGridBoxes = 32;

/// The fixed two-scale box grid: indices 0..15 are the 4x4 grid of 0.25
/// cells (row-major from the top-left), 16..31 are 0.5 boxes on a 4x4 grid
/// of offsets {0, 0.17, 0.33, 0.5}. Every coordinate has two decimals, so
/// serialization is lossless.
BoundingBox decode_box(int index);
/// Inverse of decode_box; -1 when the box is not on the grid.
int encode_box(const BoundingBox& box);

/// Content words of the synthetic report vocabulary, in action order.
std::span<const std::string_view> report_vocabulary();

struct EnvConfig {
  TaskKind kind = TaskKind::grounding;
  int context_dim = 16;
  int max_len = 6;  ///< Content actions per response (STOP excluded).
  /// Prefix every response with a reasoning block; the first action decides
  /// whether the close delimiter is emitted.
  bool thinking = false;
  /// Initial probability of omitting the delimiter in thinking mode.
  double omit_probability = 0.3;
  /// Initial per-step probability of STOP. A fresh policy that almost never
  /// stops cannot discover the right answer length before the content
  /// actions sharpen, so the initial policy carries a length prior.
  double stop_probability = 0.35;

  static EnvConfig for_kind(TaskKind kind);
};

struct SyntheticTask {
  std::string task_id;
  TaskKind kind = TaskKind::grounding;
  std::vector<double> context;
  std::vector<BoundingBox> ground_truth_boxes;
  TokenSequence ground_truth_text;
  std::uint64_t rng_seed = 0;
};

/// Dense V x (d + L_pos) weight matrix, row-major.
class PolicyParams {
 public:
  PolicyParams() = default;
  PolicyParams(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), w_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return w_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return w_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return w_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) { return {w_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {w_.data() + r * cols_, cols_}; }
  std::span<double> flat() { return w_; }
  std::span<const double> flat() const { return w_; }

  void fill(double v) { std::fill(w_.begin(), w_.end(), v); }
  bool all_finite() const;
  bool operator==(const PolicyParams&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> w_;
};

/// A generated response with its sampling log-probabilities.
struct SampledResponse {
  std::vector<int> actions;
  std::vector<double> logps;
  ModelResponse response;
  /// Thinking mode only: the delimiter was omitted.
  bool missing_delimiter = false;
};

/// Toy autoregressive categorical policy over a synthetic task family.
///
/// Each step feeds [context; one-hot(step)] through the weight matrix and a
/// softmax restricted to the actions legal at that step. Content actions are
/// grid boxes (grounding, any box at any step) or report words (a slot
/// grammar: step k may only use the four words of slot k), followed by STOP;
/// in thinking mode two extra actions decide the delimiter at step 0.
class PolicyEnv {
 public:
  explicit PolicyEnv(EnvConfig cfg);

  const EnvConfig& config() const { return cfg_; }
  std::size_t content_actions() const { return content_; }
  int stop_action() const { return static_cast<int>(content_); }
  int close_action() const { return static_cast<int>(content_) + 1; }
  int omit_action() const { return static_cast<int>(content_) + 2; }
  std::size_t vocab_size() const { return vocab_; }
  std::size_t position_slots() const { return positions_; }
  std::size_t input_dim() const { return cfg_.context_dim + positions_; }

  /// Zero weights, except the delimiter bias in thinking mode.
  PolicyParams initial_params() const;

  /// The fixed linear policy whose greedy decode defines ground truth.
  const PolicyParams& teacher() const { return teacher_; }

  /// Deterministic in (n, seed); task i depends only on (seed, i).
  /// Throws std::invalid_argument when n < 1.
  std::vector<SyntheticTask> gen_tasks(int n, std::uint64_t seed) const;

  SampledResponse sample(const PolicyParams& params, const SyntheticTask& task, Rng& rng) const;
  SampledResponse greedy(const PolicyParams& params, const SyntheticTask& task) const;

  /// Per-token log-probabilities of a fixed action sequence.
  std::vector<double> token_logps(const PolicyParams& params, std::span<const int> actions,
                                  const SyntheticTask& task) const;

  /// Total log-probability and its analytic gradient (added into grad).
  /// Throws std::out_of_range for an action that is not legal at its step.
  double logp_and_grad(const PolicyParams& params, std::span<const int> actions,
                       const SyntheticTask& task, PolicyParams& grad) const;

  /// grad += sum_t weights[t] * d logp_t / d W.
  void accumulate_grad(const PolicyParams& params, std::span<const int> actions,
                       const SyntheticTask& task, std::span<const double> weights,
                       PolicyParams& grad) const;

  /// Whether `action` may be taken at `step` (steps count the delimiter
  /// decision in thinking mode).
  bool legal(std::size_t step, int action) const;

  /// Action probabilities at a step (zero for illegal actions).
  std::vector<double> step_distribution(const PolicyParams& params, const SyntheticTask& task,
                                        std::size_t step) const;

  /// Renders actions as the raw generated text and extracts the answer.
  ModelResponse render(std::span<const int> actions) const;

 private:
  void input(const SyntheticTask& task, std::size_t step, std::vector<double>& x) const;
  void logits(const PolicyParams& params, std::span<const double> x, std::size_t step,
              std::vector<double>& out) const;
  template <typename Choose>
  SampledResponse rollout(const PolicyParams& params, const SyntheticTask& task,
                          Choose&& choose) const;
  void build_teacher();

  EnvConfig cfg_;
  std::size_t content_ = 0;
  std::size_t vocab_ = 0;
  std::size_t positions_ = 0;
  std::size_t step_offset_ = 0;  ///< 1 in thinking mode (delimiter step).
  PolicyParams teacher_;
};

/// Reasoning text prefixed to thinking-mode responses.
inline constexpr std::string_view kThinkingBlock =
    "<think>Reviewing the findings before answering.";

/// Little-endian checkpoint:
///   char[8] magic "RLVRCKPT"; u32 version (1); u32 kind (0 grounding, 1 report);
///   u32 thinking; u32 context_dim; u32 max_len; f64 omit_probability;
///   f64 stop_probability; u32 rows; u32 cols;
///   f64[rows * cols] weights, row-major.
void save_checkpoint(const std::filesystem::path& path, const EnvConfig& cfg,
                     const PolicyParams& params);

struct Checkpoint {
  EnvConfig config;
  PolicyParams params;
};

/// Throws std::runtime_error on a malformed or truncated file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rlvr
