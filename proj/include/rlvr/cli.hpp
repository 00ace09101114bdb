#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rlvr/geometry.hpp"
#include "rlvr/policy_env.hpp"
#include "rlvr/trainer.hpp"

namespace rlvr::cli {

/// Process exit codes shared by every command.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,    ///< bad flags or configuration
  kExitNumeric = 3,  ///< training stopped on a non-finite value
  kExitEmpty = 4,    ///< empty or fully malformed input
};

/// One JSONL line of a prediction/reference corpus.
struct CorpusRecord {
  std::string id;
  std::string prediction;  ///< raw model text
  std::optional<std::vector<BoundingBox>> reference_boxes;
  std::optional<std::string> reference_text;
  bool is_thinking = false;
  /// Task context, written by `gen` for traceability; ignored when scoring.
  std::optional<std::vector<double>> context;

  TaskKind track() const { return reference_boxes ? TaskKind::grounding : TaskKind::report; }
};

/// Parses one JSONL line. Throws std::invalid_argument describing the
/// problem, including when both or neither reference field is present.
CorpusRecord parse_corpus_record(std::string_view line);

/// Serializes a record as a single JSON line (no trailing newline).
std::string to_json_line(const CorpusRecord& record);

/// Fixture record for a synthetic task: the prediction is the serialized
/// ground truth, so it scores 1 under every reward.
CorpusRecord record_from_task(const SyntheticTask& task);

/// Configuration error that names the offending key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::invalid_argument(key + ": " + message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// A training config plus the rewards to run it with. A config whose
/// `reward` is an array describes a reward sweep: one run per entry.
struct TrainPlan {
  TrainConfig config;
  std::vector<std::string> rewards;
};

/// Parses a flat JSON document whose keys mirror TrainConfig field names
/// (clip_low, clip_high, kl_coef and advantage_std_epsilon configure the
/// GRPO objective). Every run of the plan is validated before returning.
/// Throws ConfigError for unknown keys, wrong types and invalid values.
TrainPlan parse_train_config(std::string_view json_text);

/// `train`: runs every reward of the plan; a sweep writes one subdirectory
/// per reward plus sweep.json. Each run directory gets steplog.csv,
/// checkpoints/, final.ckpt and summary.json.
int cmd_train(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
              std::optional<int> threads, std::ostream& out, std::ostream& err);

/// `score`: one output line {id, reward, response_chars} per input record,
/// then a footer with the mean reward and mean response characters.
int cmd_score(const std::filesystem::path& in_path, TaskKind track, const std::string& reward,
              const std::filesystem::path& out_path, int threads, std::ostream& out,
              std::ostream& err);

/// `eval`: mAP at `iou` over grounding records; per-example CSV to out_path.
int cmd_eval(const std::filesystem::path& in_path, double iou,
             const std::filesystem::path& out_path, std::ostream& out, std::ostream& err);

/// `gen`: n fixture records derived from synthetic tasks, deterministic in
/// the seed.
int cmd_gen(TaskKind kind, int n, std::uint64_t seed, const std::filesystem::path& out_path,
            std::ostream& out, std::ostream& err);

/// Parses argv and dispatches to a command; returns the exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rlvr::cli
