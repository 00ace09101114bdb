#include "rlvr/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "rlvr/boxformat.hpp"
#include "rlvr/evaluation.hpp"
#include "rlvr/reward_pool.hpp"
#include "rlvr/rewards_text.hpp"

namespace rlvr::cli {
namespace {

using nlohmann::json;

std::vector<BoundingBox> parse_box_array(const json& j) {
  if (!j.is_array()) throw std::invalid_argument("reference_boxes must be an array");
  std::vector<BoundingBox> boxes;
  for (const auto& item : j) {
    if (!item.is_array() || item.size() != 4) {
      throw std::invalid_argument("each reference box must be an array of 4 numbers");
    }
    for (const auto& v : item) {
      if (!v.is_number()) throw std::invalid_argument("box coordinates must be numbers");
    }
    const BoundingBox b{item[0].get<double>(), item[1].get<double>(), item[2].get<double>(),
                        item[3].get<double>()};
    if (!is_valid(b)) throw std::invalid_argument("invalid reference box");
    boxes.push_back(b);
  }
  return boxes;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!trim(line).empty()) lines.push_back(line);
  }
  return lines;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

// ---- config ---------------------------------------------------------------

template <typename T>
T get_as(const json& j, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!j.is_boolean()) throw ConfigError(key, "expected a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!j.is_string()) throw ConfigError(key, "expected a string");
    } else if constexpr (std::is_integral_v<T>) {
      if (!j.is_number_integer()) throw ConfigError(key, "expected an integer");
    } else {
      if (!j.is_number()) throw ConfigError(key, "expected a number");
    }
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(key, e.what());
  }
}

// Maps a validation message back to the config key it mentions.
std::string key_in_message(const std::string& message) {
  static const char* const kKeys[] = {
      "prompts_per_step", "ppo_mini_batch", "group_size", "learning_rate", "clip_low",
      "clip_high", "kl_coef", "advantage_std_epsilon", "max_ngram", "omit_probability",
      "stop_probability", "save_freq", "test_freq", "eval_tasks", "threads", "steps"};
  for (const char* k : kKeys) {
    if (message.find(k) != std::string::npos) return k;
  }
  return "reward";
}

// ---- summaries ------------------------------------------------------------

json run_summary(const TrainConfig& cfg, const TrainResult& result) {
  json s;
  s["track"] = std::string(to_string(cfg.track));
  s["reward"] = cfg.reward;
  s["steps"] = cfg.steps;
  s["seed"] = cfg.seed;
  if (!result.log.empty()) {
    const auto& last = result.log.back();
    s["final_mean_reward"] = last.mean_reward;
    s["final_mean_response_length"] = last.mean_response_length;
    s["final_missing_answer_rate"] = last.missing_answer_rate;
  }
  const PolicyEnv env(env_config(cfg));
  const auto held = held_out_tasks(env, cfg);
  if (cfg.track == TaskKind::grounding) {
    const auto ev = evaluate_grounding(env, result.params, held);
    s["map_at_50"] = ev.corpus.map_at_50;
    s["mean_soft_f1"] = ev.mean_soft_f1;
    s["missing_answer_rate"] = ev.missing_answer_rate;
  } else {
    const auto ev = evaluate_report(env, result.params, held, cfg.max_ngram);
    s["mean_gleu"] = ev.mean_gleu;
    s["mean_rouge_l"] = ev.mean_rouge_l;
    s["mean_response_length"] = ev.mean_response_length;
    s["mean_reference_length"] = ev.mean_reference_length;
    s["missing_answer_rate"] = ev.missing_answer_rate;
  }
  return s;
}

}  // namespace

// ---- corpus records -------------------------------------------------------

CorpusRecord parse_corpus_record(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("record must be a JSON object");
  CorpusRecord r;
  if (!j.contains("id") || !(j["id"].is_string() || j["id"].is_number_integer())) {
    throw std::invalid_argument("missing id");
  }
  r.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
  if (!j.contains("prediction") || !j["prediction"].is_string()) {
    throw std::invalid_argument("missing prediction");
  }
  r.prediction = j["prediction"].get<std::string>();
  const bool has_boxes = j.contains("reference_boxes") && !j["reference_boxes"].is_null();
  const bool has_text = j.contains("reference_text") && !j["reference_text"].is_null();
  if (has_boxes == has_text) {
    throw std::invalid_argument("exactly one of reference_boxes / reference_text required");
  }
  if (has_boxes) r.reference_boxes = parse_box_array(j["reference_boxes"]);
  if (has_text) {
    if (!j["reference_text"].is_string()) throw std::invalid_argument("reference_text must be a string");
    r.reference_text = j["reference_text"].get<std::string>();
  }
  if (j.contains("is_thinking")) {
    if (!j["is_thinking"].is_boolean()) throw std::invalid_argument("is_thinking must be a boolean");
    r.is_thinking = j["is_thinking"].get<bool>();
  }
  if (j.contains("context") && j["context"].is_array()) {
    r.context = j["context"].get<std::vector<double>>();
  }
  return r;
}

std::string to_json_line(const CorpusRecord& record) {
  json j;
  j["id"] = record.id;
  j["prediction"] = record.prediction;
  if (record.reference_boxes) {
    json boxes = json::array();
    for (const auto& b : *record.reference_boxes) boxes.push_back({b.x_min, b.y_min, b.x_max, b.y_max});
    j["reference_boxes"] = std::move(boxes);
  }
  if (record.reference_text) j["reference_text"] = *record.reference_text;
  j["is_thinking"] = record.is_thinking;
  if (record.context) j["context"] = *record.context;
  return j.dump();
}

CorpusRecord record_from_task(const SyntheticTask& task) {
  CorpusRecord r;
  r.id = task.task_id;
  if (task.kind == TaskKind::grounding) {
    r.prediction = serialize_boxes(task.ground_truth_boxes);
    r.reference_boxes = task.ground_truth_boxes;
  } else {
    r.prediction = detokenize(task.ground_truth_text);
    r.reference_text = r.prediction;
  }
  r.context = task.context;
  return r;
}

// ---- config ---------------------------------------------------------------

TrainPlan parse_train_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<document>", std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("<document>", "config must be a JSON object");

  TrainPlan plan;
  TrainConfig& c = plan.config;
  // The track decides the default reward and must be known first.
  if (j.contains("track")) {
    try {
      c.track = parse_task_kind(get_as<std::string>(j["track"], "track"));
    } catch (const std::invalid_argument& e) {
      if (dynamic_cast<const ConfigError*>(&e)) throw;
      throw ConfigError("track", e.what());
    }
  }
  c.reward = c.track == TaskKind::grounding ? "soft_f1" : "gleu";

  for (const auto& [key, value] : j.items()) {
    if (key == "track") continue;
    if (key == "steps") c.steps = get_as<int>(value, key);
    else if (key == "prompts_per_step") c.prompts_per_step = get_as<int>(value, key);
    else if (key == "group_size") c.group_size = get_as<int>(value, key);
    else if (key == "ppo_mini_batch") c.ppo_mini_batch = get_as<int>(value, key);
    else if (key == "learning_rate") c.learning_rate = get_as<double>(value, key);
    else if (key == "optimizer") {
      const auto name = get_as<std::string>(value, key);
      if (name == "sgd") c.optimizer = OptimizerKind::sgd;
      else if (name == "adam") c.optimizer = OptimizerKind::adam;
      else throw ConfigError(key, "expected \"sgd\" or \"adam\"");
    } else if (key == "clip_low") c.grpo.clip_low = get_as<double>(value, key);
    else if (key == "clip_high") c.grpo.clip_high = get_as<double>(value, key);
    else if (key == "kl_coef") c.grpo.kl_coef = get_as<double>(value, key);
    else if (key == "advantage_std_epsilon") c.grpo.advantage_std_epsilon = get_as<double>(value, key);
    else if (key == "reward") {
      if (value.is_array()) {
        if (value.empty()) throw ConfigError(key, "reward sweep must not be empty");
        for (const auto& r : value) plan.rewards.push_back(get_as<std::string>(r, key));
      } else {
        plan.rewards.push_back(get_as<std::string>(value, key));
      }
    } else if (key == "max_ngram") c.max_ngram = get_as<int>(value, key);
    else if (key == "missing_answer_penalty") c.missing_answer_penalty = get_as<double>(value, key);
    else if (key == "thinking") c.thinking = get_as<bool>(value, key);
    else if (key == "omit_probability") c.omit_probability = get_as<double>(value, key);
    else if (key == "stop_probability") c.stop_probability = get_as<double>(value, key);
    else if (key == "seed") {
      if (!value.is_number_unsigned()) throw ConfigError(key, "expected a non-negative integer");
      c.seed = value.get<std::uint64_t>();
    } else if (key == "save_freq") c.save_freq = get_as<int>(value, key);
    else if (key == "test_freq") c.test_freq = get_as<int>(value, key);
    else if (key == "eval_tasks") c.eval_tasks = get_as<int>(value, key);
    else if (key == "threads") c.threads = get_as<int>(value, key);
    else throw ConfigError(key, "unknown key");
  }
  if (plan.rewards.empty()) plan.rewards.push_back(c.reward);
  std::set<std::string> seen;
  for (const auto& r : plan.rewards) {
    if (!seen.insert(r).second) throw ConfigError("reward", "duplicate reward " + r);
  }

  for (const auto& r : plan.rewards) {
    TrainConfig run = c;
    run.reward = r;
    try {
      validate(run);
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      throw ConfigError(key_in_message(msg), msg);
    }
  }
  c.reward = plan.rewards.front();
  return plan;
}

// ---- commands -------------------------------------------------------------

int cmd_train(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
              std::optional<int> threads, std::ostream& out, std::ostream& err) {
  std::ifstream is(config_path);
  if (!is) {
    err << "error: cannot read config " << config_path.string() << "\n";
    return kExitUsage;
  }
  std::stringstream buffer;
  buffer << is.rdbuf();
  TrainPlan plan;
  try {
    plan = parse_train_config(buffer.str());
    if (threads) {
      if (*threads < 1) throw ConfigError("threads", "threads must be positive");
      plan.config.threads = *threads;
    }
  } catch (const ConfigError& e) {
    err << "error: invalid config key '" << e.key() << "': " << e.what() << "\n";
    return kExitUsage;
  }

  const bool sweep = plan.rewards.size() > 1;
  json sweep_summary = json::array();
  try {
    for (const auto& reward : plan.rewards) {
      TrainConfig cfg = plan.config;
      cfg.reward = reward;
      const auto run_dir = sweep ? out_dir / reward : out_dir;
      std::filesystem::create_directories(run_dir);
      cfg.checkpoint_dir = run_dir / "checkpoints";
      out << "training " << to_string(cfg.track) << " with " << reward << " for " << cfg.steps
          << " steps\n";
      const TrainResult result = train(cfg, [&](const StepLog& s) {
        if (s.step % cfg.test_freq == 0 || s.step == cfg.steps) {
          out << "step " << s.step << " mean_reward " << s.mean_reward << " length "
              << s.mean_response_length << "\n";
        }
      });
      write_steplog_csv(run_dir / "steplog.csv", result.log);
      save_checkpoint(run_dir / "final.ckpt", env_config(cfg), result.params);
      json summary = run_summary(cfg, result);
      open_output(run_dir / "summary.json") << summary.dump(2) << "\n";
      out << summary.dump() << "\n";
      sweep_summary.push_back(std::move(summary));
    }
    if (sweep) open_output(out_dir / "sweep.json") << sweep_summary.dump(2) << "\n";
  } catch (const TrainingAborted& e) {
    err << "error: training aborted: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitOk;
}

int cmd_score(const std::filesystem::path& in_path, TaskKind track, const std::string& reward,
              const std::filesystem::path& out_path, int threads, std::ostream& out,
              std::ostream& err) {
  std::shared_ptr<const RewardFunction> fn;
  try {
    fn = make_reward(reward, track);
    if (threads < 1) throw std::invalid_argument("threads must be positive");
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  std::vector<std::string> lines;
  try {
    lines = read_lines(in_path);
  } catch (const std::runtime_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  // Parse everything first; malformed lines keep their slot in the output.
  std::vector<std::optional<CorpusRecord>> records(lines.size());
  std::vector<std::string> problems(lines.size());
  std::vector<RewardJob> jobs;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      CorpusRecord r = parse_corpus_record(lines[i]);
      if (r.track() != track) throw std::invalid_argument("reference does not match track");
      RewardJob job;
      job.job_id = i;
      job.track = track;
      job.response = extract_final_answer(r.prediction, r.is_thinking);
      if (track == TaskKind::grounding) job.reference_boxes = *r.reference_boxes;
      else job.reference_text = tokenize(*r.reference_text);
      jobs.push_back(std::move(job));
      records[i] = std::move(r);
    } catch (const std::invalid_argument& e) {
      problems[i] = e.what();
    }
  }
  if (lines.empty() || jobs.empty()) {
    err << "error: " << (lines.empty() ? "empty input" : "every line is malformed") << "\n";
    return kExitEmpty;
  }

  const auto results = score_batch(jobs, fn, threads);
  std::ofstream os = open_output(out_path);
  double reward_sum = 0.0;
  double chars_sum = 0.0;
  std::size_t next = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    json line;
    if (records[i]) {
      const RewardResult& res = results[next++];
      line["id"] = records[i]->id;
      line["reward"] = res.reward;
      line["response_chars"] = res.response_chars;
      reward_sum += res.reward;
      chars_sum += static_cast<double>(res.response_chars);
    } else {
      line["id"] = nullptr;
      line["line"] = i + 1;
      line["reward"] = nullptr;
      line["error"] = problems[i];
    }
    os << line.dump() << "\n";
  }
  const double n = static_cast<double>(jobs.size());
  json footer;
  footer["footer"] = true;
  footer["records"] = lines.size();
  footer["scored"] = jobs.size();
  footer["malformed"] = lines.size() - jobs.size();
  footer["mean_reward"] = reward_sum / n;
  footer["mean_response_chars"] = chars_sum / n;
  os << footer.dump() << "\n";
  out << footer.dump() << "\n";
  return kExitOk;
}

int cmd_eval(const std::filesystem::path& in_path, double iou,
             const std::filesystem::path& out_path, std::ostream& out, std::ostream& err) {
  if (!(iou > 0.0 && iou < 1.0)) {
    err << "error: --iou must lie in (0, 1)\n";
    return kExitUsage;
  }
  std::vector<std::string> lines;
  try {
    lines = read_lines(in_path);
  } catch (const std::runtime_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  std::vector<EvalInput> corpus;
  std::size_t malformed = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      const CorpusRecord r = parse_corpus_record(lines[i]);
      if (!r.reference_boxes) throw std::invalid_argument("not a grounding record");
      const ModelResponse resp = extract_final_answer(r.prediction, r.is_thinking);
      EvalInput in;
      in.example_id = r.id;
      if (resp.final_answer) in.pred_boxes = parse_boxes(*resp.final_answer).boxes;
      in.ref_boxes = *r.reference_boxes;
      in.response_chars = r.prediction.size();
      corpus.push_back(std::move(in));
    } catch (const std::invalid_argument& e) {
      ++malformed;
      err << "warning: line " << (i + 1) << " skipped: " << e.what() << "\n";
    }
  }
  if (corpus.empty()) {
    err << "error: no examples\n";
    return kExitEmpty;
  }
  const CorpusSummary summary = map_at_threshold(corpus, iou);
  std::ofstream os = open_output(out_path);
  os << "example_id,pred_boxes,ref_boxes,tp,fp,fn,precision\n";
  os.precision(10);
  for (const auto& rec : summary.records) {
    std::string id = rec.example_id;
    if (id.find_first_of(",\"\n") != std::string::npos) {
      std::string quoted = "\"";
      for (char ch : id) quoted += ch == '"' ? std::string("\"\"") : std::string(1, ch);
      id = quoted + "\"";
    }
    os << id << ',' << rec.pred_boxes.size() << ',' << rec.ref_boxes.size() << ',' << rec.tp << ','
       << rec.fp << ',' << rec.fn << ',' << rec.precision_at_iou << '\n';
  }
  json j;
  j["map"] = summary.map_at_50;
  j["iou"] = iou;
  j["examples"] = corpus.size();
  j["malformed"] = malformed;
  j["mean_response_chars"] = summary.mean_response_length;
  out << j.dump() << "\n";
  return kExitOk;
}

int cmd_gen(TaskKind kind, int n, std::uint64_t seed, const std::filesystem::path& out_path,
            std::ostream& out, std::ostream& err) {
  if (n < 1) {
    err << "error: --n must be >= 1\n";
    return kExitUsage;
  }
  const PolicyEnv env(EnvConfig::for_kind(kind));
  const auto tasks = env.gen_tasks(n, seed);
  std::ofstream os = open_output(out_path);
  for (const auto& t : tasks) os << to_json_line(record_from_task(t)) << "\n";
  out << "wrote " << n << " " << to_string(kind) << " records to " << out_path.string() << "\n";
  return kExitOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"GRPO training, reward scoring and evaluation on synthetic tasks", "rlvr"};
  app.require_subcommand(1);

  const std::vector<std::string> kinds{"grounding", "report"};

  auto* train_cmd = app.add_subcommand("train", "Run GRPO training from a JSON config");
  std::string config_path, out_dir;
  std::optional<int> threads;
  train_cmd->add_option("--config", config_path, "Flat JSON config")->required();
  train_cmd->add_option("--out", out_dir, "Output directory")->required();
  train_cmd->add_option("--threads", threads, "Worker threads (1 = bit-reproducible)");

  auto* score_cmd = app.add_subcommand("score", "Score a JSONL corpus with a reward");
  std::string score_in, score_out, reward;
  std::string track = "grounding";
  int score_threads = 1;
  score_cmd->add_option("--in", score_in, "Input JSONL")->required();
  score_cmd->add_option("--track", track, "grounding or report")
      ->required()
      ->check(CLI::IsMember(kinds));
  score_cmd->add_option("--reward", reward, "soft_f1, gleu, rouge_l or unigram_precision")
      ->required();
  score_cmd->add_option("--out", score_out, "Output JSONL")->required();
  score_cmd->add_option("--threads", score_threads, "Reward workers");

  auto* eval_cmd = app.add_subcommand("eval", "mAP of a grounding JSONL corpus");
  std::string eval_in, eval_out;
  double iou = 0.5;
  eval_cmd->add_option("--in", eval_in, "Input JSONL")->required();
  eval_cmd->add_option("--iou", iou, "IoU threshold")->capture_default_str();
  eval_cmd->add_option("--out", eval_out, "Per-example CSV")->required();

  auto* gen_cmd = app.add_subcommand("gen", "Write synthetic fixture records");
  std::string kind = "grounding";
  int n = 0;
  std::uint64_t seed = 0;
  std::string gen_out;
  gen_cmd->add_option("--kind", kind, "grounding or report")
      ->required()
      ->check(CLI::IsMember(kinds));
  gen_cmd->add_option("--n", n, "Number of records")->required();
  gen_cmd->add_option("--seed", seed, "Seed")->required();
  gen_cmd->add_option("--out", gen_out, "Output JSONL")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(config_path, out_dir, threads, out, err);
    if (*score_cmd) return cmd_score(score_in, parse_task_kind(track), reward, score_out, score_threads, out, err);
    if (*eval_cmd) return cmd_eval(eval_in, iou, eval_out, out, err);
    return cmd_gen(parse_task_kind(kind), n, seed, gen_out, out, err);
  } catch (const std::runtime_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace rlvr::cli
