#include "rlvr/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "rlvr/random.hpp"
#include "rlvr/reward_pool.hpp"
#include "rlvr/rewards_grounding.hpp"

namespace rlvr {
namespace {

// Seed-stream tags.
constexpr std::uint64_t kTrainTasks = 1;
constexpr std::uint64_t kRollouts = 2;
constexpr std::uint64_t kEvalTasks = 3;

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t count = std::min(workers, n);
  // The first worker exception is rethrown on the calling thread.
  std::vector<std::exception_ptr> errors(count);
  pool.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += count) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, std::size_t size)
      : kind_(kind), lr_(lr), m_(size, 0.0), v_(size, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad) {
    if (kind_ == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr_ * grad[i];
      return;
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t_;
    const double c1 = 1.0 - std::pow(b1, t_);
    const double c2 = 1.0 - std::pow(b2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
      v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
      params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
    }
  }

 private:
  OptimizerKind kind_;
  double lr_;
  std::vector<double> m_, v_;
  int t_ = 0;
};

std::string dump_group(const RolloutGroup& g) {
  std::ostringstream os;
  os << "group " << g.prompt_id << ":";
  for (std::size_t i = 0; i < g.responses.size(); ++i) {
    const auto& r = g.responses[i];
    os << "\n  rollout " << i << " reward=" << r.reward << " adv=" << r.advantage << " tokens=[";
    for (std::size_t t = 0; t < r.token_ids.size(); ++t) {
      os << (t ? " " : "") << r.token_ids[t] << ":" << r.logp_current[t] << "/" << r.logp_old[t]
         << "/" << r.logp_ref[t];
    }
    os << "]";
  }
  return os.str();
}

}  // namespace

void validate(const TrainConfig& cfg) {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw std::invalid_argument(std::string(name) + " must be positive");
  };
  if (cfg.steps < 0) throw std::invalid_argument("steps must be >= 0");
  positive(cfg.prompts_per_step, "prompts_per_step");
  positive(cfg.group_size, "group_size");
  positive(cfg.ppo_mini_batch, "ppo_mini_batch");
  positive(cfg.save_freq, "save_freq");
  positive(cfg.test_freq, "test_freq");
  positive(cfg.eval_tasks, "eval_tasks");
  positive(cfg.threads, "threads");
  if (cfg.prompts_per_step % cfg.ppo_mini_batch != 0) {
    throw std::invalid_argument("prompts_per_step must be divisible by ppo_mini_batch");
  }
  if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw std::invalid_argument("learning_rate must be positive");
  }
  auto probability = [](double v, const char* name) {
    if (!(v > 0.0 && v < 1.0)) throw std::invalid_argument(std::string(name) + " must lie in (0, 1)");
  };
  probability(cfg.omit_probability, "omit_probability");
  probability(cfg.stop_probability, "stop_probability");
  GrpoConfig g = cfg.grpo;
  g.group_size = cfg.group_size;
  validate(g);
  TextRewardSpec spec;
  spec.max_ngram = cfg.max_ngram;
  validate(spec);
  make_reward(cfg.reward, cfg.track);  // throws on reward/track mismatch
}

EnvConfig env_config(const TrainConfig& cfg) {
  EnvConfig env = EnvConfig::for_kind(cfg.track);
  env.thinking = cfg.thinking;
  env.omit_probability = cfg.omit_probability;
  env.stop_probability = cfg.stop_probability;
  return env;
}

std::vector<SyntheticTask> held_out_tasks(const PolicyEnv& env, const TrainConfig& cfg) {
  return env.gen_tasks(cfg.eval_tasks, derive_seed(cfg.seed, {kEvalTasks}));
}

GroundingEval evaluate_grounding(const PolicyEnv& env, const PolicyParams& params,
                                 std::span<const SyntheticTask> tasks, double threshold) {
  if (tasks.empty()) throw std::invalid_argument("no examples");
  std::vector<EvalInput> inputs;
  inputs.reserve(tasks.size());
  double f1_sum = 0.0;
  std::size_t missing = 0;
  for (const auto& task : tasks) {
    const SampledResponse out = env.greedy(params, task);
    EvalInput in;
    in.example_id = task.task_id;
    in.ref_boxes = task.ground_truth_boxes;
    in.response_chars = out.response.raw_text.size();
    if (out.response.final_answer) in.pred_boxes = parse_boxes(*out.response.final_answer).boxes;
    if (out.missing_delimiter) ++missing;
    f1_sum += grounding_response_reward(out.response, task.ground_truth_boxes);
    inputs.push_back(std::move(in));
  }
  GroundingEval ev;
  ev.corpus = map_at_threshold(inputs, threshold);
  ev.mean_soft_f1 = f1_sum / static_cast<double>(tasks.size());
  ev.missing_answer_rate = static_cast<double>(missing) / static_cast<double>(tasks.size());
  return ev;
}

ReportEval evaluate_report(const PolicyEnv& env, const PolicyParams& params,
                           std::span<const SyntheticTask> tasks, int max_ngram) {
  if (tasks.empty()) throw std::invalid_argument("no examples");
  ReportEval ev;
  std::size_t missing = 0;
  for (const auto& task : tasks) {
    const SampledResponse out = env.greedy(params, task);
    const TokenSequence hyp =
        out.response.final_answer ? tokenize(*out.response.final_answer) : TokenSequence{};
    if (!out.response.final_answer) ++missing;
    ev.mean_gleu += gleu(hyp, task.ground_truth_text, max_ngram);
    ev.mean_rouge_l += rouge_l(hyp, task.ground_truth_text);
    ev.mean_response_length +=
        static_cast<double>(out.response.final_answer ? out.response.final_answer->size() : 0);
    ev.mean_reference_length += static_cast<double>(detokenize(task.ground_truth_text).size());
  }
  const auto n = static_cast<double>(tasks.size());
  ev.mean_gleu /= n;
  ev.mean_rouge_l /= n;
  ev.mean_response_length /= n;
  ev.mean_reference_length /= n;
  ev.missing_answer_rate = static_cast<double>(missing) / n;
  return ev;
}

TrainResult train(const TrainConfig& cfg, const StepCallback& on_step) {
  validate(cfg);
  const PolicyEnv env(env_config(cfg));
  const auto reward = make_reward(cfg.reward, cfg.track, cfg.effective_missing_penalty());
  GrpoConfig gcfg = cfg.grpo;
  gcfg.group_size = cfg.group_size;

  TrainResult result;
  result.params = env.initial_params();
  if (cfg.steps == 0) return result;

  const PolicyParams reference = result.params;
  PolicyParams& params = result.params;
  Optimizer optimizer(cfg.optimizer, cfg.learning_rate, params.size());
  RewardPool pool(reward, cfg.threads);
  const std::vector<SyntheticTask> eval_set = held_out_tasks(env, cfg);

  const auto P = static_cast<std::size_t>(cfg.prompts_per_step);
  const auto G = static_cast<std::size_t>(cfg.group_size);
  const auto mini = static_cast<std::size_t>(cfg.ppo_mini_batch);

  for (int step = 0; step < cfg.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto tasks = env.gen_tasks(cfg.prompts_per_step,
                                     derive_seed(cfg.seed, {kTrainTasks, static_cast<std::uint64_t>(step)}));
    const PolicyParams old_params = params;

    // Rollouts under the frozen policy; seeds depend only on (step, prompt, i).
    std::vector<SampledResponse> samples(P * G);
    std::vector<std::vector<double>> ref_logps(P * G);
    try {
      parallel_for(P * G, cfg.threads, [&](std::size_t k) {
        const std::size_t p = k / G;
        Rng rng(derive_seed(cfg.seed, {kRollouts, static_cast<std::uint64_t>(step), p, k % G}));
        samples[k] = env.sample(old_params, tasks[p], rng);
        ref_logps[k] = env.token_logps(reference, samples[k].actions, tasks[p]);
      });
    } catch (const std::domain_error& e) {
      throw TrainingAborted("non-finite policy at step " + std::to_string(step + 1) + ": " +
                            e.what());
    }

    std::vector<RewardJob> jobs(P * G);
    for (std::size_t k = 0; k < P * G; ++k) {
      auto& job = jobs[k];
      job.job_id = k;
      job.track = cfg.track;
      job.response = samples[k].response;
      job.reference_boxes = tasks[k / G].ground_truth_boxes;
      job.reference_text = tasks[k / G].ground_truth_text;
    }
    const auto scored = pool.score_batch(jobs);

    StepLog log;
    log.step = step + 1;
    std::vector<RolloutGroup> groups(P);
    double kl_sum = 0.0;
    std::size_t kl_tokens = 0, missing = 0;
    for (std::size_t p = 0; p < P; ++p) {
      groups[p].prompt_id = tasks[p].task_id;
      groups[p].responses.resize(G);
      for (std::size_t i = 0; i < G; ++i) {
        const std::size_t k = p * G + i;
        Rollout& ro = groups[p].responses[i];
        ro.token_ids = samples[k].actions;
        ro.logp_old = samples[k].logps;
        ro.logp_current = samples[k].logps;
        ro.logp_ref = ref_logps[k];
        ro.reward = scored[k].reward;
        log.mean_reward += scored[k].reward;
        log.mean_response_length += static_cast<double>(scored[k].response_chars);
        if (samples[k].missing_delimiter) ++missing;
        for (std::size_t t = 0; t < ro.token_ids.size(); ++t) {
          kl_sum += kl_low_var(ro.logp_old[t], ro.logp_ref[t]);
          ++kl_tokens;
        }
      }
      compute_advantages(groups[p], gcfg.advantage_std_epsilon);
    }
    log.mean_reward /= static_cast<double>(P * G);
    log.mean_response_length /= static_cast<double>(P * G);
    log.missing_answer_rate = static_cast<double>(missing) / static_cast<double>(P * G);
    log.mean_kl = kl_tokens ? kl_sum / static_cast<double>(kl_tokens) : 0.0;

    // One gradient step per mini-batch of prompts.
    double clip_sum = 0.0;
    const std::size_t batches = P / mini;
    for (std::size_t b = 0; b < batches; ++b) {
      std::span<RolloutGroup> batch(groups.data() + b * mini, mini);
      parallel_for(batch.size() * G, cfg.threads, [&](std::size_t k) {
        Rollout& ro = batch[k / G].responses[k % G];
        ro.logp_current = env.token_logps(params, ro.token_ids, tasks[b * mini + k / G]);
      });
      const GrpoLoss loss = grpo_loss(batch, gcfg);
      const auto dlogp = grpo_loss_logp_gradients(batch, gcfg);

      std::vector<PolicyParams> partial(batch.size(), PolicyParams(params.rows(), params.cols()));
      parallel_for(batch.size(), cfg.threads, [&](std::size_t g) {
        for (std::size_t i = 0; i < G; ++i) {
          env.accumulate_grad(params, batch[g].responses[i].token_ids, tasks[b * mini + g],
                              dlogp[g][i], partial[g]);
        }
      });
      PolicyParams grad(params.rows(), params.cols());
      for (const auto& part : partial) {
        for (std::size_t j = 0; j < grad.size(); ++j) grad.flat()[j] += part.flat()[j];
      }

      if (!std::isfinite(loss.loss) || !grad.all_finite()) {
        std::string dump;
        for (const auto& g : batch) dump += dump_group(g) + "\n";
        throw TrainingAborted("non-finite loss at step " + std::to_string(step + 1) + "\n" + dump);
      }
      optimizer.step(params.flat(), grad.flat());
      if (!params.all_finite()) {
        throw TrainingAborted("non-finite parameters at step " + std::to_string(step + 1) + "\n" +
                              dump_group(batch[0]));
      }
      log.loss += loss.loss / static_cast<double>(batches);
      clip_sum += loss.diagnostics.clip_fraction;
    }
    log.clip_fraction = clip_sum / static_cast<double>(batches);
    log.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();

    if (cfg.checkpoint_dir && log.step % cfg.save_freq == 0) {
      std::filesystem::create_directories(*cfg.checkpoint_dir);
      save_checkpoint(*cfg.checkpoint_dir / ("checkpoint_" + std::to_string(log.step) + ".bin"),
                      env.config(), params);
    }
    if (log.step % cfg.test_freq == 0 || log.step == cfg.steps) {
      EvalPoint pt;
      pt.step = log.step;
      pt.score = cfg.track == TaskKind::grounding
                     ? evaluate_grounding(env, params, eval_set).corpus.map_at_50
                     : evaluate_report(env, params, eval_set, cfg.max_ngram).mean_gleu;
      result.evals.push_back(pt);
    }
    result.log.push_back(log);
    if (on_step) on_step(log);
  }
  return result;
}

void write_steplog_csv(const std::filesystem::path& path, std::span<const StepLog> log) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "step,mean_reward,mean_response_length,mean_kl,clip_fraction,loss,wall_ms\n";
  os.precision(10);
  for (const auto& s : log) {
    os << s.step << ',' << s.mean_reward << ',' << s.mean_response_length << ',' << s.mean_kl
       << ',' << s.clip_fraction << ',' << s.loss << ',' << s.wall_ms << '\n';
  }
}

}  // namespace rlvr
