#include "rlvr/reward_pool.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "rlvr/rewards_grounding.hpp"

namespace rlvr {

double SoftF1Reward::score(const RewardJob& job) const {
  return grounding_response_reward(job.response, job.reference_boxes);
}

TextReward::TextReward(TextRewardSpec spec) : spec_(spec) { validate(spec_); }

double TextReward::score(const RewardJob& job) const {
  return text_response_reward(job.response, job.reference_text, spec_);
}

std::string TextReward::name() const {
  switch (spec_.kind) {
    case TextRewardKind::gleu:
      return "gleu";
    case TextRewardKind::rouge_l:
      return "rouge_l";
    case TextRewardKind::unigram_precision:
      return "unigram_precision";
  }
  return "text";
}

std::shared_ptr<const RewardFunction> make_reward(std::string_view name, TaskKind track,
                                                  std::optional<double> missing_answer_penalty) {
  if (name == "soft_f1") {
    if (track != TaskKind::grounding) throw std::invalid_argument("reward/track mismatch");
    return std::make_shared<SoftF1Reward>();
  }
  TextRewardSpec spec;
  if (name == "gleu") {
    spec.kind = TextRewardKind::gleu;
  } else if (name == "rouge_l") {
    spec.kind = TextRewardKind::rouge_l;
  } else if (name == "unigram_precision") {
    spec.kind = TextRewardKind::unigram_precision;
  } else {
    throw std::invalid_argument("unknown reward: " + std::string(name));
  }
  if (track != TaskKind::report) throw std::invalid_argument("reward/track mismatch");
  if (missing_answer_penalty) spec.missing_answer_penalty = *missing_answer_penalty;
  return std::make_shared<TextReward>(spec);
}

struct RewardPool::Batch {
  std::span<const RewardJob> jobs;
  std::vector<RewardResult> results;
  std::chrono::milliseconds latency{0};
  std::size_t remaining = 0;
  std::mutex mu;
  std::condition_variable done;
};

RewardPool::RewardPool(std::shared_ptr<const RewardFunction> reward, int workers,
                       std::size_t queue_capacity)
    : reward_(std::move(reward)), capacity_(std::max<std::size_t>(1, queue_capacity)) {
  if (!reward_) throw std::invalid_argument("reward function required");
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  threads_.reserve(static_cast<std::size_t>(workers));
  for (int i = 0; i < workers; ++i) threads_.emplace_back([this] { worker_loop(); });
}

RewardPool::~RewardPool() { shutdown(); }

void RewardPool::shutdown() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  not_empty_.notify_all();
  not_full_.notify_all();
  for (auto& t : threads_) {
    if (t.joinable()) t.join();
  }
}

void RewardPool::push(Task task) {
  std::unique_lock lock(mu_);
  not_full_.wait(lock, [&] { return closed_ || queue_.size() < capacity_; });
  if (closed_) throw std::runtime_error("reward pool is shut down");
  queue_.push_back(task);
  lock.unlock();
  not_empty_.notify_one();
}

void RewardPool::worker_loop() {
  live_.fetch_add(1);
  while (true) {
    Task task{};
    {
      std::unique_lock lock(mu_);
      not_empty_.wait(lock, [&] { return closed_ || !queue_.empty(); });
      if (queue_.empty()) break;  // closed and drained
      task = queue_.front();
      queue_.pop_front();
    }
    not_full_.notify_one();

    Batch& batch = *task.batch;
    const RewardJob& job = batch.jobs[task.index];
    const auto start = std::chrono::steady_clock::now();
    if (batch.latency.count() > 0) std::this_thread::sleep_for(batch.latency);
    RewardResult res;
    res.job_id = job.job_id;
    res.reward = reward_->score(job);
    res.response_chars = job.response.raw_text.size();
    res.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::steady_clock::now() - start)
                         .count();
    scored_.fetch_add(1);
    {
      std::lock_guard lock(batch.mu);
      batch.results[task.index] = res;
      if (--batch.remaining == 0) batch.done.notify_all();
    }
  }
  live_.fetch_sub(1);
}

std::vector<RewardResult> RewardPool::score_batch(std::span<const RewardJob> jobs,
                                                  std::chrono::milliseconds simulated_latency) {
  std::unordered_set<std::uint64_t> ids;
  ids.reserve(jobs.size());
  for (const auto& j : jobs) {
    if (!ids.insert(j.job_id).second) throw std::invalid_argument("duplicate job_id");
  }
  if (jobs.empty()) return {};

  Batch batch;
  batch.jobs = jobs;
  batch.results.resize(jobs.size());
  batch.latency = simulated_latency;
  batch.remaining = jobs.size();
  for (std::size_t i = 0; i < jobs.size(); ++i) push(Task{&batch, i});
  {
    std::unique_lock lock(batch.mu);
    batch.done.wait(lock, [&] { return batch.remaining == 0; });
  }
  std::sort(batch.results.begin(), batch.results.end(),
            [](const RewardResult& a, const RewardResult& b) { return a.job_id < b.job_id; });
  return std::move(batch.results);
}

std::vector<RewardResult> score_batch(std::span<const RewardJob> jobs,
                                      std::shared_ptr<const RewardFunction> reward, int workers,
                                      std::optional<std::chrono::milliseconds> simulated_latency) {
  RewardPool pool(std::move(reward), workers);
  return pool.score_batch(jobs, simulated_latency.value_or(std::chrono::milliseconds{0}));
}

std::string job_to_json_line(const RewardJob& job) {
  nlohmann::json j;
  j["job_id"] = job.job_id;
  j["track"] = std::string(to_string(job.track));
  j["response"] = job.response.raw_text;
  if (job.track == TaskKind::grounding) {
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& b : job.reference_boxes) boxes.push_back({b.x_min, b.y_min, b.x_max, b.y_max});
    j["reference"] = std::move(boxes);
  } else {
    j["reference"] = detokenize(job.reference_text);
  }
  return j.dump();
}

struct ExternalScorer::Child {
  pid_t pid = -1;
  FILE* to_child = nullptr;
  FILE* from_child = nullptr;
  std::mutex mu;

  ~Child() {
    if (to_child) std::fclose(to_child);
    if (from_child) std::fclose(from_child);
    if (pid > 0) {
      int status = 0;
      if (::waitpid(pid, &status, WNOHANG) == 0) {
        ::kill(pid, SIGTERM);
        ::waitpid(pid, &status, 0);
      }
    }
  }
};

ExternalScorer::ExternalScorer(std::vector<std::string> argv, TaskKind track, int copies)
    : track_(track) {
  if (argv.empty()) throw std::invalid_argument("external scorer command is empty");
  if (copies < 1) throw std::invalid_argument("copies must be >= 1");
  // A child that dies early must not kill us on write.
  ::signal(SIGPIPE, SIG_IGN);
  for (int c = 0; c < copies; ++c) {
    int in_pipe[2];   // parent -> child
    int out_pipe[2];  // child -> parent
    if (::pipe2(in_pipe, O_CLOEXEC) != 0 || ::pipe2(out_pipe, O_CLOEXEC) != 0) {
      throw std::runtime_error("pipe failed");
    }
    const pid_t pid = ::fork();
    if (pid < 0) throw std::runtime_error("fork failed");
    if (pid == 0) {
      ::dup2(in_pipe[0], STDIN_FILENO);
      ::dup2(out_pipe[1], STDOUT_FILENO);
      std::vector<char*> args;
      for (auto& a : argv) args.push_back(a.data());
      args.push_back(nullptr);
      ::execvp(args[0], args.data());
      ::_exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    auto child = std::make_unique<Child>();
    child->pid = pid;
    child->to_child = ::fdopen(in_pipe[1], "w");
    child->from_child = ::fdopen(out_pipe[0], "r");
    if (!child->to_child || !child->from_child) throw std::runtime_error("fdopen failed");
    children_.push_back(std::move(child));
  }
}

ExternalScorer::~ExternalScorer() = default;

double ExternalScorer::score(const RewardJob& job) const {
  // Prefer an idle child; fall back to waiting on one picked by job id.
  Child* child = nullptr;
  std::unique_lock<std::mutex> lock;
  for (const auto& c : children_) {
    std::unique_lock<std::mutex> attempt(c->mu, std::try_to_lock);
    if (attempt.owns_lock()) {
      child = c.get();
      lock = std::move(attempt);
      break;
    }
  }
  if (!child) {
    child = children_[job.job_id % children_.size()].get();
    lock = std::unique_lock<std::mutex>(child->mu);
  }

  const std::string line = job_to_json_line(job) + "\n";
  if (std::fputs(line.c_str(), child->to_child) == EOF || std::fflush(child->to_child) != 0) {
    throw std::runtime_error("external scorer: write failed");
  }
  std::string reply;
  int ch = 0;
  while ((ch = std::fgetc(child->from_child)) != EOF && ch != '\n') reply.push_back(static_cast<char>(ch));
  if (reply.empty()) throw std::runtime_error("external scorer: no reply");
  const auto j = nlohmann::json::parse(reply);
  if (j.at("job_id").get<std::uint64_t>() != job.job_id) {
    throw std::runtime_error("external scorer: reply for wrong job_id");
  }
  return j.at("reward").get<double>();
}

}  // namespace rlvr
