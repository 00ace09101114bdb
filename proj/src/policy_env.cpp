#include "rlvr/policy_env.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace rlvr {
namespace {

constexpr std::array<std::string_view, 36> kReportWords = {
    "heart", "lungs", "mediastinum", "aorta",
    "size", "volume", "contour", "silhouette",
    "normal", "enlarged", "stable", "unremarkable",
    "without", "with", "no", "mild",
    "effusion", "consolidation", "edema", "pneumothorax",
    "left", "right", "bilateral", "basilar",
    "opacity", "atelectasis", "nodule", "scarring",
    "seen", "present", "noted", "identified",
    "today", "again", "overall", "otherwise",
};

constexpr std::array<double, 4> kLargeOffsets = {0.0, 0.17, 0.33, 0.5};

// Sign of entry (i, j) of the 16x16 Sylvester-Hadamard matrix, extended
// cyclically for other context sizes.
double hadamard(std::size_t i, std::size_t j) {
  return (std::popcount(static_cast<unsigned>((i % 16) & (j % 16))) % 2 == 0) ? 1.0 : -1.0;
}

constexpr std::size_t kReportSlotWidth = 4;  // words per report slot

constexpr double kForce = 100.0;  // teacher bias that forces or forbids an action

}  // namespace

std::string_view to_string(TaskKind kind) {
  return kind == TaskKind::grounding ? "grounding" : "report";
}

TaskKind parse_task_kind(std::string_view name) {
  if (name == "grounding") return TaskKind::grounding;
  if (name == "report") return TaskKind::report;
  throw std::invalid_argument("unknown task kind: " + std::string(name));
}

BoundingBox decode_box(int index) {
  if (index < 0 || index >= kGridBoxes) throw std::out_of_range("box index out of range");
  if (index < 16) {
    const double x = 0.25 * (index % 4);
    const double y = 0.25 * (index / 4);
    return {x, y, x + 0.25, y + 0.25};
  }
  const int k = index - 16;
  const double x = kLargeOffsets[static_cast<std::size_t>(k % 4)];
  const double y = kLargeOffsets[static_cast<std::size_t>(k / 4)];
  return {x, y, x + 0.5, y + 0.5};
}

int encode_box(const BoundingBox& box) {
  for (int i = 0; i < kGridBoxes; ++i) {
    const BoundingBox g = decode_box(i);
    if (std::abs(g.x_min - box.x_min) < 1e-9 && std::abs(g.y_min - box.y_min) < 1e-9 &&
        std::abs(g.x_max - box.x_max) < 1e-9 && std::abs(g.y_max - box.y_max) < 1e-9) {
      return i;
    }
  }
  return -1;
}

std::span<const std::string_view> report_vocabulary() { return kReportWords; }

EnvConfig EnvConfig::for_kind(TaskKind kind) {
  EnvConfig cfg;
  cfg.kind = kind;
  cfg.max_len = kind == TaskKind::grounding ? 6 : 12;
  return cfg;
}

bool PolicyParams::all_finite() const {
  return std::all_of(w_.begin(), w_.end(), [](double v) { return std::isfinite(v); });
}

PolicyEnv::PolicyEnv(EnvConfig cfg) : cfg_(cfg) {
  if (cfg_.context_dim < 1) throw std::invalid_argument("context_dim must be >= 1");
  if (cfg_.kind == TaskKind::grounding && cfg_.max_len < 4) {
    throw std::invalid_argument("grounding max_len must be >= 4");
  }
  if (cfg_.kind == TaskKind::report && cfg_.max_len < 9) {
    throw std::invalid_argument("report max_len must be >= 9");
  }
  if (!(cfg_.omit_probability > 0.0 && cfg_.omit_probability < 1.0)) {
    throw std::invalid_argument("omit_probability must lie in (0, 1)");
  }
  if (!(cfg_.stop_probability > 0.0 && cfg_.stop_probability < 1.0)) {
    throw std::invalid_argument("stop_probability must lie in (0, 1)");
  }
  content_ = cfg_.kind == TaskKind::grounding ? static_cast<std::size_t>(kGridBoxes)
                                              : kReportWords.size();
  vocab_ = content_ + 1 + (cfg_.thinking ? 2 : 0);
  step_offset_ = cfg_.thinking ? 1 : 0;
  positions_ = static_cast<std::size_t>(cfg_.max_len) + step_offset_;
  build_teacher();
}

// Task contexts are c = H s / 4 for latent signs s, so the projection of c
// on Hadamard row r is exactly s_r. The teacher fixes one group of
// candidate actions per content step and selects within the group by the
// signs of those projections, which gives every content decision an integer
// logit margin. Where the answer may end, the group's actions also carry a
// per-step "continue" sign that raises or lowers the whole group by one
// against a constant STOP bias. The teacher's greedy decode is the ground
// truth, so the policy class always contains an exact solution.
void PolicyEnv::build_teacher() {
  const auto d = static_cast<std::size_t>(cfg_.context_dim);
  teacher_ = PolicyParams(vocab_, input_dim());
  auto pos = [&](std::size_t content_step) { return d + step_offset_ + content_step; };
  const std::size_t steps = static_cast<std::size_t>(cfg_.max_len);
  auto add_row = [&](std::size_t a, double sign, std::size_t row) {
    for (std::size_t c = 0; c < d; ++c) teacher_(a, c) += 0.25 * sign * hadamard(row, c);
  };

  // Content action `a` belongs to step `owner` and encodes `bits` sign bits
  // of projections starting at Hadamard row `first_row`.
  auto set_group_action = [&](std::size_t a, std::size_t owner, std::size_t code,
                              std::size_t bits, std::size_t first_row) {
    for (std::size_t j = 0; j < bits; ++j) {
      add_row(a, ((code >> (bits - 1 - j)) & 1U) ? 1.0 : -1.0, first_row + j);
    }
    for (std::size_t k = 0; k < steps; ++k) teacher_(a, pos(k)) = k == owner ? 0.0 : -kForce;
  };

  // STOP is forbidden before `first_step`, competes with bias `bits` (the
  // best content logit before the continue sign) up to `last_step`, and is
  // forced afterwards.
  const auto stop = static_cast<std::size_t>(stop_action());
  auto set_stop = [&](std::size_t first_step, std::size_t last_step, double bits) {
    for (std::size_t k = 0; k < steps; ++k) {
      teacher_(stop, pos(k)) = k < first_step ? -kForce : (k <= last_step ? bits : kForce);
    }
  };

  if (cfg_.kind == TaskKind::grounding) {
    // Four groups of eight boxes on rows 1..12; groups 1..3 continue on
    // rows 13..15, so answers hold one to four boxes.
    for (std::size_t a = 0; a < content_; ++a) {
      const std::size_t group = a / 8;
      set_group_action(a, group, a % 8, 3, 1 + 3 * group);
      if (group > 0) add_row(a, 1.0, 12 + group);
    }
    set_stop(1, 3, 3.0);
  } else {
    // Slot k (step k, 0..8) chooses among its four words on rows 1..14
    // (cycling); steps 6..8 continue on rows 15, 0 and 5, so reports hold
    // six to nine words.
    constexpr std::array<std::size_t, 3> continue_rows = {15, 0, 5};
    for (std::size_t a = 0; a < content_; ++a) {
      const std::size_t step = a / kReportSlotWidth;
      set_group_action(a, step, a % kReportSlotWidth, 2, 1 + 2 * (step % 7));
      if (step >= 6) add_row(a, 1.0, continue_rows[step - 6]);
    }
    set_stop(6, 8, 2.0);
  }
}

PolicyParams PolicyEnv::initial_params() const {
  PolicyParams p(vocab_, input_dim());
  // Bias STOP so a fresh policy ends its answer with probability
  // stop_probability at every content step.
  const double q = cfg_.stop_probability;
  for (std::size_t k = step_offset_; k < positions_; ++k) {
    double legal_content = 0.0;
    for (int a = 0; a < stop_action(); ++a) legal_content += legal(k, a) ? 1.0 : 0.0;
    if (legal_content == 0.0) continue;
    p(static_cast<std::size_t>(stop_action()), static_cast<std::size_t>(cfg_.context_dim) + k) =
        std::log(q / (1.0 - q) * legal_content);
  }
  if (cfg_.thinking) {
    const double q = cfg_.omit_probability;
    p(static_cast<std::size_t>(omit_action()), static_cast<std::size_t>(cfg_.context_dim)) =
        std::log(q / (1.0 - q));
  }
  return p;
}

std::vector<SyntheticTask> PolicyEnv::gen_tasks(int n, std::uint64_t seed) const {
  if (n < 1) throw std::invalid_argument("n >= 1 required");
  std::vector<SyntheticTask> tasks;
  tasks.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    SyntheticTask task;
    task.kind = cfg_.kind;
    task.rng_seed = derive_seed(seed, {static_cast<std::uint64_t>(cfg_.kind), static_cast<std::uint64_t>(i)});
    task.task_id = std::string(to_string(cfg_.kind)) + "-" + std::to_string(seed) + "-" +
                   std::to_string(i);
    Rng rng(task.rng_seed);
    task.context.resize(static_cast<std::size_t>(cfg_.context_dim));
    std::array<double, 16> latent{};
    for (auto& v : latent) v = uniform01(rng) < 0.5 ? -1.0 : 1.0;
    for (std::size_t c = 0; c < task.context.size(); ++c) {
      double sum = 0.0;
      for (std::size_t r = 0; r < latent.size(); ++r) sum += latent[r] * hadamard(r, c);
      task.context[c] = 0.25 * sum;
    }

    const SampledResponse gt = greedy(teacher_, task);
    for (std::size_t i = step_offset_; i < gt.actions.size(); ++i) {
      const int a = gt.actions[i];
      if (a == stop_action()) break;
      if (cfg_.kind == TaskKind::grounding) {
        task.ground_truth_boxes.push_back(decode_box(a));
      } else {
        task.ground_truth_text.tokens.emplace_back(kReportWords[static_cast<std::size_t>(a)]);
      }
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

bool PolicyEnv::legal(std::size_t step, int action) const {
  if (action < 0 || static_cast<std::size_t>(action) >= vocab_) return false;
  if (cfg_.thinking && step == 0) return action == close_action() || action == omit_action();
  if (action > stop_action()) return false;
  if (cfg_.kind == TaskKind::report && action < stop_action()) {
    return static_cast<std::size_t>(action) / kReportSlotWidth == step - step_offset_;
  }
  return true;
}

void PolicyEnv::input(const SyntheticTask& task, std::size_t step, std::vector<double>& x) const {
  if (task.context.size() != static_cast<std::size_t>(cfg_.context_dim)) {
    throw std::invalid_argument("task context dimension does not match environment");
  }
  x.assign(input_dim(), 0.0);
  std::copy(task.context.begin(), task.context.end(), x.begin());
  x[static_cast<std::size_t>(cfg_.context_dim) + step] = 1.0;
}

// Logits of illegal actions are -inf.
void PolicyEnv::logits(const PolicyParams& params, std::span<const double> x, std::size_t step,
                       std::vector<double>& out) const {
  if (params.rows() != vocab_ || params.cols() != input_dim()) {
    throw std::invalid_argument("policy parameter shape does not match environment");
  }
  out.assign(vocab_, -std::numeric_limits<double>::infinity());
  for (std::size_t a = 0; a < vocab_; ++a) {
    if (!legal(step, static_cast<int>(a))) continue;
    const auto w = params.row(a);
    double z = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) z += w[c] * x[c];
    out[a] = z;
  }
}

namespace {

// In-place log-softmax over finite entries; returns nothing, -inf stays -inf.
void log_softmax(std::vector<double>& z) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : z) m = std::max(m, v);
  double s = 0.0;
  for (double v : z) {
    if (std::isfinite(v)) s += std::exp(v - m);
  }
  const double lse = m + std::log(s);
  for (double& v : z) {
    if (std::isfinite(v)) v -= lse;
  }
}

}  // namespace

std::vector<double> PolicyEnv::step_distribution(const PolicyParams& params,
                                                 const SyntheticTask& task,
                                                 std::size_t step) const {
  std::vector<double> x, z;
  input(task, step, x);
  logits(params, x, step, z);
  log_softmax(z);
  for (double& v : z) v = std::isfinite(v) ? std::exp(v) : 0.0;
  return z;
}

template <typename Choose>
SampledResponse PolicyEnv::rollout(const PolicyParams& params, const SyntheticTask& task,
                                   Choose&& choose) const {
  SampledResponse out;
  std::vector<double> x, z;
  const std::size_t total_steps = positions_;
  for (std::size_t step = 0; step < total_steps; ++step) {
    input(task, step, x);
    logits(params, x, step, z);
    log_softmax(z);
    const int a = choose(z);
    if (a < 0 || !std::isfinite(z[static_cast<std::size_t>(a)])) {
      throw std::domain_error("policy distribution is not finite at step " + std::to_string(step));
    }
    out.actions.push_back(a);
    out.logps.push_back(z[static_cast<std::size_t>(a)]);
    if (a == stop_action() || a == omit_action()) break;
  }
  out.response = render(out.actions);
  out.missing_delimiter = cfg_.thinking && !out.actions.empty() && out.actions[0] == omit_action();
  return out;
}

SampledResponse PolicyEnv::sample(const PolicyParams& params, const SyntheticTask& task,
                                  Rng& rng) const {
  return rollout(params, task, [&](const std::vector<double>& logp) {
    const double u = uniform01(rng);
    double acc = 0.0;
    int last = -1;
    for (std::size_t a = 0; a < logp.size(); ++a) {
      if (!std::isfinite(logp[a])) continue;
      last = static_cast<int>(a);
      acc += std::exp(logp[a]);
      if (u < acc) return last;
    }
    return last;
  });
}

SampledResponse PolicyEnv::greedy(const PolicyParams& params, const SyntheticTask& task) const {
  return rollout(params, task, [](const std::vector<double>& logp) {
    return static_cast<int>(std::max_element(logp.begin(), logp.end()) - logp.begin());
  });
}

ModelResponse PolicyEnv::render(std::span<const int> actions) const {
  std::size_t first = 0;
  bool omitted = false;
  if (cfg_.thinking && !actions.empty()) {
    first = 1;
    omitted = actions[0] == omit_action();
  }
  std::string answer;
  if (cfg_.kind == TaskKind::grounding) {
    std::vector<BoundingBox> boxes;
    for (std::size_t i = first; i < actions.size(); ++i) {
      if (actions[i] >= 0 && actions[i] < kGridBoxes) boxes.push_back(decode_box(actions[i]));
    }
    answer = serialize_boxes(boxes);
  } else {
    for (std::size_t i = first; i < actions.size(); ++i) {
      if (actions[i] < 0 || static_cast<std::size_t>(actions[i]) >= content_) continue;
      if (!answer.empty()) answer.push_back(' ');
      answer += kReportWords[static_cast<std::size_t>(actions[i])];
    }
  }

  std::string raw;
  if (cfg_.thinking) {
    raw = std::string(kThinkingBlock);
    if (!omitted) raw += std::string(kThinkClose) + answer;
  } else {
    raw = answer;
  }
  ModelResponse resp = extract_final_answer(raw, cfg_.thinking);
  resp.token_count = actions.size();
  return resp;
}

std::vector<double> PolicyEnv::token_logps(const PolicyParams& params, std::span<const int> actions,
                                           const SyntheticTask& task) const {
  std::vector<double> out;
  out.reserve(actions.size());
  std::vector<double> x, z;
  for (std::size_t step = 0; step < actions.size(); ++step) {
    if (step >= positions_ || !legal(step, actions[step])) {
      throw std::out_of_range("action not legal at step " + std::to_string(step));
    }
    input(task, step, x);
    logits(params, x, step, z);
    log_softmax(z);
    out.push_back(z[static_cast<std::size_t>(actions[step])]);
  }
  return out;
}

void PolicyEnv::accumulate_grad(const PolicyParams& params, std::span<const int> actions,
                                const SyntheticTask& task, std::span<const double> weights,
                                PolicyParams& grad) const {
  if (weights.size() != actions.size()) {
    throw std::invalid_argument("one weight per action required");
  }
  if (grad.rows() != params.rows() || grad.cols() != params.cols()) {
    throw std::invalid_argument("gradient buffer shape mismatch");
  }
  std::vector<double> x, z;
  for (std::size_t step = 0; step < actions.size(); ++step) {
    if (step >= positions_ || !legal(step, actions[step])) {
      throw std::out_of_range("action not legal at step " + std::to_string(step));
    }
    if (weights[step] == 0.0) continue;
    input(task, step, x);
    logits(params, x, step, z);
    log_softmax(z);
    // d log p_a / d W_b = (1[a == b] - p_b) x
    for (std::size_t b = 0; b < vocab_; ++b) {
      if (!std::isfinite(z[b])) continue;
      const double coeff =
          weights[step] * ((static_cast<int>(b) == actions[step] ? 1.0 : 0.0) - std::exp(z[b]));
      if (coeff == 0.0) continue;
      auto g = grad.row(b);
      for (std::size_t c = 0; c < x.size(); ++c) {
        if (x[c] != 0.0) g[c] += coeff * x[c];
      }
    }
  }
}

double PolicyEnv::logp_and_grad(const PolicyParams& params, std::span<const int> actions,
                                const SyntheticTask& task, PolicyParams& grad) const {
  const std::vector<double> lp = token_logps(params, actions, task);
  const std::vector<double> ones(actions.size(), 1.0);
  accumulate_grad(params, actions, task, ones, grad);
  double total = 0.0;
  for (double v : lp) total += v;
  return total;
}

namespace {

constexpr char kMagic[8] = {'R', 'L', 'V', 'R', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFFU);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFFU);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const EnvConfig& cfg,
                     const PolicyParams& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put_u32(os, kCheckpointVersion);
  put_u32(os, cfg.kind == TaskKind::grounding ? 0U : 1U);
  put_u32(os, cfg.thinking ? 1U : 0U);
  put_u32(os, static_cast<std::uint32_t>(cfg.context_dim));
  put_u32(os, static_cast<std::uint32_t>(cfg.max_len));
  put_f64(os, cfg.omit_probability);
  put_f64(os, cfg.stop_probability);
  put_u32(os, static_cast<std::uint32_t>(params.rows()));
  put_u32(os, static_cast<std::uint32_t>(params.cols()));
  for (double v : params.flat()) put_f64(os, v);
  if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("not a checkpoint: bad magic");
  }
  if (get_u32(is) != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version");
  Checkpoint ck;
  const std::uint32_t kind = get_u32(is);
  if (kind > 1) throw std::runtime_error("bad task kind in checkpoint");
  ck.config = EnvConfig::for_kind(kind == 0 ? TaskKind::grounding : TaskKind::report);
  ck.config.thinking = get_u32(is) != 0;
  ck.config.context_dim = static_cast<int>(get_u32(is));
  ck.config.max_len = static_cast<int>(get_u32(is));
  ck.config.omit_probability = get_f64(is);
  ck.config.stop_probability = get_f64(is);
  const std::uint32_t rows = get_u32(is);
  const std::uint32_t cols = get_u32(is);
  std::size_t vocab = 0, input_dim = 0;
  try {
    const PolicyEnv env(ck.config);
    vocab = env.vocab_size();
    input_dim = env.input_dim();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("corrupt checkpoint header: ") + e.what());
  }
  if (rows != vocab || cols != input_dim) {
    throw std::runtime_error("checkpoint shape does not match its header");
  }
  ck.params = PolicyParams(rows, cols);
  for (double& v : ck.params.flat()) v = get_f64(is);
  return ck;
}

}  // namespace rlvr
