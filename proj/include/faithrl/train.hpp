#pragma once

// Supervised fine-tuning and KL-regularized PPO with generalized advantage
// estimation, periodic validation, and best-checkpoint retention.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "faithrl/corpus.hpp"
#include "faithrl/decode.hpp"
#include "faithrl/discriminator.hpp"
#include "faithrl/metrics.hpp"
#include "faithrl/model.hpp"
#include "faithrl/optim.hpp"
#include "faithrl/reward.hpp"

namespace faithrl {

struct Trajectory {
  std::string example_id;
  TokenIds state;
  TokenIds actions;
  std::vector<double> logprobs_old;
  std::vector<double> ref_logprobs;
  std::vector<double> values;
  std::vector<double> klterms;
  std::vector<double> shaped_rewards;
  std::vector<double> advantages;
  std::vector<double> returns;
  std::string output;
  double terminal_reward = 0;
  double acc = 0;
  double faith = 0;

  std::size_t size() const { return actions.size(); }
};

struct SFTConfig {
  int epochs = 10;
  double lr_start = 1e-5;  // decays linearly to 0 over all steps
  int batch_size = 8;
  double weight_decay = 0.01;
  int max_state_len = default_max_state_len;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw Error("sft.epochs must be >= 1");
    if (!(lr_start > 0)) throw Error("sft.lr_start must be > 0");
    if (batch_size < 1) throw Error("sft.batch_size must be >= 1");
  }
};

struct PPOConfig {
  double gamma = 0.99;
  double lam = 0.95;
  double clip_eps = 0.2;
  int epochs_per_batch = 4;
  int batch_episodes = 16;
  double value_coef = 0.5;
  // Desk-scale default. Large pretrained policies use far smaller rates
  // (5e-7 for a 220M-parameter model).
  double learning_rate = 3e-4;
  double weight_decay = 0.0;
  int total_iterations = 10000;
  int eval_every = 100;
  int max_state_len = default_max_state_len;
  std::uint64_t seed = 0;
  KLConfig kl;
  DecodeConfig decode{DecodeMode::topk, 50, 4, 32, 0, 0.0};
  DecodeConfig eval_decode{DecodeMode::beam, 50, 4, 32, 0, 0.0};

  void validate() const {
    if (!(gamma >= 0 && gamma <= 1)) throw Error("ppo.gamma must lie in [0, 1]");
    if (!(lam >= 0 && lam <= 1)) throw Error("ppo.lam must lie in [0, 1]");
    if (!(clip_eps > 0)) throw Error("ppo.clip_eps must be > 0");
    if (epochs_per_batch < 1) throw Error("ppo.epochs_per_batch must be >= 1");
    if (batch_episodes < 1) throw Error("ppo.batch_episodes must be >= 1");
    if (total_iterations < 0) throw Error("ppo.total_iterations must be >= 0");
    if (eval_every < 1) throw Error("ppo.eval_every must be >= 1");
    if (!(learning_rate > 0)) throw Error("ppo.learning_rate must be > 0");
    kl.validate();
    decode.validate();
    eval_decode.validate();
  }
};

// ---------------------------------------------------------------------------
// Advantages

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// Backward recursion A_t = delta_t + gamma*lam*A_{t+1} with
/// delta_t = r_t + gamma*V(s_{t+1}) - V(s_t) and V(s_{T+1}) = bootstrap.
inline GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, double bootstrap_value,
                             double gamma, double lam) {
  if (rewards.size() != values.size())
    throw Error("compute_gae: " + std::to_string(rewards.size()) + " rewards vs " + std::to_string(values.size()) +
                " values");
  if (rewards.empty()) throw Error("compute_gae: empty episode");
  const std::size_t n = rewards.size();
  GaeResult out{std::vector<double>(n), std::vector<double>(n)};
  double next_adv = 0;
  for (std::size_t i = n; i-- > 0;) {
    const double next_v = i + 1 < n ? values[i + 1] : bootstrap_value;
    const double delta = rewards[i] + gamma * next_v - values[i];
    next_adv = delta + gamma * lam * next_adv;
    out.advantages[i] = next_adv;
    out.returns[i] = next_adv + values[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Supervised fine-tuning

struct SFTResult {
  std::vector<double> epoch_losses;  // mean token cross-entropy per epoch
};

struct TeacherForcedItem {
  TokenIds sequence;    // state followed by target[:-1]
  TokenIds targets;     // reference tokens + EOS
  Eigen::Index head_start = 0;
};

inline TeacherForcedItem make_teacher_forced(const GroundedExample& ex, const Vocabulary& vocab, int max_state_len) {
  TeacherForcedItem item;
  item.sequence = encode_state(ex, vocab, max_state_len);
  item.head_start = static_cast<Eigen::Index>(item.sequence.size()) - 1;
  item.targets = encode_text(ex.reference, vocab);
  item.targets.push_back(special::eos);
  item.sequence.insert(item.sequence.end(), item.targets.begin(), item.targets.end() - 1);
  return item;
}

/// Mean token cross-entropy of the reference continuation; accumulates the
/// gradient of (sum of token NLL) * scale into grad when given.
template <typename T>
double teacher_forced_nll(const BasicPolicyValueNet<T>& net, const TeacherForcedItem& item, std::vector<T>* grad,
                          double scale) {
  const auto tape = net.forward_tape(item.sequence, item.head_start);
  double nll = 0;
  Mat<T> dlogp = Mat<T>::Zero(net.vocab_size(), tape.logp.cols());
  for (std::size_t t = 0; t < item.targets.size(); ++t) {
    nll -= static_cast<double>(tape.logp(item.targets[t], static_cast<Eigen::Index>(t)));
    dlogp(item.targets[t], static_cast<Eigen::Index>(t)) = static_cast<T>(-scale);
  }
  if (!std::isfinite(nll)) throw Error("non-finite cross-entropy for a training item");
  if (grad) net.backward(tape, dlogp, Vec<T>::Zero(tape.logp.cols()), *grad);
  return nll;
}

template <typename T>
SFTResult train_sft(const std::vector<GroundedExample>& corpus, const Vocabulary& vocab, BasicPolicyValueNet<T>& net,
                    const SFTConfig& cfg) {
  cfg.validate();
  if (corpus.empty()) throw Error("train_sft: empty corpus");
  if (net.vocab_size() != vocab.size()) throw Error("train_sft: network and vocabulary sizes differ");
  std::vector<TeacherForcedItem> items;
  for (const auto& ex : corpus) items.push_back(make_teacher_forced(ex, vocab, cfg.max_state_len));

  AdamW<T> opt(net.param_count(), {0.9, 0.999, 1e-8, cfg.weight_decay});
  std::vector<T> grad(net.param_count());
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(cfg.seed);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t steps_per_epoch = (items.size() + bs - 1) / bs;
  const double total_steps = static_cast<double>(steps_per_epoch) * cfg.epochs;
  SFTResult res;
  long long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0;
    std::size_t token_count = 0;
    for (std::size_t b = 0; b < items.size(); b += bs) {
      const auto e = std::min(items.size(), b + bs);
      std::size_t batch_tokens = 0;
      for (std::size_t i = b; i < e; ++i) batch_tokens += items[order[i]].targets.size();
      std::fill(grad.begin(), grad.end(), T(0));
      for (std::size_t i = b; i < e; ++i)
        loss_sum += teacher_forced_nll(net, items[order[i]], &grad, 1.0 / static_cast<double>(batch_tokens));
      token_count += batch_tokens;
      const double lr = cfg.lr_start * (1.0 - static_cast<double>(step) / total_steps);
      opt.step(net.params(), grad, lr);
      ++step;
    }
    const double mean = loss_sum / static_cast<double>(token_count);
    if (!std::isfinite(mean))
      throw Error("train_sft: non-finite loss in epoch " + std::to_string(epoch + 1) + " after " + std::to_string(step) +
                  " steps");
    res.epoch_losses.push_back(mean);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Rewards and rollouts

/// Terminal reward for a finished response: the accuracy/faithfulness blend
/// or a trained discriminator's probability.
class RewardSource {
 public:
  static RewardSource blended(BlendConfig cfg, const EmbeddingProvider& provider) {
    cfg.validate();
    RewardSource r;
    r.kind_ = Blended{cfg, &provider};
    return r;
  }

  static RewardSource discriminator(const DiscriminatorModel& model) {
    RewardSource r;
    r.kind_ = &model;
    return r;
  }

  RewardBreakdown terminal(std::string_view output, const GroundedExample& ex) const {
    if (auto* b = std::get_if<Blended>(&kind_)) return blended_terminal_reward(output, ex, b->cfg, *b->provider);
    RewardBreakdown rb;
    rb.blended = discriminator_reward(*std::get<const DiscriminatorModel*>(kind_), ex, output);
    return rb;
  }

 private:
  struct Blended {
    BlendConfig cfg;
    const EmbeddingProvider* provider;
  };
  std::variant<Blended, const DiscriminatorModel*> kind_;
};

/// One episode: sample a response, score it, and record per-token log-probs
/// (current and reference policy), values, KL terms and shaped rewards.
template <typename T>
Trajectory rollout(const BasicPolicyValueNet<T>& net, const BasicPolicyValueNet<T>& ref_net, const GroundedExample& ex,
                   const Vocabulary& vocab, const RewardSource& reward, double beta, const PPOConfig& cfg, Rng& rng) {
  if (net.dims().vocab != ref_net.dims().vocab || net.vocab_size() != vocab.size())
    throw Error("rollout: policy, reference and vocabulary disagree on size");
  Trajectory tr;
  tr.example_id = ex.id;
  tr.state = encode_state(ex, vocab, cfg.max_state_len);
  tr.actions = sample_topk(net, tr.state, cfg.decode, rng).actions;

  // Re-score the whole sequence in one pass so PPO's first-epoch ratio is
  // exactly 1 (same arithmetic as ppo_update).
  TokenIds seq = tr.state;
  seq.insert(seq.end(), tr.actions.begin(), tr.actions.end() - 1);
  const auto head = static_cast<Eigen::Index>(tr.state.size()) - 1;
  const auto cur = net.forward_tape(seq, head);
  const auto ref = ref_net.forward_tape(seq, head);
  const std::size_t n = tr.actions.size();
  tr.logprobs_old.resize(n);
  tr.ref_logprobs.resize(n);
  tr.values.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    const auto c = static_cast<Eigen::Index>(t);
    tr.logprobs_old[t] = static_cast<double>(cur.logp(tr.actions[t], c));
    tr.ref_logprobs[t] = static_cast<double>(ref.logp(tr.actions[t], c));
    tr.values[t] = static_cast<double>(cur.values[c]);
  }
  if (cfg.kl.estimator == KLEstimator::sampled) {
    tr.klterms = kl_terms(tr.logprobs_old, tr.ref_logprobs);
  } else {
    tr.klterms.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
      const auto c = static_cast<Eigen::Index>(t);
      std::vector<double> p(static_cast<std::size_t>(net.vocab_size())), q(p.size());
      for (std::size_t v = 0; v < p.size(); ++v) {
        p[v] = static_cast<double>(cur.logp(static_cast<Eigen::Index>(v), c));
        q[v] = static_cast<double>(ref.logp(static_cast<Eigen::Index>(v), c));
      }
      tr.klterms[t] = kl_divergence(p, q);
    }
  }
  tr.output = decode_tokens(tr.actions, vocab);
  const auto rb = reward.terminal(tr.output, ex);
  tr.terminal_reward = rb.blended;
  tr.acc = rb.acc;
  tr.faith = rb.faith;
  tr.shaped_rewards = shape_rewards(tr.terminal_reward, tr.klterms, beta);
  return tr;
}

inline void fill_advantages(Trajectory& tr, double gamma, double lam) {
  // Episodes end at EOS or the horizon; both are terminal.
  auto gae = compute_gae(tr.shaped_rewards, tr.values, 0.0, gamma, lam);
  tr.advantages = std::move(gae.advantages);
  tr.returns = std::move(gae.returns);
}

// ---------------------------------------------------------------------------
// PPO update

struct PPOStats {
  double policy_loss = 0;  // first epoch
  double value_loss = 0;   // first epoch
  double total_loss = 0;   // first epoch
  double clip_fraction = 0;  // last epoch
  double mean_kl = 0;        // rollout KL to the reference, per token
  double mean_terminal_reward = 0;
};

/// Normalizes advantages over every token of the batch (std floor 1e-8).
inline std::vector<std::vector<double>> normalized_advantages(const std::vector<Trajectory>& batch) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& tr : batch) {
    if (tr.advantages.size() != tr.size()) throw Error("ppo_update: advantages not computed");
    for (double a : tr.advantages) sum += a;
    n += tr.size();
  }
  const double mean = sum / static_cast<double>(n);
  // A constant batch carries no signal; keep it exactly zero rather than
  // amplifying the rounding error of the mean by the std floor.
  bool constant = true;
  for (const auto& tr : batch)
    for (double a : tr.advantages) constant = constant && a == batch.front().advantages.front();
  if (constant) {
    std::vector<std::vector<double>> zeros;
    for (const auto& tr : batch) zeros.emplace_back(tr.size(), 0.0);
    return zeros;
  }
  double sq = 0;
  for (const auto& tr : batch)
    for (double a : tr.advantages) sq += (a - mean) * (a - mean);
  const double sd = std::max(std::sqrt(sq / static_cast<double>(n)), 1e-8);
  std::vector<std::vector<double>> out;
  for (const auto& tr : batch) {
    std::vector<double> v(tr.size());
    for (std::size_t t = 0; t < v.size(); ++t) v[t] = (tr.advantages[t] - mean) / sd;
    out.push_back(std::move(v));
  }
  return out;
}

struct PPOLoss {
  double policy = 0;
  double value = 0;
  double total = 0;
  std::size_t clipped = 0;
};

/// Clipped-ratio policy loss plus value_coef * squared value error, averaged
/// over batch tokens. Accumulates the loss gradient into grad.
template <typename T>
PPOLoss ppo_objective(const BasicPolicyValueNet<T>& net, const std::vector<Trajectory>& batch,
                      const std::vector<std::vector<double>>& adv, const PPOConfig& cfg, std::vector<T>& grad) {
  std::size_t n_tokens = 0;
  for (const auto& tr : batch) n_tokens += tr.size();
  const double inv_n = 1.0 / static_cast<double>(n_tokens);
  PPOLoss out;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& tr = batch[b];
    TokenIds seq = tr.state;
    seq.insert(seq.end(), tr.actions.begin(), tr.actions.end() - 1);
    const auto tape = net.forward_tape(seq, static_cast<Eigen::Index>(tr.state.size()) - 1);
    Mat<T> dlogp = Mat<T>::Zero(net.vocab_size(), tape.logp.cols());
    Vec<T> dvalue(tape.logp.cols());
    for (std::size_t t = 0; t < tr.size(); ++t) {
      const auto c = static_cast<Eigen::Index>(t);
      const double lp = static_cast<double>(tape.logp(tr.actions[t], c));
      const double ratio = std::exp(lp - tr.logprobs_old[t]);
      if (!std::isfinite(ratio))
        throw Error("ppo_update: non-finite ratio (episode " + tr.example_id + ", token " + std::to_string(t) + ")");
      const double a = adv[b][t];
      const double unclipped = ratio * a;
      const double clipped_obj = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * a;
      out.policy -= std::min(unclipped, clipped_obj);
      if (unclipped <= clipped_obj) {
        dlogp(tr.actions[t], c) = static_cast<T>(-a * ratio * inv_n);
      } else {
        ++out.clipped;
      }
      const double v = static_cast<double>(tape.values[c]);
      out.value += (v - tr.returns[t]) * (v - tr.returns[t]);
      dvalue[c] = static_cast<T>(2.0 * cfg.value_coef * (v - tr.returns[t]) * inv_n);
    }
    net.backward(tape, dlogp, dvalue, grad);
  }
  out.policy *= inv_n;
  out.value *= inv_n;
  out.total = out.policy + cfg.value_coef * out.value;
  return out;
}

/// epochs_per_batch passes over the batch, one optimizer step each.
template <typename T>
PPOStats ppo_update(BasicPolicyValueNet<T>& net, AdamW<T>& opt, const std::vector<Trajectory>& batch,
                    const PPOConfig& cfg) {
  if (batch.empty()) throw Error("ppo_update: empty batch");
  const auto adv = normalized_advantages(batch);
  std::size_t n_tokens = 0;
  PPOStats st;
  for (const auto& tr : batch) {
    n_tokens += tr.size();
    for (double k : tr.klterms) st.mean_kl += k;
    st.mean_terminal_reward += tr.terminal_reward;
  }
  st.mean_kl /= static_cast<double>(n_tokens);
  st.mean_terminal_reward /= static_cast<double>(batch.size());

  std::vector<T> grad(net.param_count());
  for (int epoch = 0; epoch < cfg.epochs_per_batch; ++epoch) {
    std::fill(grad.begin(), grad.end(), T(0));
    const auto loss = ppo_objective(net, batch, adv, cfg, grad);
    if (!std::isfinite(loss.total))
      throw Error("ppo_update: non-finite loss in epoch " + std::to_string(epoch + 1) + " (policy " +
                  std::to_string(loss.policy) + ", value " + std::to_string(loss.value) + ")");
    if (epoch == 0) {
      st.policy_loss = loss.policy;
      st.value_loss = loss.value;
      st.total_loss = loss.total;
    }
    st.clip_fraction = static_cast<double>(loss.clipped) / static_cast<double>(n_tokens);
    opt.step(net.params(), grad, cfg.learning_rate);
  }
  return st;
}

// ---------------------------------------------------------------------------
// Evaluation helpers

template <StepModel M>
std::vector<std::string> generate_outputs(const M& net, const std::vector<GroundedExample>& examples,
                                          const Vocabulary& vocab, const DecodeConfig& cfg,
                                          int max_state_len = default_max_state_len) {
  std::vector<std::string> out;
  out.reserve(examples.size());
  Rng rng(cfg.seed);
  for (const auto& ex : examples) {
    const auto state = encode_state(ex, vocab, max_state_len);
    TokenIds ids = cfg.mode == DecodeMode::topk ? sample_topk(net, state, cfg, rng).actions : decode(net, state, cfg);
    out.push_back(decode_tokens(ids, vocab));
  }
  return out;
}

inline double mean_blended_reward(const std::vector<GroundedExample>& examples, const std::vector<std::string>& outputs,
                                  const BlendConfig& cfg, const EmbeddingProvider& provider) {
  if (examples.size() != outputs.size() || examples.empty()) throw Error("mean_blended_reward: size mismatch");
  double s = 0;
  for (std::size_t i = 0; i < examples.size(); ++i)
    s += blended_terminal_reward(outputs[i], examples[i], cfg, provider).blended;
  return s / static_cast<double>(examples.size());
}

/// Mean per-token KL(pi || pi0), full distribution, along trajectories
/// sampled from pi.
template <typename T>
double mean_kl_to_reference(const BasicPolicyValueNet<T>& net, const BasicPolicyValueNet<T>& ref,
                            const std::vector<GroundedExample>& examples, const Vocabulary& vocab,
                            const DecodeConfig& cfg, int max_state_len = default_max_state_len) {
  Rng rng(cfg.seed);
  double total = 0;
  std::size_t n = 0;
  for (const auto& ex : examples) {
    const auto state = encode_state(ex, vocab, max_state_len);
    const auto s = sample_topk(net, state, cfg, rng);
    TokenIds seq = state;
    seq.insert(seq.end(), s.actions.begin(), s.actions.end() - 1);
    const auto head = static_cast<Eigen::Index>(state.size()) - 1;
    const auto a = net.forward_tape(seq, head);
    const auto b = ref.forward_tape(seq, head);
    for (Eigen::Index c = 0; c < a.logp.cols(); ++c) {
      double kl = 0;
      for (Eigen::Index v = 0; v < a.logp.rows(); ++v)
        kl += std::exp(static_cast<double>(a.logp(v, c))) * static_cast<double>(a.logp(v, c) - b.logp(v, c));
      total += kl;
      ++n;
    }
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

// ---------------------------------------------------------------------------
// PPO training loop

struct EvalRecord {
  int iteration = 0;
  MetricReport report;
};

template <typename T>
struct PPOResult {
  BasicPolicyValueNet<T> best;
  BasicPolicyValueNet<T> final_net;
  int best_iteration = 0;
  MetricReport best_report;
  std::vector<EvalRecord> evaluations;
  std::vector<std::string> log;  // one JSON record per line
  double final_beta = 0;
};

inline nlohmann::ordered_json eval_record_json(const EvalRecord& e) {
  nlohmann::ordered_json j;
  j["type"] = "eval";
  j["iteration"] = e.iteration;
  j["sacrebleu"] = e.report.sacrebleu;
  j["rouge_l"] = e.report.rouge_l;
  j["bertscore_f1"] = e.report.bertscore_f1;
  j["token_f1"] = e.report.token_f1;
  j["overall"] = e.report.overall;
  return j;
}

template <typename T>
PPOResult<T> train_ppo(const std::vector<GroundedExample>& train, const std::vector<GroundedExample>& validation,
                       const Vocabulary& vocab, const BasicPolicyValueNet<T>& init, const PPOConfig& cfg,
                       const RewardSource& reward, const EmbeddingProvider& eval_provider,
                       const std::function<void(const std::string&)>& on_log = {}) {
  cfg.validate();
  if (train.empty() || validation.empty()) throw Error("train_ppo: train and validation splits must be non-empty");
  const BasicPolicyValueNet<T> ref = init;
  BasicPolicyValueNet<T> net = init;
  AdamW<T> opt(net.param_count(), {0.9, 0.999, 1e-8, cfg.weight_decay});
  PPOResult<T> res{init, init, 0, {}, {}, {}, cfg.kl.beta_init};
  auto emit = [&](const nlohmann::ordered_json& j) {
    res.log.push_back(j.dump());
    if (on_log) on_log(res.log.back());
  };
  auto evaluate = [&](int iteration) {
    const auto outputs = generate_outputs(net, validation, vocab, cfg.eval_decode, cfg.max_state_len);
    EvalRecord rec{iteration, evaluate_corpus(validation, outputs, eval_provider)};
    res.evaluations.push_back(rec);
    emit(eval_record_json(rec));
    if (res.evaluations.size() == 1 || rec.report.overall > res.best_report.overall) {
      res.best = net;
      res.best_iteration = iteration;
      res.best_report = rec.report;
    }
  };

  evaluate(0);
  double beta = cfg.kl.beta_init;
  Rng pick(derive_seed(cfg.seed, 0x5eed));
  for (int it = 1; it <= cfg.total_iterations; ++it) {
    std::vector<Trajectory> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch_episodes));
    for (int e = 0; e < cfg.batch_episodes; ++e) {
      const auto& ex = train[pick.below(train.size())];
      Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(it) * 1000003ULL + static_cast<std::uint64_t>(e)));
      auto tr = rollout(net, ref, ex, vocab, reward, beta, cfg, rng);
      fill_advantages(tr, cfg.gamma, cfg.lam);
      batch.push_back(std::move(tr));
    }
    const auto st = ppo_update(net, opt, batch, cfg);
    const double beta_used = beta;
    beta = adapt_beta(beta, std::max(st.mean_kl, 0.0), cfg.kl);

    nlohmann::ordered_json j;
    j["type"] = "iter";
    j["iteration"] = it;
    j["mean_terminal_reward"] = st.mean_terminal_reward;
    j["mean_kl"] = st.mean_kl;
    j["beta"] = beta_used;
    j["policy_loss"] = st.policy_loss;
    j["value_loss"] = st.value_loss;
    j["total_loss"] = st.total_loss;
    j["clip_fraction"] = st.clip_fraction;
    emit(j);

    if (it % cfg.eval_every == 0 || it == cfg.total_iterations) evaluate(it);
  }
  res.final_net = net;
  res.final_beta = beta;
  return res;
}

}  // namespace faithrl
