#pragma once

// Reward shaping: the accuracy/faithfulness blend assigned to the final
// token, the token-level KL penalty, and the adaptive KL coefficient.

#include <algorithm>
#include <cmath>
#include <span>
#include <string_view>
#include <vector>

#include "faithrl/corpus.hpp"
#include "faithrl/error.hpp"
#include "faithrl/metrics.hpp"

namespace faithrl {

struct BlendConfig {
  double alpha = 0.5;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("blend alpha must lie in [0, 1]");
  }
};

enum class KLEstimator { sampled, full };

struct KLConfig {
  double beta_init = 0.1;
  double target_kl = 0.05;  // per token
  double k_beta = 0.1;
  double clip_band = 0.2;
  KLEstimator estimator = KLEstimator::sampled;

  void validate() const {
    auto finite_pos = [](double x) { return std::isfinite(x) && x > 0; };
    if (!finite_pos(beta_init)) throw Error("kl.beta_init must be finite and > 0");
    if (!finite_pos(target_kl)) throw Error("kl.target_kl must be finite and > 0");
    if (!std::isfinite(k_beta) || k_beta < 0) throw Error("kl.k_beta must be finite and >= 0");
    if (!finite_pos(clip_band)) throw Error("kl.clip_band must be finite and > 0");
  }
};

struct RewardBreakdown {
  double acc = 0;
  double faith = 0;
  double blended = 0;
  std::vector<double> per_token_kl_penalty;
  std::vector<double> shaped_rewards;
};

inline double blend(double alpha, double acc, double faith) { return alpha * acc + (1.0 - alpha) * faith; }

/// acc = BLEU vs the reference, faith = embedding F1 vs the knowledge, both
/// rescaled to [0, 1]. An empty output earns zero.
inline RewardBreakdown blended_terminal_reward(std::string_view output, const GroundedExample& ex, const BlendConfig& cfg,
                                               const EmbeddingProvider& provider) {
  cfg.validate();
  RewardBreakdown rb;
  const auto hyp = tokenize_eval(output);
  if (hyp.empty()) return rb;
  rb.acc = sentence_bleu(hyp, tokenize_eval(ex.reference)) / 100.0;
  rb.faith = embed_f1(hyp, tokenize_eval(ex.knowledge), provider) / 100.0;
  rb.blended = blend(cfg.alpha, rb.acc, rb.faith);
  return rb;
}

/// Sampled-token log-ratio log pi(a_t|s_t) - log pi0(a_t|s_t).
inline std::vector<double> kl_terms(std::span<const double> logp_policy, std::span<const double> logp_ref) {
  if (logp_policy.size() != logp_ref.size())
    throw Error("kl_terms: length mismatch (" + std::to_string(logp_policy.size()) + " vs " +
                std::to_string(logp_ref.size()) + ")");
  std::vector<double> out(logp_policy.size());
  for (std::size_t t = 0; t < out.size(); ++t) {
    if (!std::isfinite(logp_policy[t]) || !std::isfinite(logp_ref[t])) throw Error("kl_terms: non-finite log-prob");
    out[t] = logp_policy[t] - logp_ref[t];
  }
  return out;
}

/// Full-distribution KL(pi || pi0) at one state, from log-prob rows.
inline double kl_divergence(std::span<const double> logp_policy, std::span<const double> logp_ref) {
  if (logp_policy.size() != logp_ref.size()) throw Error("kl_divergence: length mismatch");
  double kl = 0;
  for (std::size_t i = 0; i < logp_policy.size(); ++i) kl += std::exp(logp_policy[i]) * (logp_policy[i] - logp_ref[i]);
  return std::max(kl, 0.0);
}

/// r_t = -beta * kl_t, with the terminal reward added at the last token.
inline std::vector<double> shape_rewards(double terminal, std::span<const double> klterms, double beta) {
  if (klterms.empty()) throw Error("shape_rewards: empty episode");
  if (!(beta >= 0)) throw Error("shape_rewards: beta must be >= 0");
  std::vector<double> r(klterms.size());
  for (std::size_t t = 0; t < r.size(); ++t) r[t] = -beta * klterms[t];
  r.back() += terminal;
  return r;
}

/// Proportional controller: beta * (1 + k_beta * clip((kl - target) / target)).
inline double adapt_beta(double beta, double observed_mean_kl, const KLConfig& cfg) {
  const double e = std::clamp((observed_mean_kl - cfg.target_kl) / cfg.target_kl, -cfg.clip_band, cfg.clip_band);
  return beta * (1.0 + cfg.k_beta * e);
}

}  // namespace faithrl
