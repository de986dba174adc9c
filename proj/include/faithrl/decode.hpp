#pragma once

// Autoregressive decoding over any incremental step model: greedy, top-k
// sampling, and length-unnormalized beam search.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <numeric>
#include <span>
#include <string_view>
#include <vector>

#include "faithrl/corpus.hpp"
#include "faithrl/error.hpp"
#include "faithrl/rng.hpp"

namespace faithrl {

template <typename M>
concept StepModel = requires(const M& m, const typename M::Cursor& c, TokenId tok, std::span<const TokenId> s) {
  { m.begin(s) } -> std::same_as<typename M::Cursor>;
  { m.advance(c, tok) } -> std::same_as<typename M::Cursor>;
  { m.next_logprobs(c) } -> std::same_as<std::vector<double>>;
  { m.vocab_size() } -> std::convertible_to<int>;
};

template <typename M>
concept ValuedStepModel = StepModel<M> && requires(const M& m, const typename M::Cursor& c) {
  { m.value(c) } -> std::convertible_to<double>;
};

enum class DecodeMode { topk, beam, greedy };

inline std::string_view to_string(DecodeMode m) {
  switch (m) {
    case DecodeMode::topk: return "topk";
    case DecodeMode::beam: return "beam";
    case DecodeMode::greedy: return "greedy";
  }
  return "?";
}

inline DecodeMode parse_decode_mode(std::string_view s) {
  if (s == "topk") return DecodeMode::topk;
  if (s == "beam") return DecodeMode::beam;
  if (s == "greedy") return DecodeMode::greedy;
  throw Error("unknown decode mode `" + std::string(s) + "`");
}

struct DecodeConfig {
  DecodeMode mode = DecodeMode::topk;
  int k = 50;
  int beam_width = 4;
  int max_new_tokens = 32;
  std::uint64_t seed = 0;
  double length_penalty = 0.0;  // beam only; finished scores divided by len^penalty

  void validate() const {
    if (k < 1) throw Error("decode.k must be >= 1");
    if (beam_width < 1) throw Error("decode.beam_width must be >= 1");
    if (max_new_tokens < 1) throw Error("decode.max_new_tokens must be >= 1");
  }
};

struct SampledSequence {
  TokenIds actions;
  std::vector<double> logprobs;  // under the unrestricted distribution
  std::vector<double> values;    // empty for models without a value head
};

namespace detail {

// Token ids ordered by log-prob descending, ties to the lower id.
inline std::vector<TokenId> ranked_ids(const std::vector<double>& lp, std::size_t keep) {
  std::vector<TokenId> ids(lp.size());
  std::iota(ids.begin(), ids.end(), 0);
  keep = std::min(keep, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep), ids.end(), [&](TokenId a, TokenId b) {
    const auto la = lp[static_cast<std::size_t>(a)], lb = lp[static_cast<std::size_t>(b)];
    return la != lb ? la > lb : a < b;
  });
  ids.resize(keep);
  return ids;
}

}  // namespace detail

/// Top-k sampling with a seeded generator. k = 1 is greedy decoding.
template <StepModel M>
SampledSequence sample_topk(const M& model, std::span<const TokenId> state, const DecodeConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.k > model.vocab_size()) throw Error("decode.k exceeds vocabulary size");
  SampledSequence out;
  auto cursor = model.begin(state);
  for (int step = 0; step < cfg.max_new_tokens; ++step) {
    const auto lp = model.next_logprobs(cursor);
    const auto top = detail::ranked_ids(lp, static_cast<std::size_t>(cfg.k));
    TokenId chosen = top.front();
    if (top.size() > 1) {
      const double m = lp[static_cast<std::size_t>(top.front())];
      std::vector<double> w(top.size());
      double total = 0;
      for (std::size_t i = 0; i < top.size(); ++i) total += w[i] = std::exp(lp[static_cast<std::size_t>(top[i])] - m);
      double u = rng.uniform() * total;
      chosen = top.back();
      for (std::size_t i = 0; i < top.size(); ++i) {
        if (u < w[i]) {
          chosen = top[i];
          break;
        }
        u -= w[i];
      }
    }
    out.actions.push_back(chosen);
    out.logprobs.push_back(lp[static_cast<std::size_t>(chosen)]);
    if constexpr (ValuedStepModel<M>) out.values.push_back(model.value(cursor));
    if (chosen == special::eos) break;
    if (step + 1 < cfg.max_new_tokens) cursor = model.advance(cursor, chosen);
  }
  return out;
}

template <StepModel M>
SampledSequence sample_topk(const M& model, std::span<const TokenId> state, const DecodeConfig& cfg) {
  Rng rng(cfg.seed);
  return sample_topk(model, state, cfg, rng);
}

template <StepModel M>
TokenIds greedy_decode(const M& model, std::span<const TokenId> state, int max_new_tokens) {
  TokenIds out;
  auto cursor = model.begin(state);
  for (int step = 0; step < max_new_tokens; ++step) {
    const auto lp = model.next_logprobs(cursor);
    const TokenId best = detail::ranked_ids(lp, 1).front();
    out.push_back(best);
    if (best == special::eos) break;
    if (step + 1 < max_new_tokens) cursor = model.advance(cursor, best);
  }
  return out;
}

/// Beam search over summed log-probs. Finished hypotheses (ending in EOS) and
/// hypotheses cut off at max_new_tokens compete on total log-prob. Ties go to
/// the lower token id, then to the earlier beam.
template <StepModel M>
TokenIds beam_search(const M& model, std::span<const TokenId> state, const DecodeConfig& cfg) {
  cfg.validate();
  using Cursor = typename M::Cursor;
  struct Hyp {
    TokenIds tokens;
    double score;
    Cursor cursor;
  };
  auto final_score = [&](const TokenIds& toks, double score) {
    return cfg.length_penalty == 0.0 ? score : score / std::pow(static_cast<double>(toks.size()), cfg.length_penalty);
  };

  std::vector<Hyp> live{{{}, 0.0, model.begin(state)}};
  std::vector<std::pair<TokenIds, double>> finished;
  const auto width = static_cast<std::size_t>(cfg.beam_width);

  for (int step = 0; step < cfg.max_new_tokens && !live.empty(); ++step) {
    struct Cand {
      double score;
      TokenId tok;
      std::size_t parent;
    };
    std::vector<Cand> cands;
    for (std::size_t b = 0; b < live.size(); ++b) {
      const auto lp = model.next_logprobs(live[b].cursor);
      // Only the top `width` continuations of a beam can survive.
      for (TokenId t : detail::ranked_ids(lp, width)) cands.push_back({live[b].score + lp[static_cast<std::size_t>(t)], t, b});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.tok != b.tok) return a.tok < b.tok;
      return a.parent < b.parent;
    });
    std::vector<Hyp> next;
    for (std::size_t i = 0; i < cands.size() && i < width; ++i) {
      const auto& c = cands[i];
      TokenIds toks = live[c.parent].tokens;
      toks.push_back(c.tok);
      if (c.tok == special::eos) {
        finished.emplace_back(std::move(toks), c.score);
      } else if (step + 1 == cfg.max_new_tokens) {
        finished.emplace_back(std::move(toks), c.score);
      } else {
        next.push_back({std::move(toks), c.score, model.advance(live[c.parent].cursor, c.tok)});
      }
    }
    live = std::move(next);
    if (cfg.length_penalty == 0.0 && !finished.empty() && !live.empty()) {
      // Log-probs are <= 0, so live scores only fall from here.
      double best_done = -INFINITY, best_live = -INFINITY;
      for (const auto& f : finished) best_done = std::max(best_done, f.second);
      for (const auto& h : live) best_live = std::max(best_live, h.score);
      if (best_done >= best_live) break;
    }
  }
  if (finished.empty()) throw Error("beam_search produced no hypotheses");
  std::size_t best = 0;
  for (std::size_t i = 1; i < finished.size(); ++i)
    if (final_score(finished[i].first, finished[i].second) > final_score(finished[best].first, finished[best].second))
      best = i;
  return finished[best].first;
}

template <StepModel M>
TokenIds decode(const M& model, std::span<const TokenId> state, const DecodeConfig& cfg) {
  switch (cfg.mode) {
    case DecodeMode::greedy: return greedy_decode(model, state, cfg.max_new_tokens);
    case DecodeMode::beam: return beam_search(model, state, cfg);
    case DecodeMode::topk: return sample_topk(model, state, cfg).actions;
  }
  return {};
}

}  // namespace faithrl
