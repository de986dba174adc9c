#pragma once

// Evaluation metrics on the x100 scale: sentence BLEU, ROUGE-L F1, token F1
// and greedy-matching embedding F1, plus corpus aggregation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "faithrl/corpus.hpp"
#include "faithrl/error.hpp"
#include "faithrl/rng.hpp"

namespace faithrl {

using EvalTokens = std::vector<std::string>;

/// Splits each of .,:;!?()"' into its own token and the rest on whitespace.
/// Case is preserved.
inline EvalTokens tokenize_eval(std::string_view text) {
  static constexpr std::string_view punct = ".,:;!?()\"'";
  EvalTokens out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (punct.find(c) != std::string_view::npos) {
      flush();
      out.emplace_back(1, c);
    } else {
      cur += c;
    }
  }
  flush();
  return out;
}

namespace detail {

inline std::map<std::vector<std::string_view>, int> ngram_counts(const EvalTokens& toks, std::size_t n) {
  std::map<std::vector<std::string_view>, int> counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::vector<std::string_view> key(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                      toks.begin() + static_cast<std::ptrdiff_t>(i + n));
    ++counts[key];
  }
  return counts;
}

inline double f1_from(double matched, double hyp_len, double ref_len) {
  if (hyp_len == 0 || ref_len == 0) return 0.0;
  const double p = matched / hyp_len;
  const double r = matched / ref_len;
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

}  // namespace detail

/// Sentence-level BLEU-4. Zero-match orders n >= 2 use add-one smoothing;
/// a zero unigram precision yields 0.
inline double sentence_bleu(const EvalTokens& hyp, const EvalTokens& ref) {
  if (ref.empty()) throw Error("sentence_bleu: empty reference");
  if (hyp.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto h = detail::ngram_counts(hyp, n);
    const auto r = detail::ngram_counts(ref, n);
    long long matched = 0;
    long long total = hyp.size() >= n ? static_cast<long long>(hyp.size() - n + 1) : 0;
    for (const auto& [gram, count] : h) {
      auto it = r.find(gram);
      if (it != r.end()) matched += std::min(count, it->second);
    }
    double p;
    if (matched == 0) {
      if (n == 1) return 0.0;
      p = 1.0 / static_cast<double>(total + 1);
    } else {
      p = static_cast<double>(matched) / static_cast<double>(total);
    }
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(hyp.size());
  const double r = static_cast<double>(ref.size());
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return 100.0 * bp * std::exp(log_sum / 4.0);
}

inline std::size_t lcs_length(const EvalTokens& a, const EvalTokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline double rouge_l_f1(const EvalTokens& hyp, const EvalTokens& ref) {
  const auto l = static_cast<double>(lcs_length(hyp, ref));
  return 100.0 * detail::f1_from(l, static_cast<double>(hyp.size()), static_cast<double>(ref.size()));
}

/// Clipped multiset overlap F1.
inline double token_f1(const EvalTokens& hyp, const EvalTokens& target) {
  std::map<std::string_view, long long> counts;
  for (const auto& t : target) ++counts[t];
  long long overlap = 0;
  for (const auto& t : hyp) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  return 100.0 * detail::f1_from(static_cast<double>(overlap), static_cast<double>(hyp.size()),
                                 static_cast<double>(target.size()));
}

// ---------------------------------------------------------------------------
// Embedding providers

using Embedding = std::vector<double>;

/// Maps tokens to unit-norm vectors of a fixed dimension, one per token.
/// Implementations must tolerate concurrent calls.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<Embedding> embed(const EvalTokens& tokens) const = 0;
  virtual int dim() const = 0;
};

inline void normalize_in_place(Embedding& v) {
  double sq = 0;
  for (double x : v) sq += x * x;
  if (sq <= 0) throw Error("cannot normalize a zero embedding");
  const double inv = 1.0 / std::sqrt(sq);
  for (double& x : v) x *= inv;
}

/// Context-free pseudo-random embedding: FNV-1a of the token mixed with the
/// seed drives a splitmix64 stream of uniform coordinates in [-1, 1).
class HashedProvider final : public EmbeddingProvider {
 public:
  explicit HashedProvider(int dim = 64, std::uint64_t seed = 7) : dim_{dim}, seed_{seed} {
    if (dim < 8) throw Error("embedding dimension must be >= 8");
  }

  Embedding embed_token(std::string_view token) const {
    std::uint64_t state = fnv1a64(token) ^ splitmix64(seed_);
    Embedding v(static_cast<std::size_t>(dim_));
    for (auto& x : v) {
      state = splitmix64(state);
      x = static_cast<double>(state >> 11) * 0x1.0p-52 - 1.0;
    }
    normalize_in_place(v);
    return v;
  }

  std::vector<Embedding> embed(const EvalTokens& tokens) const override {
    std::vector<Embedding> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(embed_token(t));
    return out;
  }

  int dim() const override { return dim_; }
  std::uint64_t seed() const { return seed_; }

 private:
  int dim_;
  std::uint64_t seed_;
};

/// Greedy-matching embedding F1 (no IDF weighting, no rescaling), x100.
inline double embed_f1(const EvalTokens& hyp, const EvalTokens& target, const EmbeddingProvider& provider) {
  if (hyp.empty() || target.empty()) throw Error("embed_f1: empty token list");
  const auto eh = provider.embed(hyp);
  const auto et = provider.embed(target);
  if (eh.size() != hyp.size() || et.size() != target.size())
    throw Error("embed_f1: provider returned the wrong number of vectors");
  const std::size_t d = eh.front().size();
  for (const auto* side : {&eh, &et})
    for (const auto& v : *side)
      if (v.size() != d) throw Error("embed_f1: provider dimension mismatch");

  std::vector<double> best_h(eh.size(), -1.0), best_t(et.size(), -1.0);
  for (std::size_t i = 0; i < eh.size(); ++i) {
    for (std::size_t j = 0; j < et.size(); ++j) {
      double sim;
      if (eh[i] == et[j]) {
        sim = 1.0;  // identical unit vectors; avoids rounding below 1
      } else {
        sim = 0;
        for (std::size_t k = 0; k < d; ++k) sim += eh[i][k] * et[j][k];
      }
      best_h[i] = std::max(best_h[i], sim);
      best_t[j] = std::max(best_t[j], sim);
    }
  }
  double p = 0, r = 0;
  for (double s : best_h) p += s;
  for (double s : best_t) r += s;
  p /= static_cast<double>(best_h.size());
  r /= static_cast<double>(best_t.size());
  const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  return 100.0 * std::clamp(f, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Corpus evaluation

struct MetricScores {
  double sacrebleu = 0;
  double rouge_l = 0;
  double bertscore_f1 = 0;
  double token_f1 = 0;
};

struct MetricReport {
  double sacrebleu = 0;
  double rouge_l = 0;
  double bertscore_f1 = 0;
  double token_f1 = 0;
  double overall = 0;
  std::size_t n_examples = 0;
};

/// Accuracy metrics against the reference, faithfulness metrics against the
/// knowledge text. An empty output scores 0 everywhere.
inline MetricScores score_example(const GroundedExample& ex, std::string_view output,
                                  const EmbeddingProvider& provider) {
  const auto hyp = tokenize_eval(output);
  const auto ref = tokenize_eval(ex.reference);
  const auto know = tokenize_eval(ex.knowledge);
  MetricScores s;
  s.sacrebleu = sentence_bleu(hyp, ref);
  s.rouge_l = rouge_l_f1(hyp, ref);
  s.bertscore_f1 = hyp.empty() ? 0.0 : embed_f1(hyp, know, provider);
  s.token_f1 = token_f1(hyp, know);
  return s;
}

/// Per-metric arithmetic means; overall is the sum of the stored means.
inline MetricReport aggregate(std::span<const MetricScores> scores) {
  if (scores.empty()) throw Error("cannot aggregate an empty set of scores");
  MetricReport rep;
  for (const auto& s : scores) {
    rep.sacrebleu += s.sacrebleu;
    rep.rouge_l += s.rouge_l;
    rep.bertscore_f1 += s.bertscore_f1;
    rep.token_f1 += s.token_f1;
  }
  const auto n = static_cast<double>(scores.size());
  rep.sacrebleu /= n;
  rep.rouge_l /= n;
  rep.bertscore_f1 /= n;
  rep.token_f1 /= n;
  rep.overall = rep.sacrebleu + rep.rouge_l + rep.bertscore_f1 + rep.token_f1;
  rep.n_examples = scores.size();
  return rep;
}

inline MetricReport evaluate_corpus(const std::vector<GroundedExample>& examples, const std::vector<std::string>& outputs,
                                    const EmbeddingProvider& provider) {
  if (examples.size() != outputs.size())
    throw Error("evaluate_corpus: " + std::to_string(outputs.size()) + " outputs for " +
                std::to_string(examples.size()) + " examples");
  std::vector<MetricScores> scores;
  scores.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) scores.push_back(score_example(examples[i], outputs[i], provider));
  return aggregate(scores);
}

}  // namespace faithrl
