#pragma once

// Learned reward baseline: a small classifier over (state, response) trained
// to tell ground-truth responses from sampled ones. One GRU encodes both
// sides; a logistic head reads [s; r; s*r] over their mean-pooled states plus
// an alignment score: the mean over response tokens of the best embedding dot
// product with any state token. The alignment makes copying from the state
// visible from the first step.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "faithrl/corpus.hpp"
#include "faithrl/gru.hpp"
#include "faithrl/optim.hpp"

namespace faithrl {

using LabeledResponse = std::pair<GroundedExample, std::string>;

struct DiscriminatorConfig {
  int embed = 32;
  int hidden = 64;
  int epochs = 10;
  int batch_size = 8;
  double learning_rate = 1e-2;  // constant schedule
  int max_state_len = default_max_state_len;
  std::uint64_t seed = 0;
};

class DiscriminatorModel {
 public:
  struct Input {
    TokenIds state;     // encoded dialogue state
    TokenIds response;  // SEP response EOS
  };

  DiscriminatorModel(Vocabulary vocab, const DiscriminatorConfig& cfg)
      : vocab_{std::move(vocab)},
        cfg_{cfg},
        encoder_{vocab_.size(), cfg.embed, cfg.hidden, 0},
        params_(encoder_.param_count() + 3 * static_cast<std::size_t>(cfg.hidden) + 2, 0.0) {
    if (cfg.embed < 1 || cfg.hidden < 1) throw Error("discriminator dimensions must be >= 1");
    Rng rng(cfg.seed);
    encoder_.init(params_, rng);
  }

  const Vocabulary& vocab() const { return vocab_; }
  double train_accuracy() const { return train_accuracy_; }
  const std::vector<double>& epoch_losses() const { return epoch_losses_; }

  Input encode(const GroundedExample& ex, std::string_view response) const {
    Input in;
    in.state = encode_state(ex, vocab_, cfg_.max_state_len);
    in.response.push_back(special::sep);
    for (TokenId t : encode_text(response, vocab_)) in.response.push_back(t);
    in.response.push_back(special::eos);
    return in;
  }

  double logit(const Input& in) const {
    const auto ts = encoder_.run(params_.data(), in.state);
    const auto tr = encoder_.run(params_.data(), in.response);
    const Vec<double> s = pooled(ts), r = pooled(tr);
    return head(0).dot(s) + head(1).dot(r) + head(2).dot(s.cwiseProduct(r)) + align_w() * alignment(in).score +
           head_b();
  }

  /// Probability that `response` is the ground truth, strictly inside (0, 1).
  double score(const GroundedExample& ex, std::string_view response) const {
    const double p = 1.0 / (1.0 + std::exp(-logit(encode(ex, response))));
    return std::clamp(p, 1e-12, 1.0 - 1e-12);
  }

  // Accumulates dBCE/dparams for one item; returns its loss.
  double accumulate_gradient(const Input& in, double label, std::vector<double>& grad) const {
    const auto ts = encoder_.run(params_.data(), in.state);
    const auto tr = encoder_.run(params_.data(), in.response);
    const Vec<double> s = pooled(ts), r = pooled(tr);
    const auto al = alignment(in);
    const double z =
        head(0).dot(s) + head(1).dot(r) + head(2).dot(s.cwiseProduct(r)) + align_w() * al.score + head_b();
    // Stable BCE with logits.
    const double loss = std::max(z, 0.0) - z * label + std::log1p(std::exp(-std::abs(z)));
    const double dz = 1.0 / (1.0 + std::exp(-z)) - label;
    const auto H = static_cast<Eigen::Index>(cfg_.hidden);
    double* g = grad.data() + encoder_.end_offset();
    Eigen::Map<Vec<double>>(g, H) += dz * s;
    Eigen::Map<Vec<double>>(g + H, H) += dz * r;
    Eigen::Map<Vec<double>>(g + 2 * H, H) += dz * s.cwiseProduct(r);
    g[3 * H] += dz * al.score;
    g[3 * H + 1] += dz;
    unalign(in, al, dz * align_w(), grad);
    const Vec<double> ds = dz * (head(0) + head(2).cwiseProduct(r));
    const Vec<double> dr = dz * (head(1) + head(2).cwiseProduct(s));
    unpool(ts, ds, grad);
    unpool(tr, dr, grad);
    return loss;
  }

  std::vector<double>& mutable_params() { return params_; }
  const DiscriminatorConfig& config() const { return cfg_; }

 private:
  using Trace = GruEncoder<double>::Trace;

  static Vec<double> pooled(const Trace& t) {
    const auto len = t.h.cols() - 1;
    return t.h.rightCols(len).rowwise().sum() / static_cast<double>(len);
  }

  void unpool(const Trace& t, const Vec<double>& d, std::vector<double>& grad) const {
    const auto len = t.h.cols() - 1;
    Mat<double> dh = (d / static_cast<double>(len)).replicate(1, len);
    encoder_.backward(params_.data(), grad.data(), t, dh);
  }

  Eigen::Map<const Mat<double>> table() const {
    return {params_.data() + encoder_.embedding_offset(), cfg_.embed, vocab_.size()};
  }

  struct Alignment {
    double score = 0;
    std::vector<TokenId> best;  // per response token, its best-matching state token
  };

  // Response content tokens exclude the leading SEP and trailing EOS.
  Alignment alignment(const Input& in) const {
    Alignment a;
    const auto n = in.response.size() - 2;
    if (n == 0) return a;
    for (std::size_t j = 1; j + 1 < in.response.size(); ++j) {
      const auto e = table().col(in.response[j]);
      double best = -INFINITY;
      TokenId arg = in.state.front();
      for (TokenId t : in.state) {
        const double d = e.dot(table().col(t));
        if (d > best) best = d, arg = t;
      }
      a.score += best;
      a.best.push_back(arg);
    }
    a.score /= static_cast<double>(n);
    return a;
  }

  void unalign(const Input& in, const Alignment& a, double d, std::vector<double>& grad) const {
    if (a.best.empty()) return;
    Eigen::Map<Mat<double>> g(grad.data() + encoder_.embedding_offset(), cfg_.embed, vocab_.size());
    const double w = d / static_cast<double>(a.best.size());
    for (std::size_t j = 0; j < a.best.size(); ++j) {
      const TokenId r = in.response[j + 1], s = a.best[j];
      const Vec<double> er = table().col(r), es = table().col(s);
      g.col(r) += w * es;
      g.col(s) += w * er;
    }
  }

  double align_w() const { return params_[params_.size() - 2]; }

  Eigen::Map<const Vec<double>> head(int block) const {
    return {params_.data() + encoder_.end_offset() + static_cast<std::size_t>(block * cfg_.hidden), cfg_.hidden};
  }
  double head_b() const { return params_.back(); }

  Vocabulary vocab_;
  DiscriminatorConfig cfg_;
  GruEncoder<double> encoder_;
  std::vector<double> params_;
  double train_accuracy_ = 0;
  std::vector<double> epoch_losses_;

  friend DiscriminatorModel train_discriminator(const std::vector<LabeledResponse>&, const std::vector<LabeledResponse>&,
                                                const Vocabulary&, const DiscriminatorConfig&);
};

/// Binary cross-entropy training on a balanced set of positive (ground-truth)
/// and negative (sampled) responses.
inline DiscriminatorModel train_discriminator(const std::vector<LabeledResponse>& positives,
                                              const std::vector<LabeledResponse>& negatives, const Vocabulary& vocab,
                                              const DiscriminatorConfig& cfg) {
  if (positives.empty() || negatives.empty()) throw Error("train_discriminator: empty training set");
  if (positives.size() != negatives.size())
    throw Error("train_discriminator: " + std::to_string(positives.size()) + " positives vs " +
                std::to_string(negatives.size()) + " negatives; the sets must be balanced");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw Error("train_discriminator: epochs and batch_size must be >= 1");

  DiscriminatorModel model(vocab, cfg);
  std::vector<std::pair<DiscriminatorModel::Input, double>> items;
  for (const auto& [ex, r] : positives) items.emplace_back(model.encode(ex, r), 1.0);
  for (const auto& [ex, r] : negatives) items.emplace_back(model.encode(ex, r), 0.0);

  AdamW<double> opt(model.params_.size());
  std::vector<double> grad(model.params_.size());
  std::vector<std::size_t> order(items.size());
  Rng rng(derive_seed(cfg.seed, 1));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());
    double total = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const auto e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = b; i < e; ++i)
        total += model.accumulate_gradient(items[order[i]].first, items[order[i]].second, grad);
      for (auto& g : grad) g /= static_cast<double>(e - b);
      opt.step(model.params_, grad, cfg.learning_rate);
    }
    const double mean = total / static_cast<double>(items.size());
    if (!std::isfinite(mean)) throw Error("train_discriminator: non-finite loss in epoch " + std::to_string(epoch + 1));
    model.epoch_losses_.push_back(mean);
  }
  std::size_t correct = 0;
  for (const auto& [in, label] : items) correct += (model.logit(in) > 0) == (label > 0.5);
  model.train_accuracy_ = static_cast<double>(correct) / static_cast<double>(items.size());
  return model;
}

inline double discriminator_reward(const DiscriminatorModel& model, const GroundedExample& ex, std::string_view output) {
  return model.score(ex, output);
}

}  // namespace faithrl
