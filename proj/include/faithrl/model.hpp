#pragma once

// Policy/value network: a shared GRU base with a softmax policy head and a
// scalar value head. A frozen copy of the initial network serves as the
// reference policy for the KL penalty.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "faithrl/gru.hpp"

namespace faithrl {

struct NetDims {
  int vocab = 0;
  int embed = 64;
  int hidden = 128;

  friend bool operator==(const NetDims&, const NetDims&) = default;
};

template <typename T>
class BasicPolicyValueNet {
 public:
  using Scalar = T;

  // Recurrent state after consuming a prefix.
  struct Cursor {
    Vec<T> h;
  };

  // Everything backward() needs from one forward pass. Heads are evaluated
  // for positions [head_start, len).
  struct Tape {
    typename GruEncoder<T>::Trace trace;
    Eigen::Index head_start = 0;
    Mat<T> logp;     // vocab x heads
    Vec<T> values;   // heads
  };

  struct Output {
    Mat<T> logp;    // vocab x len, column t = log pi(. | tokens[0..t])
    Vec<T> values;  // len
  };

  BasicPolicyValueNet(NetDims dims, std::uint64_t seed) : BasicPolicyValueNet(dims) {
    if (dims.vocab < 2 || dims.embed < 1 || dims.hidden < 1) throw Error("invalid network dimensions");
    Rng rng(seed);
    encoder_.init(params_, rng);
    // Near-uniform initial policy, zero value head.
    for (std::size_t i = 0; i < policy_w_count(); ++i)
      params_[policy_off() + i] = static_cast<T>((2 * rng.uniform() - 1) * 0.01);
  }

  static BasicPolicyValueNet from_params(NetDims dims, std::vector<T> params) {
    BasicPolicyValueNet net(dims);
    if (params.size() != net.params_.size())
      throw Error("parameter count " + std::to_string(params.size()) + " does not match dimensions (" +
                  std::to_string(net.params_.size()) + ")");
    net.params_ = std::move(params);
    return net;
  }

  static std::size_t param_count(NetDims d) {
    const auto v = static_cast<std::size_t>(d.vocab), h = static_cast<std::size_t>(d.hidden);
    return GruEncoder<T>::param_count(d.vocab, d.embed, d.hidden) + v * h + v + h + 1;
  }

  const NetDims& dims() const { return dims_; }
  int vocab_size() const { return dims_.vocab; }
  std::size_t param_count() const { return params_.size(); }
  std::span<const T> params() const { return params_; }
  std::span<T> params() { return params_; }

  // Offsets of the head blocks in the flat parameter vector.
  std::size_t policy_off() const { return encoder_.end_offset(); }
  std::size_t policy_w_count() const { return static_cast<std::size_t>(dims_.vocab) * dims_.hidden; }
  std::size_t value_off() const { return policy_off() + policy_w_count() + static_cast<std::size_t>(dims_.vocab); }

  Output forward(std::span<const TokenId> tokens) const {
    if (tokens.empty()) throw Error("forward: empty token sequence");
    auto tape = forward_tape(tokens, 0);
    return {std::move(tape.logp), std::move(tape.values)};
  }

  Tape forward_tape(std::span<const TokenId> tokens, Eigen::Index head_start) const {
    if (tokens.empty()) throw Error("forward: empty token sequence");
    Tape tape;
    tape.trace = encoder_.run(params_.data(), tokens);
    tape.head_start = head_start;
    const auto len = static_cast<Eigen::Index>(tokens.size());
    const auto hs = tape.trace.h.middleCols(head_start + 1, len - head_start);
    Mat<T> logits = wp() * hs;
    logits.colwise() += bp();
    for (Eigen::Index c = 0; c < logits.cols(); ++c) log_softmax_in_place(logits.col(c));
    tape.logp = std::move(logits);
    tape.values = (wv() * hs).transpose();
    tape.values.array() += bv();
    return tape;
  }

  /// Accumulates parameter gradients into `grad` given dLoss/dlogp (vocab x
  /// heads) and dLoss/dvalue (heads) for the tape's head positions.
  void backward(const Tape& tape, const Mat<T>& dlogp, const Vec<T>& dvalue, std::span<T> grad) const {
    if (grad.size() != params_.size()) throw Error("backward: gradient buffer has wrong size");
    if (!dlogp.allFinite() || !dvalue.allFinite()) throw Error("backward: non-finite loss gradient");
    const auto len = static_cast<Eigen::Index>(tape.trace.tokens.size());
    const auto heads = len - tape.head_start;
    if (dlogp.rows() != dims_.vocab || dlogp.cols() != heads || dvalue.size() != heads)
      throw Error("backward: head gradient shape mismatch");

    // log-softmax: dlogits = dlogp - softmax * sum(dlogp)
    Mat<T> dlogits = dlogp;
    for (Eigen::Index c = 0; c < heads; ++c)
      dlogits.col(c) -= tape.logp.col(c).array().exp().matrix() * dlogp.col(c).sum();

    const auto hs = tape.trace.h.middleCols(tape.head_start + 1, heads);
    T* g = grad.data();
    Eigen::Map<Mat<T>>(g + policy_off(), dims_.vocab, dims_.hidden).noalias() += dlogits * hs.transpose();
    Eigen::Map<Vec<T>>(g + policy_off() + policy_w_count(), dims_.vocab) += dlogits.rowwise().sum();
    Eigen::Map<Mat<T>>(g + value_off(), 1, dims_.hidden).noalias() += dvalue.transpose() * hs.transpose();
    g[value_off() + static_cast<std::size_t>(dims_.hidden)] += dvalue.sum();

    Mat<T> dh = Mat<T>::Zero(dims_.hidden, len);
    dh.rightCols(heads).noalias() = wp().transpose() * dlogits;
    dh.rightCols(heads).noalias() += wv().transpose() * dvalue.transpose();
    encoder_.backward(params_.data(), g, tape.trace, dh);
  }

  /// log pi(actions[t] | state, actions[<t]) for every t.
  std::vector<T> sequence_logprobs(std::span<const TokenId> state, std::span<const TokenId> actions) const {
    if (state.empty()) throw Error("sequence_logprobs: empty state");
    if (actions.empty()) throw Error("sequence_logprobs: empty action sequence");
    std::vector<TokenId> seq(state.begin(), state.end());
    seq.insert(seq.end(), actions.begin(), actions.end() - 1);
    encoder_.check_tokens(actions);
    const auto tape = forward_tape(seq, static_cast<Eigen::Index>(state.size()) - 1);
    std::vector<T> out(actions.size());
    for (std::size_t t = 0; t < actions.size(); ++t) out[t] = tape.logp(actions[t], static_cast<Eigen::Index>(t));
    return out;
  }

  // Incremental decoding interface.
  Cursor begin(std::span<const TokenId> state) const {
    if (state.empty()) throw Error("decode: empty state");
    encoder_.check_tokens(state);
    Cursor c{Vec<T>::Zero(dims_.hidden)};
    for (TokenId t : state) c.h = encoder_.step(params_.data(), c.h, t);
    return c;
  }

  Cursor advance(const Cursor& c, TokenId tok) const {
    encoder_.check_tokens(std::span<const TokenId>(&tok, 1));
    return {encoder_.step(params_.data(), c.h, tok)};
  }

  std::vector<double> next_logprobs(const Cursor& c) const {
    Vec<T> logits = wp() * c.h + bp();
    log_softmax_in_place(logits);
    std::vector<double> out(static_cast<std::size_t>(logits.size()));
    for (Eigen::Index i = 0; i < logits.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<double>(logits[i]);
    return out;
  }

  double value(const Cursor& c) const { return static_cast<double>(wv().dot(c.h) + bv()); }

 private:
  explicit BasicPolicyValueNet(NetDims dims)
      : dims_{dims}, encoder_{dims.vocab, dims.embed, dims.hidden, 0}, params_(param_count(dims), T(0)) {}

  template <typename Col>
  static void log_softmax_in_place(Col&& col) {
    const T m = col.maxCoeff();
    const T lse = m + std::log((col.array() - m).exp().sum());
    col.array() -= lse;
  }

  Eigen::Map<const Mat<T>> wp() const { return {params_.data() + policy_off(), dims_.vocab, dims_.hidden}; }
  Eigen::Map<const Vec<T>> bp() const { return {params_.data() + policy_off() + policy_w_count(), dims_.vocab}; }
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> wv() const { return {params_.data() + value_off(), dims_.hidden}; }
  T bv() const { return params_[value_off() + static_cast<std::size_t>(dims_.hidden)]; }

  NetDims dims_;
  GruEncoder<T> encoder_;
  std::vector<T> params_;
};

using PolicyValueNet = BasicPolicyValueNet<double>;

}  // namespace faithrl
