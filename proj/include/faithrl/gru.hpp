#pragma once

// Token embedding followed by one gated recurrent layer. Parameters live in a
// caller-owned flat buffer so networks built on top can keep a single
// contiguous parameter vector (optimizer, checkpoints, finite differences).
//
//   z = sigmoid(Wx_z x + bx_z + Wh_z h + bh_z)
//   r = sigmoid(Wx_r x + bx_r + Wh_r h + bh_r)
//   n = tanh(Wx_n x + bx_n + r * (Wh_n h + bh_n))
//   h' = (1 - z) * n + z * h

#include <cmath>
#include <cstddef>
#include <span>

#include <Eigen/Dense>

#include "faithrl/corpus.hpp"
#include "faithrl/error.hpp"
#include "faithrl/rng.hpp"

namespace faithrl {

template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

template <typename T>
class GruEncoder {
 public:
  GruEncoder(int vocab, int embed, int hidden, std::size_t offset)
      : vocab_{vocab}, embed_{embed}, hidden_{hidden}, offset_{offset} {}

  static std::size_t param_count(int vocab, int embed, int hidden) {
    const auto v = static_cast<std::size_t>(vocab), e = static_cast<std::size_t>(embed),
               h = static_cast<std::size_t>(hidden);
    return v * e + 3 * h * e + 3 * h * h + 6 * h;
  }
  std::size_t param_count() const { return param_count(vocab_, embed_, hidden_); }
  std::size_t end_offset() const { return offset_ + param_count(); }

  int vocab() const { return vocab_; }
  int embed() const { return embed_; }
  int hidden() const { return hidden_; }
  // Embedding table: embed x vocab, one column per token.
  std::size_t embedding_offset() const { return emb_off(); }

  void init(std::span<T> p, Rng& rng) const {
    const double k = 1.0 / std::sqrt(static_cast<double>(hidden_));
    auto fill = [&](std::size_t off, std::size_t n, double scale) {
      for (std::size_t i = 0; i < n; ++i) p[off + i] = static_cast<T>((2 * rng.uniform() - 1) * scale);
    };
    fill(emb_off(), static_cast<std::size_t>(vocab_) * embed_, 0.5);
    fill(wx_off(), 3 * static_cast<std::size_t>(hidden_) * embed_, k);
    fill(wh_off(), 3 * static_cast<std::size_t>(hidden_) * hidden_, k);
    fill(bx_off(), 6 * static_cast<std::size_t>(hidden_), k);
  }

  // Activations of one pass; column t of h holds the state before token t,
  // column t+1 the state after it.
  struct Trace {
    std::vector<TokenId> tokens;
    Mat<T> h, z, r, n, ghn;
  };

  Vec<T> step(const T* p, const Vec<T>& h, TokenId tok) const {
    Vec<T> gx = wx(p) * emb(p).col(tok) + bx(p);
    Vec<T> gh = wh(p) * h + bh(p);
    const auto H = hidden_;
    Vec<T> z = sigmoid(gx.head(H) + gh.head(H));
    Vec<T> r = sigmoid(gx.segment(H, H) + gh.segment(H, H));
    Vec<T> n = (gx.tail(H) + r.cwiseProduct(gh.tail(H))).array().tanh().matrix();
    return (Vec<T>::Ones(H) - z).cwiseProduct(n) + z.cwiseProduct(h);
  }

  Trace run(const T* p, std::span<const TokenId> tokens) const {
    check_tokens(tokens);
    const auto len = static_cast<Eigen::Index>(tokens.size());
    const auto H = hidden_;
    Trace tr;
    tr.tokens.assign(tokens.begin(), tokens.end());
    tr.h = Mat<T>::Zero(H, len + 1);
    tr.z.resize(H, len);
    tr.r.resize(H, len);
    tr.n.resize(H, len);
    tr.ghn.resize(H, len);
    const auto E = emb(p);
    const auto Wx = wx(p);
    const auto Wh = wh(p);
    Vec<T> gx(3 * H), gh(3 * H);
    for (Eigen::Index t = 0; t < len; ++t) {
      gx.noalias() = Wx * E.col(tokens[static_cast<std::size_t>(t)]);
      gx += bx(p);
      gh.noalias() = Wh * tr.h.col(t);
      gh += bh(p);
      tr.z.col(t) = sigmoid(gx.head(H) + gh.head(H));
      tr.r.col(t) = sigmoid(gx.segment(H, H) + gh.segment(H, H));
      tr.ghn.col(t) = gh.tail(H);
      tr.n.col(t) = (gx.tail(H) + tr.r.col(t).cwiseProduct(gh.tail(H))).array().tanh().matrix();
      tr.h.col(t + 1) = (Vec<T>::Ones(H) - tr.z.col(t)).cwiseProduct(tr.n.col(t)) + tr.z.col(t).cwiseProduct(tr.h.col(t));
    }
    return tr;
  }

  // dh_out column t is dLoss/dh after token t (excluding recurrent flow).
  // Accumulates into g; returns nothing.
  void backward(const T* p, T* g, const Trace& tr, const Mat<T>& dh_out) const {
    const auto len = static_cast<Eigen::Index>(tr.tokens.size());
    const auto H = hidden_;
    Mat<T> dgx(3 * H, len), dgh(3 * H, len);
    Vec<T> carry = Vec<T>::Zero(H);
    const auto Wh = wh(p);
    for (Eigen::Index t = len - 1; t >= 0; --t) {
      Vec<T> dh = dh_out.col(t) + carry;
      const auto z = tr.z.col(t);
      const auto r = tr.r.col(t);
      const auto n = tr.n.col(t);
      const auto hp = tr.h.col(t);
      Vec<T> dz = dh.cwiseProduct(hp - n);
      Vec<T> dan = dh.cwiseProduct(Vec<T>::Ones(H) - z).cwiseProduct(Vec<T>::Ones(H) - n.cwiseProduct(n));
      Vec<T> dr = dan.cwiseProduct(tr.ghn.col(t));
      dgx.col(t).head(H) = dz.cwiseProduct(z).cwiseProduct(Vec<T>::Ones(H) - z);
      dgx.col(t).segment(H, H) = dr.cwiseProduct(r).cwiseProduct(Vec<T>::Ones(H) - r);
      dgx.col(t).tail(H) = dan;
      dgh.col(t).head(2 * H) = dgx.col(t).head(2 * H);
      dgh.col(t).tail(H) = dan.cwiseProduct(r);
      carry = dh.cwiseProduct(z);
      carry.noalias() += Wh.transpose() * dgh.col(t);
    }
    Mat<T> x(embed_, len);
    const auto E = emb(p);
    for (Eigen::Index t = 0; t < len; ++t) x.col(t) = E.col(tr.tokens[static_cast<std::size_t>(t)]);
    wx(g).noalias() += dgx * x.transpose();
    wh(g).noalias() += dgh * tr.h.leftCols(len).transpose();
    bx(g) += dgx.rowwise().sum();
    bh(g) += dgh.rowwise().sum();
    Mat<T> dx = wx(p).transpose() * dgx;
    auto dE = emb(g);
    for (Eigen::Index t = 0; t < len; ++t) dE.col(tr.tokens[static_cast<std::size_t>(t)]) += dx.col(t);
  }

  void check_tokens(std::span<const TokenId> tokens) const {
    for (TokenId t : tokens)
      if (t < 0 || t >= vocab_) throw Error("token id " + std::to_string(t) + " outside vocabulary of " + std::to_string(vocab_));
  }

 private:
  using MatMap = Eigen::Map<Mat<T>>;
  using CMatMap = Eigen::Map<const Mat<T>>;
  using VecMap = Eigen::Map<Vec<T>>;
  using CVecMap = Eigen::Map<const Vec<T>>;

  std::size_t emb_off() const { return offset_; }
  std::size_t wx_off() const { return emb_off() + static_cast<std::size_t>(vocab_) * embed_; }
  std::size_t wh_off() const { return wx_off() + 3 * static_cast<std::size_t>(hidden_) * embed_; }
  std::size_t bx_off() const { return wh_off() + 3 * static_cast<std::size_t>(hidden_) * hidden_; }
  std::size_t bh_off() const { return bx_off() + 3 * static_cast<std::size_t>(hidden_); }

  CMatMap emb(const T* p) const { return CMatMap(p + emb_off(), embed_, vocab_); }
  CMatMap wx(const T* p) const { return CMatMap(p + wx_off(), 3 * hidden_, embed_); }
  CMatMap wh(const T* p) const { return CMatMap(p + wh_off(), 3 * hidden_, hidden_); }
  CVecMap bx(const T* p) const { return CVecMap(p + bx_off(), 3 * hidden_); }
  CVecMap bh(const T* p) const { return CVecMap(p + bh_off(), 3 * hidden_); }
  MatMap emb(T* p) const { return MatMap(p + emb_off(), embed_, vocab_); }
  MatMap wx(T* p) const { return MatMap(p + wx_off(), 3 * hidden_, embed_); }
  MatMap wh(T* p) const { return MatMap(p + wh_off(), 3 * hidden_, hidden_); }
  VecMap bx(T* p) const { return VecMap(p + bx_off(), 3 * hidden_); }
  VecMap bh(T* p) const { return VecMap(p + bh_off(), 3 * hidden_); }

  template <typename Expr>
  static Vec<T> sigmoid(const Expr& x) {
    return (T(1) / (T(1) + (-x.array()).exp())).matrix();
  }

  int vocab_, embed_, hidden_;
  std::size_t offset_;
};

}  // namespace faithrl
