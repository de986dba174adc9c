#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "faithrl/metrics.hpp"

using namespace faithrl;

namespace {

EvalTokens toks(std::string_view s) { return tokenize_eval(s); }

// Maps each listed token to a distinct basis vector.
class BasisProvider final : public EmbeddingProvider {
 public:
  explicit BasisProvider(std::vector<std::string> names) : names_{std::move(names)} {}
  std::vector<Embedding> embed(const EvalTokens& tokens) const override {
    std::vector<Embedding> out;
    for (const auto& t : tokens) {
      Embedding e(8, 0.0);
      auto it = std::find(names_.begin(), names_.end(), t);
      e.at(static_cast<std::size_t>(it - names_.begin())) = 1.0;
      out.push_back(e);
    }
    return out;
  }
  int dim() const override { return 8; }

 private:
  std::vector<std::string> names_;
};

class RaggedProvider final : public EmbeddingProvider {
 public:
  std::vector<Embedding> embed(const EvalTokens& tokens) const override {
    std::vector<Embedding> out;
    for (std::size_t i = 0; i < tokens.size(); ++i) out.push_back(Embedding(8 + (calls_++ % 2), 1.0 / std::sqrt(8.0)));
    return out;
  }
  int dim() const override { return 8; }

 private:
  mutable int calls_ = 0;
};

EvalTokens random_tokens(Rng& rng, std::size_t max_len, int alphabet) {
  EvalTokens out(rng.below(max_len + 1));
  for (auto& t : out) t = "t" + std::to_string(rng.below(static_cast<std::uint64_t>(alphabet)));
  return out;
}

}  // namespace

TEST(TokenizeEval, SplitsPunctuation) {
  EXPECT_EQ(toks("Hello, world!"), (EvalTokens{"Hello", ",", "world", "!"}));
  EXPECT_EQ(toks("a b"), (EvalTokens{"a", "b"}));
  EXPECT_TRUE(toks("").empty());
  EXPECT_EQ(toks("(it's)"), (EvalTokens{"(", "it", "'", "s", ")"}));
}

TEST(SentenceBleu, Identity) { EXPECT_EQ(sentence_bleu(toks("the cat sat on the mat"), toks("the cat sat on the mat")), 100.0); }

TEST(SentenceBleu, BrevityPenaltyCase) {
  const double expected = 100.0 * std::exp(1.0 - 7.0 / 6.0);
  EXPECT_NEAR(sentence_bleu(toks("the cat sat on the mat"), toks("the cat sat on the mat quickly")), expected, 1e-9);
  EXPECT_NEAR(expected, 84.648, 0.01);
}

TEST(SentenceBleu, DisjointAndEmpty) {
  EXPECT_EQ(sentence_bleu(toks("w x y z"), toks("a b c d")), 0.0);
  EXPECT_EQ(sentence_bleu({}, toks("a b")), 0.0);
  EXPECT_THROW(sentence_bleu(toks("a"), {}), Error);
}

TEST(SentenceBleu, SmoothingOnlyForHigherOrders) {
  // p1 = 2/4, p2 = 1/3, p3 = (0+1)/(2+1), p4 = (0+1)/(1+1); BP = 1.
  const double expected = 100.0 * std::pow(0.5 * (1.0 / 3) * (1.0 / 3) * 0.5, 0.25);
  EXPECT_NEAR(sentence_bleu(toks("a b x y"), toks("a b c d")), expected, 1e-9);
  EXPECT_NEAR(expected, 100.0 / std::sqrt(6.0), 1e-9);
}

TEST(RougeL, HandComputed) {
  EXPECT_NEAR(rouge_l_f1(toks("a b c d"), toks("a c d")), 600.0 / 7.0, 1e-9);
  EXPECT_EQ(rouge_l_f1(toks("a b"), toks("a b")), 100.0);
  EXPECT_EQ(rouge_l_f1(toks("a b"), toks("c d")), 0.0);
  EXPECT_EQ(rouge_l_f1({}, toks("c d")), 0.0);
}

TEST(TokenF1, HandComputed) {
  EXPECT_NEAR(token_f1(toks("a b c"), toks("b c d")), 200.0 / 3.0, 1e-9);
  EXPECT_EQ(token_f1(toks("a b c"), toks("a b c")), 100.0);
  EXPECT_EQ(token_f1({}, toks("a")), 0.0);
  // clipped counts: hyp "a a a" vs "a b": overlap 1, P=1/3, R=1/2
  EXPECT_NEAR(token_f1(toks("a a a"), toks("a b")), 100.0 * 2 * (1.0 / 3) * 0.5 / (1.0 / 3 + 0.5), 1e-9);
}

TEST(EmbedF1, IdentityIsExactlyHundred) {
  HashedProvider hp(64, 7);
  EXPECT_EQ(embed_f1(toks("the knowledge text , here"), toks("the knowledge text , here"), hp), 100.0);
}

TEST(EmbedF1, DisjointBelowHundred) {
  HashedProvider hp(64, 7);
  const double v = embed_f1(toks("alpha beta"), toks("gamma delta epsilon"), hp);
  EXPECT_GE(v, 0.0);
  EXPECT_LT(v, 100.0);
}

TEST(EmbedF1, OrthogonalProviderHalf) {
  BasisProvider bp({"a", "b", "c"});
  EXPECT_DOUBLE_EQ(embed_f1(toks("a b"), toks("a c"), bp), 50.0);
}

TEST(EmbedF1, Errors) {
  HashedProvider hp(16, 1);
  EXPECT_THROW(embed_f1({}, toks("a"), hp), Error);
  EXPECT_THROW(embed_f1(toks("a"), {}, hp), Error);
  RaggedProvider rp;
  EXPECT_THROW(embed_f1(toks("a b"), toks("c"), rp), Error);
  EXPECT_THROW(HashedProvider(4, 0), Error);
}

TEST(HashedProvider, UnitNormDeterministicAndPinned) {
  HashedProvider hp(64, 7);
  auto a = hp.embed_token("w17");
  auto b = HashedProvider(64, 7).embed_token("w17");
  EXPECT_EQ(a, b);
  double sq = 0;
  for (double x : a) sq += x * x;
  EXPECT_NEAR(sq, 1.0, 1e-12);
  EXPECT_NE(a, hp.embed_token("w18"));
  EXPECT_NE(a, HashedProvider(64, 8).embed_token("w17"));
  // Frozen coordinates: any change silently alters every faithfulness score.
  EXPECT_DOUBLE_EQ(a[0], -0.025034297142554344);
  EXPECT_DOUBLE_EQ(a[63], -0.068632877975710258);
}

TEST(MetricProperties, BoundsOnRandomInputs) {
  Rng rng(123);
  HashedProvider hp(16, 3);
  for (int i = 0; i < 500; ++i) {
    auto h = random_tokens(rng, 8, 6);
    auto r = random_tokens(rng, 8, 6);
    if (r.empty()) r.push_back("t0");
    for (double v : {sentence_bleu(h, r), rouge_l_f1(h, r), token_f1(h, r)}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 100.0);
    }
    if (!h.empty()) {
      const double e = embed_f1(h, r, hp);
      EXPECT_GE(e, 0.0);
      EXPECT_LE(e, 100.0);
      EXPECT_EQ(embed_f1(h, h, hp), 100.0);
      EXPECT_NEAR(sentence_bleu(h, h), 100.0, 1e-9);
    }
  }
}

TEST(MetricProperties, RenamingInvariance) {
  Rng rng(7);
  for (int i = 0; i < 300; ++i) {
    auto h = random_tokens(rng, 10, 5);
    auto r = random_tokens(rng, 10, 5);
    std::vector<std::string> perm{"t0", "t1", "t2", "t3", "t4"};
    rng.shuffle(perm.begin(), perm.end());
    auto rename = [&](EvalTokens x) {
      for (auto& t : x) t = "q" + perm[static_cast<std::size_t>(std::stoi(t.substr(1)))];
      return x;
    };
    EXPECT_EQ(token_f1(h, r), token_f1(rename(h), rename(r)));
    EXPECT_EQ(rouge_l_f1(h, r), rouge_l_f1(rename(h), rename(r)));
  }
}

TEST(EvaluateCorpus, TableArithmeticIsExact) {
  std::vector<MetricScores> s{{31.15, 43.28, 91.45, 51.81}, {31.15, 43.28, 91.45, 51.81}};
  auto rep = aggregate(s);
  EXPECT_EQ(rep.overall, 217.69);
  EXPECT_EQ(rep.overall, rep.sacrebleu + rep.rouge_l + rep.bertscore_f1 + rep.token_f1);
}

TEST(EvaluateCorpus, ExactVariantIdentityGivesFourHundred) {
  auto xs = generate_synthetic({SyntheticVariant::exact, 40, 0, 4, 10, 2});
  std::vector<std::string> outs;
  for (const auto& x : xs) outs.push_back(x.reference);
  auto rep = evaluate_corpus(xs, outs, HashedProvider(64, 7));
  EXPECT_EQ(rep.sacrebleu, 100.0);
  EXPECT_EQ(rep.rouge_l, 100.0);
  EXPECT_EQ(rep.bertscore_f1, 100.0);
  EXPECT_EQ(rep.token_f1, 100.0);
  EXPECT_EQ(rep.overall, 400.0);
}

TEST(EvaluateCorpus, SingleExampleEqualsPerExampleScores) {
  auto xs = generate_synthetic({SyntheticVariant::copyspan, 40, 3, 3, 1, 2});
  HashedProvider hp(64, 7);
  const std::string out = "w01 w02 nothing";
  auto rep = evaluate_corpus(xs, {out}, hp);
  auto s = score_example(xs[0], out, hp);
  EXPECT_EQ(rep.sacrebleu, s.sacrebleu);
  EXPECT_EQ(rep.rouge_l, s.rouge_l);
  EXPECT_EQ(rep.bertscore_f1, s.bertscore_f1);
  EXPECT_EQ(rep.token_f1, s.token_f1);
  EXPECT_THROW(evaluate_corpus(xs, {}, hp), Error);
}
