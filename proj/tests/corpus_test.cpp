#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "faithrl/corpus.hpp"

using namespace faithrl;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& contents) {
  auto dir = std::filesystem::temp_directory_path() / "faithrl_corpus_test";
  std::filesystem::create_directories(dir);
  auto p = dir / name;
  std::ofstream(p, std::ios::binary) << contents;
  return p;
}

const char* kRecord1 =
    R"({"id":"a","history":[{"speaker":"user","text":"hi"}],"knowledge":"k","reference":"r"})";

GroundedExample simple(std::string id, std::string user, std::string knowledge, std::string reference) {
  return {std::move(id), {{Speaker::user, std::move(user)}}, std::move(knowledge), std::move(reference)};
}

}  // namespace

TEST(LoadExamples, SingleValidRecord) {
  auto p = temp_file("one.jsonl", std::string(kRecord1) + "\n");
  auto xs = load_examples(p);
  ASSERT_EQ(xs.size(), 1u);
  EXPECT_EQ(xs[0].id, "a");
  EXPECT_EQ(xs[0].history.at(0).text, "hi");
  EXPECT_EQ(xs[0].knowledge, "k");
}

TEST(LoadExamples, MissingReferenceNamesField) {
  auto p = temp_file("noref.jsonl", R"({"id":"a","history":[{"speaker":"user","text":"hi"}],"knowledge":"k"})"
                                    "\n");
  try {
    load_examples(p);
    FAIL() << "expected error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
    EXPECT_NE(std::string(e.what()).find("reference"), std::string::npos);
  }
}

TEST(LoadExamples, DuplicateIdOnLineThree) {
  std::string text = std::string(kRecord1) + "\n" +
                     R"({"id":"b","history":[{"speaker":"user","text":"x"}],"knowledge":"k","reference":"r"})" + "\n" +
                     kRecord1 + "\n";
  auto p = temp_file("dup.jsonl", text);
  try {
    load_examples(p);
    FAIL() << "expected error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("duplicate"), std::string::npos);
  }
}

TEST(LoadExamples, RejectsHistoryEndingWithAgentAndTrimsText) {
  EXPECT_THROW(parse_examples(R"({"id":"a","history":[{"speaker":"agent","text":"hi"}],"knowledge":"k","reference":"r"})"),
               ParseError);
  auto xs = parse_examples(R"({"id":"a","history":[{"speaker":"user","text":"  hi  "}],"knowledge":"k","reference":"r"})");
  EXPECT_EQ(xs[0].history[0].text, "hi");
  EXPECT_THROW(parse_examples("{not json"), ParseError);
}

TEST(LoadExamples, SaveThenLoadPreservesOrder) {
  auto xs = generate_synthetic({SyntheticVariant::copyspan, 40, 3, 3, 5, 11});
  auto dir = std::filesystem::temp_directory_path() / "faithrl_corpus_test";
  save_examples(dir / "rt.jsonl", xs);
  EXPECT_EQ(load_examples(dir / "rt.jsonl"), xs);
}

TEST(BuildVocabulary, CountsAndThreshold) {
  std::vector<GroundedExample> xs{simple("1", "a a", "b", "a")};
  auto v = build_vocabulary(xs, 2);
  ASSERT_EQ(v.size(), special::count + 1);
  EXPECT_EQ(v.token(special::count), "a");

  auto v1 = build_vocabulary({simple("1", "a", "a", "a")}, 1);
  EXPECT_EQ(v1.size(), special::count + 1);

  auto none = build_vocabulary(xs, 1000000000);
  EXPECT_EQ(none.size(), special::count);
  EXPECT_THROW(build_vocabulary({}, 1), Error);
}

TEST(BuildVocabulary, FrequencyThenLexicographic) {
  auto v = build_vocabulary({simple("1", "c b b", "a c", "z")}, 1);
  // counts: b=2 c=2 a=1 z=1
  EXPECT_EQ(v.token(5), "b");
  EXPECT_EQ(v.token(6), "c");
  EXPECT_EQ(v.token(7), "a");
  EXPECT_EQ(v.token(8), "z");
  EXPECT_EQ(v.token(special::bos), "<bos>");
  for (TokenId i = 0; i < v.size(); ++i) EXPECT_EQ(v.id(v.token(i)), i);
}

TEST(EncodeState, LayoutAndTruncation) {
  auto ex = simple("1", "hi", "k", "r");
  auto v = build_vocabulary({ex}, 1);
  EXPECT_EQ(encode_state(ex, v, 256), (TokenIds{special::bos, v.id("hi"), special::sep, v.id("k")}));
  EXPECT_EQ(encode_state(ex, v, 3), (TokenIds{special::bos, special::sep, v.id("k")}));
}

TEST(EncodeState, DropsOldestUtteranceThenKnowledgeTail) {
  GroundedExample ex{"1", {{Speaker::user, "u1 u1"}, {Speaker::agent, "a2"}, {Speaker::user, "u3"}}, "k1 k2 k3", "r"};
  auto v = build_vocabulary({ex}, 1);
  auto full = encode_state(ex, v, 256);
  EXPECT_EQ(full.size(), 1 + 2 + 1 + 1 + 1 + 1 + 1 + 3u);
  auto cut = encode_state(ex, v, 8);  // drop "u1 u1": BOS a2 SEP u3 SEP k1 k2 k3
  EXPECT_EQ(cut, (TokenIds{special::bos, v.id("a2"), special::sep, v.id("u3"), special::sep, v.id("k1"), v.id("k2"),
                           v.id("k3")}));
  auto tail = encode_state(ex, v, 4);  // all history gone, knowledge tail cut
  EXPECT_EQ(tail, (TokenIds{special::bos, special::sep, v.id("k1"), v.id("k2")}));
}

TEST(EncodeState, UnknownTokenMapsToUnk) {
  auto v = build_vocabulary({simple("1", "hi", "k", "r")}, 1);
  auto s = encode_state(simple("2", "hi", "mystery", "r"), v, 256);
  EXPECT_EQ(s.back(), special::unk);
}

TEST(EncodeDecode, RoundTripInVocabulary) {
  auto xs = generate_synthetic({SyntheticVariant::copyspan, 30, 2, 3, 20, 5});
  auto v = build_vocabulary(xs, 1);
  for (const auto& ex : xs) {
    auto ids = encode_text(ex.knowledge, v);
    EXPECT_EQ(encode_text(decode_tokens(ids, v), v), ids);
  }
}

TEST(GenerateSynthetic, ExactVariant) {
  auto xs = generate_synthetic({SyntheticVariant::exact, 20, 0, 4, 1, 3});
  ASSERT_EQ(xs.size(), 1u);
  EXPECT_EQ(xs[0].knowledge, xs[0].reference);
  EXPECT_FALSE(violated_field(xs[0]).has_value());
}

TEST(GenerateSynthetic, DeterministicAndSeedSensitive) {
  SyntheticSpec spec{SyntheticVariant::copyspan, 60, 6, 4, 50, 42};
  EXPECT_EQ(serialize_examples(generate_synthetic(spec)), serialize_examples(generate_synthetic(spec)));
  auto other = spec;
  other.seed = 43;
  EXPECT_NE(serialize_examples(generate_synthetic(spec)), serialize_examples(generate_synthetic(other)));
}

TEST(GenerateSynthetic, PinnedBytes) {
  // Frozen output; a change here breaks cross-run reproducibility of datasets.
  auto xs = generate_synthetic({SyntheticVariant::copyspan, 20, 1, 2, 1, 1});
  EXPECT_EQ(serialize_examples(xs), 
            R"({"id":"copyspan-0","history":[{"speaker":"user","text":"tell me about w07"}],)"
            R"("knowledge":"w17 w01 w07 w10","reference":"w07 w10"})"
            "\n");
}

TEST(GenerateSynthetic, CopyspanStructure) {
  SyntheticSpec spec{SyntheticVariant::copyspan, 60, 6, 4, 30, 9};
  for (const auto& ex : generate_synthetic(spec)) {
    auto k = split_whitespace(ex.knowledge);
    auto r = split_whitespace(ex.reference);
    ASSERT_EQ(k.size(), 28u);
    ASSERT_EQ(r.size(), 4u);
    int matches = 0;
    for (std::size_t s = 0; s < 7; ++s)
      matches += std::equal(r.begin(), r.end(), k.begin() + static_cast<std::ptrdiff_t>(4 * s));
    EXPECT_EQ(matches, 1);
    EXPECT_NE(ex.history.back().text.find(r.front()), std::string::npos);
  }
}

TEST(GenerateSynthetic, RejectsTooSmallVocabulary) {
  EXPECT_THROW(generate_synthetic({SyntheticVariant::copyspan, 20, 6, 4, 1, 0}), Error);
  EXPECT_THROW(generate_synthetic({SyntheticVariant::copyspan, 19, 0, 1, 1, 0}), Error);
}
