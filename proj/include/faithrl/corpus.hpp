#pragma once

// Grounded-dialogue records, the word-level policy vocabulary, state
// encoding, and the deterministic synthetic tasks used for desk-scale runs.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "faithrl/error.hpp"
#include "faithrl/io.hpp"
#include "faithrl/rng.hpp"

namespace faithrl {

using TokenId = std::int32_t;
using TokenIds = std::vector<TokenId>;

enum class Speaker { user, agent };

inline std::string_view to_string(Speaker s) { return s == Speaker::user ? "user" : "agent"; }

inline std::optional<Speaker> parse_speaker(std::string_view s) {
  if (s == "user") return Speaker::user;
  if (s == "agent") return Speaker::agent;
  return std::nullopt;
}

struct Utterance {
  Speaker speaker = Speaker::user;
  std::string text;

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

struct GroundedExample {
  std::string id;
  std::vector<Utterance> history;
  std::string knowledge;
  std::string reference;

  friend bool operator==(const GroundedExample&, const GroundedExample&) = default;
};

inline std::string trim(std::string_view s) {
  const auto ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

/// Checks the record invariants. Returns the name of the first violated
/// field, or nothing when the example is well formed.
inline std::optional<std::string> violated_field(const GroundedExample& ex) {
  if (ex.id.empty()) return "id";
  if (ex.history.empty()) return "history";
  for (const auto& u : ex.history) {
    if (u.text.empty() || trim(u.text) != u.text) return "history.text";
  }
  if (ex.history.back().speaker != Speaker::user) return "history.speaker";
  if (trim(ex.knowledge).empty()) return "knowledge";
  if (trim(ex.reference).empty()) return "reference";
  return std::nullopt;
}

namespace detail {

inline GroundedExample example_from_json(const nlohmann::json& j, std::size_t line) {
  if (!j.is_object()) throw ParseError(line, "record is not an object");
  auto need_string = [&](const char* field) -> std::string {
    auto it = j.find(field);
    if (it == j.end()) throw ParseError(line, std::string("missing field `") + field + "`");
    if (!it->is_string()) throw ParseError(line, std::string("field `") + field + "` must be a string");
    return it->get<std::string>();
  };
  GroundedExample ex;
  ex.id = need_string("id");
  auto hist = j.find("history");
  if (hist == j.end()) throw ParseError(line, "missing field `history`");
  if (!hist->is_array()) throw ParseError(line, "field `history` must be an array");
  for (const auto& u : *hist) {
    if (!u.is_object() || !u.contains("speaker") || !u.contains("text") || !u["speaker"].is_string() ||
        !u["text"].is_string())
      throw ParseError(line, "field `history` entries need string `speaker` and `text`");
    auto sp = parse_speaker(u["speaker"].get<std::string>());
    if (!sp) throw ParseError(line, "field `history.speaker` must be \"user\" or \"agent\"");
    ex.history.push_back({*sp, trim(u["text"].get<std::string>())});
  }
  ex.knowledge = trim(need_string("knowledge"));
  ex.reference = trim(need_string("reference"));
  if (auto bad = violated_field(ex)) throw ParseError(line, "invalid field `" + *bad + "`");
  return ex;
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const GroundedExample& ex) {
  nlohmann::ordered_json j;
  j["id"] = ex.id;
  j["history"] = nlohmann::ordered_json::array();
  for (const auto& u : ex.history) {
    nlohmann::ordered_json ju;
    ju["speaker"] = std::string(to_string(u.speaker));
    ju["text"] = u.text;
    j["history"].push_back(ju);
  }
  j["knowledge"] = ex.knowledge;
  j["reference"] = ex.reference;
  return j;
}

/// Parses one-record-per-line text. Errors name the 1-based line number.
inline std::vector<GroundedExample> parse_examples(const std::string& text) {
  std::vector<GroundedExample> out;
  std::map<std::string, std::size_t> seen;
  const auto lines = io::split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line = i + 1;
    if (trim(lines[i]).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line, std::string("malformed JSON: ") + e.what());
    }
    auto ex = detail::example_from_json(j, line);
    if (auto [it, fresh] = seen.emplace(ex.id, line); !fresh)
      throw ParseError(line, "duplicate id `" + ex.id + "` (first seen on line " + std::to_string(it->second) + ")");
    out.push_back(std::move(ex));
  }
  return out;
}

inline std::vector<GroundedExample> load_examples(const std::filesystem::path& path) {
  return parse_examples(io::read_file(path));
}

inline std::string serialize_examples(const std::vector<GroundedExample>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    out += to_json(ex).dump();
    out += '\n';
  }
  return out;
}

inline void save_examples(const std::filesystem::path& path, const std::vector<GroundedExample>& examples) {
  io::write_atomic(path, serialize_examples(examples));
}

// ---------------------------------------------------------------------------
// Vocabulary

namespace special {
inline constexpr TokenId pad = 0;
inline constexpr TokenId bos = 1;
inline constexpr TokenId eos = 2;
inline constexpr TokenId unk = 3;
inline constexpr TokenId sep = 4;
inline constexpr int count = 5;
}  // namespace special

class Vocabulary {
 public:
  Vocabulary() {
    for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>", "<sep>"}) push(t);
  }

  // Restores a vocabulary from its token list; the reserved prefix must match.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
    Vocabulary v;
    if (tokens.size() < special::count) throw Error("vocabulary is missing reserved tokens");
    for (int i = 0; i < special::count; ++i)
      if (tokens[static_cast<std::size_t>(i)] != v.tokens_[static_cast<std::size_t>(i)])
        throw Error("vocabulary reserved token mismatch at id " + std::to_string(i));
    for (std::size_t i = special::count; i < tokens.size(); ++i) {
      if (v.index_.count(tokens[i])) throw Error("duplicate vocabulary token `" + tokens[i] + "`");
      v.push(tokens[i]);
    }
    return v;
  }

  int size() const { return static_cast<int>(tokens_.size()); }

  TokenId id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? special::unk : it->second;
  }

  bool contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

  const std::string& token(TokenId id) const {
    if (id < 0 || id >= size()) throw Error("token id out of range: " + std::to_string(id));
    return tokens_[static_cast<std::size_t>(id)];
  }

  const std::vector<std::string>& tokens() const { return tokens_; }

  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& t : tokens_) {
      h = fnv1a64(t, h);
      h = fnv1a64(std::string_view("\0", 1), h);
    }
    return h;
  }

  std::string serialize() const {
    std::string out;
    for (const auto& t : tokens_) out += t + '\n';
    return out;
  }

  static Vocabulary parse(const std::string& text) { return from_tokens(io::split_lines(text)); }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  void push(const std::string& t) {
    index_.emplace(t, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(t);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Whitespace tokens with frequency >= min_count over history, knowledge and
/// references, ordered by frequency (descending) then lexicographically.
inline Vocabulary build_vocabulary(const std::vector<GroundedExample>& examples, long long min_count) {
  if (examples.empty()) throw Error("cannot build a vocabulary from an empty corpus");
  if (min_count < 1) throw Error("min_count must be >= 1");
  const Vocabulary reserved;
  std::map<std::string, long long> counts;
  auto add = [&](std::string_view text) {
    for (auto& t : split_whitespace(text))
      if (!reserved.contains(t)) ++counts[t];
  };
  for (const auto& ex : examples) {
    for (const auto& u : ex.history) add(u.text);
    add(ex.knowledge);
    add(ex.reference);
  }
  std::vector<std::pair<std::string, long long>> kept;
  for (auto& [tok, n] : counts)
    if (n >= min_count) kept.emplace_back(tok, n);
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = reserved.tokens();
  for (auto& [tok, n] : kept) tokens.push_back(tok);
  return Vocabulary::from_tokens(tokens);
}

inline TokenIds encode_text(std::string_view text, const Vocabulary& vocab) {
  TokenIds ids;
  for (const auto& t : split_whitespace(text)) ids.push_back(vocab.id(t));
  return ids;
}

/// Joins tokens with single spaces, stopping at EOS and skipping PAD/BOS/SEP.
inline std::string decode_tokens(const TokenIds& ids, const Vocabulary& vocab) {
  std::string out;
  for (TokenId id : ids) {
    if (id == special::eos) break;
    if (id == special::pad || id == special::bos || id == special::sep) continue;
    if (!out.empty()) out += ' ';
    out += vocab.token(id);
  }
  return out;
}

inline constexpr int default_max_state_len = 256;

/// BOS, history utterances joined by SEP, SEP, knowledge. Over-long inputs
/// lose their oldest utterances first, then the knowledge tail.
inline TokenIds encode_state(const GroundedExample& ex, const Vocabulary& vocab, int max_len = default_max_state_len) {
  if (max_len < 3) throw Error("max_len must be >= 3");
  std::vector<TokenIds> utts;
  for (const auto& u : ex.history) utts.push_back(encode_text(u.text, vocab));
  TokenIds knowledge = encode_text(ex.knowledge, vocab);

  auto history_len = [&](std::size_t first) {
    std::size_t n = 0;
    for (std::size_t i = first; i < utts.size(); ++i) n += utts[i].size() + (i > first ? 1 : 0);
    return n;
  };
  const auto budget = static_cast<std::size_t>(max_len);
  std::size_t first = 0;
  while (first < utts.size() && 2 + history_len(first) + knowledge.size() > budget) ++first;
  if (2 + history_len(first) + knowledge.size() > budget) knowledge.resize(budget - 2 - history_len(first));

  TokenIds out{special::bos};
  for (std::size_t i = first; i < utts.size(); ++i) {
    if (i > first) out.push_back(special::sep);
    out.insert(out.end(), utts[i].begin(), utts[i].end());
  }
  out.push_back(special::sep);
  out.insert(out.end(), knowledge.begin(), knowledge.end());
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic tasks

enum class SyntheticVariant { copyspan, exact };

inline std::string_view to_string(SyntheticVariant v) { return v == SyntheticVariant::copyspan ? "copyspan" : "exact"; }

inline SyntheticVariant parse_variant(std::string_view s) {
  if (s == "copyspan") return SyntheticVariant::copyspan;
  if (s == "exact") return SyntheticVariant::exact;
  throw Error("unknown synthetic variant `" + std::string(s) + "`");
}

struct SyntheticSpec {
  SyntheticVariant variant = SyntheticVariant::copyspan;
  int vocab_size = 60;
  int n_distractors = 6;
  int span_len = 4;
  int n_examples = 100;
  std::uint64_t seed = 0;
};

/// Copyspan: knowledge is the relevant span shuffled among distractor spans
/// built from disjoint word sets; the question names the span's first (key)
/// token and the reference is the span verbatim. Exact: knowledge == reference.
inline std::vector<GroundedExample> generate_synthetic(const SyntheticSpec& spec) {
  if (spec.vocab_size < 20) throw Error("synthetic vocab_size must be >= 20");
  if (spec.n_distractors < 0) throw Error("synthetic n_distractors must be >= 0");
  if (spec.span_len < 1) throw Error("synthetic span_len must be >= 1");
  if (spec.n_examples < 1) throw Error("synthetic n_examples must be >= 1");
  const int n_spans = spec.variant == SyntheticVariant::copyspan ? spec.n_distractors + 1 : 1;
  if (static_cast<long long>(n_spans) * spec.span_len > spec.vocab_size)
    throw Error("synthetic vocab_size " + std::to_string(spec.vocab_size) + " cannot hold " + std::to_string(n_spans) +
                " distinct spans of length " + std::to_string(spec.span_len));

  const int width = static_cast<int>(std::to_string(spec.vocab_size - 1).size());
  std::vector<std::string> words;
  for (int i = 0; i < spec.vocab_size; ++i) {
    auto digits = std::to_string(i);
    words.push_back("w" + std::string(static_cast<std::size_t>(width) - digits.size(), '0') + digits);
  }

  Rng rng(spec.seed);
  const int id_width = static_cast<int>(std::to_string(spec.n_examples).size());
  std::vector<GroundedExample> out;
  out.reserve(static_cast<std::size_t>(spec.n_examples));
  std::vector<int> pool(words.size());
  for (int n = 0; n < spec.n_examples; ++n) {
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
    rng.shuffle(pool.begin(), pool.end());
    std::vector<std::string> spans;
    for (int s = 0; s < n_spans; ++s) {
      std::string span;
      for (int k = 0; k < spec.span_len; ++k) {
        if (k) span += ' ';
        span += words[static_cast<std::size_t>(pool[static_cast<std::size_t>(s * spec.span_len + k)])];
      }
      spans.push_back(std::move(span));
    }
    const std::string relevant = spans.front();
    const std::string key = split_whitespace(relevant).front();
    rng.shuffle(spans.begin(), spans.end());

    GroundedExample ex;
    auto digits = std::to_string(n);
    ex.id = std::string(to_string(spec.variant)) + "-" +
            std::string(static_cast<std::size_t>(id_width) - digits.size(), '0') + digits;
    ex.history.push_back({Speaker::user, "tell me about " + key});
    std::string knowledge;
    for (const auto& s : spans) {
      if (!knowledge.empty()) knowledge += ' ';
      knowledge += s;
    }
    ex.knowledge = knowledge;
    ex.reference = relevant;
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace faithrl
