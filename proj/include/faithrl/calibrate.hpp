#pragma once

// Calibration of the blend coefficient from expert pairwise judgments: pick
// the alpha whose reward-side preferences correlate best (Pearson) with the
// expert's.

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "faithrl/corpus.hpp"
#include "faithrl/io.hpp"
#include "faithrl/reward.hpp"

namespace faithrl {

enum class Side { A, B };
enum class Preference { A, B, skip };

inline std::string_view to_string(Side s) { return s == Side::A ? "A" : "B"; }
inline std::string_view to_string(Preference p) {
  return p == Preference::A ? "A" : p == Preference::B ? "B" : "skip";
}

struct CandidatePair {
  std::string pair_id;
  std::string example_id;
  std::string response_a;
  std::string response_b;
  std::string source_a;
  std::string source_b;
  Side presented_first = Side::A;

  friend bool operator==(const CandidatePair&, const CandidatePair&) = default;
};

struct Judgment {
  std::string pair_id;
  Preference preferred = Preference::skip;
  std::string annotator;
  std::string timestamp;  // RFC 3339
  Side presented_first = Side::A;

  friend bool operator==(const Judgment&, const Judgment&) = default;
};

struct CalibrationResult {
  double alpha_star = 0;
  double pearson_r = 0;
  std::vector<std::pair<double, double>> curve;  // (alpha, r)
  std::size_t n_pairs_used = 0;
};

using ResponseGenerator = std::function<std::string(const GroundedExample&)>;

struct PairBatch {
  std::vector<CandidatePair> pairs;
  std::size_t filtered_identical = 0;
};

/// Draws n examples without replacement, generates one response from each
/// generator, and records a seeded presentation order per pair. Pairs whose
/// responses coincide are dropped and counted.
inline PairBatch make_pairs(const std::vector<GroundedExample>& examples, const ResponseGenerator& gen_a,
                            const ResponseGenerator& gen_b, std::size_t n, std::uint64_t seed,
                            std::string_view label_a = "A", std::string_view label_b = "B") {
  if (n < 1) throw Error("make_pairs: n must be >= 1");
  if (n > examples.size())
    throw Error("make_pairs: requested " + std::to_string(n) + " pairs from " + std::to_string(examples.size()) +
                " examples");
  std::vector<std::size_t> idx(examples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx.begin(), idx.end());
  PairBatch batch;
  const int width = static_cast<int>(std::to_string(n).size());
  for (std::size_t k = 0; k < n; ++k) {
    const auto& ex = examples[idx[k]];
    CandidatePair p;
    auto digits = std::to_string(k + 1);
    p.pair_id = "pair-" + std::string(static_cast<std::size_t>(width) - digits.size(), '0') + digits;
    p.example_id = ex.id;
    p.response_a = gen_a(ex);
    p.response_b = gen_b(ex);
    p.source_a = label_a;
    p.source_b = label_b;
    p.presented_first = rng.below(2) == 0 ? Side::A : Side::B;
    if (p.response_a == p.response_b) {
      ++batch.filtered_identical;
      continue;
    }
    batch.pairs.push_back(std::move(p));
  }
  return batch;
}

/// Product-moment correlation. Constant inputs are an error: the coefficient
/// is undefined there.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("pearson: length mismatch");
  if (x.size() < 2) throw Error("pearson: need at least 2 points");
  const auto n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0) throw Error("pearson: x is constant (zero variance)");
  if (syy == 0) throw Error("pearson: y is constant (zero variance)");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline constexpr int alpha_grid_steps = 100;

/// One usable judged pair, reduced to the two reward components per side.
/// expert is 1 when A was preferred, else 0.
struct ScoredJudgment {
  double acc_a, faith_a, acc_b, faith_b, expert;
};

/// Reward-side preference vector at one alpha: 1 / 0 / 0.5 (A wins / B wins / tie).
inline std::vector<double> reward_preferences(std::span<const ScoredJudgment> items, double alpha) {
  std::vector<double> ours(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    const double a = blend(alpha, items[i].acc_a, items[i].faith_a);
    const double b = blend(alpha, items[i].acc_b, items[i].faith_b);
    ours[i] = a > b ? 1.0 : a < b ? 0.0 : 0.5;
  }
  return ours;
}

/// Correlation between expert and reward-side preferences at one alpha. A
/// constant reward-side vector has undefined correlation and scores -1.
inline double alpha_correlation(std::span<const ScoredJudgment> items, std::span<const double> expert, double alpha) {
  const auto ours = reward_preferences(items, alpha);
  const bool constant = std::all_of(ours.begin(), ours.end(), [&](double v) { return v == ours.front(); });
  return constant ? -1.0 : pearson(expert, ours);
}

/// Sweeps alpha over {0, 1/steps, ..., 1} and returns the smallest alpha
/// attaining the highest correlation.
inline CalibrationResult learn_alpha_scored(std::span<const ScoredJudgment> items, int steps = alpha_grid_steps) {
  if (steps < 1) throw Error("learn_alpha: grid needs at least 1 step");
  if (items.size() < 2)
    throw Error("learn_alpha: need at least 2 usable judged pairs, have " + std::to_string(items.size()));
  std::vector<double> expert(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) expert[i] = items[i].expert;
  if (std::all_of(expert.begin(), expert.end(), [&](double e) { return e == expert.front(); }))
    throw Error(
        "learn_alpha: the expert preferred the same side on every pair (zero variance); collect more diverse "
        "demonstrations");

  CalibrationResult res;
  res.n_pairs_used = items.size();
  res.pearson_r = -INFINITY;
  for (int step = 0; step <= steps; ++step) {
    const double alpha = static_cast<double>(step) / steps;
    const double r = alpha_correlation(items, expert, alpha);
    res.curve.emplace_back(alpha, r);
    if (r > res.pearson_r) {
      res.pearson_r = r;
      res.alpha_star = alpha;
    }
  }
  return res;
}

/// Scores every (pair, non-skip judgment) whose pair and example are known.
inline std::vector<ScoredJudgment> score_judgments(const std::vector<CandidatePair>& pairs,
                                                   const std::vector<Judgment>& judgments,
                                                   const std::vector<GroundedExample>& examples,
                                                   const EmbeddingProvider& provider) {
  std::unordered_map<std::string, const GroundedExample*> by_id;
  for (const auto& ex : examples) by_id.emplace(ex.id, &ex);
  std::unordered_map<std::string, const CandidatePair*> pair_by_id;
  for (const auto& p : pairs) pair_by_id.emplace(p.pair_id, &p);
  std::vector<ScoredJudgment> items;
  const BlendConfig any{0.5};
  for (const auto& j : judgments) {
    if (j.preferred == Preference::skip) continue;
    auto pit = pair_by_id.find(j.pair_id);
    if (pit == pair_by_id.end()) continue;
    auto eit = by_id.find(pit->second->example_id);
    if (eit == by_id.end()) continue;
    const auto ra = blended_terminal_reward(pit->second->response_a, *eit->second, any, provider);
    const auto rb = blended_terminal_reward(pit->second->response_b, *eit->second, any, provider);
    items.push_back({ra.acc, ra.faith, rb.acc, rb.faith, j.preferred == Preference::A ? 1.0 : 0.0});
  }
  return items;
}

inline CalibrationResult learn_alpha(const std::vector<CandidatePair>& pairs, const std::vector<Judgment>& judgments,
                                     const std::vector<GroundedExample>& examples, const EmbeddingProvider& provider) {
  return learn_alpha_scored(score_judgments(pairs, judgments, examples, provider));
}

// ---------------------------------------------------------------------------
// Persistence

inline std::string utc_now_rfc3339() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline bool is_rfc3339(const std::string& s) {
  static const std::regex re(R"(\d{4}-\d{2}-\d{2}[Tt]\d{2}:\d{2}:\d{2}(\.\d+)?([Zz]|[+-]\d{2}:\d{2}))");
  return std::regex_match(s, re);
}

namespace detail {

inline Side parse_side(const nlohmann::json& j, const char* field, std::size_t line) {
  if (!j.contains(field) || !j[field].is_string()) throw ParseError(line, std::string("missing field `") + field + "`");
  const auto s = j[field].get<std::string>();
  if (s == "A") return Side::A;
  if (s == "B") return Side::B;
  throw ParseError(line, std::string("field `") + field + "` must be \"A\" or \"B\"");
}

inline std::string need_str(const nlohmann::json& j, const char* field, std::size_t line) {
  if (!j.contains(field) || !j[field].is_string()) throw ParseError(line, std::string("missing field `") + field + "`");
  return j[field].get<std::string>();
}

inline nlohmann::json parse_line(const std::string& text, std::size_t line) {
  try {
    auto j = nlohmann::json::parse(text);
    if (!j.is_object()) throw ParseError(line, "record is not an object");
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(line, std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const CandidatePair& p) {
  nlohmann::ordered_json j;
  j["pair_id"] = p.pair_id;
  j["example_id"] = p.example_id;
  j["response_a"] = p.response_a;
  j["response_b"] = p.response_b;
  j["source_a"] = p.source_a;
  j["source_b"] = p.source_b;
  j["presented_first"] = std::string(to_string(p.presented_first));
  return j;
}

inline nlohmann::ordered_json to_json(const Judgment& jd) {
  nlohmann::ordered_json j;
  j["pair_id"] = jd.pair_id;
  j["preferred"] = std::string(to_string(jd.preferred));
  j["annotator"] = jd.annotator;
  j["timestamp"] = jd.timestamp;
  j["presented_first"] = std::string(to_string(jd.presented_first));
  return j;
}

inline Judgment judgment_from_json(const nlohmann::json& j, std::size_t line) {
  Judgment jd;
  jd.pair_id = detail::need_str(j, "pair_id", line);
  const auto pref = detail::need_str(j, "preferred", line);
  if (pref == "A") jd.preferred = Preference::A;
  else if (pref == "B") jd.preferred = Preference::B;
  else if (pref == "skip") jd.preferred = Preference::skip;
  else throw ParseError(line, "field `preferred` must be \"A\", \"B\" or \"skip\"");
  jd.annotator = detail::need_str(j, "annotator", line);
  jd.timestamp = detail::need_str(j, "timestamp", line);
  if (!is_rfc3339(jd.timestamp)) throw ParseError(line, "field `timestamp` is not RFC 3339");
  jd.presented_first = detail::parse_side(j, "presented_first", line);
  if (jd.pair_id.empty()) throw ParseError(line, "field `pair_id` is empty");
  return jd;
}

inline std::vector<CandidatePair> parse_pairs(const std::string& text) {
  std::vector<CandidatePair> out;
  std::set<std::string> ids;
  const auto lines = io::split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = i + 1;
    if (trim(lines[i]).empty()) continue;
    const auto j = detail::parse_line(lines[i], line);
    CandidatePair p;
    p.pair_id = detail::need_str(j, "pair_id", line);
    p.example_id = detail::need_str(j, "example_id", line);
    p.response_a = detail::need_str(j, "response_a", line);
    p.response_b = detail::need_str(j, "response_b", line);
    p.source_a = detail::need_str(j, "source_a", line);
    p.source_b = detail::need_str(j, "source_b", line);
    p.presented_first = detail::parse_side(j, "presented_first", line);
    if (p.response_a == p.response_b) throw ParseError(line, "pair has identical responses");
    if (!ids.insert(p.pair_id).second) throw ParseError(line, "duplicate pair_id `" + p.pair_id + "`");
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<CandidatePair> load_pairs(const std::filesystem::path& path) { return parse_pairs(io::read_file(path)); }

inline void save_pairs(const std::filesystem::path& path, const std::vector<CandidatePair>& pairs) {
  std::string out;
  for (const auto& p : pairs) out += to_json(p).dump() + '\n';
  io::write_atomic(path, out);
}

/// Append-only judgment log, one JSON record per line. Appends are
/// serialized through an internal mutex; one store object should own a file.
class JudgmentStore {
 public:
  explicit JudgmentStore(std::filesystem::path path) : path_{std::move(path)} {
    if (std::filesystem::exists(path_)) records_ = parse(io::read_file(path_));
  }

  const std::filesystem::path& path() const { return path_; }

  std::vector<Judgment> load() const {
    std::lock_guard lock(mu_);
    return records_;
  }

  // Index of an existing non-skip judgment for (pair_id, annotator).
  std::optional<std::size_t> find_decisive(const std::string& pair_id, const std::string& annotator) const {
    std::lock_guard lock(mu_);
    return find_decisive_locked(pair_id, annotator);
  }

  /// Appends and flushes one record. A second non-skip judgment for the same
  /// (pair_id, annotator) is rejected, naming the existing record.
  void append(const Judgment& j) {
    if (j.pair_id.empty() || j.annotator.empty()) throw Error("judgment needs pair_id and annotator");
    if (!is_rfc3339(j.timestamp)) throw Error("judgment timestamp is not RFC 3339: " + j.timestamp);
    std::lock_guard lock(mu_);
    if (j.preferred != Preference::skip) {
      if (auto idx = find_decisive_locked(j.pair_id, j.annotator))
        throw Error("duplicate judgment for pair `" + j.pair_id + "` by `" + j.annotator + "` (existing record " +
                    std::to_string(*idx + 1) + ")");
    }
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw Error("judgment store is not writable: " + path_.string());
    out << to_json(j).dump() << '\n';
    out.flush();
    if (!out) throw Error("failed to append to judgment store " + path_.string());
    records_.push_back(j);
  }

  static std::vector<Judgment> parse(const std::string& text) {
    std::vector<Judgment> out;
    const auto lines = io::split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (trim(lines[i]).empty()) continue;
      out.push_back(judgment_from_json(detail::parse_line(lines[i], i + 1), i + 1));
    }
    return out;
  }

 private:
  std::optional<std::size_t> find_decisive_locked(const std::string& pair_id, const std::string& annotator) const {
    for (std::size_t i = 0; i < records_.size(); ++i)
      if (records_[i].pair_id == pair_id && records_[i].annotator == annotator &&
          records_[i].preferred != Preference::skip)
        return i;
    return std::nullopt;
  }

  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::vector<Judgment> records_;
};

inline std::vector<Judgment> load_judgments(const std::filesystem::path& path) {
  return JudgmentStore::parse(io::read_file(path));
}

inline void append_judgment(JudgmentStore& store, const Judgment& j) { store.append(j); }

}  // namespace faithrl
