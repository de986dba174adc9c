#pragma once

// Shared test fixtures: judgments synthesized from a hidden blend coefficient.

#include <filesystem>
#include <string>
#include <vector>

#include "faithrl/calibrate.hpp"

namespace faithrl::testing {

struct JudgmentFixture {
  std::vector<GroundedExample> examples;
  std::vector<CandidatePair> pairs;
  std::vector<Judgment> judgments;
};

// A response mixing copied knowledge spans, reference tokens and noise, so
// that accuracy and faithfulness orderings often disagree between two draws.
inline std::string random_response(const GroundedExample& ex, Rng& rng) {
  const auto k = split_whitespace(ex.knowledge);
  const auto r = split_whitespace(ex.reference);
  std::vector<std::string> out;
  const auto len = 1 + rng.below(6);
  while (out.size() < len) {
    switch (rng.below(3)) {
      case 0: {
        auto s = rng.below(k.size());
        for (std::size_t i = s; i < k.size() && i < s + 3 && out.size() < len; ++i) out.push_back(k[i]);
        break;
      }
      case 1: out.push_back(r[rng.below(r.size())]); break;
      default: out.push_back("n" + std::to_string(rng.below(40)));
    }
  }
  std::string s;
  for (const auto& t : out) s += (s.empty() ? "" : " ") + t;
  return s;
}

// n pairs whose judgments follow blend(alpha_star, .) exactly; ties at
// alpha_star are redrawn.
inline JudgmentFixture hidden_alpha_fixture(double alpha_star, std::size_t n, std::uint64_t seed,
                                            const EmbeddingProvider& provider) {
  JudgmentFixture f;
  f.examples = generate_synthetic({SyntheticVariant::copyspan, 60, 6, 4, static_cast<int>(n), seed});
  Rng rng(derive_seed(seed, 17));
  const BlendConfig cfg{alpha_star};
  const int width = static_cast<int>(std::to_string(n).size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ex = f.examples[i];
    CandidatePair p;
    double ra = 0, rb = 0;
    do {
      p.response_a = random_response(ex, rng);
      p.response_b = random_response(ex, rng);
      ra = blended_terminal_reward(p.response_a, ex, cfg, provider).blended;
      rb = blended_terminal_reward(p.response_b, ex, cfg, provider).blended;
    } while (ra == rb || p.response_a == p.response_b);
    auto digits = std::to_string(i + 1);
    p.pair_id = "pair-" + std::string(static_cast<std::size_t>(width) - digits.size(), '0') + digits;
    p.example_id = ex.id;
    p.source_a = "gen-a";
    p.source_b = "gen-b";
    p.presented_first = rng.below(2) ? Side::A : Side::B;
    f.judgments.push_back(
        {p.pair_id, ra > rb ? Preference::A : Preference::B, "expert", "2024-01-01T00:00:00Z", p.presented_first});
    f.pairs.push_back(std::move(p));
  }
  return f;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("faithrl_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace faithrl::testing
