#pragma once

// Flat key=value run configuration with dotted section prefixes:
//
//   # comment
//   ppo.gamma = 0.99
//   synth.variant = exact
//
// Layering is defaults < file < command-line overrides; each layer is a call
// to set_config() on the same RunConfig.

#include <charconv>
#include <filesystem>
#include <functional>
#include <type_traits>
#include <string>
#include <utility>
#include <vector>

#include "faithrl/corpus.hpp"
#include "faithrl/decode.hpp"
#include "faithrl/discriminator.hpp"
#include "faithrl/error.hpp"
#include "faithrl/io.hpp"
#include "faithrl/model.hpp"
#include "faithrl/reward.hpp"
#include "faithrl/train.hpp"

namespace faithrl {

enum class ProviderKind { hashed, remote };
enum class RewardKind { blended, discriminator };

struct ProviderConfig {
  ProviderKind kind = ProviderKind::hashed;
  int dim = 64;
  std::uint64_t seed = 7;
  std::string host = "127.0.0.1";
  int port = 8090;
};

struct RunConfig {
  std::filesystem::path train_path;
  std::filesystem::path val_path;
  std::filesystem::path output_dir = "runs";
  long long min_count = 1;
  NetDims dims;  // vocab filled from the vocabulary at train time
  SyntheticSpec synth;
  SFTConfig sft;
  PPOConfig ppo;
  BlendConfig blend;
  RewardKind reward = RewardKind::blended;
  DiscriminatorConfig disc;
  ProviderConfig provider;

  void validate() const {
    if (min_count < 1) throw Error("data.min_count must be >= 1");
    if (dims.embed < 1 || dims.hidden < 1) throw Error("model.embed and model.hidden must be >= 1");
    if (synth.vocab_size < 1 || synth.span_len < 1 || synth.n_examples < 0 || synth.n_distractors < 0)
      throw Error("synth.* sizes must be positive");
    if (provider.dim < 8) throw Error("provider.dim must be >= 8");
    if (provider.port < 1 || provider.port > 65535) throw Error("provider.port must lie in [1, 65535]");
    sft.validate();
    ppo.validate();
    blend.validate();
  }
};

namespace detail {

template <typename N>
N parse_number(std::string_view key, std::string_view text) {
  N v{};
  const char* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || p != end || text.empty())
    throw Error("config key `" + std::string(key) + "`: cannot parse `" + std::string(text) + "` as a number");
  return v;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename N>
std::string format_number(N v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

// `at` maps a config to the member the key controls.
template <typename At>
Field num(std::string key, At at) {
  using N = std::remove_cvref_t<decltype(at(std::declval<RunConfig&>()))>;
  return {key, [key, at](RunConfig& c, std::string_view v) { at(c) = parse_number<N>(key, v); },
          [at](const RunConfig& c) { return format_number(at(const_cast<RunConfig&>(c))); }};
}

template <typename At>
Field path(std::string key, At at) {
  return {key, [at](RunConfig& c, std::string_view v) { at(c) = std::filesystem::path(std::string(v)); },
          [at](const RunConfig& c) { return at(const_cast<RunConfig&>(c)).string(); }};
}

template <typename E, typename At>
Field choice(std::string key, std::vector<std::pair<std::string, E>> names, At at) {
  return {key,
          [key, names, at](RunConfig& c, std::string_view v) {
            std::string expected;
            for (const auto& [n, e] : names) {
              if (n == v) {
                at(c) = e;
                return;
              }
              expected += (expected.empty() ? "" : "|") + n;
            }
            throw Error("config key `" + key + "`: expected " + expected + ", got `" + std::string(v) + "`");
          },
          [names, at](const RunConfig& c) {
            for (const auto& [n, e] : names)
              if (at(const_cast<RunConfig&>(c)) == e) return n;
            return std::string("?");
          }};
}

inline void add_decode_fields(std::vector<Field>& f, const std::string& prefix, DecodeConfig PPOConfig::*d) {
  f.push_back(choice<DecodeMode>(prefix + ".mode", {{"topk", DecodeMode::topk}, {"beam", DecodeMode::beam}},
                                 [d](RunConfig& c) -> auto& { return (c.ppo.*d).mode; }));
  f.push_back(num(prefix + ".k", [d](RunConfig& c) -> auto& { return (c.ppo.*d).k; }));
  f.push_back(num(prefix + ".beam_width", [d](RunConfig& c) -> auto& { return (c.ppo.*d).beam_width; }));
  f.push_back(num(prefix + ".max_new_tokens", [d](RunConfig& c) -> auto& { return (c.ppo.*d).max_new_tokens; }));
  f.push_back(num(prefix + ".seed", [d](RunConfig& c) -> auto& { return (c.ppo.*d).seed; }));
  f.push_back(num(prefix + ".length_penalty", [d](RunConfig& c) -> auto& { return (c.ppo.*d).length_penalty; }));
}

inline const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    using R = RunConfig;
    std::vector<Field> f{
        path("data.train", [](R& c) -> auto& { return c.train_path; }),
        path("data.val", [](R& c) -> auto& { return c.val_path; }),
        path("output_dir", [](R& c) -> auto& { return c.output_dir; }),
        num("data.min_count", [](R& c) -> auto& { return c.min_count; }),
        num("model.embed", [](R& c) -> auto& { return c.dims.embed; }),
        num("model.hidden", [](R& c) -> auto& { return c.dims.hidden; }),
        choice<SyntheticVariant>("synth.variant", {{"copyspan", SyntheticVariant::copyspan}, {"exact", SyntheticVariant::exact}},
                                 [](R& c) -> auto& { return c.synth.variant; }),
        num("synth.vocab_size", [](R& c) -> auto& { return c.synth.vocab_size; }),
        num("synth.n_distractors", [](R& c) -> auto& { return c.synth.n_distractors; }),
        num("synth.span_len", [](R& c) -> auto& { return c.synth.span_len; }),
        num("synth.n_examples", [](R& c) -> auto& { return c.synth.n_examples; }),
        num("synth.seed", [](R& c) -> auto& { return c.synth.seed; }),
        num("sft.epochs", [](R& c) -> auto& { return c.sft.epochs; }),
        num("sft.lr_start", [](R& c) -> auto& { return c.sft.lr_start; }),
        num("sft.batch_size", [](R& c) -> auto& { return c.sft.batch_size; }),
        num("sft.weight_decay", [](R& c) -> auto& { return c.sft.weight_decay; }),
        num("sft.max_state_len", [](R& c) -> auto& { return c.sft.max_state_len; }),
        num("sft.seed", [](R& c) -> auto& { return c.sft.seed; }),
        num("ppo.gamma", [](R& c) -> auto& { return c.ppo.gamma; }),
        num("ppo.lam", [](R& c) -> auto& { return c.ppo.lam; }),
        num("ppo.clip_eps", [](R& c) -> auto& { return c.ppo.clip_eps; }),
        num("ppo.epochs_per_batch", [](R& c) -> auto& { return c.ppo.epochs_per_batch; }),
        num("ppo.batch_episodes", [](R& c) -> auto& { return c.ppo.batch_episodes; }),
        num("ppo.value_coef", [](R& c) -> auto& { return c.ppo.value_coef; }),
        num("ppo.learning_rate", [](R& c) -> auto& { return c.ppo.learning_rate; }),
        num("ppo.weight_decay", [](R& c) -> auto& { return c.ppo.weight_decay; }),
        num("ppo.total_iterations", [](R& c) -> auto& { return c.ppo.total_iterations; }),
        num("ppo.eval_every", [](R& c) -> auto& { return c.ppo.eval_every; }),
        num("ppo.max_state_len", [](R& c) -> auto& { return c.ppo.max_state_len; }),
        num("ppo.seed", [](R& c) -> auto& { return c.ppo.seed; }),
        num("kl.beta_init", [](R& c) -> auto& { return c.ppo.kl.beta_init; }),
        num("kl.target_kl", [](R& c) -> auto& { return c.ppo.kl.target_kl; }),
        num("kl.k_beta", [](R& c) -> auto& { return c.ppo.kl.k_beta; }),
        num("kl.clip_band", [](R& c) -> auto& { return c.ppo.kl.clip_band; }),
        choice<KLEstimator>("kl.estimator", {{"sampled", KLEstimator::sampled}, {"full", KLEstimator::full}},
                            [](R& c) -> auto& { return c.ppo.kl.estimator; }),
        num("blend.alpha", [](R& c) -> auto& { return c.blend.alpha; }),
        choice<RewardKind>("reward.source", {{"blended", RewardKind::blended}, {"discriminator", RewardKind::discriminator}},
                           [](R& c) -> auto& { return c.reward; }),
        num("disc.embed", [](R& c) -> auto& { return c.disc.embed; }),
        num("disc.hidden", [](R& c) -> auto& { return c.disc.hidden; }),
        num("disc.epochs", [](R& c) -> auto& { return c.disc.epochs; }),
        num("disc.batch_size", [](R& c) -> auto& { return c.disc.batch_size; }),
        num("disc.learning_rate", [](R& c) -> auto& { return c.disc.learning_rate; }),
        num("disc.seed", [](R& c) -> auto& { return c.disc.seed; }),
        choice<ProviderKind>("provider.kind", {{"hashed", ProviderKind::hashed}, {"remote", ProviderKind::remote}},
                             [](R& c) -> auto& { return c.provider.kind; }),
        num("provider.dim", [](R& c) -> auto& { return c.provider.dim; }),
        num("provider.seed", [](R& c) -> auto& { return c.provider.seed; }),
        {"provider.host", [](R& c, std::string_view v) { c.provider.host = std::string(v); },
         [](const R& c) { return c.provider.host; }},
        num("provider.port", [](R& c) -> auto& { return c.provider.port; }),
    };
    add_decode_fields(f, "decode", &PPOConfig::decode);
    add_decode_fields(f, "eval", &PPOConfig::eval_decode);
    return f;
  }();
  return table;
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : detail::fields()) keys.push_back(f.key);
  return keys;
}

inline void set_config(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& f : detail::fields())
    if (f.key == key) return f.set(cfg, trim(value));
  throw Error("unknown config key `" + std::string(key) + "`");
}

inline std::string get_config(const RunConfig& cfg, std::string_view key) {
  for (const auto& f : detail::fields())
    if (f.key == key) return f.get(cfg);
  throw Error("unknown config key `" + std::string(key) + "`");
}

// "key=value" as given on the command line.
inline void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw Error("override `" + std::string(assignment) + "` is not key=value");
  set_config(cfg, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

inline void apply_config_text(RunConfig& cfg, const std::string& text) {
  const auto lines = io::split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(i + 1, "expected key = value");
    try {
      set_config(cfg, trim(std::string_view(line).substr(0, eq)), std::string_view(line).substr(eq + 1));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(i + 1, e.what());
    }
  }
}

inline void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  apply_config_text(cfg, io::read_file(path));
}

// Every key, in table order; apply_config_text(dump_config(c)) reproduces c.
inline std::string dump_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : detail::fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

}  // namespace faithrl
