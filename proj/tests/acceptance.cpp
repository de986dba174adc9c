// Acceptance run: one PASS/FAIL line per criterion with the measured values.
// Exit status reports harness errors only; a red criterion is a result.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "faithrl/calibrate.hpp"
#include "faithrl/train.hpp"

using namespace faithrl;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... xs) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, xs...);
  return buf;
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const auto n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// ---------------------------------------------------------------------------
// Tolerances and budgets

constexpr double bleu_case = 84.648, bleu_tol = 0.01;
constexpr double rouge_case = 85.714, rouge_tol = 0.001;
constexpr double tokf1_case = 66.667, tokf1_tol = 0.001;
constexpr double gae_tol = 1e-9;
constexpr double grad_tol = 1e-3;
constexpr std::size_t grad_max_params = 5000;
constexpr double ppo_ratio_target = 1.3;

constexpr double budget_metrics = 1, budget_gae = 5, budget_grad = 30, budget_alpha = 60;
constexpr double budget_ppo = 15 * 60, budget_kl = 10 * 60;

// ---------------------------------------------------------------------------
// End-to-end setup shared by the training criteria.

constexpr double expert_alpha = 0.30;  // simulated expert's hidden preference
constexpr std::size_t calibration_pairs = 200;
const std::uint64_t seeds[] = {1, 2, 3};

struct Task {
  std::vector<GroundedExample> train, val;
  Vocabulary vocab;
};

Task make_task(SyntheticVariant variant, std::uint64_t seed) {
  auto all = generate_synthetic({variant, 60, 6, 4, 600, seed});
  Task t;
  t.train.assign(all.begin(), all.begin() + 500);
  t.val.assign(all.begin() + 500, all.end());
  t.vocab = build_vocabulary(t.train, 1);
  return t;
}

NetDims dims_for(const Task& t) { return {t.vocab.size(), 32, 64}; }

SFTConfig sft_config(std::uint64_t seed) {
  SFTConfig c;
  c.lr_start = 1e-2;
  c.epochs = 10;
  c.seed = seed;
  return c;
}

PPOConfig ppo_config(std::uint64_t seed, int iterations) {
  PPOConfig c;
  c.total_iterations = iterations;
  c.eval_every = 250;
  c.learning_rate = 1e-3;
  c.value_coef = 1e-4;
  c.seed = seed;
  c.decode.max_new_tokens = 12;
  c.eval_decode.max_new_tokens = 12;
  c.kl.beta_init = 0.01;
  c.kl.k_beta = 0.0;
  return c;
}

PolicyValueNet train_sft_net(const Task& t, std::uint64_t seed) {
  PolicyValueNet net(dims_for(t), seed);
  train_sft(t.train, t.vocab, net, sft_config(seed));
  return net;
}

// Pairs from the SFT policy (beam vs one top-k draw), judged by a simulated
// expert whose preference follows the blended reward at expert_alpha.
CalibrationResult calibrate_from(const PolicyValueNet& net, const Task& t, std::uint64_t seed,
                                 const EmbeddingProvider& hp) {
  const auto cfg = ppo_config(seed, 0);
  auto beam = [&](const GroundedExample& ex) {
    return decode_tokens(decode(net, encode_state(ex, t.vocab), cfg.eval_decode), t.vocab);
  };
  auto sample = [&](const GroundedExample& ex) {
    Rng rng(derive_seed(seed, fnv1a64(ex.id)));
    return decode_tokens(sample_topk(net, encode_state(ex, t.vocab), cfg.decode, rng).actions, t.vocab);
  };
  const auto batch = make_pairs(t.train, beam, sample, calibration_pairs, seed, "beam", "topk");
  std::unordered_map<std::string, const GroundedExample*> by_id;
  for (const auto& ex : t.train) by_id[ex.id] = &ex;
  std::vector<Judgment> judgments;
  for (const auto& p : batch.pairs) {
    const auto& ex = *by_id.at(p.example_id);
    const double ra = blended_terminal_reward(p.response_a, ex, {expert_alpha}, hp).blended;
    const double rb = blended_terminal_reward(p.response_b, ex, {expert_alpha}, hp).blended;
    const auto pref = ra > rb ? Preference::A : rb > ra ? Preference::B : Preference::skip;
    judgments.push_back({p.pair_id, pref, "simulated", "2024-01-01T00:00:00Z", p.presented_first});
  }
  return learn_alpha(batch.pairs, judgments, t.train, hp);
}

struct Scored {
  double reward = 0;
  MetricReport report;
};

Scored score(const PolicyValueNet& net, const Task& t, double alpha, const DecodeConfig& dc, const EmbeddingProvider& hp) {
  const auto outs = generate_outputs(net, t.val, t.vocab, dc);
  return {mean_blended_reward(t.val, outs, {alpha}, hp), evaluate_corpus(t.val, outs, hp)};
}

// ---------------------------------------------------------------------------
// 1-5: arithmetic and property checks

Outcome metric_oracles() {
  const auto t0 = Clock::now();
  const auto tk = [](const char* s) { return tokenize_eval(s); };
  const double id = sentence_bleu(tk("the cat sat on the mat"), tk("the cat sat on the mat"));
  const double bp = sentence_bleu(tk("the cat sat on the mat"), tk("the cat sat on the mat quickly"));
  const double rl = rouge_l_f1(tk("a b c d"), tk("a c d"));
  const double tf = token_f1(tk("a b c"), tk("b c d"));
  const double secs = seconds_since(t0);
  const bool ok = id == 100.0 && std::abs(bp - bleu_case) <= bleu_tol && std::abs(rl - rouge_case) <= rouge_tol &&
                  std::abs(tf - tokf1_case) <= tokf1_tol && secs < budget_metrics;
  return {ok, fmt("bleu(id)=%.17g bleu(6v7)=%.4f rouge_l=%.4f token_f1=%.4f (%.3fs)", id, bp, rl, tf, secs)};
}

Outcome table_arithmetic() {
  // Each example already carries the column means, so the corpus means are
  // exactly the published ones.
  std::vector<MetricScores> s;
  for (int i = 0; i < 4; ++i) s.push_back({31.15, 43.28, 91.45, 51.81});
  const auto rep = aggregate(s);
  const bool ok = rep.overall == 217.69 && rep.sacrebleu == 31.15 && rep.rouge_l == 43.28 &&
                  rep.bertscore_f1 == 91.45 && rep.token_f1 == 51.81;
  return {ok, fmt("overall=%.17g", rep.overall)};
}

// A_t as an explicit discounted sum of TD residuals.
std::vector<double> gae_direct(const std::vector<double>& r, const std::vector<double>& v, double boot, double gamma,
                               double lam) {
  const std::size_t n = r.size();
  std::vector<double> a(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double w = 1;
    for (std::size_t tau = t; tau < n; ++tau, w *= gamma * lam) {
      const double next_v = tau + 1 < n ? v[tau + 1] : boot;
      a[t] += w * (r[tau] + gamma * next_v - v[tau]);
    }
  }
  return a;
}

Outcome gae_suite() {
  const auto t0 = Clock::now();
  Rng rng(20240101);
  auto draw = [&](std::size_t n, double lo, double hi) {
    std::vector<double> x(n);
    for (auto& e : x) e = lo + (hi - lo) * rng.uniform();
    return x;
  };
  double worst_tele = 0, worst_direct = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto n = 1 + rng.below(32);
    const auto r = draw(n, -1, 1), v = draw(n, -2, 2);
    const auto tele = compute_gae(r, v, 0.0, 1.0, 1.0);
    double tail = 0;
    for (std::size_t t = n; t-- > 0;) {
      tail += r[t];
      worst_tele = std::max(worst_tele, std::abs(tele.advantages[t] - (tail - v[t])));
    }
    const double gamma = rng.uniform(), lam = rng.uniform(), boot = rng.uniform() - 0.5;
    const auto g = compute_gae(r, v, boot, gamma, lam);
    const auto d = gae_direct(r, v, boot, gamma, lam);
    for (std::size_t t = 0; t < n; ++t) worst_direct = std::max(worst_direct, std::abs(g.advantages[t] - d[t]));
  }
  const double secs = seconds_since(t0);
  const bool ok = worst_tele <= gae_tol && worst_direct <= gae_tol && secs < budget_gae;
  return {ok, fmt("max |err| telescoping=%.3g direct=%.3g over 1000 trajectories (%.2fs)", worst_tele, worst_direct, secs)};
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  auto all = generate_synthetic({SyntheticVariant::copyspan, 20, 1, 2, 4, 9});
  const auto vocab = build_vocabulary(all, 1);
  PolicyValueNet net({vocab.size(), 8, 16}, 4);
  Rng jitter(41);
  for (auto& p : net.params()) p += 0.3 * (2 * jitter.uniform() - 1);

  PPOConfig cfg;
  cfg.value_coef = 0.5;
  Trajectory tr;
  tr.state = encode_state(all[0], vocab);
  tr.actions = {special::count, special::count + 1, special::count + 2, special::eos};
  tr.logprobs_old = net.sequence_logprobs(tr.state, tr.actions);
  const double shift[] = {-0.5, 0.5, 0.05, -0.03};  // two ratios outside the clip band
  for (std::size_t t = 0; t < 4; ++t) tr.logprobs_old[t] += shift[t];
  tr.advantages = {0.4, -1.2, 0.3, 0.9};
  tr.returns = {0.2, -0.1, 0.4, 1.0};
  const std::vector<Trajectory> batch{tr};
  const auto adv = normalized_advantages(batch);

  std::vector<double> g(net.param_count(), 0.0), sink(net.param_count());
  ppo_objective(net, batch, adv, cfg, g);
  auto probe = net;
  const double h = 1e-5;
  double worst = 0;
  for (std::size_t i = 0; i < net.param_count(); ++i) {
    const double orig = probe.params()[i];
    probe.params()[i] = orig + h;
    const double up = ppo_objective(probe, batch, adv, cfg, sink).total;
    probe.params()[i] = orig - h;
    const double down = ppo_objective(probe, batch, adv, cfg, sink).total;
    probe.params()[i] = orig;
    const double num = (up - down) / (2 * h);
    const double denom = std::max({std::abs(num), std::abs(g[i]), 1e-6});
    worst = std::max(worst, std::abs(num - g[i]) / denom);
  }
  const double secs = seconds_since(t0);
  const bool ok = net.param_count() <= grad_max_params && worst < grad_tol && secs < budget_grad;
  return {ok, fmt("%zu params, max relative error %.3g (%.2fs)", net.param_count(), worst, secs)};
}

Outcome alpha_recovery() {
  const auto t0 = Clock::now();
  HashedProvider hp(64, 7);
  bool ok = true;
  std::string detail;
  for (double hidden : {0.00, 0.30, 0.92, 1.00}) {
    auto examples = generate_synthetic({SyntheticVariant::copyspan, 60, 6, 4, 200, 77});
    Rng rng(derive_seed(77, static_cast<std::uint64_t>(hidden * 100)));
    std::vector<CandidatePair> pairs;
    std::vector<Judgment> judgments;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const auto& ex = examples[i];
      const auto k = split_whitespace(ex.knowledge);
      const auto r = split_whitespace(ex.reference);
      // Mixtures of knowledge runs, reference tokens and noise.
      auto respond = [&] {
        std::string s;
        const auto len = 1 + rng.below(6);
        for (std::size_t n = 0; n < len; ++n) {
          const auto pick = rng.below(3);
          const std::string tok = pick == 0   ? k[rng.below(k.size())]
                                  : pick == 1 ? r[rng.below(r.size())]
                                              : "n" + std::to_string(rng.below(40));
          s += (s.empty() ? "" : " ") + tok;
        }
        return s;
      };
      CandidatePair p;
      double ra = 0, rb = 0;
      do {
        p.response_a = respond();
        p.response_b = respond();
        ra = blended_terminal_reward(p.response_a, ex, {hidden}, hp).blended;
        rb = blended_terminal_reward(p.response_b, ex, {hidden}, hp).blended;
      } while (ra == rb);
      p.pair_id = "p" + std::to_string(i);
      p.example_id = ex.id;
      pairs.push_back(p);
      judgments.push_back({p.pair_id, ra > rb ? Preference::A : Preference::B, "hidden", "2024-01-01T00:00:00Z", Side::A});
    }
    const auto res = learn_alpha(pairs, judgments, examples, hp);
    double r_at_hidden = -2, smallest_max = -1;
    for (const auto& [a, r] : res.curve) {
      if (std::abs(a - hidden) < 1e-12) r_at_hidden = r;
      if (r == res.pearson_r && smallest_max < 0) smallest_max = a;
    }
    const bool here = r_at_hidden == 1.0 && res.pearson_r == 1.0 && res.alpha_star == smallest_max;
    ok = ok && here;
    detail += fmt("a*=%.2f: r(a*)=%.17g alpha_star=%.2f; ", hidden, r_at_hidden, res.alpha_star);
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < budget_alpha;
  return {ok, detail + fmt("(%.2fs)", secs)};
}

// ---------------------------------------------------------------------------
// 6-8: end-to-end training

Outcome ppo_improvement() {
  const auto t0 = Clock::now();
  HashedProvider hp(64, 7);
  std::vector<double> ratios, f1_deltas;
  std::string detail;
  for (auto seed : seeds) {
    const auto task = make_task(SyntheticVariant::copyspan, seed);
    const auto sft = train_sft_net(task, seed);
    const double alpha = calibrate_from(sft, task, seed, hp).alpha_star;
    const auto cfg = ppo_config(seed, 3000);
    const auto res = train_ppo(task.train, task.val, task.vocab, sft, cfg, RewardSource::blended({alpha}, hp), hp);
    const auto before = score(sft, task, alpha, cfg.eval_decode, hp);
    const auto after = score(res.best, task, alpha, cfg.eval_decode, hp);
    ratios.push_back(after.reward / before.reward);
    f1_deltas.push_back(after.report.token_f1 - before.report.token_f1);
    detail += fmt("seed %llu: alpha=%.2f reward %.4f->%.4f (x%.3f, best it %d) token_f1 %.2f->%.2f; ",
                  static_cast<unsigned long long>(seed), alpha, before.reward, after.reward, ratios.back(),
                  res.best_iteration, before.report.token_f1, after.report.token_f1);
  }
  const double secs = seconds_since(t0);
  const double mr = median(ratios), md = median(f1_deltas);
  const bool ok = mr >= ppo_ratio_target && md > 0 && secs < budget_ppo;
  return {ok, detail + fmt("median ratio %.3f (need >= %.2f), median token_f1 gain %.2f (%.0fs)", mr, ppo_ratio_target,
                           md, secs)};
}

Outcome kl_anchoring() {
  const auto t0 = Clock::now();
  HashedProvider hp(64, 7);
  const std::uint64_t seed = seeds[0];
  const auto task = make_task(SyntheticVariant::copyspan, seed);
  const auto sft = train_sft_net(task, seed);
  const double alpha = calibrate_from(sft, task, seed, hp).alpha_star;
  auto final_kl = [&](double beta) {
    auto cfg = ppo_config(seed, 500);
    cfg.kl.beta_init = beta;
    const auto res = train_ppo(task.train, task.val, task.vocab, sft, cfg, RewardSource::blended({alpha}, hp), hp);
    auto probe = cfg.decode;
    probe.seed = 99;
    return mean_kl_to_reference(res.final_net, sft, task.val, task.vocab, probe);
  };
  const double tight = final_kl(10.0), loose = final_kl(0.01);
  const double secs = seconds_since(t0);
  return {tight < loose && secs < budget_kl,
          fmt("final KL beta_init=10: %.5f, beta_init=0.01: %.5f (%.0fs)", tight, loose, secs)};
}

Outcome tradeoff_direction() {
  const auto t0 = Clock::now();
  HashedProvider hp(64, 7);
  std::vector<double> f1_sft, f1_copy, bleu_copy, bleu_cal;
  std::string detail;
  for (auto seed : seeds) {
    const auto task = make_task(SyntheticVariant::exact, seed);
    const auto sft = train_sft_net(task, seed);
    const double alpha = calibrate_from(sft, task, seed, hp).alpha_star;
    const auto cfg = ppo_config(seed, 3000);
    auto run = [&](double a) {
      const auto res = train_ppo(task.train, task.val, task.vocab, sft, cfg, RewardSource::blended({a}, hp), hp);
      return score(res.best, task, a, cfg.eval_decode, hp).report;
    };
    const auto base = score(sft, task, 0.0, cfg.eval_decode, hp).report;
    const auto copy = run(0.0);
    const auto cal = run(alpha);
    f1_sft.push_back(base.token_f1);
    f1_copy.push_back(copy.token_f1);
    bleu_copy.push_back(copy.sacrebleu);
    bleu_cal.push_back(cal.sacrebleu);
    detail += fmt("seed %llu: alpha_cal=%.2f token_f1 %.2f->%.2f bleu(a=0)=%.2f bleu(a_cal)=%.2f; ",
                  static_cast<unsigned long long>(seed), alpha, base.token_f1, copy.token_f1, copy.sacrebleu, cal.sacrebleu);
  }
  const bool ok = median(f1_copy) > median(f1_sft) && median(bleu_copy) <= median(bleu_cal);
  return {ok, detail + fmt("medians: token_f1 %.2f->%.2f, bleu %.2f vs %.2f (%.0fs)", median(f1_sft), median(f1_copy),
                           median(bleu_copy), median(bleu_cal), seconds_since(t0))};
}

// ---------------------------------------------------------------------------
// 9: determinism

Outcome determinism() {
  const SyntheticSpec spec{SyntheticVariant::copyspan, 60, 6, 4, 200, 5};
  const bool data_same = serialize_examples(generate_synthetic(spec)) == serialize_examples(generate_synthetic(spec));

  const auto task = make_task(SyntheticVariant::copyspan, 5);
  HashedProvider hp(64, 7);
  const PolicyValueNet a(dims_for(task), 8), b(dims_for(task), 9);
  const auto cfg = ppo_config(5, 40);
  const auto reward = RewardSource::blended({0.3}, hp);
  bool rollout_same = true;
  for (std::size_t i = 0; i < 20; ++i) {
    Rng r1(100 + i), r2(100 + i);
    const auto x = rollout(a, b, task.train[i], task.vocab, reward, 0.1, cfg, r1);
    const auto y = rollout(a, b, task.train[i], task.vocab, reward, 0.1, cfg, r2);
    rollout_same = rollout_same && x.actions == y.actions && x.logprobs_old == y.logprobs_old &&
                   x.values == y.values && x.shaped_rewards == y.shaped_rewards;
  }

  auto run = [&] { return train_ppo(task.train, task.val, task.vocab, a, cfg, reward, hp); };
  const auto r1 = run(), r2 = run();
  const bool log_same = r1.log == r2.log;
  const bool params_same = std::equal(r1.final_net.params().begin(), r1.final_net.params().end(),
                                      r2.final_net.params().begin());
  return {data_same && rollout_same && log_same && params_same,
          fmt("gen-data %s, rollout %s, train-ppo log (%zu lines) %s, final params %s", data_same ? "equal" : "DIFFER",
              rollout_same ? "equal" : "DIFFER", r1.log.size(), log_same ? "equal" : "DIFFER",
              params_same ? "equal" : "DIFFER")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"metric oracles", metric_oracles},
      {"table arithmetic", table_arithmetic},
      {"gae suite", gae_suite},
      {"gradient check", gradient_check},
      {"alpha recovery", alpha_recovery},
      {"ppo improvement", ppo_improvement},
      {"kl anchoring", kl_anchoring},
      {"trade-off direction", tradeoff_direction},
      {"determinism", determinism},
  };
  int passed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& [name, fn] = criteria[i];
    try {
      const auto o = fn();
      passed += o.pass;
      std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, name, o.detail.c_str());
    } catch (const std::exception& e) {
      std::printf("FAIL %zu %s: error: %s\n", i + 1, name, e.what());
      std::fflush(stdout);
      return 2;
    }
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria pass\n", passed, criteria.size());
  return 0;
}
