// faithrl: command-line front end for the full workflow
//   gen-data -> train-sft -> make-pairs -> annotate-serve -> calibrate -> train-ppo -> evaluate

#include <csignal>
#include <cstdio>
#include <iostream>
#include <map>
#include <memory>

#include "CLI11.hpp"
#include "faithrl/checkpoint.hpp"
#include "faithrl/config.hpp"
#include "faithrl/remote_provider.hpp"
#include "faithrl/service.hpp"

using namespace faithrl;
namespace fs = std::filesystem;

namespace {

// A model directory holds policy.ckpt and vocab.txt.
struct LoadedModel {
  Vocabulary vocab;
  PolicyValueNet net;
};

LoadedModel load_model(const fs::path& dir, const char* ckpt = "policy.ckpt") {
  auto vocab = Vocabulary::parse(io::read_file(dir / "vocab.txt"));
  auto net = load_checkpoint<double>(dir / ckpt, &vocab);
  return {std::move(vocab), std::move(net)};
}

void save_model(const fs::path& dir, const Vocabulary& vocab, const PolicyValueNet& net, const char* ckpt = "policy.ckpt") {
  io::write_atomic(dir / "vocab.txt", vocab.serialize());
  save_checkpoint(net, dir / ckpt, vocab.hash());
}

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& p) {
  if (p.kind == ProviderKind::remote) return std::make_unique<RemoteProvider>(p.host, p.port);
  return std::make_unique<HashedProvider>(p.dim, p.seed);
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

// {"id", "output"} per line, in example order.
std::string serialize_outputs(const std::vector<GroundedExample>& xs, const std::vector<std::string>& outs) {
  std::string text;
  for (std::size_t i = 0; i < xs.size(); ++i)
    text += nlohmann::ordered_json{{"id", xs[i].id}, {"output", outs[i]}}.dump() + "\n";
  return text;
}

std::vector<std::string> load_outputs(const fs::path& path, const std::vector<GroundedExample>& xs) {
  std::map<std::string, std::string> by_id;
  const auto lines = io::split_lines(io::read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::exception&) {
      throw ParseError(i + 1, "malformed JSON in outputs file");
    }
    if (!j.contains("id") || !j["id"].is_string() || !j.contains("output") || !j["output"].is_string())
      throw ParseError(i + 1, "outputs record needs string `id` and `output`");
    if (!by_id.emplace(j["id"].get<std::string>(), j["output"].get<std::string>()).second)
      throw ParseError(i + 1, "duplicate id in outputs file");
  }
  std::vector<std::string> outs;
  for (const auto& x : xs) {
    auto it = by_id.find(x.id);
    if (it == by_id.end()) throw Error("outputs file has no entry for example `" + x.id + "`");
    outs.push_back(it->second);
  }
  return outs;
}

nlohmann::ordered_json report_json(const MetricReport& r) {
  return {{"sacrebleu", r.sacrebleu}, {"rouge_l", r.rouge_l}, {"bertscore_f1", r.bertscore_f1},
          {"token_f1", r.token_f1},   {"overall", r.overall}};
}

// Generator for make-pairs: a checkpoint plus a decoding config. Sampling
// generators reseed per example so output does not depend on call order.
ResponseGenerator model_generator(std::shared_ptr<const LoadedModel> m, DecodeConfig dc, int max_state_len) {
  return [m, dc, max_state_len](const GroundedExample& ex) {
    const auto state = encode_state(ex, m->vocab, max_state_len);
    if (dc.mode == DecodeMode::beam) return decode_tokens(decode(m->net, state, dc), m->vocab);
    Rng rng(derive_seed(dc.seed, fnv1a64(ex.id)));
    return decode_tokens(sample_topk(m->net, state, dc, rng).actions, m->vocab);
  };
}

void require(const fs::path& p, const char* what) {
  if (p.empty()) throw Error(std::string(what) + " is required");
  if (!fs::exists(p)) throw Error(std::string(what) + " not found: " + p.string());
}

httplib::Server* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Faithfulness-aware RL fine-tuning toolkit"};
  app.require_subcommand(1);
  fs::path config_file;
  std::vector<std::string> overrides;
  app.add_option("--config", config_file, "key=value config file")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "override one config key (key=value), repeatable");

  // Flags bound to config keys; applied after the file and --set.
  std::vector<std::pair<std::string, std::string>> flag_values;
  auto keyed = [&](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(flag, [&flag_values, key](const std::string& v) { flag_values.emplace_back(key, v); },
                                          help + " (" + key + ")");
  };

  fs::path out, data, model_dir;

  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset");
  keyed(gen, "--variant", "synth.variant", "copyspan|exact");
  keyed(gen, "--n", "synth.n_examples", "number of examples");
  keyed(gen, "--seed", "synth.seed", "generator seed");
  keyed(gen, "--vocab-size", "synth.vocab_size", "word pool size");
  keyed(gen, "--distractors", "synth.n_distractors", "distractor spans");
  keyed(gen, "--span-len", "synth.span_len", "span length");
  gen->add_option("--out", out, "output JSONL")->required();

  auto* sft = app.add_subcommand("train-sft", "supervised warm start");
  keyed(sft, "--train", "data.train", "training JSONL");
  keyed(sft, "--seed", "sft.seed", "initialization and shuffling seed");
  keyed(sft, "--epochs", "sft.epochs", "epochs");
  keyed(sft, "--lr", "sft.lr_start", "initial learning rate");
  sft->add_option("--out", out, "model directory")->required();

  auto* ppo = app.add_subcommand("train-ppo", "PPO fine-tuning against the blended reward");
  keyed(ppo, "--train", "data.train", "training JSONL");
  keyed(ppo, "--val", "data.val", "validation JSONL");
  keyed(ppo, "--seed", "ppo.seed", "rollout seed");
  keyed(ppo, "--iterations", "ppo.total_iterations", "PPO iterations");
  keyed(ppo, "--alpha", "blend.alpha", "accuracy weight");
  keyed(ppo, "--beta", "kl.beta_init", "initial KL coefficient");
  keyed(ppo, "--reward", "reward.source", "blended|discriminator");
  ppo->add_option("--init", model_dir, "SFT model directory")->required();
  ppo->add_option("--out", out, "output model directory")->required();

  auto* eval = app.add_subcommand("evaluate", "score outputs (or a model's decodes) against a dataset");
  eval->add_option("--data", data, "dataset JSONL")->required();
  fs::path outputs_file;
  auto* eo = eval->add_option("--outputs", outputs_file, "JSONL of {id, output}");
  auto* em = eval->add_option("--model", model_dir, "model directory to decode with");
  eo->excludes(em);
  eval->add_option("--out", out, "report JSON");

  auto* cal = app.add_subcommand("calibrate", "learn alpha from pairwise judgments");
  fs::path pairs_file, judgments_file;
  cal->add_option("--pairs", pairs_file, "pairs JSONL")->required();
  cal->add_option("--judgments", judgments_file, "judgments JSONL")->required();
  cal->add_option("--data", data, "dataset JSONL the pairs were drawn from")->required();
  cal->add_option("--out", out, "CalibrationResult JSON");

  auto* mp = app.add_subcommand("make-pairs", "candidate pairs from two generators");
  fs::path model_a, model_b;
  std::string mode_a = "beam", mode_b = "topk";
  std::size_t n_pairs = 25;
  std::uint64_t pair_seed = 0;
  mp->add_option("--data", data, "dataset JSONL")->required();
  mp->add_option("--model-a", model_a, "model directory for side A")->required();
  mp->add_option("--model-b", model_b, "model directory for side B (default: model A)");
  mp->add_option("--mode-a", mode_a, "decoding for side A (beam|topk)");
  mp->add_option("--mode-b", mode_b, "decoding for side B (beam|topk)");
  mp->add_option("--n", n_pairs, "number of pairs");
  mp->add_option("--seed", pair_seed, "selection, sampling and ordering seed");
  mp->add_option("--out", out, "pairs JSONL")->required();

  auto* serve = app.add_subcommand("annotate-serve", "run the annotation service");
  std::string host = "127.0.0.1";
  int port = 8080;
  fs::path ui_dir;
  serve->add_option("--pairs", pairs_file, "pairs JSONL")->required();
  serve->add_option("--data", data, "dataset JSONL")->required();
  serve->add_option("--judgments", judgments_file, "judgment store (appended)")->required();
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--ui", ui_dir, "built UI bundle directory");

  auto* genr = app.add_subcommand("generate", "decode responses for a dataset");
  genr->add_option("--data", data, "dataset JSONL")->required();
  genr->add_option("--model", model_dir, "model directory")->required();
  keyed(genr, "--mode", "eval.mode", "beam|topk");
  keyed(genr, "--seed", "eval.seed", "sampling seed");
  genr->add_option("--out", out, "JSONL of {id, output}")->required();

  auto* rs = app.add_subcommand("reward-score", "print the reward breakdown for one output");
  std::string example_id, output_text;
  rs->add_option("--data", data, "dataset JSONL")->required();
  rs->add_option("--id", example_id, "example id")->required();
  rs->add_option("--output", output_text, "candidate response")->required();
  keyed(rs, "--alpha", "blend.alpha", "accuracy weight");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg;
    if (!config_file.empty()) apply_config_file(cfg, config_file);
    for (const auto& o : overrides) apply_override(cfg, o);
    for (const auto& [k, v] : flag_values) set_config(cfg, k, v);
    cfg.validate();
    const auto provider = make_provider(cfg.provider);

    if (*gen) {
      save_examples(out, generate_synthetic(cfg.synth));
      std::cout << "wrote " << cfg.synth.n_examples << " examples to " << out.string() << "\n";
    } else if (*sft) {
      require(cfg.train_path, "data.train");
      const auto train = load_examples(cfg.train_path);
      const auto vocab = build_vocabulary(train, cfg.min_count);
      PolicyValueNet net({vocab.size(), cfg.dims.embed, cfg.dims.hidden}, cfg.sft.seed);
      const auto res = train_sft(train, vocab, net, cfg.sft);
      std::vector<std::string> log;
      for (std::size_t e = 0; e < res.epoch_losses.size(); ++e) {
        log.push_back(nlohmann::ordered_json{{"type", "sft_epoch"}, {"epoch", e + 1}, {"loss", res.epoch_losses[e]}}.dump());
        std::cerr << log.back() << "\n";
      }
      save_model(out, vocab, net);
      io::write_atomic(out / "sft_log.jsonl", join_lines(log));
      io::write_atomic(out / "run.cfg", dump_config(cfg));
    } else if (*ppo) {
      require(cfg.train_path, "data.train");
      require(cfg.val_path, "data.val");
      const auto train = load_examples(cfg.train_path);
      const auto val = load_examples(cfg.val_path);
      const auto init = load_model(model_dir);
      std::optional<DiscriminatorModel> disc;
      auto reward = RewardSource::blended(cfg.blend, *provider);
      if (cfg.reward == RewardKind::discriminator) {
        // Ground truth vs the init policy's own samples on the training split.
        std::vector<LabeledResponse> pos, neg;
        DecodeConfig dc = cfg.ppo.decode;
        dc.seed = derive_seed(cfg.ppo.seed, 0xd15c);
        const auto samples = generate_outputs(init.net, train, init.vocab, dc, cfg.ppo.max_state_len);
        for (std::size_t i = 0; i < train.size(); ++i) {
          pos.emplace_back(train[i], train[i].reference);
          neg.emplace_back(train[i], samples[i]);
        }
        disc.emplace(train_discriminator(pos, neg, init.vocab, cfg.disc));
        std::cerr << "discriminator train accuracy " << disc->train_accuracy() << "\n";
        reward = RewardSource::discriminator(*disc);
      }
      const auto res = train_ppo(train, val, init.vocab, init.net, cfg.ppo, reward, *provider, [](const std::string& l) {
        if (l.find("\"eval\"") != std::string::npos) std::cerr << l << "\n";
      });
      save_model(out, init.vocab, res.best);
      save_checkpoint(res.final_net, out / "final.ckpt", init.vocab.hash());
      io::write_atomic(out / "train_log.jsonl", join_lines(res.log));
      io::write_atomic(out / "run.cfg", dump_config(cfg));
      std::cout << "best iteration " << res.best_iteration << " overall " << res.best_report.overall << "\n";
    } else if (*eval) {
      const auto xs = load_examples(data);
      std::vector<std::string> outs;
      if (!outputs_file.empty()) outs = load_outputs(outputs_file, xs);
      else if (!model_dir.empty()) {
        const auto m = load_model(model_dir);
        outs = generate_outputs(m.net, xs, m.vocab, cfg.ppo.eval_decode, cfg.ppo.max_state_len);
      } else throw Error("evaluate needs --outputs or --model");
      const auto j = report_json(evaluate_corpus(xs, outs, *provider));
      if (!out.empty()) io::write_atomic(out, j.dump(2) + "\n");
      std::cout << j.dump() << "\n";
    } else if (*cal) {
      const auto res = learn_alpha(load_pairs(pairs_file), load_judgments(judgments_file), load_examples(data), *provider);
      const auto j = AnnotationService::calibration_json(res);
      if (!out.empty()) io::write_atomic(out, j.dump(2) + "\n");
      std::cout << "alpha_star " << res.alpha_star << " pearson_r " << res.pearson_r << " n_pairs_used "
                << res.n_pairs_used << "\n";
    } else if (*mp) {
      const auto xs = load_examples(data);
      auto a = std::make_shared<const LoadedModel>(load_model(model_a));
      auto b = model_b.empty() ? a : std::make_shared<const LoadedModel>(load_model(model_b));
      // Beam sides use the eval.* settings, sampling sides the rollout decode.* settings.
      const auto side = [&](const std::string& mode) {
        return parse_decode_mode(mode) == DecodeMode::beam ? cfg.ppo.eval_decode : cfg.ppo.decode;
      };
      DecodeConfig da = side(mode_a), db = side(mode_b);
      da.seed = derive_seed(pair_seed, 1);
      db.seed = derive_seed(pair_seed, 2);
      const auto label = [](const fs::path& dir, const std::string& mode) { return dir.filename().string() + ":" + mode; };
      const auto batch = make_pairs(xs, model_generator(a, da, cfg.ppo.max_state_len),
                                    model_generator(b, db, cfg.ppo.max_state_len), n_pairs, pair_seed,
                                    label(model_a, mode_a), label(model_b.empty() ? model_a : model_b, mode_b));
      if (batch.filtered_identical)
        std::cerr << "warning: dropped " << batch.filtered_identical << " of " << n_pairs
                  << " pairs whose responses were identical\n";
      save_pairs(out, batch.pairs);
      std::cout << "wrote " << batch.pairs.size() << " pairs to " << out.string() << "\n";
    } else if (*serve) {
      AnnotationService svc(load_pairs(pairs_file), load_examples(data), judgments_file, *provider);
      httplib::Server server;
      svc.mount(server, ui_dir);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "annotation service on http://" << host << ":" << port << "/\n";
      if (!server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
    } else if (*genr) {
      const auto xs = load_examples(data);
      const auto m = load_model(model_dir);
      const auto outs = generate_outputs(m.net, xs, m.vocab, cfg.ppo.eval_decode, cfg.ppo.max_state_len);
      io::write_atomic(out, serialize_outputs(xs, outs));
    } else if (*rs) {
      const auto xs = load_examples(data);
      auto it = std::find_if(xs.begin(), xs.end(), [&](const GroundedExample& x) { return x.id == example_id; });
      if (it == xs.end()) throw Error("no example with id `" + example_id + "`");
      const auto rb = blended_terminal_reward(output_text, *it, cfg.blend, *provider);
      std::cout << nlohmann::ordered_json{{"acc", rb.acc},
                                          {"faith", rb.faith},
                                          {"blended", rb.blended},
                                          {"per_token_kl_penalty", rb.per_token_kl_penalty},
                                          {"shaped_rewards", rb.shaped_rewards}}
                       .dump()
                << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
