#pragma once

// Blinded pairwise annotation service backing the browser UI.
//
//   GET  /api/pairs/next  -> {pair_id, history, knowledge, first, second} | {complete: true}
//   POST /api/judgments   {pair_id, choice: first|second|skip, annotator} -> {ok: true}
//   GET  /api/progress    -> {done, total}
//   POST /api/calibrate   -> {alpha_star, pearson_r, n_pairs_used, curve}
//   GET  /                -> UI bundle (static directory) or a placeholder page
//
// Handlers are plain member functions so they can be exercised without a
// socket; mount() wires them into an httplib::Server.

#include <filesystem>
#include <mutex>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "httplib.h"
#ifdef _res
#undef _res
#endif
#include "json.hpp"

#include "faithrl/calibrate.hpp"
#include "faithrl/corpus.hpp"
#include "faithrl/metrics.hpp"

namespace faithrl {

struct ServiceResponse {
  int status = 200;
  nlohmann::ordered_json body;
};

class AnnotationService {
 public:
  AnnotationService(std::vector<CandidatePair> pairs, std::vector<GroundedExample> examples,
                    std::filesystem::path store_path, const EmbeddingProvider& provider)
      : pairs_{std::move(pairs)}, examples_{std::move(examples)}, store_{std::move(store_path)}, provider_{provider} {
    for (std::size_t i = 0; i < pairs_.size(); ++i)
      if (!pair_index_.emplace(pairs_[i].pair_id, i).second)
        throw Error("pairs file repeats pair_id `" + pairs_[i].pair_id + "`");
    for (std::size_t i = 0; i < examples_.size(); ++i) example_index_.emplace(examples_[i].id, i);
    for (const auto& p : pairs_)
      if (!example_index_.count(p.example_id))
        throw Error("pair `" + p.pair_id + "` references unknown example `" + p.example_id + "`");
    for (const auto& j : store_.load())
      if (pair_index_.count(j.pair_id)) judged_.insert(j.pair_id);
  }

  // Next unjudged pair in file order. Only the texts leave the server; which
  // generator produced which side stays here.
  ServiceResponse next_pair() const {
    std::lock_guard lock(mu_);
    for (const auto& p : pairs_) {
      if (judged_.count(p.pair_id)) continue;
      const auto& ex = examples_[example_index_.at(p.example_id)];
      nlohmann::ordered_json history = nlohmann::ordered_json::array();
      for (const auto& u : ex.history) history.push_back({{"speaker", to_string(u.speaker)}, {"text", u.text}});
      const bool a_first = p.presented_first == Side::A;
      return {200,
              {{"pair_id", p.pair_id},
               {"history", history},
               {"knowledge", ex.knowledge},
               {"first", a_first ? p.response_a : p.response_b},
               {"second", a_first ? p.response_b : p.response_a}}};
    }
    return {200, {{"complete", true}}};
  }

  ServiceResponse submit(const std::string& body) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
      return error(400, "request body is not valid JSON");
    }
    if (!j.is_object()) return error(400, "request body must be a JSON object");
    for (const char* f : {"pair_id", "choice", "annotator"})
      if (!j.contains(f) || !j[f].is_string()) return error(400, std::string("missing string field `") + f + "`");
    const auto pair_id = j["pair_id"].get<std::string>();
    const auto choice = j["choice"].get<std::string>();
    const auto annotator = j["annotator"].get<std::string>();
    if (annotator.empty()) return error(400, "annotator must be non-empty");
    if (choice != "first" && choice != "second" && choice != "skip")
      return error(400, "choice must be first, second or skip");

    std::lock_guard lock(mu_);
    auto it = pair_index_.find(pair_id);
    if (it == pair_index_.end()) return error(404, "unknown pair `" + pair_id + "`");
    if (judged_.count(pair_id)) return error(409, "pair `" + pair_id + "` already judged");
    const auto& p = pairs_[it->second];
    Judgment jd;
    jd.pair_id = pair_id;
    jd.annotator = annotator;
    jd.timestamp = utc_now_rfc3339();
    jd.presented_first = p.presented_first;
    if (choice == "skip") jd.preferred = Preference::skip;
    else {
      const Side shown_first = p.presented_first;
      const Side other = shown_first == Side::A ? Side::B : Side::A;
      const Side picked = choice == "first" ? shown_first : other;
      jd.preferred = picked == Side::A ? Preference::A : Preference::B;
    }
    try {
      store_.append(jd);
    } catch (const Error& e) {
      return error(409, e.what());
    }
    judged_.insert(pair_id);
    return {200, {{"ok", true}}};
  }

  ServiceResponse progress() const {
    std::lock_guard lock(mu_);
    return {200, {{"done", judged_.size()}, {"total", pairs_.size()}}};
  }

  ServiceResponse calibrate() const {
    std::lock_guard lock(mu_);
    try {
      return {200, calibration_json(learn_alpha(pairs_, store_.load(), examples_, provider_))};
    } catch (const Error& e) {
      return error(422, e.what());
    }
  }

  static nlohmann::ordered_json calibration_json(const CalibrationResult& r) {
    nlohmann::ordered_json curve = nlohmann::ordered_json::array();
    for (const auto& [a, rr] : r.curve) curve.push_back({a, rr});
    return {{"alpha_star", r.alpha_star}, {"pearson_r", r.pearson_r}, {"n_pairs_used", r.n_pairs_used}, {"curve", curve}};
  }

  const JudgmentStore& store() const { return store_; }

  // `ui_dir` holds the built UI bundle; without one, / serves a stub page.
  void mount(httplib::Server& server, const std::filesystem::path& ui_dir = {}) {
    auto send = [](httplib::Response& res, const ServiceResponse& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    server.Get("/api/pairs/next", [this, send](const httplib::Request&, httplib::Response& res) { send(res, next_pair()); });
    server.Post("/api/judgments",
                [this, send](const httplib::Request& req, httplib::Response& res) { send(res, submit(req.body)); });
    server.Get("/api/progress", [this, send](const httplib::Request&, httplib::Response& res) { send(res, progress()); });
    server.Post("/api/calibrate", [this, send](const httplib::Request&, httplib::Response& res) { send(res, calibrate()); });
    if (!ui_dir.empty() && std::filesystem::is_directory(ui_dir)) {
      server.set_mount_point("/", ui_dir.string());
    } else {
      server.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("<!doctype html><title>faithrl annotate</title><p>UI bundle not built. API is under /api/.</p>",
                        "text/html");
      });
    }
  }

 private:
  static ServiceResponse error(int status, const std::string& msg) { return {status, {{"error", msg}}}; }

  std::vector<CandidatePair> pairs_;
  std::vector<GroundedExample> examples_;
  std::unordered_map<std::string, std::size_t> pair_index_;
  std::unordered_map<std::string, std::size_t> example_index_;
  JudgmentStore store_;
  const EmbeddingProvider& provider_;
  std::unordered_set<std::string> judged_;
  mutable std::mutex mu_;
};

}  // namespace faithrl
