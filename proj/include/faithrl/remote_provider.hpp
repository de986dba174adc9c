#pragma once

// Client for an external embedding service:
//   POST /embed {"tokens": [...]}  ->  {"dim": d, "vectors": [[...], ...]}
// Vectors are re-normalized on receipt.

#include <atomic>
#include <string>

#include "httplib.h"
// <resolv.h> defines _res as a macro, which collides with Eigen internals.
#ifdef _res
#undef _res
#endif
#include "json.hpp"

#include "faithrl/error.hpp"
#include "faithrl/metrics.hpp"

namespace faithrl {

class RemoteProvider final : public EmbeddingProvider {
 public:
  RemoteProvider(std::string host, int port, int expected_dim = 0)
      : host_{std::move(host)}, port_{port}, dim_{expected_dim} {}

  std::vector<Embedding> embed(const EvalTokens& tokens) const override {
    if (tokens.empty()) return {};
    httplib::Client client(host_, port_);
    client.set_connection_timeout(5);
    client.set_read_timeout(30);
    const nlohmann::json body = {{"tokens", tokens}};
    auto res = client.Post("/embed", body.dump(), "application/json");
    if (!res) throw Error("embedding service unreachable at " + host_ + ":" + std::to_string(port_));
    if (res->status != 200) throw Error("embedding service returned HTTP " + std::to_string(res->status));

    nlohmann::json j;
    try {
      j = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("embedding service sent malformed JSON: ") + e.what());
    }
    if (!j.contains("dim") || !j["dim"].is_number_integer() || !j.contains("vectors") || !j["vectors"].is_array())
      throw Error("embedding service response lacks `dim` or `vectors`");
    const int dim = j["dim"].get<int>();
    if (dim < 8) throw Error("embedding service dimension must be >= 8");
    int expected = 0;
    if (!dim_.compare_exchange_strong(expected, dim) && expected != dim)
      throw Error("embedding dimension changed from " + std::to_string(expected) + " to " + std::to_string(dim));
    const auto& vectors = j["vectors"];
    if (vectors.size() != tokens.size())
      throw Error("embedding service returned " + std::to_string(vectors.size()) + " vectors for " +
                  std::to_string(tokens.size()) + " tokens");

    std::vector<Embedding> out;
    out.reserve(tokens.size());
    for (const auto& v : vectors) {
      auto e = v.get<Embedding>();
      if (static_cast<int>(e.size()) != dim) throw Error("embedding vector length disagrees with `dim`");
      normalize_in_place(e);
      out.push_back(std::move(e));
    }
    return out;
  }

  // Unknown until the first response unless given at construction.
  int dim() const override {
    if (dim_.load() == 0) (void)embed({"."});
    return dim_.load();
  }

 private:
  std::string host_;
  int port_;
  mutable std::atomic<int> dim_;
};

}  // namespace faithrl
