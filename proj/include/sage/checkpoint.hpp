#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "sage/policy.hpp"

namespace sage {

// Checkpoint layout (JSON, schema_version 1):
//   { "schema_version": 1, "kind": "sage.policy",
//     "n_users": U, "n_items": I, "dim": d, "seed": s,
//     "user_embeddings": [U*d row-major], "item_embeddings": [I*d row-major],
//     "item_bias": [I] }
// Doubles are written with round-trip precision.

inline constexpr int kCheckpointSchemaVersion = 1;

inline nlohmann::json checkpoint_to_json(const PolicyParams& p) {
  auto flat = [](const auto& m) {
    return std::vector<double>(m.data(), m.data() + m.size());
  };
  return {{"schema_version", kCheckpointSchemaVersion},
          {"kind", "sage.policy"},
          {"n_users", p.n_users()},
          {"n_items", p.n_items()},
          {"dim", p.dim()},
          {"seed", p.seed},
          {"user_embeddings", flat(p.user_embeddings)},
          {"item_embeddings", flat(p.item_embeddings)},
          {"item_bias", flat(p.item_bias)}};
}

inline PolicyParams checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("schema_version", 0) != kCheckpointSchemaVersion || j.value("kind", "") != "sage.policy") {
    throw IoError("not a sage.policy checkpoint (schema_version 1)");
  }
  const int u = j.at("n_users").get<int>();
  const int n = j.at("n_items").get<int>();
  const int d = j.at("dim").get<int>();
  PolicyParams p;
  p.seed = j.at("seed").get<std::uint64_t>();
  auto fill = [](auto& m, const nlohmann::json& arr, Eigen::Index expected, const char* name) {
    if (static_cast<Eigen::Index>(arr.size()) != expected) {
      throw IoError(std::string("checkpoint field ") + name + " has wrong length");
    }
    for (Eigen::Index k = 0; k < expected; ++k) m.data()[k] = arr[static_cast<std::size_t>(k)].get<double>();
  };
  p.user_embeddings.resize(u, d);
  p.item_embeddings.resize(n, d);
  p.item_bias.resize(n);
  fill(p.user_embeddings, j.at("user_embeddings"), static_cast<Eigen::Index>(u) * d, "user_embeddings");
  fill(p.item_embeddings, j.at("item_embeddings"), static_cast<Eigen::Index>(n) * d, "item_embeddings");
  fill(p.item_bias, j.at("item_bias"), n, "item_bias");
  return p;
}

inline void save_checkpoint(const PolicyParams& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << checkpoint_to_json(p).dump() << '\n';
  if (!out) throw IoError("write failed: " + path);
}

inline PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return checkpoint_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

}  // namespace sage
