#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "roadsense/error.hpp"
#include "roadsense/tensor.hpp"

namespace roadsense {

/// Named learnable tensors. Ordered by name so iteration is deterministic.
using ParamSet = std::map<std::string, Tensor>;

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  long step = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;

  AdamState() = default;
  explicit AdamState(AdamConfig c) : config(c) {}
};

/// One bias-corrected Adam update. Returns fresh leaf tensors; the inputs are
/// left untouched.
inline ParamSet adam_step(const ParamSet& params, const Gradients& grads, AdamState& state) {
  const auto& c = state.config;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  ParamSet out;
  for (const auto& [name, p] : params) {
    const auto g = grads.of(p);
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    if (m.size() != p.size() || g.size() != p.size())
      fail(ErrorCode::ShapeMismatch, "adam_step: moment/gradient shape differs for '" + name + "'");
    std::vector<double> next(p.values());
    for (std::size_t i = 0; i < next.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      next[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
    out.emplace(name, Tensor(p.rows(), p.cols(), std::move(next), true));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// JSON document, format "roadsense-checkpoint", schema_version 1:
//   { "schema_version": 1, "format": "roadsense-checkpoint",
//     "meta": {...caller metadata...},
//     "tensors": { "<name>": { "shape": [rows, cols], "data": [row-major values] } } }

inline constexpr int kCheckpointSchemaVersion = 1;

inline nlohmann::json params_to_json(const ParamSet& params) {
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& [name, t] : params)
    tensors[name] = {{"shape", {t.rows(), t.cols()}}, {"data", t.values()}};
  return tensors;
}

inline ParamSet params_from_json(const nlohmann::json& tensors, bool requires_grad = true) {
  ParamSet out;
  try {
    for (const auto& [name, entry] : tensors.items()) {
      const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2) fail(ErrorCode::ParseError, "tensor '" + name + "' is not rank 2");
      out.emplace(name, Tensor(shape[0], shape[1], entry.at("data").get<std::vector<double>>(), requires_grad));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("checkpoint tensors: ") + e.what());
  }
  return out;
}

inline void save_checkpoint(const std::filesystem::path& path, const ParamSet& params,
                            const nlohmann::json& meta = nlohmann::json::object()) {
  nlohmann::json doc = {{"schema_version", kCheckpointSchemaVersion},
                        {"format", "roadsense-checkpoint"},
                        {"meta", meta},
                        {"tensors", params_to_json(params)}};
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

struct Checkpoint {
  ParamSet params;
  nlohmann::json meta;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MissingFile, path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  if (doc.value("format", "") != "roadsense-checkpoint" || doc.value("schema_version", 0) != kCheckpointSchemaVersion)
    fail(ErrorCode::ParseError, path.string() + ": not a version-1 roadsense checkpoint");
  return {params_from_json(doc.at("tensors")), doc.value("meta", nlohmann::json::object())};
}

}  // namespace roadsense
