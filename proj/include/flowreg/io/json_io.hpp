#pragma once

// JSON and CSV artifacts: flow checkpoints, configuration, correspondences,
// loss history, run manifests, metrics and landmark lists.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowreg/evaluation.hpp"
#include "flowreg/io/atomic_write.hpp"
#include "flowreg/io/mesh_io.hpp"
#include "flowreg/registration.hpp"

#ifndef FLOWREG_VERSION
#define FLOWREG_VERSION "0.0.0"
#endif

namespace flowreg::io {

using nlohmann::json;

inline constexpr const char* kVersion = FLOWREG_VERSION;

inline json read_json(const std::filesystem::path& path) {
  const std::string text = detail::read_all(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const json& value) {
  write_text_atomically(path, value.dump(2) + "\n");
}

/// Runs `body`, turning JSON type and key errors into ParseError.
template <typename F>
auto json_guard(const std::string& what, F&& body) {
  try {
    return body();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, what + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Flow checkpoint

struct FlowCheckpoint {
  VelocityField field;
  double t0 = 0.0;
  double t1 = 0.5;
  /// Coordinates the field was trained in; absent for hand-built fields.
  std::optional<NormalizeTransform> normalization;

  OdeConfig ode(int steps) const { return OdeConfig{t0, t1, steps}; }
};

inline json checkpoint_to_json(const FlowCheckpoint& ckpt) {
  json j;
  j["dims"] = ckpt.field.dims();
  j["activation"] = activation_name(ckpt.field.activation());
  json layers = json::array();
  for (const auto& l : ckpt.field.layers()) {
    json w = json::array();
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(l.weight.cols()));
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) row[static_cast<std::size_t>(c)] = l.weight(r, c);
      w.push_back(row);
    }
    layers.push_back({{"w", w}, {"b", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  j["layers"] = layers;
  j["t0"] = ckpt.t0;
  j["t1"] = ckpt.t1;
  if (ckpt.normalization) {
    const auto& c = ckpt.normalization->center;
    j["normalization"] = {{"center", {c.x(), c.y(), c.z()}}, {"scale", ckpt.normalization->scale}};
  }
  return j;
}

inline FlowCheckpoint checkpoint_from_json(const json& j) {
  return json_guard("flow checkpoint", [&] {
    FlowCheckpoint ckpt;
    ckpt.field = VelocityField(j.at("dims").get<std::vector<int>>(), parse_activation(j.at("activation").get<std::string>()));
    const json& layers = j.at("layers");
    if (layers.size() != ckpt.field.layers().size()) throw Error(ErrorCode::ParseError, "flow checkpoint: layer count does not match dims");
    for (std::size_t li = 0; li < layers.size(); ++li) {
      auto& l = ckpt.field.layers()[li];
      const auto w = layers[li].at("w").get<std::vector<std::vector<double>>>();
      const auto b = layers[li].at("b").get<std::vector<double>>();
      if (w.size() != static_cast<std::size_t>(l.weight.rows()) || b.size() != static_cast<std::size_t>(l.bias.size())) {
        throw Error(ErrorCode::ParseError, "flow checkpoint: layer " + std::to_string(li) + " has the wrong shape");
      }
      for (std::size_t r = 0; r < w.size(); ++r) {
        if (w[r].size() != static_cast<std::size_t>(l.weight.cols())) {
          throw Error(ErrorCode::ParseError, "flow checkpoint: layer " + std::to_string(li) + " has the wrong shape");
        }
        for (std::size_t c = 0; c < w[r].size(); ++c) l.weight(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = w[r][c];
      }
      for (std::size_t r = 0; r < b.size(); ++r) l.bias(static_cast<Eigen::Index>(r)) = b[r];
    }
    ckpt.field.validate();
    ckpt.t0 = j.at("t0").get<double>();
    ckpt.t1 = j.at("t1").get<double>();
    if (j.contains("normalization")) {
      const auto c = j["normalization"].at("center").get<std::vector<double>>();
      if (c.size() != 3) throw Error(ErrorCode::ParseError, "flow checkpoint: normalization center needs 3 values");
      ckpt.normalization = NormalizeTransform{Point3(c[0], c[1], c[2]), j["normalization"].at("scale").get<double>()};
    }
    return ckpt;
  });
}

inline void save_checkpoint(const std::filesystem::path& path, const FlowCheckpoint& ckpt) {
  write_json(path, checkpoint_to_json(ckpt));
}

inline FlowCheckpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(read_json(path)); }

// ---------------------------------------------------------------------------
// Configuration

inline json config_to_json(const RegistrationConfig& c) {
  return json{{"lambda_cd_inter", c.lambda_cd_inter},
              {"lambda_cd_final", c.lambda_cd_final},
              {"lambda_arap", c.lambda_arap},
              {"iterations", c.iterations},
              {"learning_rate", c.learning_rate},
              {"t0", c.t0},
              {"t1", c.t1},
              {"ode_steps", c.ode_steps},
              {"mlp_hidden", c.mlp_hidden},
              {"activation", c.activation},
              {"fps_target_size", c.fps_target_size},
              {"outlier_multiplier", c.outlier_multiplier},
              {"preprocess_guidance", c.preprocess_guidance},
              {"surface_resolution", c.surface_resolution},
              {"guidance_stride", c.guidance_stride},
              {"nicp_iterations", c.nicp_iterations},
              {"nicp_damping", c.nicp_damping},
              {"nicp_fit_weight", c.nicp_fit_weight},
              {"knn", c.knn},
              {"seed", c.seed}};
}

/// Overlays the keys present in `j` on `base`. Unknown keys are rejected so
/// typos do not silently fall back to defaults.
inline RegistrationConfig config_from_json(const json& j, RegistrationConfig base = {}) {
  return json_guard("config", [&] {
    if (!j.is_object()) throw Error(ErrorCode::ParseError, "config: expected a JSON object");
    const json known = config_to_json(base);
    for (const auto& [key, value] : j.items()) {
      if (!known.contains(key)) throw Error(ErrorCode::ParseError, "config: unknown field '" + key + "'");
    }
    auto take = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    take("lambda_cd_inter", base.lambda_cd_inter);
    take("lambda_cd_final", base.lambda_cd_final);
    take("lambda_arap", base.lambda_arap);
    take("iterations", base.iterations);
    take("learning_rate", base.learning_rate);
    take("t0", base.t0);
    take("t1", base.t1);
    take("ode_steps", base.ode_steps);
    take("mlp_hidden", base.mlp_hidden);
    take("activation", base.activation);
    take("fps_target_size", base.fps_target_size);
    take("outlier_multiplier", base.outlier_multiplier);
    take("preprocess_guidance", base.preprocess_guidance);
    take("surface_resolution", base.surface_resolution);
    take("guidance_stride", base.guidance_stride);
    take("nicp_iterations", base.nicp_iterations);
    take("nicp_damping", base.nicp_damping);
    take("nicp_fit_weight", base.nicp_fit_weight);
    take("knn", base.knn);
    take("seed", base.seed);
    return base;
  });
}

inline RegistrationConfig load_config(const std::filesystem::path& path, RegistrationConfig base = {}) {
  return config_from_json(read_json(path), std::move(base));
}

// ---------------------------------------------------------------------------
// Correspondences and loss history

inline json correspondences_to_json(const CorrespondenceMap& c) { return json{{"map", c.map}, {"distances", c.distances}}; }

inline CorrespondenceMap correspondences_from_json(const json& j) {
  return json_guard("correspondences", [&] {
    CorrespondenceMap c;
    c.map = j.at("map").get<std::vector<std::size_t>>();
    if (j.contains("distances")) c.distances = j.at("distances").get<std::vector<double>>();
    if (!c.distances.empty() && c.distances.size() != c.map.size()) {
      throw Error(ErrorCode::ParseError, "correspondences: map and distances differ in length");
    }
    return c;
  });
}

inline void save_correspondences(const std::filesystem::path& path, const CorrespondenceMap& c) {
  write_json(path, correspondences_to_json(c));
}

inline CorrespondenceMap load_correspondences(const std::filesystem::path& path) {
  return correspondences_from_json(read_json(path));
}

inline void write_loss_csv(std::ostream& out, const std::vector<LossBreakdown>& history) {
  out << "iteration,total,cd_inter,cd_final,arap\n" << std::setprecision(17);
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& h = history[i];
    out << i << ',' << h.total << ',' << h.cd_inter << ',' << h.cd_final << ',' << h.arap << '\n';
  }
}

inline void save_loss_csv(const std::filesystem::path& path, const std::vector<LossBreakdown>& history) {
  write_atomically(path, [&](std::ostream& out) { write_loss_csv(out, history); });
}

// ---------------------------------------------------------------------------
// Run manifest

struct RunManifest {
  std::map<std::string, std::string> inputs;
  RegistrationConfig config;
  std::uint64_t seed = 0;
  std::string version = kVersion;
  std::map<std::string, double> timing;
};

inline json manifest_to_json(const RunManifest& m) {
  return json{{"inputs", m.inputs}, {"config", config_to_json(m.config)}, {"seed", m.seed}, {"version", m.version}, {"timing", m.timing}};
}

inline RunManifest manifest_from_json(const json& j) {
  return json_guard("manifest", [&] {
    RunManifest m;
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.config = config_from_json(j.at("config"));
    m.seed = j.at("seed").get<std::uint64_t>();
    m.version = j.at("version").get<std::string>();
    m.timing = j.at("timing").get<std::map<std::string, double>>();
    return m;
  });
}

// ---------------------------------------------------------------------------
// Metrics and landmarks

struct Metrics {
  std::optional<double> dirichlet;
  double coverage = 0.0;
  std::optional<double> landmark_error;
  std::vector<double> landmark_errors;
  std::optional<double> bijectivity;
};

/// Metrics that could not be computed (no faces, no landmarks, no reverse
/// map) are written as null.
inline json metrics_to_json(const Metrics& m) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return json{{"dirichlet", opt(m.dirichlet)},
              {"coverage", m.coverage},
              {"landmark_error", opt(m.landmark_error)},
              {"landmark_errors", m.landmark_errors},
              {"bijectivity", opt(m.bijectivity)}};
}

/// Lines of "source_index target_index" (0-based); '#' starts a comment.
inline LandmarkSet parse_landmarks(std::string_view text, const std::string& name = "<landmarks>") {
  LandmarkSet out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    long long a = 0, b = 0;
    if (tok.size() != 2 || !detail::parse_long(tok[0], a) || !detail::parse_long(tok[1], b) || a < 0 || b < 0) {
      throw detail::parse_error(name, "line " + std::to_string(line_no), "expected two non-negative indices");
    }
    out.pairs.emplace_back(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
  }
  return out;
}

inline LandmarkSet load_landmarks(const std::filesystem::path& path) {
  return parse_landmarks(detail::read_all(path), path.string());
}

}  // namespace flowreg::io
