#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include <json.hpp>

#include "otslot/costs.hpp"
#include "otslot/error.hpp"
#include "otslot/layers.hpp"
#include "otslot/slot_attention.hpp"

namespace otslot {

inline std::string domain_name(SinkhornDomain d) {
  switch (d) {
    case SinkhornDomain::kAuto: return "auto";
    case SinkhornDomain::kPlain: return "plain";
    case SinkhornDomain::kLog: return "log";
  }
  return "?";
}

inline SinkhornDomain parse_domain(const std::string& name) {
  if (name == "auto") return SinkhornDomain::kAuto;
  if (name == "plain") return SinkhornDomain::kPlain;
  if (name == "log") return SinkhornDomain::kLog;
  throw ConfigError("unknown sinkhorn domain '" + name + "'");
}

inline nlohmann::json to_json(const SinkhornConfig& c) {
  return {{"temperature", c.temperature},
          {"max_iterations", c.max_iterations},
          {"tolerance", c.tolerance},
          {"domain", domain_name(c.domain)}};
}

inline SinkhornConfig sinkhorn_config_from_json(const nlohmann::json& j) {
  SinkhornConfig c;
  c.temperature = j.at("temperature").get<double>();
  c.max_iterations = j.at("max_iterations").get<std::size_t>();
  c.tolerance = j.at("tolerance").get<double>();
  c.domain = parse_domain(j.at("domain").get<std::string>());
  return c;
}

inline nlohmann::json to_json(const SAConfig& c) {
  nlohmann::json j = {
      {"num_slots", c.num_slots},
      {"iterations", c.iterations},
      {"variant", variant_name(c.variant)},
      {"metric", metric_name(c.metric)},
      {"scale_by_sqrt_dk", c.scaled()},
      {"implicit_diff", c.implicit_diff},
      {"learned_marginals", c.learned_marginals},
      {"identical_init", c.identical_init},
      {"residual_mlp", c.residual_mlp},
      {"layer_norm_inputs", c.layer_norm_inputs},
      {"layer_norm_slots", c.layer_norm_slots},
      {"readout", c.readout},
      {"input_dim", c.input_dim},
      {"slot_dim", c.slot_dim},
      {"key_dim", c.key_dim},
      {"value_dim", c.value_dim},
      {"head_width", c.head_width},
      {"output_dim", c.output_dim},
      {"sinkhorn", to_json(c.sinkhorn)},
      {"mesh",
       {{"steps", c.mesh.steps},
        {"learning_rate", c.mesh.learning_rate},
        {"noise_std", c.mesh.noise_std},
        {"inner_iterations", c.mesh.inner_iterations},
        {"warm_start", c.mesh.warm_start},
        {"straight_through", c.mesh.straight_through}}},
  };
  return j;
}

inline SAConfig sa_config_from_json(const nlohmann::json& j) {
  SAConfig c;
  c.num_slots = j.at("num_slots").get<std::size_t>();
  c.iterations = j.at("iterations").get<std::size_t>();
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.metric = parse_metric(j.at("metric").get<std::string>());
  c.scale_by_sqrt_dk = j.at("scale_by_sqrt_dk").get<bool>();
  c.implicit_diff = j.at("implicit_diff").get<bool>();
  c.learned_marginals = j.at("learned_marginals").get<bool>();
  c.identical_init = j.at("identical_init").get<bool>();
  c.residual_mlp = j.at("residual_mlp").get<bool>();
  c.layer_norm_inputs = j.at("layer_norm_inputs").get<bool>();
  c.layer_norm_slots = j.at("layer_norm_slots").get<bool>();
  c.readout = j.at("readout").get<bool>();
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.slot_dim = j.at("slot_dim").get<std::size_t>();
  c.key_dim = j.at("key_dim").get<std::size_t>();
  c.value_dim = j.at("value_dim").get<std::size_t>();
  c.head_width = j.at("head_width").get<std::size_t>();
  c.output_dim = j.at("output_dim").get<std::size_t>();
  c.sinkhorn = sinkhorn_config_from_json(j.at("sinkhorn"));
  const auto& m = j.at("mesh");
  c.mesh.steps = m.at("steps").get<std::size_t>();
  c.mesh.learning_rate = m.at("learning_rate").get<double>();
  c.mesh.noise_std = m.at("noise_std").get<double>();
  c.mesh.inner_iterations = m.at("inner_iterations").get<std::size_t>();
  c.mesh.warm_start = m.at("warm_start").get<bool>();
  c.mesh.straight_through = m.at("straight_through").get<bool>();
  return c;
}

struct Checkpoint {
  Parameters params;
  SAConfig config;
  std::uint64_t seed = 0;
};

inline constexpr const char* kCheckpointFormat = "otslot-checkpoint";

inline nlohmann::json to_json(const Checkpoint& ck) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, t] : ck.params.entries()) params[name] = {{"shape", t.shape()}, {"data", t.values()}};
  return {{"format", kCheckpointFormat},
          {"version", 1},
          {"seed", ck.seed},
          {"config", to_json(ck.config)},
          {"parameters", params}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) throw ConfigError("not an otslot checkpoint");
    if (j.at("version").get<int>() != 1) throw ConfigError("unsupported checkpoint version");
    Checkpoint ck;
    ck.seed = j.at("seed").get<std::uint64_t>();
    ck.config = sa_config_from_json(j.at("config"));
    for (const auto& [name, entry] : j.at("parameters").items()) {
      Shape shape = entry.at("shape").get<Shape>();
      std::vector<double> data = entry.at("data").get<std::vector<double>>();
      if (shape_size(shape) != data.size()) throw ShapeError("parameter '" + name + "' data does not match its shape");
      ck.params.set(name, Tensor(std::move(shape), std::move(data)));
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << to_json(ck).dump(1) << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(e.what(), 0, e.byte);
  }
  return checkpoint_from_json(j);
}

}  // namespace otslot
