#include "arz/rl/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "arz/errors.hpp"
#include "arz/io.hpp"
#include "arz/rl/ppo.hpp"

namespace arz::rl {

namespace {

using nlohmann::json;

json net_json(const Mlp& net) {
  json layers = json::array();
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const std::size_t in = net.sizes()[l], out = net.sizes()[l + 1];
    const auto& p = net.params();
    const auto w0 = p.begin() + static_cast<std::ptrdiff_t>(net.weight_offset(l));
    const auto b0 = p.begin() + static_cast<std::ptrdiff_t>(net.bias_offset(l));
    layers.push_back({{"in", in},
                      {"out", out},
                      {"weight", std::vector<double>(w0, w0 + static_cast<std::ptrdiff_t>(in * out))},
                      {"bias", std::vector<double>(b0, b0 + static_cast<std::ptrdiff_t>(out))}});
  }
  return {{"layers", layers},
          {"input_shift", net.input_shift()},
          {"input_scale", net.input_scale()},
          {"output_scale", net.output_scale()}};
}

Mlp net_from_json(const json& j) {
  const json& layers = j.at("layers");
  if (!layers.is_array() || layers.empty()) throw ConfigError("checkpoint: empty network");
  std::vector<std::size_t> sizes{layers.front().at("in").get<std::size_t>()};
  for (const auto& l : layers) {
    if (l.at("in").get<std::size_t>() != sizes.back()) throw ConfigError("checkpoint: layer shapes do not chain");
    sizes.push_back(l.at("out").get<std::size_t>());
  }
  Mlp net(sizes);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto w = layers[l].at("weight").get<std::vector<double>>();
    const auto b = layers[l].at("bias").get<std::vector<double>>();
    if (w.size() != sizes[l] * sizes[l + 1] || b.size() != sizes[l + 1]) {
      throw ConfigError("checkpoint: weight array has wrong length");
    }
    std::copy(w.begin(), w.end(), net.params().begin() + static_cast<std::ptrdiff_t>(net.weight_offset(l)));
    std::copy(b.begin(), b.end(), net.params().begin() + static_cast<std::ptrdiff_t>(net.bias_offset(l)));
  }
  net.set_input_normalization(j.at("input_shift").get<std::vector<double>>(),
                              j.at("input_scale").get<std::vector<double>>());
  net.set_output_scale(j.at("output_scale").get<double>());
  return net;
}

}  // namespace

std::string to_json(const Checkpoint& ck) {
  json j;
  j["format_version"] = kCheckpointVersion;
  j["scheme"] = to_string(ck.scheme);
  j["grid"] = {{"dx_m", ck.dx}, {"dt_s", ck.dt}, {"nodes", ck.M}, {"length_m", ck.L}, {"horizon_s", ck.T}};
  j["normalization"] = {{"rho_m", ck.rho_m},
                        {"v_m", ck.v_m},
                        {"rho_assumed", ck.rho_assumed},
                        {"q_assumed", ck.q_assumed},
                        {"q_cap", ck.q_cap}};
  j["actor"] = net_json(ck.actor);
  j["critic"] = net_json(ck.critic);
  j["config_digest"] = ck.config_digest;
  j["seed"] = ck.seed;
  return j.dump(1);
}

Checkpoint checkpoint_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != kCheckpointVersion) throw ConfigError("checkpoint: unsupported format version");
    Checkpoint ck;
    ck.scheme = scheme_from_string(j.at("scheme").get<std::string>());
    const auto& g = j.at("grid");
    ck.dx = g.at("dx_m").get<double>();
    ck.dt = g.at("dt_s").get<double>();
    ck.M = g.at("nodes").get<std::size_t>();
    ck.L = g.at("length_m").get<double>();
    ck.T = g.at("horizon_s").get<double>();
    const auto& n = j.at("normalization");
    ck.rho_m = n.at("rho_m").get<double>();
    ck.v_m = n.at("v_m").get<double>();
    ck.rho_assumed = n.at("rho_assumed").get<double>();
    ck.q_assumed = n.at("q_assumed").get<double>();
    ck.q_cap = n.at("q_cap").get<double>();
    ck.actor = net_from_json(j.at("actor"));
    ck.critic = net_from_json(j.at("critic"));
    ck.config_digest = j.at("config_digest").get<std::string>();
    ck.seed = j.at("seed").get<unsigned long long>();
    if (ck.actor.input_size() != 2 * ck.M || ck.critic.input_size() != 2 * ck.M) {
      throw ConfigError("checkpoint: network input does not match the grid");
    }
    if (ck.actor.output_size() != 2 * action_dim(ck.scheme) || ck.critic.output_size() != 1) {
      throw ConfigError("checkpoint: network heads do not match the scheme");
    }
    return ck;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) { write_atomic(path, to_json(ck)); }

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

RlController::RlController(Checkpoint ck, const ModelParams& params)
    : ck_(std::move(ck)), params_(params), ss_(make_steady_state(ck_.rho_assumed, params)) {}

BoundaryCommand RlController::command(const TrafficState& observed, double) {
  if (observed.size() != ck_.M) throw ConfigError("observed state does not match the checkpoint grid");
  const PolicyOutput out = policy_forward(ck_.actor, observe(observed, params_));
  std::vector<double> u(out.mu.size());
  for (std::size_t k = 0; k < u.size(); ++k) u[k] = std::clamp(out.mu[k], -1.0, 1.0);
  return action_command(ck_.scheme, u, ck_.q_assumed, ck_.q_cap);
}

void check_compatible(const Checkpoint& ck, Scheme scheme, const Grid& grid) {
  if (ck.scheme != scheme) throw ConfigError("checkpoint scheme '" + to_string(ck.scheme) + "' does not match '" + to_string(scheme) + "'");
  if (ck.M != grid.M || std::abs(ck.dx - grid.dx) > 1e-12) throw ConfigError("checkpoint grid does not match");
}

}  // namespace arz::rl
