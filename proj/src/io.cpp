#include "arz/io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "arz/control.hpp"
#include "arz/errors.hpp"

namespace arz {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& text) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(text, &pos);
    if (pos != text.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + text + "'");
  }
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!cfg.values_.emplace(key, value).second) {
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_double(key, it->second);
}

long Config::get_int(const std::string& key, long fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const double v = parse_double(key, it->second);
  if (v != static_cast<double>(static_cast<long>(v))) throw ConfigError("key '" + key + "': expected an integer");
  return static_cast<long>(v);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::string v = it->second;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + it->second + "'");
}

std::vector<double> Config::get_list(const std::string& key, const std::vector<double>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<double> out;
  std::stringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  if (out.empty()) throw ConfigError("key '" + key + "': empty list");
  return out;
}

std::string Config::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::string digest(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp);
      throw ConfigError("write failed for " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

std::string trajectory_csv(const Trajectory& traj) {
  std::string out = "step,t_s,node,x_m,rho_veh_per_km,v_km_per_h\n";
  for (std::size_t n = 0; n < traj.states.size(); ++n) {
    const auto& s = traj.states[n];
    for (std::size_t i = 0; i < s.size(); ++i) {
      out += std::to_string(n) + ',' + fmt(s.t) + ',' + std::to_string(i) + ',' + fmt(traj.grid.x(i)) + ',' +
             fmt(s.rho[i] * 1000.0) + ',' + fmt(s.v[i] * 3.6) + '\n';
    }
  }
  return out;
}

std::string commands_csv(const Trajectory& traj) {
  std::string out = "step,t_s,inlet_flow_veh_per_h,outlet_kind,outlet_value\n";
  for (std::size_t n = 0; n < traj.commands.size(); ++n) {
    const auto& c = traj.commands[n];
    // Flow outlets in veh/h, velocity outlets in km/h.
    const double outv = c.outlet_value * 3600.0 / (c.outlet_kind == OutletKind::flow ? 1.0 : 1000.0);
    out += std::to_string(n) + ',' + fmt(traj.grid.t(n)) + ',' + fmt(c.inlet * 3600.0) + ',' +
           to_string(c.outlet_kind) + ',' + fmt(outv) + '\n';
  }
  return out;
}

std::string rewards_csv(const Trajectory& traj, const std::vector<double>& rewards) {
  std::string out = "step,t_s,reward,cum_reward\n";
  double cum = 0.0;
  for (std::size_t k = 0; k < rewards.size(); ++k) {
    cum += rewards[k];
    out += std::to_string(k + 1) + ',' + fmt(traj.grid.t(k + 1)) + ',' + fmt(rewards[k]) + ',' + fmt(cum) + '\n';
  }
  return out;
}

std::string kernels_csv(const GainTable& table) {
  std::string out = "xi_m,c_v,c_q\n";
  for (std::size_t i = 0; i < table.xi.size(); ++i) {
    out += fmt(table.xi[i]) + ',' + fmt(table.c_v[i]) + ',' + fmt(table.c_q[i]) + '\n';
  }
  return out;
}

}  // namespace arz
