#pragma once

// Flat key-value configs, CSV emission and atomic file writes.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "arz/solver.hpp"

namespace arz {

struct GainTable;

/// `section.key = value` lines; '#' starts a comment. Duplicate keys are errors.
class Config {
 public:
  static Config parse(const std::string& text);
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_list(const std::string& key, const std::vector<double>& fallback) const;

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& values() const { return values_; }

  /// Canonical text (sorted keys); the digest is computed over it.
  std::string dump() const;

 private:
  std::map<std::string, std::string> values_;
};

/// FNV-1a 64-bit digest as 16 hex digits.
std::string digest(const std::string& text);

/// Writes to `<path>.tmp` and renames over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

/// %.9g formatting.
std::string fmt(double x);

std::string trajectory_csv(const Trajectory& traj);
std::string commands_csv(const Trajectory& traj);
/// rewards[k] belongs to step k + 1.
std::string rewards_csv(const Trajectory& traj, const std::vector<double>& rewards);
std::string kernels_csv(const GainTable& table);

}  // namespace arz
