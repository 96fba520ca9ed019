#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "skinseg/losses.hpp"
#include "skinseg/network.hpp"
#include "skinseg/relabel.hpp"
#include "skinseg/trainer.hpp"

namespace skinseg {

/// Flat key-value TOML subset: `key = value` lines, `#` comments, scalar
/// values (int, float, bool, "string") and bracketed integer triples.
class FlatConfig {
 public:
  FlatConfig() = default;
  static FlatConfig parse_file(const std::filesystem::path& path);
  static FlatConfig parse_string(const std::string& text);

  bool has(const std::string& key) const { return raw_.count(key) > 0; }
  std::string get_string(const std::string& key, const std::string& dflt) const;
  long long get_int(const std::string& key, long long dflt) const;
  double get_double(const std::string& key, double dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;
  std::array<int, 3> get_int3(const std::string& key, const std::array<int, 3>& dflt) const;

 private:
  std::map<std::string, std::string> raw_;
};

/// Everything a command needs, assembled from the config file with defaults;
/// CLI flags override individual keys afterwards.
struct AppConfig {
  std::filesystem::path data_root;
  std::filesystem::path out_dir = "runs/default";
  std::filesystem::path parts_dir;  // empty: use <root>/<split>/parts
  std::uint64_t seed = 7;
  int epochs = 30;
  ModelConfig model;
  LossConfig loss;
  TrainSchedule train;
  RelabelSchedule relabel;
};

AppConfig load_app_config(const std::filesystem::path& config_path);
AppConfig app_config_from(const FlatConfig& cfg);

}  // namespace skinseg
