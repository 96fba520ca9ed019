#include "skinseg/config.hpp"

#include <fstream>
#include <sstream>

namespace skinseg {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

FlatConfig FlatConfig::parse_string(const std::string& text) {
  FlatConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");
    }
    cfg.raw_[key] = value;
  }
  return cfg;
}

FlatConfig FlatConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_string(ss.str());
}

std::string FlatConfig::get_string(const std::string& key, const std::string& dflt) const {
  const auto it = raw_.find(key);
  if (it == raw_.end()) return dflt;
  std::string v = it->second;
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
  return v;
}

long long FlatConfig::get_int(const std::string& key, long long dflt) const {
  const auto it = raw_.find(key);
  if (it == raw_.end()) return dflt;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not an integer: " + it->second);
  }
}

double FlatConfig::get_double(const std::string& key, double dflt) const {
  const auto it = raw_.find(key);
  if (it == raw_.end()) return dflt;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not a number: " + it->second);
  }
}

bool FlatConfig::get_bool(const std::string& key, bool dflt) const {
  const auto it = raw_.find(key);
  if (it == raw_.end()) return dflt;
  if (it->second == "true") return true;
  if (it->second == "false") return false;
  throw ConfigError("config key '" + key + "' is not a bool: " + it->second);
}

std::array<int, 3> FlatConfig::get_int3(const std::string& key,
                                        const std::array<int, 3>& dflt) const {
  const auto it = raw_.find(key);
  if (it == raw_.end()) return dflt;
  std::string v = it->second;
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') {
    throw ConfigError("config key '" + key + "' must be a [a, b, c] triple");
  }
  v = v.substr(1, v.size() - 2);
  for (auto& ch : v) {
    if (ch == ',') ch = ' ';
  }
  std::istringstream is(v);
  std::array<int, 3> out{};
  if (!(is >> out[0] >> out[1] >> out[2])) {
    throw ConfigError("config key '" + key + "' must hold three integers");
  }
  return out;
}

AppConfig app_config_from(const FlatConfig& cfg) {
  AppConfig app;
  app.data_root = cfg.get_string("data_root", "");
  app.out_dir = cfg.get_string("out_dir", app.out_dir.string());
  app.parts_dir = cfg.get_string("parts_dir", "");
  app.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(app.seed)));
  app.epochs = static_cast<int>(cfg.get_int("epochs", app.epochs));

  app.model.input_size = static_cast<int>(cfg.get_int("input_size", app.model.input_size));
  app.model.base_filters = static_cast<int>(cfg.get_int("base_filters", app.model.base_filters));
  app.model.interaction_filters =
      cfg.get_int3("interaction_filters", app.model.interaction_filters);
  app.model.expansion_factor =
      static_cast<int>(cfg.get_int("expansion_factor", app.model.expansion_factor));
  app.model.decoder_filters = cfg.get_int3("decoder_filters", app.model.decoder_filters);
  app.model.reduction_ratio =
      static_cast<int>(cfg.get_int("reduction_ratio", app.model.reduction_ratio));
  app.model.seed = app.seed;

  app.loss.focal_gamma = cfg.get_double("focal_gamma", app.loss.focal_gamma);
  app.loss.focal_alpha = cfg.get_double("focal_alpha", app.loss.focal_alpha);
  app.loss.dice_smooth = cfg.get_double("dice_smooth", app.loss.dice_smooth);
  app.loss.dice_weight = cfg.get_double("dice_weight", app.loss.dice_weight);
  app.loss.focal_weight = cfg.get_double("focal_weight", app.loss.focal_weight);

  app.train.lr0 = cfg.get_double("lr0", app.train.lr0);
  app.train.decay = cfg.get_double("decay", app.train.decay);
  app.train.batch_size = static_cast<int>(cfg.get_int("batch_size", app.train.batch_size));
  app.train.augment = cfg.get_bool("augment", app.train.augment);

  app.relabel.warmup_rounds =
      static_cast<int>(cfg.get_int("relabel_warmup_rounds", app.relabel.warmup_rounds));
  app.relabel.t0 = cfg.get_double("relabel_t0", app.relabel.t0);
  app.relabel.t_step = cfg.get_double("relabel_t_step", app.relabel.t_step);
  app.relabel.epochs_per_round =
      static_cast<int>(cfg.get_int("relabel_epochs_per_round", app.relabel.epochs_per_round));
  app.relabel.max_rounds =
      static_cast<int>(cfg.get_int("relabel_max_rounds", app.relabel.max_rounds));
  app.relabel.final_epochs =
      static_cast<int>(cfg.get_int("relabel_final_epochs", app.relabel.final_epochs));
  const std::string monitor = cfg.get_string("relabel_monitor", "f1");
  if (monitor == "f1") {
    app.relabel.monitor = RelabelSchedule::Monitor::f1;
  } else if (monitor == "dsc") {
    app.relabel.monitor = RelabelSchedule::Monitor::dsc;
  } else {
    throw ConfigError("relabel_monitor must be 'f1' or 'dsc'");
  }

  if (app.train.lr0 <= 0) throw ConfigError("lr0 must be > 0");
  if (app.train.decay <= 0 || app.train.decay >= 1) throw ConfigError("decay must be in (0,1)");
  if (app.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (app.train.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  app.loss.validate();
  return app;
}

AppConfig load_app_config(const std::filesystem::path& config_path) {
  if (config_path.empty()) return app_config_from(FlatConfig{});
  return app_config_from(FlatConfig::parse_file(config_path));
}

}  // namespace skinseg
