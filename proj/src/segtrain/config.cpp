#include "cdpcl/segtrain/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "cdpcl/errors.hpp"

namespace cdpcl::segtrain {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_unsigned(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(out)) {
    throw ConfigError("'" + key + "' expects a finite number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "data_dir") cfg.data_dir = value;
  else if (key == "out_dir") cfg.out_dir = value;
  else if (key == "train_domain") cfg.train_domain = value;
  else if (key == "seed") cfg.seed = parse_unsigned<std::uint64_t>(key, value);
  else if (key == "classes") cfg.classes = parse_unsigned<std::size_t>(key, value);
  else if (key == "feat_dim") cfg.feat_dim = parse_unsigned<std::size_t>(key, value);
  else if (key == "batch") cfg.batch = parse_unsigned<std::size_t>(key, value);
  else if (key == "iters") cfg.iters = parse_unsigned<std::size_t>(key, value);
  else if (key == "base_lr") cfg.base_lr = parse_double(key, value);
  else if (key == "momentum") cfg.momentum = parse_double(key, value);
  else if (key == "lr_power") cfg.lr_power = parse_double(key, value);
  else if (key == "m_p") cfg.m_p = parse_double(key, value);
  else if (key == "m_a") cfg.m_a = parse_double(key, value);
  else if (key == "m_u") cfg.m_u = parse_double(key, value);
  else if (key == "tau") cfg.loss.tau = parse_double(key, value);
  else if (key == "tau_u") cfg.loss.tau_u = parse_double(key, value);
  else if (key == "tau_h") cfg.loss.tau_h = parse_double(key, value);
  else if (key == "lambda1") cfg.loss.lambda1 = parse_double(key, value);
  else if (key == "lambda2") cfg.loss.lambda2 = parse_double(key, value);
  else if (key == "ablation") cfg.ablation = losses::parse_ablation(value);
  else if (key == "include_positive") cfg.loss.include_positive_in_denominator = parse_bool(key, value);
  else if (key == "normalize_features") cfg.loss.normalize_features = parse_bool(key, value);
  else if (key == "checkpoint_every") cfg.checkpoint_every = parse_unsigned<std::size_t>(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

TrainConfig parse_config(const std::string& text, const std::string& source) {
  TrainConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = source + ":" + std::to_string(lineno) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.string());
}

void TrainConfig::validate() const {
  if (data_dir.empty()) throw ConfigError("data_dir is required");
  if (out_dir.empty()) throw ConfigError("out_dir is required");
  if (classes < 2 || classes > 254) throw ConfigError("classes must be in [2, 254]");
  if (feat_dim == 0) throw ConfigError("feat_dim must be positive");
  if (batch == 0) throw ConfigError("batch must be positive");
  if (iters == 0) throw ConfigError("iters must be positive");
  if (!(base_lr > 0.0)) throw ConfigError("base_lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(lr_power > 0.0)) throw ConfigError("lr_power must be positive");
  for (const auto& [name, m] : {std::pair{"m_p", m_p}, {"m_a", m_a}, {"m_u", m_u}}) {
    if (!(m >= 0.0 && m < 1.0)) throw ConfigError(std::string(name) + " must be in [0, 1)");
  }
  loss.validate();
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "data_dir = " << data_dir.string() << "\n"
     << "out_dir = " << out_dir.string() << "\n"
     << "train_domain = " << train_domain << "\n"
     << "seed = " << seed << "\n"
     << "classes = " << classes << "\n"
     << "feat_dim = " << feat_dim << "\n"
     << "batch = " << batch << "\n"
     << "iters = " << iters << "\n"
     << "base_lr = " << fmt(base_lr) << "\n"
     << "momentum = " << fmt(momentum) << "\n"
     << "lr_power = " << fmt(lr_power) << "\n"
     << "m_p = " << fmt(m_p) << "\n"
     << "m_a = " << fmt(m_a) << "\n"
     << "m_u = " << fmt(m_u) << "\n"
     << "tau = " << fmt(loss.tau) << "\n"
     << "tau_u = " << fmt(loss.tau_u) << "\n"
     << "tau_h = " << fmt(loss.tau_h) << "\n"
     << "lambda1 = " << fmt(loss.lambda1) << "\n"
     << "lambda2 = " << fmt(loss.lambda2) << "\n"
     << "ablation = " << losses::to_string(ablation) << "\n"
     << "include_positive = " << (loss.include_positive_in_denominator ? "true" : "false") << "\n"
     << "normalize_features = " << (loss.normalize_features ? "true" : "false") << "\n"
     << "checkpoint_every = " << checkpoint_every << "\n";
  return os.str();
}

}  // namespace cdpcl::segtrain
