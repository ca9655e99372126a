#include "diffbench/harness.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace diffbench {

const char* experiment_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Figure1: return "figure1";
    case ExperimentKind::OrderStudy: return "order_study";
    case ExperimentKind::SelfTest: return "self_test";
  }
  return "?";
}

namespace {

ExperimentKind experiment_from_name(const std::string& s) {
  if (s == "figure1") return ExperimentKind::Figure1;
  if (s == "order_study" || s == "order") return ExperimentKind::OrderStudy;
  if (s == "self_test" || s == "selftest") return ExperimentKind::SelfTest;
  throw std::invalid_argument("config: unknown experiment '" + s + "'");
}

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\''))) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

double parse_number(const std::string& raw, const std::string& key) {
  const std::string s = trim(raw);
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key +
                                "': not a number: '" + s + "'");
  }
}

std::uint64_t parse_u64(const std::string& raw, const std::string& key) {
  const std::string s = trim(raw);
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw std::invalid_argument("config: key '" + key +
                                "': not an unsigned integer: '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& raw, const std::string& key) {
  const std::string s = trim(raw);
  if (s == "true") return true;
  if (s == "false") return false;
  throw std::invalid_argument("config: key '" + key + "': expected true/false");
}

std::vector<std::string> split_list(const std::string& raw,
                                    const std::string& key) {
  std::string s = trim(raw);
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') {
      throw std::invalid_argument("config: key '" + key + "': unclosed '['");
    }
    s = s.substr(1, s.size() - 2);
  }
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(unquote(item));
  }
  return out;
}

std::vector<double> parse_number_list(const std::string& raw,
                                      const std::string& key) {
  std::vector<double> out;
  for (const auto& item : split_list(raw, key)) {
    out.push_back(parse_number(item, key));
  }
  return out;
}

std::vector<SchemeKind> parse_scheme_list(const std::string& raw,
                                          const std::string& key) {
  std::vector<SchemeKind> out;
  for (const auto& item : split_list(raw, key)) {
    out.push_back(scheme_from_name(item));
  }
  return out;
}

void validate(const ExperimentConfig& cfg) {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("config: " + msg);
  };
  if (cfg.lambda_list.empty()) fail("lambda_list must be non-empty");
  for (double lam : cfg.lambda_list) {
    if (!(lam > 0.0)) fail("lambda_list entries must be positive");
  }
  if (cfg.d < 1) fail("d must be >= 1");
  if (cfg.n_data < 1) fail("n_data must be >= 1");
  if (!(cfg.sigma2 > 0.0)) fail("sigma2 must be positive");
  if (!(cfg.T > 0.0)) fail("T must be positive");
  if (cfg.h_list.empty()) fail("h_list must be non-empty");
  for (double h : cfg.h_list) {
    if (!(h > 0.0)) fail("h_list entries must be positive");
  }
  for (size_t i = 1; i < cfg.h_list.size(); ++i) {
    if (!(cfg.h_list[i] < cfg.h_list[i - 1])) {
      fail("h_list must be strictly decreasing");
    }
  }
  if (!(cfg.T > cfg.h_list.front())) fail("T must exceed max(h_list)");
  if (cfg.schemes.empty()) fail("schemes must be non-empty");
  if (cfg.n_traj < 1) fail("n_traj must be >= 1");
  if (cfg.n_reference < 1) fail("n_reference must be >= 1");
  if (cfg.mc_particles < 100) fail("mc_particles must be >= 100");
  if (cfg.corruption.eps_sc < 0 || cfg.corruption.eps_L < 0 ||
      cfg.corruption.eps_M < 0) {
    fail("corruption radii must be non-negative");
  }
  if (cfg.out_dir.empty()) fail("out_dir must be non-empty");
}

}  // namespace

ExperimentConfig parse_config(const std::string& path,
                              const CliOverrides& overrides) {
  ExperimentConfig cfg;
  std::set<std::string> seen;

  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) {
      throw std::invalid_argument("config: cannot open file '" + path + "'");
    }
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      // strip comments outside quotes
      bool in_quote = false;
      for (size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_quote = !in_quote;
        if (line[i] == '#' && !in_quote) {
          line = line.substr(0, i);
          break;
        }
      }
      line = trim(line);
      if (line.empty()) continue;
      const size_t eq = line.find('=');
      if (eq == std::string::npos) {
        throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                    ": expected key = value");
      }
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty() || value.empty()) {
        throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                    ": empty key or value");
      }
      if (!seen.insert(key).second) {
        throw std::invalid_argument("config: duplicate key '" + key + "'");
      }

      if (key == "experiment") {
        cfg.experiment = experiment_from_name(unquote(value));
      } else if (key == "lambda_list") {
        cfg.lambda_list = parse_number_list(value, key);
      } else if (key == "d") {
        cfg.d = static_cast<int>(parse_number(value, key));
      } else if (key == "n_data") {
        cfg.n_data = static_cast<int>(parse_number(value, key));
      } else if (key == "sigma2") {
        cfg.sigma2 = parse_number(value, key);
      } else if (key == "T") {
        cfg.T = parse_number(value, key);
      } else if (key == "h_list") {
        cfg.h_list = parse_number_list(value, key);
      } else if (key == "schemes") {
        cfg.schemes = parse_scheme_list(value, key);
      } else if (key == "n_traj") {
        cfg.n_traj = static_cast<int>(parse_number(value, key));
      } else if (key == "n_reference") {
        cfg.n_reference = static_cast<int>(parse_number(value, key));
      } else if (key == "mc_particles") {
        cfg.mc_particles = static_cast<int>(parse_number(value, key));
      } else if (key == "corruption.eps_sc") {
        cfg.corruption.eps_sc = parse_number(value, key);
      } else if (key == "corruption.eps_L") {
        cfg.corruption.eps_L = parse_number(value, key);
      } else if (key == "corruption.eps_M") {
        cfg.corruption.eps_M = parse_number(value, key);
      } else if (key == "master_seed") {
        cfg.master_seed = parse_u64(value, key);
      } else if (key == "out_dir") {
        cfg.out_dir = unquote(value);
      } else if (key == "record_wall_ms") {
        cfg.record_wall_ms = parse_bool(value, key);
      } else if (key == "threads") {
        cfg.threads = static_cast<int>(parse_number(value, key));
      } else {
        throw std::invalid_argument("config: unknown key '" + key + "'");
      }
    }
  }

  if (overrides.experiment) cfg.experiment = *overrides.experiment;
  if (overrides.seed) cfg.master_seed = *overrides.seed;
  if (overrides.out_dir) cfg.out_dir = *overrides.out_dir;
  if (overrides.h_list) {
    cfg.h_list = *overrides.h_list;
    seen.insert("h_list");
  }
  if (overrides.lambda_list) {
    cfg.lambda_list = *overrides.lambda_list;
    seen.insert("lambda_list");
  }
  if (overrides.schemes) {
    cfg.schemes = *overrides.schemes;
    seen.insert("schemes");
  }
  if (overrides.n_traj) {
    cfg.n_traj = *overrides.n_traj;
    seen.insert("n_traj");
  }

  // Experiment-dependent desk-scale defaults for anything not set by the
  // user: the order study needs far more trajectories for its REM/REI cells.
  if (cfg.experiment == ExperimentKind::OrderStudy) {
    if (!seen.count("n_traj")) cfg.n_traj = 100000;
    if (!seen.count("n_reference")) cfg.n_reference = 200000;
  }

  validate(cfg);
  return cfg;
}

}  // namespace diffbench
