// Command-line front end: one subcommand per run mode plus a bound calculator.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "amtl/env.hpp"
#include "amtl/error.hpp"
#include "amtl/eval.hpp"
#include "amtl/experiment.hpp"
#include "amtl/sampler.hpp"
#include "amtl/solver.hpp"

using nlohmann::json;

namespace {

// Keys whose default is null but which take a number when given.
const std::set<std::string> kOptionalNumbers = {"beta",        "active_floor", "sigma_lower", "stop_at_excess_risk",
                                                "known_floor", "pinv_rcond"};

std::vector<std::string> split_list(const std::string &s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty())
      out.push_back(item);
  return out;
}

json parse_number(const std::string &key, const std::string &text, bool integral) {
  try {
    std::size_t used = 0;
    json v = integral ? json(std::stoll(text, &used)) : json(std::stod(text, &used));
    if (used != text.size())
      throw std::invalid_argument(text);
    return v;
  } catch (const std::exception &) {
    throw amtl::ConfigError("--" + key + ": expected a number, got '" + text + "'");
  }
}

// Converts a flag string into the JSON type the configuration key expects.
json flag_value(const std::string &key, const std::string &text, const json &defaults) {
  const json &d = defaults.at(key);
  if (kOptionalNumbers.contains(key))
    return text == "none" ? json(nullptr) : parse_number(key, text, false);
  if (d.is_boolean()) {
    if (text == "true" || text == "1")
      return true;
    if (text == "false" || text == "0")
      return false;
    throw amtl::ConfigError("--" + key + ": expected true or false, got '" + text + "'");
  }
  if (d.is_number_integer() || d.is_number_unsigned())
    return parse_number(key, text, true);
  if (d.is_number_float())
    return parse_number(key, text, false);
  if (d.is_array()) {
    json arr = json::array();
    for (const auto &item : split_list(text)) {
      if (key == "targets")
        arr.push_back(item);
      else
        arr.push_back(parse_number(key, item, true));
    }
    return arr;
  }
  return text;
}

std::string dashed(std::string key) {
  for (char &c : key)
    if (c == '_')
      c = '-';
  return key;
}

struct RunCommand {
  std::string config_path;
  bool print_config = false;
  std::map<std::string, std::string> flags;
};

void add_config_flags(CLI::App *cmd, RunCommand &rc) {
  cmd->add_option("--config", rc.config_path, "JSON configuration file; flags override its values");
  cmd->add_flag("--print-config", rc.print_config, "print the resolved configuration and exit");
  const json defaults = amtl::config_to_json(amtl::ExperimentConfig{});
  for (const auto &item : defaults.items()) {
    if (item.key() == "mode")
      continue;
    std::string &slot = rc.flags[item.key()];
    cmd->add_option("--" + dashed(item.key()), slot, "configuration key " + item.key());
  }
}

int execute(const std::string &mode, const RunCommand &rc) {
  try {
    json j = json::object();
    if (!rc.config_path.empty()) {
      std::ifstream in(rc.config_path);
      if (!in)
        throw amtl::IoError("cannot open config " + rc.config_path);
      try {
        in >> j;
      } catch (const json::parse_error &e) {
        throw amtl::ConfigError(rc.config_path + ": " + e.what());
      }
      if (!j.is_object())
        throw amtl::ConfigError(rc.config_path + ": configuration must be a JSON object");
    }
    j["mode"] = mode;
    const json defaults = amtl::config_to_json(amtl::ExperimentConfig{});
    for (const auto &[key, text] : rc.flags)
      if (!text.empty())
        j[key] = flag_value(key, text, defaults);

    amtl::ExperimentConfig config = amtl::config_from_json(j);
    amtl::apply_environment_overrides(config);
    config.validate();
    if (rc.print_config) {
      std::cout << amtl::config_to_json(config).dump(2) << "\n";
      return 0;
    }
    return amtl::run_and_write(config, std::cerr);
  } catch (const amtl::ConfigError &e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const amtl::IoError &e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception &e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
}

struct BoundsArgs {
  int d = 30, K = 5, M = 20;
  double sigma = 0.5, delta = 0.1, epsilon = 0.1, N_total = 10000;
  std::string environment = "sparse";
  std::string nu;
  std::uint64_t seed = 0;
  double head_scale = 1.0;
};

int bounds(const BoundsArgs &a) {
  try {
    amtl::RelevanceVector nu;
    int M = a.M;
    if (!a.nu.empty()) {
      const auto items = split_list(a.nu);
      amtl::Vector v(static_cast<amtl::Index>(items.size()));
      for (std::size_t i = 0; i < items.size(); ++i)
        v(static_cast<amtl::Index>(i)) = parse_number("nu", items[i], false).get<double>();
      nu = amtl::RelevanceVector(v, v.squaredNorm() == 0.0);
      M = static_cast<int>(items.size());
    } else {
      const auto dims = amtl::ProblemDims::make(a.d, a.K, a.M);
      const amtl::GroundTruth truth = a.environment == "sparse"
                                          ? amtl::make_sparse_example(dims, a.sigma, a.seed)
                                          : amtl::make_random_environment(dims, a.sigma, a.head_scale, a.seed);
      nu = amtl::min_norm_combination(truth.W_star(), truth.w_target());
    }
    const amtl::SparsityReport sp = amtl::s_star(nu, a.N_total, M);
    const double known = amtl::source_bound_known(a.K, a.d, M, a.delta, a.sigma, sp.s_star, nu.norm2(), a.epsilon);
    const double uniform = amtl::source_bound_uniform(a.K, a.d, M, a.delta, a.sigma, nu.norm2(), a.epsilon);
    json out = {{"M", M},
                {"nu_norm2", nu.norm2()},
                {"s_star", sp.s_star},
                {"argmin_gamma", sp.argmin_gamma},
                {"support_size_at_argmin", sp.support_size_at_argmin},
                {"degenerate", sp.degenerate},
                {"known_bound", known},
                {"uniform_bound", uniform},
                {"ratio_uniform_over_known", known > 0 ? json(uniform / known) : json(nullptr)}};
    std::cout << out.dump(2) << "\n";
    return 0;
  } catch (const amtl::ConfigError &e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception &e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"active multi-task representation learning harness"};
  app.require_subcommand(1);
  app.set_version_flag("--version", AMTL_VERSION);

  const std::vector<std::pair<std::string, std::string>> modes = {{"run-known", "known"},
                                                                   {"run-active", "active"},
                                                                   {"run-uniform", "uniform"},
                                                                   {"sweep", "sweep"},
                                                                   {"real-suite", "real-suite"}};
  std::map<std::string, RunCommand> commands;
  std::map<std::string, CLI::App *> subs;
  for (const auto &[name, mode] : modes) {
    subs[name] = app.add_subcommand(name, "run in " + mode + " mode");
    add_config_flags(subs[name], commands[name]);
  }

  BoundsArgs b;
  CLI::App *bcmd = app.add_subcommand("bounds", "print source-sample bound values and s*");
  bcmd->add_option("--d", b.d);
  bcmd->add_option("--K", b.K);
  bcmd->add_option("--M", b.M);
  bcmd->add_option("--sigma", b.sigma);
  bcmd->add_option("--delta", b.delta);
  bcmd->add_option("--epsilon", b.epsilon, "target excess-risk accuracy");
  bcmd->add_option("--N-total", b.N_total, "budget used for s*");
  bcmd->add_option("--environment", b.environment)->check(CLI::IsMember({"sparse", "random"}));
  bcmd->add_option("--head-scale", b.head_scale);
  bcmd->add_option("--seed", b.seed);
  bcmd->add_option("--nu", b.nu, "comma-separated relevance vector; overrides the environment");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (bcmd->parsed())
    return bounds(b);
  for (const auto &[name, mode] : modes)
    if (subs[name]->parsed())
      return execute(mode, commands[name]);
  return 1;
}
