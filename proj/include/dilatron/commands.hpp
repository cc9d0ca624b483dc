#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dilatron/dilation.hpp"
#include "dilatron/error.hpp"
#include "dilatron/io.hpp"
#include "dilatron/markov_core.hpp"
#include "dilatron/quantum.hpp"
#include "dilatron/simulator.hpp"
#include "dilatron/verification.hpp"

// Subcommand implementations for the dilatron CLI. Each returns the JSON
// document to emit and the process exit code, so the commands can be tested
// without spawning a process.

namespace dilatron::cli {

using json = nlohmann::json;

enum class Command { Uniformize, Decompose, Dilate, Simulate, Verify, QuantumCheck };

/// Exit codes: 0 all checks pass, 1 some check failed, 2 bad input or usage.
inline constexpr int kExitPass = 0;
inline constexpr int kExitFail = 1;
inline constexpr int kExitError = 2;

struct RunConfig {
  Command command = Command::Verify;
  std::string input;
  io::MatrixFormat format = io::MatrixFormat::Json;
  std::uint64_t seed = 1;
  std::uint64_t paths = 100'000;
  std::vector<double> times = {0.5, 1.0, 2.0};
  double tol_alg = 1e-12;
  double tol_exp = 1e-8;
  double alpha = stats::kChiSquareAlpha;
  std::string out;
  /// 1-based initial state for `simulate`.
  std::uint32_t initial = 1;
  bool dense = false;
  bool trajectory = false;
  bool from_rate = false;
  bool corrupt_coupling = false;

  void validate() const {
    if (paths < 1) throw Error(ErrorCode::OutOfRange, "--paths must be >= 1");
    for (double t : times) {
      if (!(t >= 0.0)) throw Error(ErrorCode::NegativeTime, "--times must be >= 0");
    }
    if (times.empty()) throw Error(ErrorCode::OutOfRange, "--times must not be empty");
  }
};

struct CommandResult {
  json document;
  int exit_code = kExitPass;
};

inline const char* command_name(Command c) {
  switch (c) {
    case Command::Uniformize: return "uniformize";
    case Command::Decompose: return "decompose";
    case Command::Dilate: return "dilate";
    case Command::Simulate: return "simulate";
    case Command::Verify: return "verify";
    case Command::QuantumCheck: return "quantum-check";
  }
  return "?";
}

inline json envelope(const RunConfig& cfg) {
  return {{"schema", verify::kSchemaVersion}, {"command", command_name(cfg.command)}};
}

inline verify::Options to_options(const RunConfig& cfg) {
  verify::Options o;
  o.seed = cfg.seed;
  o.paths = cfg.paths;
  o.times = cfg.times;
  o.tol_alg = cfg.tol_alg;
  o.tol_exp = cfg.tol_exp;
  o.alpha = cfg.alpha;
  o.corrupt_coupling = cfg.corrupt_coupling;
  return o;
}

inline CommandResult cmd_uniformize(const RunConfig& cfg, const Eigen::MatrixXd& raw) {
  const auto r = RateMatrix::validate(raw);
  const auto u = uniformize(r);
  const auto n = static_cast<Eigen::Index>(r.size());
  const double residual = (u.rate * (u.jump_matrix.matrix() - Eigen::MatrixXd::Identity(n, n)) - r.matrix()).cwiseAbs().maxCoeff();
  json doc = envelope(cfg);
  doc["lambda"] = u.rate;
  doc["P"] = io::matrix_json(u.jump_matrix.matrix());
  doc["residual"] = residual;
  return {std::move(doc), kExitPass};
}

inline CommandResult cmd_decompose(const RunConfig& cfg, const Eigen::MatrixXd& raw) {
  json doc = envelope(cfg);
  std::optional<StochasticMatrix> p;
  if (cfg.from_rate) {
    const auto u = uniformize(RateMatrix::validate(raw));
    doc["lambda"] = u.rate;
    p = u.jump_matrix;
  } else {
    p = StochasticMatrix::validate(raw);
  }
  const auto dec = decompose(*p);
  const double residual = (recompose(dec).matrix() - p->matrix()).cwiseAbs().maxCoeff();
  doc.update(io::decomposition_json(dec));
  doc["residual"] = residual;
  doc["weight_sum"] = dec.total_weight();
  return {std::move(doc), kExitPass};
}

inline CommandResult cmd_dilate(const RunConfig& cfg, const Eigen::MatrixXd& raw) {
  const auto r = RateMatrix::validate(raw);
  const auto d = build_universal(r, cfg.dense ? CouplingMode::Dense : CouplingMode::Auto);
  json doc = envelope(cfg);
  doc.update(io::dilation_json(d));
  doc["support_size"] = d.law.support().size();
  return {std::move(doc), kExitPass};
}

inline CommandResult cmd_simulate(const RunConfig& cfg, const Eigen::MatrixXd& raw) {
  const auto r = RateMatrix::validate(raw);
  if (cfg.initial < 1 || cfg.initial > r.size()) throw Error(ErrorCode::OutOfRange, "--initial must be in 1..n");
  const auto d = build_universal(r);
  const auto k = static_cast<State>(cfg.initial - 1);
  json doc = envelope(cfg);
  doc["seed"] = cfg.seed;
  doc["rng"] = RandomStream::kGeneratorName;
  if (cfg.trajectory) {
    const double horizon = *std::max_element(cfg.times.begin(), cfg.times.end());
    if (!(horizon > 0.0)) throw Error(ErrorCode::NegativeTime, "trajectory horizon must be positive");
    doc["trajectory"] = io::trajectory_json(simulate_path(d, k, Time::from_seconds(horizon), cfg.seed));
    return {std::move(doc), kExitPass};
  }
  json reports = json::array();
  bool pass = true;
  for (double t : cfg.times) {
    const auto rep = semigroup_report(d, r, k, t, cfg.paths, cfg.seed, stats::kStandardErrors, cfg.alpha);
    pass = pass && rep.pass;
    reports.push_back(io::semigroup_report_json(rep));
  }
  doc["reports"] = std::move(reports);
  doc["verdict"] = pass ? "pass" : "fail";
  return {std::move(doc), pass ? kExitPass : kExitFail};
}

inline CommandResult cmd_verify(const RunConfig& cfg, const Eigen::MatrixXd& raw) {
  const auto r = RateMatrix::validate(raw);
  const auto opt = to_options(cfg);
  const auto rep = verify::run_all(r, opt);
  return {verify::report_json(rep, opt, command_name(cfg.command)), rep.all_pass() ? kExitPass : kExitFail};
}

inline CommandResult cmd_quantum_check(const RunConfig& cfg, const Eigen::MatrixXd& raw) {
  const auto r = RateMatrix::validate(raw);
  const auto opt = to_options(cfg);
  const auto rep = verify::run_quantum(r, opt);
  json doc = verify::report_json(rep, opt, command_name(cfg.command));
  if (r.size() <= quantum::kMaxDenseUnitaryStates) {
    const auto [lambda, p] = uniformize(r);
    doc["lindblad"] = io::superoperator_json(quantum::lindblad_rext(decompose(p), lambda));
  }
  return {std::move(doc), rep.all_pass() ? kExitPass : kExitFail};
}

/// Runs one command, turning library errors into an error document.
inline CommandResult run(const RunConfig& cfg) {
  try {
    cfg.validate();
    const Eigen::MatrixXd raw = io::read_matrix(cfg.input, cfg.format);
    switch (cfg.command) {
      case Command::Uniformize: return cmd_uniformize(cfg, raw);
      case Command::Decompose: return cmd_decompose(cfg, raw);
      case Command::Dilate: return cmd_dilate(cfg, raw);
      case Command::Simulate: return cmd_simulate(cfg, raw);
      case Command::Verify: return cmd_verify(cfg, raw);
      case Command::QuantumCheck: return cmd_quantum_check(cfg, raw);
    }
    throw Error(ErrorCode::ParseError, "unknown command");
  } catch (const Error& e) {
    json doc = envelope(cfg);
    doc["error"] = {{"code", std::string(to_string(e.code()))}, {"message", e.what()}};
    return {std::move(doc), kExitError};
  }
}

}  // namespace dilatron::cli
