// dilatron: universal Poisson dilations of finite-state Markov semigroups.
//
//   dilatron uniformize    --input R.json
//   dilatron decompose     --input P.csv --format csv
//   dilatron dilate        --input R.json [--dense]
//   dilatron simulate      --input R.json --initial 1 --times 0.5,1 --paths 100000
//   dilatron verify        --input R.json --seed 7 --paths 100000
//   dilatron quantum-check --input R.json

#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "dilatron/commands.hpp"

namespace {

void add_common(CLI::App* sub, dilatron::cli::RunConfig& cfg) {
  static const std::map<std::string, dilatron::io::MatrixFormat> formats{{"json", dilatron::io::MatrixFormat::Json},
                                                                        {"csv", dilatron::io::MatrixFormat::Csv}};
  sub->add_option("--input,-i", cfg.input, "matrix file (JSON {\"n\",\"rows\"} or CSV)")->required();
  sub->add_option("--format", cfg.format, "input format")->transform(CLI::CheckedTransformer(formats, CLI::ignore_case));
  sub->add_option("--seed", cfg.seed, "RNG seed");
  sub->add_option("--paths", cfg.paths, "Monte Carlo paths")->check(CLI::PositiveNumber);
  sub->add_option("--times", cfg.times, "evaluation times")->delimiter(',');
  sub->add_option("--tol-alg", cfg.tol_alg, "tolerance for algebraic identities");
  sub->add_option("--tol-exp", cfg.tol_exp, "tolerance for identities between exponentials");
  sub->add_option("--alpha", cfg.alpha, "chi-square significance level");
  sub->add_option("--out,-o", cfg.out, "write the report here instead of stdout");
}

}  // namespace

int main(int argc, char** argv) {
  using dilatron::cli::Command;
  dilatron::cli::RunConfig cfg;

  CLI::App app{"Universal Poisson dilations of finite-state Markov semigroups"};
  app.require_subcommand(1);

  const std::map<std::string, Command> commands{{"uniformize", Command::Uniformize}, {"decompose", Command::Decompose},
                                                {"dilate", Command::Dilate},         {"simulate", Command::Simulate},
                                                {"verify", Command::Verify},         {"quantum-check", Command::QuantumCheck}};
  std::map<std::string, CLI::App*> subs;
  subs["uniformize"] = app.add_subcommand("uniformize", "lambda and P with R = lambda (P - I)");
  subs["decompose"] = app.add_subcommand("decompose", "deterministic-map decomposition of a stochastic matrix");
  subs["dilate"] = app.add_subcommand("dilate", "universal Poisson dilation of a rate matrix");
  subs["simulate"] = app.add_subcommand("simulate", "simulate the dilated chain");
  subs["verify"] = app.add_subcommand("verify", "run the full verification suite");
  subs["quantum-check"] = app.add_subcommand("quantum-check", "run the quantum extension checks");
  for (auto& [name, sub] : subs) add_common(sub, cfg);

  subs["decompose"]->add_flag("--from-rate", cfg.from_rate, "input is a rate matrix; decompose its uniformized P");
  subs["dilate"]->add_flag("--dense", cfg.dense, "require a dense coupling table (n <= 4)");
  subs["simulate"]->add_option("--initial", cfg.initial, "initial state (1-based)");
  subs["simulate"]->add_flag("--trajectory", cfg.trajectory, "emit one trajectory up to max(--times)");
  subs["verify"]->add_flag("--inject-corrupt-coupling", cfg.corrupt_coupling, "test hook: break the bijectivity of phi");
  subs["quantum-check"]->add_flag("--inject-corrupt-coupling", cfg.corrupt_coupling, "test hook: break the bijectivity of phi");

  CLI11_PARSE(app, argc, argv);

  for (auto& [name, sub] : subs) {
    if (sub->parsed()) cfg.command = commands.at(name);
  }

  const auto result = dilatron::cli::run(cfg);
  const std::string text = result.document.dump(2) + "\n";
  if (cfg.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(cfg.out, std::ios::binary);
    if (!f) {
      std::cerr << "cannot write " << cfg.out << "\n";
      return dilatron::cli::kExitError;
    }
    f << text;
  }
  if (result.document.contains("error")) std::cerr << result.document["error"]["message"].get<std::string>() << "\n";
  return result.exit_code;
}
