#include <iostream>

#include "CLI11.hpp"
#include "qtraj/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"qtraj: trajectory representation of stationary quantum mechanics"};
  app.require_subcommand(1);
  qtraj::cli::Options opt;

  auto add = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--scenario", opt.scenario, "scenario JSON file")->required();
    sub->add_option("--out", opt.out, "output directory");
    sub->add_flag("--svg", opt.svg, "also write an SVG plot");
    sub->add_option("--suite", opt.suite, "qshje, floyd, spin or all");
    sub->callback([&opt, name] { opt.command = name; });
    return sub;
  };
  add("solve", "solve one action slice");
  add("trajectory", "Floydian time along the slice");
  add("verify", "run the invariant suites");
  add("spin", "3-D scene export and velocity verdict");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return qtraj::cli::kInput;
  }
  return qtraj::cli::run(opt, std::cout, std::cerr);
}
