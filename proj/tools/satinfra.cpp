// Command-line driver for the pipeline stages.

#include <omp.h>

#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>

#include "satinfra/pipeline.hpp"

namespace pl = satinfra::pipeline;

namespace {

int fail(const pl::PipelineError& e) {
  std::cerr << e.to_json() << std::endl;
  return e.kind() == "config" ? 2 : 1;
}

void ok(const std::string& command, const pl::Config* c) {
  nlohmann::ordered_json j;
  j["status"] = "ok";
  j["command"] = command;
  if (c) {
    j["config"] = pl::config_hash(*c);
    j["seed"] = c->seed;
    j["output"] = c->out().string();
  }
  std::cout << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"satinfra: satellite infrastructure pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  int jobs = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "pipeline config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the global seed");
    sub->add_option("--jobs", jobs, "worker threads (default: all cores)")->check(CLI::PositiveNumber);
  };

  std::vector<std::pair<std::string, CLI::App*>> stages;
  for (const auto& name : pl::stage_names()) {
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " stage");
    add_common(sub);
    stages.emplace_back(name, sub);
  }
  CLI::App* run = app.add_subcommand("run", "run every stage in order");
  add_common(run);

  CLI::App* show = app.add_subcommand("print-config", "print the canonical config");
  show->add_option("--config", config_path, "pipeline config file (defaults when omitted)");
  bool schema = false;
  show->add_flag("--schema", schema, "list keys with descriptions");

  std::string fixture_dir;
  pl::FixtureOptions fx;
  CLI::App* fixture = app.add_subcommand("make-fixture", "write the synthetic test corpus");
  fixture->add_option("--out", fixture_dir, "target directory")->required();
  fixture->add_option("--seed", fx.seed, "fixture seed");
  fixture->add_option("--countries", fx.countries, "number of countries");
  fixture->add_option("--cells-per-side", fx.cells_per_side, "grid cells per country side");
  fixture->add_option("--tile-px", fx.tile_px, "tile size in pixels");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(pl::PipelineError("usage", "cli", e.what()));
  }

  try {
    if (fixture->parsed()) {
      pl::make_fixture(fixture_dir, fx);
      ok("make-fixture", nullptr);
      return 0;
    }
    if (show->parsed()) {
      if (schema) {
        for (const auto& [k, d] : pl::config_schema()) std::cout << k << "\t" << d << "\n";
        return 0;
      }
      const pl::Config c = config_path.empty() ? pl::Config{} : pl::load_config(config_path);
      std::cout << pl::serialize(c);
      return 0;
    }
    pl::Config c = pl::load_config(config_path);
    if (seed) c.seed = *seed;
    if (jobs > 0) omp_set_num_threads(jobs);
    if (run->parsed()) {
      pl::run_all(c);
      ok("run", &c);
      return 0;
    }
    for (const auto& [name, sub] : stages)
      if (sub->parsed()) {
        pl::run_stage(name, c);
        ok(name, &c);
        return 0;
      }
  } catch (const pl::PipelineError& e) {
    return fail(e);
  } catch (const std::exception& e) {
    return fail(pl::PipelineError("runtime", "cli", e.what()));
  }
  return 0;
}
