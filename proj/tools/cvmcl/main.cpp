#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "cvmcl/io.hpp"
#include "cvmcl/pipeline.hpp"
#include "cvmcl/run_config.hpp"

namespace fs = std::filesystem;
using namespace cvmcl;
using nlohmann::json;

namespace {

struct Common {
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  fs::path out;
  bool wall_time = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "INI run configuration")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Top-level seed (overrides [run] seed)");
  app->add_option("--out", c.out, "Run directory holding inputs and outputs")->required();
  app->add_flag("--wall-time", c.wall_time, "Record stage wall time in the stage report");
}

pipeline::RunConfig resolve(const Common& c) {
  pipeline::RunConfig cfg = c.config ? pipeline::load_run_config(*c.config) : pipeline::RunConfig{};
  if (c.seed) {
    cfg.seed = *c.seed;
  }
  cfg.validate();
  return cfg;
}

int fail(const std::string& type, const std::string& message, int code) {
  std::cerr << json{{"error", {{"type", type}, {"message", message}}}}.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-view Monte Carlo localization experiments on synthetic worlds"};
  app.require_subcommand(1);
  Common common;
  pipeline::LocalizeOptions loc;
  std::string provider = "index";

  CLI::App* simgen = app.add_subcommand("simgen", "Generate training/evaluation worlds and trajectories");
  CLI::App* mine = app.add_subcommand("mine", "Mine labeled training pairs");
  CLI::App* train = app.add_subcommand("train", "Train the Siamese encoders");
  CLI::App* index = app.add_subcommand("index", "Precompute satellite embedding indexes");
  CLI::App* eval = app.add_subcommand("eval-retrieval", "Precision-recall and top-X retrieval evaluation");
  CLI::App* localize = app.add_subcommand("localize", "Run the particle filter on the evaluation trajectory");
  CLI::App* report = app.add_subcommand("report", "Aggregate stage outputs into report.json");
  for (CLI::App* sub : {simgen, mine, train, index, eval, localize, report}) {
    add_common(sub, common);
  }
  localize->add_option("--provider", provider, "Distance provider")
      ->check(CLI::IsMember({"oracle", "model", "index"}));
  localize->add_option("--seeds", loc.seeds, "Number of independent filter runs")->check(CLI::PositiveNumber);
  localize->add_option("--model", loc.model, "Checkpoint (default <out>/model.cvsm)");
  localize->add_option("--index", loc.index, "Index (default <out>/eval_index.cvix)");
  localize->add_option("--tag", loc.tag, "Suffix for the output name");
  localize->add_flag("--dump-clouds", loc.dump_clouds, "Write the particle cloud of every step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      return app.exit(e);
    }
    return fail("usage", e.what(), 2);
  }

  try {
    const pipeline::RunConfig cfg = resolve(common);
    const auto t0 = std::chrono::steady_clock::now();
    std::optional<json> result;
    std::string report_name;
    const auto log = [](const std::string& line) { std::cerr << line << "\n"; };

    if (simgen->parsed()) {
      pipeline::stage_simgen(cfg, common.out);
    } else if (mine->parsed()) {
      result = pipeline::stage_mine(cfg, common.out);
      report_name = "mine.json";
    } else if (train->parsed()) {
      result = pipeline::stage_train(cfg, common.out, log);
      report_name = "train.json";
    } else if (index->parsed()) {
      result = pipeline::stage_index(cfg, common.out);
      report_name = "index.json";
    } else if (eval->parsed()) {
      result = pipeline::stage_eval_retrieval(cfg, common.out);
      report_name = pipeline::files::kRetrieval;
    } else if (localize->parsed()) {
      loc.provider = pipeline::parse_provider(provider);
      result = pipeline::stage_localize(cfg, common.out, loc);
      report_name = (*result)["name"].get<std::string>() + ".json";
    } else if (report->parsed()) {
      result = pipeline::stage_report(cfg, common.out);
      report_name = pipeline::files::kReport;
    }

    if (result) {
      if (common.wall_time) {
        (*result)["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      }
      io::save_report(common.out / report_name, *result);
      std::cout << (common.out / report_name).string() << "\n";
    }
    return 0;
  } catch (const io::FormatError& e) {
    return fail("format", e.what(), 3);
  } catch (const InvalidArgument& e) {
    return fail("invalid_argument", e.what(), 2);
  } catch (const std::exception& e) {
    return fail("error", e.what(), 1);
  }
}
