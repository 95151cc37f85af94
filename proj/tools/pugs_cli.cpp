#include "pugs/app/config.hpp"
#include "pugs/app/fixture.hpp"
#include "pugs/app/stages.hpp"
#include "pugs/core/error.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace pugs;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> config;
  std::vector<std::string> ablate;
  std::optional<fs::path> out;
  bool quiet = false;
};

app::Ablations parse_ablations(const std::vector<std::string>& names) {
  app::Ablations out;
  for (const auto& name : names) out.insert(app::ablation_from_string(name));
  return out;
}

app::StageContext make_context(const Globals& g, const fs::path& object_dir) {
  app::StageContext ctx;
  ctx.object_dir = object_dir;
  ctx.out_dir = g.out ? *g.out : object_dir / "out";
  ctx.config = app::resolve_config(g.config, object_dir);
  if (g.seed) {
    ctx.config.seed = *g.seed;
    ctx.config.features.seed = *g.seed;
  }
  ctx.ablations = parse_ablations(g.ablate);
  return ctx;
}

fs::path default_eval_out(const fs::path& root) {
  fs::path r = root.lexically_normal();
  if (r.filename().empty()) r = r.parent_path();
  return r.parent_path() / (r.filename().string() + "_eval");
}

std::vector<std::string> read_ids(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw MissingAssetError("cannot read subset file '" + file.string() + "'");
  std::vector<std::string> ids;
  for (std::string line; std::getline(in, line);) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    ids.push_back(line.substr(b, line.find_last_not_of(" \t\r") - b + 1));
  }
  return ids;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Region-aware property estimation for Gaussian splats", "pugs"};
  cli.require_subcommand(1);
  cli.fallthrough();

  Globals g;
  cli.add_option("--seed", g.seed, "Random seed (overrides the config)");
  cli.add_option("--config", g.config, "TOML config (default: <object>/pugs.toml, then built-in defaults)");
  cli.add_option("--ablate", g.ablate, "Ablation: garl, raft or thickness (repeatable)")
      ->check(CLI::IsMember({"garl", "raft", "thickness"}))
      ->allow_extra_args(false);
  cli.add_option("--out", g.out, "Output directory (default: <object>/out)");
  cli.add_flag("-q,--quiet", g.quiet, "Only log warnings and errors");

  fs::path object_dir;
  auto object_command = [&](const std::string& name, const std::string& help) {
    auto* sub = cli.add_subcommand(name, help);
    sub->add_option("object_dir", object_dir, "Object directory")->required();
    return sub;
  };
  auto* render = object_command("render", "Render every view and report per-view losses");
  auto* train = object_command("train-features", "Train region-aware features from the view masks");
  auto* predict = object_command("predict-properties", "Material dictionary from file or the VLM");
  auto* propagate = object_command("propagate", "Fuse source properties and propagate to every Gaussian");
  bool emit_requests = false;
  propagate->add_flag("--emit-requests", emit_requests, "Only write the embedding requests manifest");
  auto* integrate = object_command("integrate", "Integrate the property over the object");
  auto* segment = object_command("segment", "Material segmentation PLY and renders");
  auto* pipeline = object_command("pipeline", "Run every stage in order");

  auto* evaluate = cli.add_subcommand("evaluate", "Run the pipeline over a dataset and report metrics");
  fs::path dataset_root;
  std::vector<std::string> ids;
  std::optional<fs::path> subset_file;
  bool paper_reference = false;
  evaluate->add_option("dataset_root", dataset_root, "Directory of object directories")->required();
  evaluate->add_option("--ids", ids, "Object ids to evaluate")->delimiter(',');
  evaluate->add_option("--subset", subset_file, "File with one object id per line");
  evaluate->add_flag("--paper-reference", paper_reference, "Append published reference rows to the report");

  auto* init = cli.add_subcommand("init-config", "Print the default config");
  std::optional<fs::path> init_output;
  init->add_option("-o,--output", init_output, "Write to a file instead of stdout");

  auto* fixture = cli.add_subcommand("fixture", "Write a synthetic two-cluster object directory");
  fs::path fixture_dir;
  bool uniform = false;
  fixture->add_option("dir", fixture_dir, "Destination directory")->required();
  fixture->add_flag("--uniform", uniform, "Same density for both parts");

  if (argc <= 1) {
    std::cerr << cli.help();
    return 1;
  }
  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << cli.help();
    return 1;
  }

  auto logger = spdlog::stderr_color_mt("pugs");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(g.quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    if (init->parsed()) {
      const auto text = app::default_config_toml();
      if (init_output) {
        std::ofstream out(*init_output);
        if (!out) throw IoError("cannot write '" + init_output->string() + "'");
        out << text;
      } else {
        std::cout << text;
      }
      return 0;
    }
    if (fixture->parsed()) {
      app::FixtureOptions options;
      if (g.seed) options.seed = *g.seed;
      options.uniform_density = uniform;
      const auto info = app::write_fixture(fixture_dir, options);
      std::cout << fixture_dir.string() << ": mass " << info.mass_kg << " kg, " << info.patch_keys
                << " patch embeddings\n";
      return 0;
    }
    if (evaluate->parsed()) {
      app::EvaluateOptions options;
      options.dataset_root = dataset_root;
      options.out_root = g.out ? *g.out : default_eval_out(dataset_root);
      options.config_path = g.config;
      options.ablations = parse_ablations(g.ablate);
      options.subset = subset_file ? read_ids(*subset_file) : ids;
      options.paper_reference = paper_reference;
      options.seed = g.seed;
      const auto report = app::run_evaluate(options);
      std::cout << (options.out_root / "report.json").string() << ": " << report.rows.size() << " objects, "
                << report.failures.size() << " failed\n";
      for (const auto& f : report.failures) spdlog::warn("{}: {}", f.id, f.error);
      return 0;
    }

    const auto ctx = make_context(g, object_dir);
    std::string written;
    if (render->parsed()) {
      app::run_render(ctx);
      written = "render.json";
    } else if (train->parsed()) {
      app::run_train_features(ctx);
      written = "features.ply";
    } else if (predict->parsed()) {
      app::run_predict_properties(ctx);
      written = "dictionary.json";
    } else if (propagate->parsed()) {
      if (emit_requests) {
        app::run_emit_requests(ctx);
        written = "embedding_requests.json";
      } else {
        app::run_propagate(ctx);
        written = "assignments.ply";
      }
    } else if (integrate->parsed()) {
      app::run_integrate(ctx);
      written = "mass.json";
    } else if (segment->parsed()) {
      app::run_segment(ctx);
      written = "segmentation";
    } else if (pipeline->parsed()) {
      app::run_pipeline(ctx);
      written = "mass.json";
    }
    std::cout << (ctx.out_dir / written).string() << "\n";
    return 0;
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const IoError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
