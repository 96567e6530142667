#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "prereq/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

void print_seed_summary(const std::vector<prereq::SeedResult>& results) {
  for (const auto& r : results) {
    if (r.ok)
      std::cout << "seed " << r.seed << ": auc " << r.metrics.auc << " map " << r.metrics.map << " f1 " << r.metrics.f1
                << " acc " << r.metrics.accuracy << "\n";
    else
      std::cerr << "seed " << r.seed << " failed: " << r.error << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concept prerequisite prediction with relational graph autoencoders"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  int jobs = 1;
  std::vector<std::string> run_dirs;
  std::string eval_out;
  std::string run_dir;
  double threshold = 0.5;

  auto* build = app.add_subcommand("build", "ingest the corpus and write graph, features and manifest");
  build->add_option("--config", config_path, "run config file")->required();
  build->add_option("--set", overrides, "override a config key (key=value)");

  auto* train = app.add_subcommand("train", "train every configured seed on the build artifacts");
  train->add_option("--config", config_path, "run config file")->required();
  train->add_option("--set", overrides, "override a config key (key=value)");
  train->add_option("--jobs", jobs, "seeds trained in parallel")->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("eval", "aggregate test metrics over run directories");
  eval->add_option("--runs", run_dirs, "seed run directories, or a directory of them")->required();
  eval->add_option("--out", eval_out, "report path (default: metrics.tsv beside the runs)");

  auto* analyze = app.add_subcommand("analyze", "recover the predicted concept graph of one run");
  analyze->add_option("--run", run_dir, "seed run directory")->required();
  analyze->add_option("--threshold", threshold, "score threshold")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*build) {
      const auto cfg = prereq::load_run_config(config_path, overrides);
      const auto m = prereq::cmd_build(cfg);
      std::cout << prereq::serialize_manifest(m);
    } else if (*train) {
      const auto cfg = prereq::load_run_config(config_path, overrides);
      const auto results = prereq::cmd_train(cfg, jobs);
      print_seed_summary(results);
      for (const auto& r : results)
        if (!r.ok) return 1;
    } else if (*eval) {
      std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
      std::optional<fs::path> out;
      if (!eval_out.empty()) out = eval_out;
      std::cout << prereq::serialize_report(prereq::cmd_eval(dirs, out));
    } else if (*analyze) {
      std::cout << prereq::cmd_analyze(run_dir, threshold);
    }
  } catch (const prereq::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
