#include <cstdlib>
#include <iostream>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "lineage/pipeline.hpp"

namespace pl = lineage::pipeline;

int main(int argc, char** argv) {
  CLI::App app{"Cell lineage tracking engine"};
  app.require_subcommand(1);
  app.fallthrough();

  pl::Options opts;
  std::string log_level;
  if (const char* env = std::getenv("LINEAGE_LOG")) log_level = env;
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off (env LINEAGE_LOG)");

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opts.config, "JSON config file");
    cmd->add_option("--out", opts.out, "output directory");
  };

  CLI::App* simulate = app.add_subcommand("simulate", "Render a synthetic sequence with ground truth");
  add_common(simulate);
  simulate->add_option("--seed", opts.seed, "override rng_seed");

  CLI::App* track = app.add_subcommand("track", "Segment, track and link a frame sequence");
  add_common(track);
  track->add_option("--in", opts.in, "input directory with t%03d.pgm frames");
  track->add_flag("--baseline", opts.baseline, "disable collision resolution and mitosis detection");

  CLI::App* evaluate = app.add_subcommand("evaluate", "Score predictions against ground truth");
  evaluate->add_option("--gt", opts.gt, "ground-truth directory")->required();
  evaluate->add_option("--pred", opts.pred, "prediction directory; repeat to compare runs")->required();
  evaluate->add_option("--out", opts.out, "report directory");

  CLI::App* overlay = app.add_subcommand("overlay", "Draw tracked cell boundaries over the frames");
  overlay->add_option("--in", opts.in, "frames directory")->required();
  overlay->add_option("--pred", opts.pred, "masks directory with res_track.txt")->required();
  overlay->add_option("--out", opts.out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  auto logger = spdlog::stderr_color_mt("lineage");
  spdlog::set_default_logger(logger);
  spdlog::set_level(log_level.empty() ? spdlog::level::warn : spdlog::level::from_str(log_level));

  if (simulate->parsed()) return pl::cmd_simulate(opts);
  if (track->parsed()) return pl::cmd_track(opts);
  if (evaluate->parsed()) return pl::cmd_evaluate(opts);
  return pl::cmd_overlay(opts);
}
