#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "cdpcl/errors.hpp"
#include "cdpcl/evalreport/report.hpp"
#include "cdpcl/segtrain/trainer.hpp"
#include "cdpcl/synthdomains/dataset.hpp"
#include "cdpcl/verify/acceptance.hpp"

namespace fs = std::filesystem;
using namespace cdpcl;

namespace {

constexpr int kValidationError = 1;
constexpr int kRuntimeError = 2;

struct GenDataArgs {
  fs::path out;
  std::uint64_t seed = 0;
  std::size_t classes = 6;
  std::size_t size = 64;
  std::size_t train_count = 200;
  std::size_t eval_count = 50;
};

struct TrainArgs {
  fs::path config;
  std::vector<std::string> overrides;
};

struct EvalArgs {
  fs::path run;
  fs::path checkpoint;
  fs::path data;
  fs::path out;
  bool all_checkpoints = false;
};

struct ReportArgs {
  std::vector<fs::path> runs;
  fs::path out;
};

struct SelftestArgs {
  fs::path work = fs::temp_directory_path() / "cdpcl-selftest";
  bool desk = false;
  std::size_t seeds = 5;
  std::size_t iters = 2000;
};

int gen_data(const GenDataArgs& a) {
  auto cfg = synth::SplitConfig::defaults(a.classes);
  cfg.seed = a.seed;
  cfg.scene.height = cfg.scene.width = a.size;
  cfg.train_count = a.train_count;
  cfg.eval_count = a.eval_count;
  cfg.validate();
  for (const auto& d : synth::make_split(cfg, a.out)) std::cout << (a.out / d).string() << "\n";
  return 0;
}

int train(const TrainArgs& a) {
  auto cfg = segtrain::load_config(a.config);
  for (const auto& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    segtrain::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  const auto r = segtrain::train(cfg);
  const auto& last = r.records.back();
  std::cout << "trained " << r.records.size() << " iterations, final total loss " << last.l_total << "\n"
            << "checkpoint " << r.checkpoint.string() << "\nlog " << r.log.string() << "\n";
  return 0;
}

int eval(const EvalArgs& a) {
  if (a.run.empty() == a.checkpoint.empty()) throw ConfigError("give exactly one of --run or --checkpoint");
  std::vector<fs::path> checkpoints;
  fs::path out = a.out;
  if (!a.run.empty()) {
    if (!fs::is_directory(a.run)) throw ConfigError("run directory " + a.run.string() + " does not exist");
    checkpoints = evalreport::run_checkpoints(a.run);
    if (checkpoints.empty()) throw ConfigError("no checkpoints in " + a.run.string());
    if (!a.all_checkpoints) checkpoints = {checkpoints.back()};
    if (out.empty()) out = a.run;
  } else {
    if (!fs::exists(a.checkpoint)) throw ConfigError("checkpoint " + a.checkpoint.string() + " does not exist");
    if (out.empty()) throw ConfigError("--out is required with --checkpoint");
    checkpoints = {a.checkpoint};
  }
  const auto domains = evalreport::domain_dirs(a.data);
  const auto r = evalreport::run_evaluation(checkpoints, domains, out);
  for (std::size_t d = 0; d < r.final_results.size(); ++d) {
    std::printf("%-12s mIoU %6.2f  cosine margin (aug) %.3f\n", r.final_results[d].domain.c_str(),
                100.0 * r.final_results[d].miou.mean, r.discrepancy[d].diagonal_margin(true));
  }
  std::cout << "wrote " << (out / "eval.csv").string() << ", discrepancy.md, discrepancy.csv\n";
  return 0;
}

int report(const ReportArgs& a) {
  for (const auto& r : a.runs) {
    if (!fs::is_directory(r)) throw ConfigError("run directory " + r.string() + " does not exist");
  }
  const auto s = evalreport::emit_report(a.runs, a.out);
  std::cout << s.rows.size() << " methods, " << s.absent.size() << " absent runs; wrote "
            << (a.out / "summary.md").string() << "\n";
  for (const auto& x : s.absent) std::cout << "absent: " << x << "\n";
  return 0;
}

int selftest(const SelftestArgs& a) {
  verify::AcceptanceOptions opt;
  opt.work_dir = a.work;
  opt.desk_scale = a.desk;
  opt.desk_seeds = a.seeds;
  opt.desk_iters = a.iters;
  opt.progress = &std::cout;
  const auto results = verify::run_acceptance(opt, std::cout);
  std::size_t failed = 0;
  for (const auto& r : results) failed += !r.passed;
  std::cout << results.size() - failed << "/" << results.size() << " criteria passed\n";
  return failed ? kRuntimeError : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Calibration-based dual prototypical contrastive learning at desk scale"};
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Render the source and unseen synthetic domains");
  gen->add_option("--out", gd.out, "Output split root")->required();
  gen->add_option("--seed", gd.seed, "Master seed");
  gen->add_option("--classes", gd.classes, "Number of classes")->check(CLI::Range(2, 254));
  gen->add_option("--size", gd.size, "Image side in pixels (multiple of 4, >= 32)");
  gen->add_option("--train-count", gd.train_count, "Source training images");
  gen->add_option("--eval-count", gd.eval_count, "Images per unseen domain");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train one model from a key = value config file");
  tr->add_option("--config", ta.config, "Config file")->required();
  tr->add_option("--set", ta.overrides, "Override a config key (key=value), repeatable");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "mIoU per domain and the prototype discrepancy tables");
  ev->add_option("--run", ea.run, "Run directory (uses its final checkpoint)");
  ev->add_option("--checkpoint", ea.checkpoint, "A single checkpoint file");
  ev->add_option("--data", ea.data, "Split root written by gen-data")->required();
  ev->add_option("--out", ea.out, "Output directory (default: the run directory)");
  ev->add_flag("--all-checkpoints", ea.all_checkpoints, "Evaluate every periodic checkpoint for mIoU curves");

  ReportArgs ra;
  auto* rep = app.add_subcommand("report", "Summary table and plots across run directories");
  rep->add_option("--runs", ra.runs, "Run directories")->required();
  rep->add_option("--out", ra.out, "Output directory")->required();

  SelftestArgs sa;
  auto* st = app.add_subcommand("selftest", "Run the property, oracle and acceptance checks");
  st->add_option("--work", sa.work, "Scratch directory");
  st->add_flag("--desk", sa.desk, "Also run the multi-seed desk-scale experiment (about an hour)");
  st->add_option("--seeds", sa.seeds, "Seeds per method in the desk experiment");
  st->add_option("--iters", sa.iters, "Iterations per desk run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kValidationError;
  }

  try {
    if (*gen) return gen_data(gd);
    if (*tr) return train(ta);
    if (*ev) return eval(ea);
    if (*rep) return report(ra);
    if (*st) return selftest(sa);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kValidationError;
}
