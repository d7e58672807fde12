#pragma once

#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace cdpcl::verify {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct AcceptanceOptions {
  std::filesystem::path work_dir;  // scratch space for generated data and runs
  bool desk_scale = false;         // also run the multi-seed training experiment (criteria 7 and 9)
  std::size_t desk_seeds = 5;
  std::size_t desk_iters = 2000;
  std::uint64_t data_seed = 2024;
  std::ostream* progress = nullptr;  // per-run progress lines during the desk experiment
};

CriterionResult gradient_suite();
CriterionResult oracle_suite();
CriterionResult calibration_invariants();
CriterionResult reduction_identities(const std::filesystem::path& work_dir);
CriterionResult frozen_branch_check();
CriterionResult ema_check();
CriterionResult determinism_check(const std::filesystem::path& work_dir);

struct DeskResults {
  CriterionResult generalization;  // criterion 7
  CriterionResult discrepancy;     // criterion 9
};
DeskResults desk_experiment(const AcceptanceOptions& options);

/// Runs the selected criteria in order, writing one line per criterion to
/// out as it completes. Returns every result.
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options, std::ostream& out);

std::string format_result(const CriterionResult& r);

}  // namespace cdpcl::verify
