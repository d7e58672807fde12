#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cdpcl/evalreport/evaluate.hpp"
#include "cdpcl/losses.hpp"

namespace cdpcl::evalreport {

std::string class_name(std::size_t c);

// eval.csv: iter,domain,images,pixels,miou,iou_0..iou_{C-1}
// IoU cells are empty for classes excluded from the mean.
std::string eval_csv_header(std::size_t classes);
std::string eval_csv_rows(std::size_t iter, const std::vector<DomainResult>& results);

/// Per-class L1 tables and C x C cosine tables, one block per domain.
std::string discrepancy_markdown(const std::vector<DiscrepancyTables>& tables);
// discrepancy.csv: domain,table,row,col,value with table in
// {l1_src,l1_aug,cos_src,cos_aug}; absent cells are "absent".
std::string discrepancy_csv(const std::vector<DiscrepancyTables>& tables);

/// Checkpoints of a run directory in training order: checkpoint_NNNNNN.cdpt
/// files, then checkpoint.cdpt.
std::vector<std::filesystem::path> run_checkpoints(const std::filesystem::path& run_dir);
/// Subdirectories of a split root that contain a manifest, sorted by name.
std::vector<std::filesystem::path> domain_dirs(const std::filesystem::path& data_root);

/// Evaluates every checkpoint on every domain and writes eval.csv,
/// discrepancy.md and discrepancy.csv (final checkpoint) under out_dir.
/// Nothing is written if any evaluation fails.
struct EvaluationOutput {
  std::vector<DomainResult> final_results;
  std::vector<DiscrepancyTables> discrepancy;
};
EvaluationOutput run_evaluation(const std::vector<std::filesystem::path>& checkpoints,
                                const std::vector<std::filesystem::path>& domains,
                                const std::filesystem::path& out_dir);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};
/// Standalone SVG line plot.
std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<Series>& series);

struct SummaryRow {
  losses::Ablation ablation;
  std::size_t runs = 0;
  std::vector<double> domain_miou;  // percent, mean over runs, aligned with ReportSummary::domains
  double mean = 0.0;                // mean of the per-run unseen means
  double stddev = 0.0;              // across runs
};

struct ReportSummary {
  std::vector<std::string> domains;  // unseen domains, sorted
  std::vector<SummaryRow> rows;      // baseline, pcl, upcl, hpcl, cdpcl order; modes without runs omitted
  std::vector<std::string> absent;   // "<run dir>: <reason>"
};

/// Reads train.cfg, train_log.csv and eval.csv from each run directory and
/// writes summary.csv, summary.md, loss_curves.svg and miou_curves.svg to
/// out_dir. Output depends only on the file contents and the order of
/// run_dirs is irrelevant.
ReportSummary emit_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir);

}  // namespace cdpcl::evalreport
