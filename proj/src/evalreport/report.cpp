#include "cdpcl/evalreport/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <regex>
#include <sstream>

#include "cdpcl/errors.hpp"
#include "cdpcl/kernels/parallel.hpp"
#include "cdpcl/segtrain/config.hpp"

namespace cdpcl::evalreport {
namespace fs = std::filesystem;

namespace {

std::string num(double v, const char* f = "%.4f") {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string exact(double v) { return num(v, "%.17g"); }

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

std::string class_name(std::size_t c) { return "class" + std::to_string(c); }

std::string eval_csv_header(std::size_t classes) {
  std::string h = "iter,domain,images,pixels,miou";
  for (std::size_t c = 0; c < classes; ++c) h += ",iou_" + std::to_string(c);
  return h;
}

std::string eval_csv_rows(std::size_t iter, const std::vector<DomainResult>& results) {
  std::ostringstream os;
  for (const auto& r : results) {
    os << iter << "," << r.domain << "," << r.images << "," << r.confusion.total() << "," << exact(r.miou.mean);
    for (std::size_t c = 0; c < r.miou.per_class.size(); ++c) {
      os << "," << (r.miou.counted[c] ? exact(r.miou.per_class[c]) : "");
    }
    os << "\n";
  }
  return os.str();
}

std::string discrepancy_markdown(const std::vector<DiscrepancyTables>& tables) {
  std::ostringstream os;
  const auto cell = [](double v) { return std::isnan(v) ? std::string("absent") : num(v); };
  for (const auto& t : tables) {
    os << "## " << t.domain << "\n\n"
       << "Manhattan distance between class features and prototypes (mean over feature dimensions)\n\n"
       << "| Class | Source | Augmented |\n|---|---|---|\n";
    for (std::size_t c = 0; c < t.classes; ++c) {
      os << "| " << class_name(c) << " | " << cell(t.l1_src[c]) << " | " << cell(t.l1_aug[c]) << " |\n";
    }
    for (const bool aug : {false, true}) {
      const auto& m = aug ? t.cos_aug : t.cos_src;
      os << "\nCosine similarity, rows " << (aug ? "augmented" : "source")
         << " prototypes, columns class features (diagonal margin " << num(t.diagonal_margin(aug)) << ")\n\n| Class |";
      for (std::size_t c = 0; c < t.classes; ++c) os << " " << class_name(c) << " |";
      os << "\n|---|";
      for (std::size_t c = 0; c < t.classes; ++c) os << "---|";
      os << "\n";
      for (std::size_t k = 0; k < t.classes; ++k) {
        os << "| " << class_name(k) << " |";
        for (std::size_t i = 0; i < t.classes; ++i) os << " " << cell(m[k * t.classes + i]) << " |";
        os << "\n";
      }
    }
    os << "\n";
  }
  return os.str();
}

std::string discrepancy_csv(const std::vector<DiscrepancyTables>& tables) {
  std::ostringstream os;
  os << "domain,table,row,col,value\n";
  const auto v = [](double x) { return std::isnan(x) ? std::string("absent") : exact(x); };
  for (const auto& t : tables) {
    for (std::size_t c = 0; c < t.classes; ++c) os << t.domain << ",l1_src," << c << "," << c << "," << v(t.l1_src[c]) << "\n";
    for (std::size_t c = 0; c < t.classes; ++c) os << t.domain << ",l1_aug," << c << "," << c << "," << v(t.l1_aug[c]) << "\n";
    for (const bool aug : {false, true}) {
      const auto& m = aug ? t.cos_aug : t.cos_src;
      for (std::size_t k = 0; k < t.classes; ++k) {
        for (std::size_t i = 0; i < t.classes; ++i) {
          os << t.domain << "," << (aug ? "cos_aug," : "cos_src,") << k << "," << i << "," << v(m[k * t.classes + i])
             << "\n";
        }
      }
    }
  }
  return os.str();
}

std::vector<fs::path> run_checkpoints(const fs::path& run_dir) {
  static const std::regex periodic(R"(checkpoint_(\d+)\.cdpt)");
  std::vector<fs::path> out;
  if (fs::is_directory(run_dir)) {
    for (const auto& e : fs::directory_iterator(run_dir)) {
      if (std::regex_match(e.path().filename().string(), periodic)) out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  if (fs::exists(run_dir / "checkpoint.cdpt")) out.push_back(run_dir / "checkpoint.cdpt");
  return out;
}

std::vector<fs::path> domain_dirs(const fs::path& data_root) {
  if (!fs::is_directory(data_root)) throw ConfigError("data directory " + data_root.string() + " does not exist");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(data_root)) {
    if (e.is_directory() && fs::exists(e.path() / "manifest.tsv")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw ConfigError("no domain directories under " + data_root.string());
  return out;
}

EvaluationOutput run_evaluation(const std::vector<fs::path>& checkpoints, const std::vector<fs::path>& domains,
                                const fs::path& out_dir) {
  if (checkpoints.empty()) throw ConfigError("no checkpoints to evaluate");
  kernels::retain_large_buffers();
  std::vector<synth::Dataset> data;
  for (const auto& d : domains) data.push_back(synth::read_dataset(d));

  std::ostringstream csv;
  EvaluationOutput out;
  for (std::size_t n = 0; n < checkpoints.size(); ++n) {
    const auto tensors = load_checkpoint(checkpoints[n]);
    const auto model = segtrain::model_from_tensors(tensors);
    const auto iter = static_cast<std::size_t>(find_tensor(tensors, "iteration").item());
    if (n == 0) csv << eval_csv_header(model.classes()) << "\n";
    std::vector<DomainResult> results;
    for (const auto& d : data) results.push_back(evaluate_domain(model, d));
    csv << eval_csv_rows(iter, results);
    if (n + 1 == checkpoints.size()) {
      for (const auto& d : data) out.discrepancy.push_back(discrepancy_report(model, d));
      out.final_results = std::move(results);
    }
  }
  fs::create_directories(out_dir);
  write_file(out_dir / "eval.csv", csv.str());
  write_file(out_dir / "discrepancy.md", discrepancy_markdown(out.discrepancy));
  write_file(out_dir / "discrepancy.csv", discrepancy_csv(out.discrepancy));
  return out;
}

std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<Series>& series) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
  constexpr double W = 720, H = 420, L = 70, R = 170, T = 40, B = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  const auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  const auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << " " << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
     << "</text>\n"
     << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4, yv = y0 + (y1 - y0) * k / 4;
    os << "<text x=\"" << num(px(xv), "%.1f") << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">"
       << num(xv, "%.4g") << "</text>\n"
       << "<text x=\"" << L - 6 << "\" y=\"" << num(py(yv) + 4, "%.1f") << "\" text-anchor=\"end\">"
       << num(yv, "%.4g") << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">" << xml_escape(x_label)
     << "</text>\n"
     << "<text x=\"16\" y=\"" << H / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << H / 2 << ")\">"
     << xml_escape(y_label) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = colors[s % std::size(colors)];
    std::string pts;
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      if (!std::isfinite(series[s].x[i]) || !std::isfinite(series[s].y[i])) continue;
      pts += num(px(series[s].x[i]), "%.2f") + "," + num(py(series[s].y[i]), "%.2f") + " ";
    }
    if (!pts.empty()) pts.pop_back();
    if (pts.find(' ') == std::string::npos && !pts.empty()) {
      const auto c = split(pts, ',');
      os << "<circle cx=\"" << c[0] << "\" cy=\"" << c[1] << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    } else if (!pts.empty()) {
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << pts << "\"/>\n";
    }
    const double ly = T + 10 + 18.0 * static_cast<double>(s);
    os << "<line x1=\"" << W - R + 12 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 32 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
       << "<text x=\"" << W - R + 38 << "\" y=\"" << ly + 4 << "\">" << xml_escape(series[s].name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

namespace {

struct RunData {
  losses::Ablation ablation;
  std::uint64_t seed;
  std::string label;
  std::vector<double> loss_iter, loss_total;
  std::map<std::size_t, std::map<std::string, double>> miou;  // iter -> domain -> mIoU
};

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("missing " + p.filename().string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

RunData load_run(const fs::path& dir) {
  const auto cfg = segtrain::parse_config(read_text(dir / "train.cfg"), (dir / "train.cfg").string());
  RunData r{cfg.ablation, cfg.seed, {}, {}, {}, {}};
  r.label = losses::to_string(cfg.ablation) + " seed " + std::to_string(cfg.seed);

  std::istringstream log(read_text(dir / "train_log.csv"));
  std::string line;
  std::getline(log, line);
  if (line != segtrain::csv_header()) throw FormatError("unexpected header in train_log.csv");
  while (std::getline(log, line)) {
    const auto f = split(line, ',');
    if (f.size() != 7) throw FormatError("malformed train_log.csv row '" + line + "'");
    r.loss_iter.push_back(std::stod(f[0]));
    r.loss_total.push_back(std::stod(f[5]));
  }

  std::istringstream ev(read_text(dir / "eval.csv"));
  std::getline(ev, line);
  while (std::getline(ev, line)) {
    const auto f = split(line, ',');
    if (f.size() < 5) throw FormatError("malformed eval.csv row '" + line + "'");
    if (f[1] == cfg.train_domain) continue;
    r.miou[std::stoul(f[0])][f[1]] = f[4].empty() ? NAN : std::stod(f[4]);
  }
  if (r.miou.empty()) throw FormatError("eval.csv has no unseen-domain rows");
  return r;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? NAN : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double unseen_mean(const std::map<std::string, double>& per_domain) {
  std::vector<double> v;
  for (const auto& [_, m] : per_domain) v.push_back(m);
  return mean_of(v);
}

}  // namespace

ReportSummary emit_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  ReportSummary summary;
  std::vector<RunData> runs;
  auto sorted_dirs = run_dirs;
  std::sort(sorted_dirs.begin(), sorted_dirs.end());
  for (const auto& dir : sorted_dirs) {
    try {
      runs.push_back(load_run(dir));
    } catch (const Error& e) {
      summary.absent.push_back(dir.filename().string() + ": " + e.what());
    }
  }
  std::stable_sort(runs.begin(), runs.end(), [](const RunData& a, const RunData& b) {
    return std::pair(a.ablation, a.seed) < std::pair(b.ablation, b.seed);
  });

  std::vector<std::string> domains;
  for (const auto& r : runs) {
    for (const auto& [d, _] : r.miou.rbegin()->second) domains.push_back(d);
  }
  std::sort(domains.begin(), domains.end());
  domains.erase(std::unique(domains.begin(), domains.end()), domains.end());
  summary.domains = domains;

  for (const auto mode : {losses::Ablation::Baseline, losses::Ablation::Pcl, losses::Ablation::Upcl,
                          losses::Ablation::Hpcl, losses::Ablation::Cdpcl}) {
    SummaryRow row{mode, 0, std::vector<double>(domains.size(), 0.0), 0.0, 0.0};
    std::vector<std::vector<double>> per_domain(domains.size());
    std::vector<double> means;
    for (const auto& r : runs) {
      if (r.ablation != mode) continue;
      ++row.runs;
      const auto& final_eval = r.miou.rbegin()->second;
      for (std::size_t d = 0; d < domains.size(); ++d) {
        if (auto it = final_eval.find(domains[d]); it != final_eval.end()) per_domain[d].push_back(100.0 * it->second);
      }
      means.push_back(100.0 * unseen_mean(final_eval));
    }
    if (row.runs == 0) continue;
    for (std::size_t d = 0; d < domains.size(); ++d) row.domain_miou[d] = mean_of(per_domain[d]);
    row.mean = mean_of(means);
    double var = 0;
    for (auto m : means) var += (m - row.mean) * (m - row.mean);
    row.stddev = means.size() > 1 ? std::sqrt(var / static_cast<double>(means.size() - 1)) : 0.0;
    summary.rows.push_back(row);
  }

  const auto mark = [](bool on) { return on ? "x" : "-"; };
  std::ostringstream csv, md;
  csv << "method,pcl,upcl,hpcl,runs";
  for (const auto& d : domains) csv << "," << d;
  csv << ",mean,std\n";
  md << "# Unseen-domain mIoU (%)\n\n| Method | PCL | UPCL | HPCL | Runs |";
  for (const auto& d : domains) md << " " << d << " |";
  md << " Mean |\n|---|---|---|---|---|";
  for (std::size_t d = 0; d < domains.size(); ++d) md << "---|";
  md << "---|\n";
  for (const auto& row : summary.rows) {
    const bool p = losses::uses_pcl(row.ablation), u = losses::uses_upcl(row.ablation),
               h = losses::uses_hpcl(row.ablation);
    const auto name = losses::to_string(row.ablation);
    csv << name << "," << p << "," << u << "," << h << "," << row.runs;
    md << "| " << name << " | " << mark(p) << " | " << mark(u) << " | " << mark(h) << " | " << row.runs << " |";
    for (auto v : row.domain_miou) {
      csv << "," << num(v);
      md << " " << num(v, "%.1f") << " |";
    }
    csv << "," << num(row.mean) << "," << num(row.stddev) << "\n";
    md << " " << num(row.mean, "%.1f") << " &plusmn; " << num(row.stddev, "%.1f") << " |\n";
  }
  if (!summary.absent.empty()) {
    md << "\n## Absent runs\n\n";
    for (const auto& a : summary.absent) md << "- " << a << "\n";
  }

  std::vector<Series> loss_series, miou_series;
  for (const auto& r : runs) {
    Series s{r.label, {}, {}};
    const std::size_t stride = std::max<std::size_t>(1, r.loss_iter.size() / 200);
    for (std::size_t i = 0; i < r.loss_iter.size(); i += stride) {
      s.x.push_back(r.loss_iter[i]);
      s.y.push_back(r.loss_total[i]);
    }
    loss_series.push_back(std::move(s));
    Series m{r.label, {}, {}};
    for (const auto& [iter, per_domain] : r.miou) {
      m.x.push_back(static_cast<double>(iter));
      m.y.push_back(100.0 * unseen_mean(per_domain));
    }
    miou_series.push_back(std::move(m));
  }

  fs::create_directories(out_dir);
  write_file(out_dir / "summary.csv", csv.str());
  write_file(out_dir / "summary.md", md.str());
  write_file(out_dir / "loss_curves.svg", svg_line_plot("Training loss", "iteration", "total loss", loss_series));
  write_file(out_dir / "miou_curves.svg",
             svg_line_plot("Unseen-domain mIoU", "iteration", "mean mIoU (%)", miou_series));
  return summary;
}

}  // namespace cdpcl::evalreport
