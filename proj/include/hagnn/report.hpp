#pragma once

// Rendering of evaluation results: metrics JSON with per-fold values and
// mean/std aggregates, a plain-text summary table, and per-fold ROC curves as
// CSV and static SVG.

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hagnn/csv.hpp"
#include "hagnn/errors.hpp"
#include "hagnn/metrics.hpp"

namespace hagnn {

namespace detail {

inline nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  if (v.has_value()) return *v;
  return nullptr;
}

inline std::optional<double> opt_from_json(const nlohmann::ordered_json& j,
                                           const std::string& key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace detail

inline nlohmann::ordered_json metrics_to_json(const MetricsReport& report) {
  report.validate();
  nlohmann::ordered_json j;
  j["per_fold"] = nlohmann::ordered_json::array();
  for (const FoldMetrics& f : report.per_fold) {
    nlohmann::ordered_json fold;
    fold["acc"] = f.acc;
    fold["auc_roc"] = f.auc_roc;
    fold["ba"] = f.ba;
    fold["cn_to_mci"] = detail::opt_json(f.cn_to_mci);
    fold["mci_to_ad"] = detail::opt_json(f.mci_to_ad);
    j["per_fold"].push_back(fold);
  }
  j["mean"]["acc"] = report.mean_acc;
  j["mean"]["auc_roc"] = report.mean_auc;
  j["mean"]["ba"] = report.mean_ba;
  j["mean"]["cn_to_mci"] = detail::opt_json(report.cn_to_mci);
  j["mean"]["mci_to_ad"] = detail::opt_json(report.mci_to_ad);
  j["std"]["acc"] = report.std_acc;
  j["std"]["auc_roc"] = report.std_auc;
  j["std"]["ba"] = report.std_ba;
  // Conversion accuracies are pooled over folds, not averaged.
  j["std"]["cn_to_mci"] = report.cn_to_mci.has_value()
                              ? nlohmann::ordered_json(0.0)
                              : nlohmann::ordered_json(nullptr);
  j["std"]["mci_to_ad"] = report.mci_to_ad.has_value()
                              ? nlohmann::ordered_json(0.0)
                              : nlohmann::ordered_json(nullptr);
  return j;
}

inline MetricsReport metrics_from_json(const nlohmann::ordered_json& j) {
  MetricsReport report;
  try {
    for (const auto& fold : j.at("per_fold")) {
      FoldMetrics f;
      f.acc = fold.at("acc").get<double>();
      f.auc_roc = fold.at("auc_roc").get<double>();
      f.ba = fold.at("ba").get<double>();
      f.cn_to_mci = detail::opt_from_json(fold, "cn_to_mci");
      f.mci_to_ad = detail::opt_from_json(fold, "mci_to_ad");
      report.per_fold.push_back(f);
    }
    report.mean_acc = j.at("mean").at("acc").get<double>();
    report.mean_auc = j.at("mean").at("auc_roc").get<double>();
    report.mean_ba = j.at("mean").at("ba").get<double>();
    report.cn_to_mci = detail::opt_from_json(j.at("mean"), "cn_to_mci");
    report.mci_to_ad = detail::opt_from_json(j.at("mean"), "mci_to_ad");
    report.std_acc = j.at("std").at("acc").get<double>();
    report.std_auc = j.at("std").at("auc_roc").get<double>();
    report.std_ba = j.at("std").at("ba").get<double>();
  } catch (const nlohmann::ordered_json::exception& e) {
    throw IoError(std::string("metrics json: ") + e.what());
  }
  report.validate();
  return report;
}

inline void write_metrics_json(const std::string& path,
                               const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << metrics_to_json(report).dump(2) << '\n';
}

inline MetricsReport read_metrics_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::ordered_json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  return metrics_from_json(j);
}

inline std::string format_metric_cell(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f ± %.3f", mean, std);
  return buf;
}

namespace detail {

inline std::string pooled_cell(const std::optional<double>& v) {
  if (!v.has_value()) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", *v);
  return buf;
}

inline void pad_to(std::string& s, std::size_t width) {
  while (s.size() < width) s.push_back(' ');
}

}  // namespace detail

// Plain-text one-row summary table (mean ± std over folds; conversion
// accuracies pooled over all test predictions).
inline std::string render_table(const MetricsReport& report,
                                const std::string& model_name) {
  report.validate();
  std::vector<std::string> header = {"Model",    "Acc.",     "AUC-ROC",
                                     "BA",       "CN to MCI", "MCI to AD"};
  std::vector<std::string> row = {
      model_name,
      format_metric_cell(report.mean_acc, report.std_acc),
      format_metric_cell(report.mean_auc, report.std_auc),
      format_metric_cell(report.mean_ba, report.std_ba),
      detail::pooled_cell(report.cn_to_mci),
      detail::pooled_cell(report.mci_to_ad)};
  std::string out;
  for (std::size_t col = 0; col < header.size(); ++col) {
    std::size_t width = std::max(header[col].size(), row[col].size()) + 2;
    detail::pad_to(header[col], width);
    detail::pad_to(row[col], width);
  }
  for (const std::string& h : header) out += h;
  out += '\n';
  for (const std::string& r : row) out += r;
  out += '\n';
  return out;
}

inline void write_roc_csv(const std::string& path,
                          const std::vector<RocPoint>& points) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "fpr,tpr,threshold\n";
  for (const RocPoint& p : points)
    out << format_double(p.fpr) << ',' << format_double(p.tpr) << ','
        << format_double(p.threshold) << '\n';
}

inline std::vector<RocPoint> read_roc_csv(const std::string& path) {
  CsvTable table = read_numeric_csv(path, true);
  std::vector<RocPoint> points;
  for (const auto& row : table.rows) {
    if (row.size() != 3) throw IoError(path + ": expected 3 columns");
    points.push_back({row[0], row[1], row[2]});
  }
  return points;
}

// Static 440x440 SVG of one ROC curve with the chance diagonal.
inline void write_roc_svg(const std::string& path,
                          const std::vector<RocPoint>& points) {
  if (points.size() < 2)
    throw PreconditionError("write_roc_svg: need at least two curve points");
  auto px = [](double fpr) { return 40.0 + 360.0 * fpr; };
  auto py = [](double tpr) { return 400.0 - 360.0 * tpr; };
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"440\" "
         "height=\"440\" viewBox=\"0 0 440 440\">\n"
      << "<rect x=\"40\" y=\"40\" width=\"360\" height=\"360\" fill=\"none\" "
         "stroke=\"#444\"/>\n"
      << "<line x1=\"40\" y1=\"400\" x2=\"400\" y2=\"40\" stroke=\"#999\" "
         "stroke-dasharray=\"6,6\"/>\n"
      << "<text x=\"220\" y=\"430\" text-anchor=\"middle\" font-size=\"14\">"
         "false positive rate</text>\n"
      << "<text x=\"14\" y=\"220\" text-anchor=\"middle\" font-size=\"14\" "
         "transform=\"rotate(-90 14 220)\">true positive rate</text>\n"
      << "<polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"2\" "
         "points=\"";
  char buf[64];
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%s%.2f,%.2f", i ? " " : "",
                  px(points[i].fpr), py(points[i].tpr));
    out << buf;
  }
  out << "\"/>\n</svg>\n";
}

}  // namespace hagnn
