// SPDX-License-Identifier: Apache-2.0
#include "mgpc/metrics.hpp"

#include <cstdio>
#include <fstream>

#include "mgpc/error.hpp"

namespace mgpc::metrics {

namespace {

void require_nonempty(const PointCloud& a, const PointCloud& b, const char* op) {
  if (a.empty() || b.empty()) throw InvalidArgument(std::string(op) + ": empty cloud");
}

template <typename Fn>
double directed_mean(const PointCloud& from, const PointCloud& to, Fn&& term) {
  const auto nn = nearest_neighbors(to, from);
  double sum = 0.0;
  for (const Nearest& n : nn) sum += term(n.dist2);
  return sum / static_cast<double>(from.size());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double chamfer_l2(const PointCloud& a, const PointCloud& b) {
  require_nonempty(a, b, "chamfer_l2");
  auto sq = [](double d2) { return d2; };
  return directed_mean(a, b, sq) + directed_mean(b, a, sq);
}

double chamfer_l1(const PointCloud& a, const PointCloud& b) {
  require_nonempty(a, b, "chamfer_l1");
  auto dist = [](double d2) { return std::sqrt(d2); };
  return 0.5 * (directed_mean(a, b, dist) + directed_mean(b, a, dist));
}

double hyper_cd(const PointCloud& a, const PointCloud& b, double alpha) {
  require_nonempty(a, b, "hyper_cd");
  if (!(alpha > 0.0)) throw InvalidArgument("hyper_cd: alpha must be positive");
  auto term = [alpha](double d2) { return hyperbolic_term(std::sqrt(d2), alpha); };
  return directed_mean(a, b, term) + directed_mean(b, a, term);
}

FScore f_score_detail(const PointCloud& pred, const PointCloud& gt, double threshold) {
  require_nonempty(pred, gt, "f_score");
  if (!(threshold > 0.0)) throw InvalidArgument("f_score: threshold must be positive");
  const double t2 = threshold * threshold;
  auto within = [t2](double d2) { return d2 <= t2 ? 1.0 : 0.0; };
  FScore s;
  s.precision = directed_mean(pred, gt, within);
  s.recall = directed_mean(gt, pred, within);
  s.f = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

double f_score(const PointCloud& pred, const PointCloud& gt, double threshold) {
  return f_score_detail(pred, gt, threshold).f;
}

SampleMetrics evaluate_pair(const PointCloud& pred, const PointCloud& gt, double threshold) {
  return {chamfer_l1(pred, gt), chamfer_l2(pred, gt), f_score(pred, gt, threshold)};
}

MetricsReport build_report(std::vector<MetricsRow> rows) {
  MetricsReport report;
  report.rows = std::move(rows);
  auto add = [](Aggregate& agg, const SampleMetrics& m) {
    ++agg.count;
    agg.mean.cd_l1 += m.cd_l1;
    agg.mean.cd_l2 += m.cd_l2;
    agg.mean.f_score += m.f_score;
  };
  auto finish = [](Aggregate& agg) {
    if (agg.count == 0) return;
    const double n = static_cast<double>(agg.count);
    agg.mean.cd_l1 /= n;
    agg.mean.cd_l2 /= n;
    agg.mean.f_score /= n;
  };
  for (const MetricsRow& r : report.rows) {
    add(report.per_category[r.category_id], r.values);
    add(report.overall, r.values);
  }
  for (auto& [id, agg] : report.per_category) finish(agg);
  finish(report.overall);
  return report;
}

void write_rows_csv(const std::string& path, const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "sample_id,category_id,cd_l1_x1000,cd_l2_x1000,f_score\n";
  for (const MetricsRow& r : report.rows) {
    out << r.sample_id << ',' << r.category_id << ',' << fmt(r.values.cd_l1 * kReportCdScale) << ','
        << fmt(r.values.cd_l2 * kReportCdScale) << ',' << fmt(r.values.f_score) << '\n';
  }
  if (!out) throw IoError("write failed on '" + path + "'");
}

void write_summary_csv(const std::string& path, const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "scope,category_id,count,cd_l1_x1000,cd_l2_x1000,f_score\n";
  auto row = [&](const std::string& scope, const std::string& id, const Aggregate& a) {
    out << scope << ',' << id << ',' << a.count << ',' << fmt(a.mean.cd_l1 * kReportCdScale) << ','
        << fmt(a.mean.cd_l2 * kReportCdScale) << ',' << fmt(a.mean.f_score) << '\n';
  };
  for (const auto& [id, agg] : report.per_category) row("category", std::to_string(id), agg);
  row("overall", "", report.overall);
  if (!out) throw IoError("write failed on '" + path + "'");
}

}  // namespace mgpc::metrics
