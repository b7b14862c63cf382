#include "crashnarr/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "crashnarr/csv.hpp"
#include "crashnarr/error.hpp"
#include "crashnarr/jsonl.hpp"
#include "crashnarr/taxonomy.hpp"

namespace crashnarr {
namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string> data_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    out.push_back(line);
  }
  return out;
}

}  // namespace

std::filesystem::path default_baselines_path() {
  return default_asset_dir() / "baselines" / "reference_baselines.tsv";
}

std::vector<BaselineRow> load_baselines(const std::filesystem::path& path) {
  const auto lines = data_lines(read_text(path));
  if (lines.empty() || lines[0] != kBaselineHeader) {
    throw Error(Errc::InvalidRecord, "baseline file " + path.string() + " has an unexpected header");
  }
  std::vector<BaselineRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto f = split_tabs(lines[i]);
    if (f.size() == 6) f.emplace_back();  // missing citation column; caught by lint
    if (f.size() != 7) {
      throw Error(Errc::InvalidRecord, "baseline row " + std::to_string(i) + " has " +
                                           std::to_string(f.size()) + " fields");
    }
    rows.push_back({f[0], f[1], f[2], f[3], f[4], f[5], f[6]});
  }
  return rows;
}

std::vector<std::string> lint_baselines(const std::vector<BaselineRow>& rows) {
  std::vector<std::string> issues;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const std::string where = "row " + std::to_string(i + 1) + " (" + r.model + " " + r.metric + ")";
    if (r.citation.find_first_not_of(" \t") == std::string::npos) {
      issues.push_back(where + ": missing citation");
    }
    if (r.value.empty()) issues.push_back(where + ": missing value");
  }
  return issues;
}

std::string baseline_comparison_tsv(const std::vector<BaselineRow>& baselines,
                                    const std::vector<MetricRow>& run_rows) {
  std::ostringstream os;
  os << "source\tmodel\tsteps\ttask\tsubgroup\tmetric\tvalue\tcitation\n";
  for (const auto& b : baselines) {
    os << "baseline\t" << b.model << '\t' << b.steps << '\t' << b.task << '\t' << b.subgroup
       << '\t' << b.metric << '\t' << b.value << '\t' << b.citation << '\n';
  }
  for (const auto& r : run_rows) {
    std::string subgroup = r.subgroup;
    if (r.exclusion != "none" && !r.exclusion.empty()) subgroup += "|" + r.exclusion;
    os << "run\t" << r.model << "\t-\t" << r.task << '\t' << subgroup << '\t' << r.metric << '\t'
       << format_metric(r.value) << "\tthis run\n";
  }
  return os.str();
}

std::vector<MetricRow> read_metric_rows(const std::filesystem::path& path) {
  const auto lines = data_lines(read_text(path));
  if (lines.empty() || lines[0] != "task\tmodel\tsubgroup\texclusion\tmetric\tvalue") {
    throw Error(Errc::InvalidRecord, "metric report " + path.string() + " has an unexpected header");
  }
  std::vector<MetricRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_tabs(lines[i]);
    if (f.size() != 6) throw Error(Errc::InvalidRecord, "metric row " + std::to_string(i) + " malformed");
    MetricRow r{f[0], f[1], f[2], f[3], f[4], 0.0};
    r.value = f[5] == "nan" ? std::nan("") : std::stod(f[5]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<std::pair<LabelToken, LabelToken>> default_complementary_pairs() {
  return {{LabelToken("1"), LabelToken("2")}, {LabelToken("6"), LabelToken("7")}};
}

std::vector<LabelToken> numeric_support(int first, int last) {
  std::vector<LabelToken> out;
  for (int i = first; i <= last; ++i) out.emplace_back(std::to_string(i));
  return out;
}

DistributionAnalysis analyze_distributions(
    const std::vector<LabelToken>& gt, const std::vector<Prediction>& predicted,
    const std::vector<LabelToken>& support,
    const std::vector<std::pair<LabelToken, LabelToken>>& pairs, double min_shift) {
  if (gt.size() != predicted.size()) {
    throw Error(Errc::LengthMismatch, "ground truth and predictions differ in length");
  }
  const std::set<LabelToken> in_support(support.begin(), support.end());
  std::vector<LabelToken> g, p;
  DistributionAnalysis out;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!predicted[i] || !in_support.count(gt[i]) || !in_support.count(*predicted[i])) {
      ++out.skipped;
      continue;
    }
    g.push_back(gt[i]);
    p.push_back(*predicted[i]);
  }
  out.used = g.size();
  out.ground_truth = label_distribution(g, support);
  out.predicted = label_distribution(p, support);
  out.jsd = js_divergence(out.ground_truth, out.predicted);
  auto mass = [&](const LabelDistribution& d, const LabelToken& t) {
    const auto it = std::find(d.support.begin(), d.support.end(), t);
    return it == d.support.end() ? 0.0 : d.probabilities[static_cast<std::size_t>(it - d.support.begin())];
  };
  for (const auto& [a, b] : pairs) {
    PairShift s{a, b, mass(out.ground_truth, a), mass(out.ground_truth, b),
                mass(out.predicted, a), mass(out.predicted, b), false};
    const double da = s.pred_a - s.gt_a;
    const double db = s.pred_b - s.gt_b;
    s.flagged = da * db < 0.0 && std::abs(da) >= min_shift && std::abs(db) >= min_shift;
    out.shifts.push_back(s);
  }
  return out;
}

std::string DistributionAnalysis::to_tsv() const {
  std::ostringstream os;
  os << "# used=" << used << " skipped=" << skipped << "\n";
  os << "label\tground_truth\tpredicted\n";
  for (std::size_t i = 0; i < ground_truth.support.size(); ++i) {
    os << ground_truth.support[i] << '\t' << format_metric(ground_truth.probabilities[i]) << '\t'
       << format_metric(predicted.probabilities[i]) << '\n';
  }
  os << "js_divergence\t" << format_metric(jsd) << "\t\n";
  for (const auto& s : shifts) {
    os << "pair_shift " << s.a << '/' << s.b << '\t'
       << format_metric(s.pred_a - s.gt_a) << '/' << format_metric(s.pred_b - s.gt_b) << '\t'
       << (s.flagged ? "flagged" : "ok") << '\n';
  }
  return os.str();
}

PairAnalysis analyze_pairs(const std::vector<VehiclePairRow>& rows) {
  if (rows.size() < 2) throw Error(Errc::TooFewPairs, "need at least 2 two-vehicle cases");
  std::vector<double> g1, g2, p1, p2;
  for (const auto& r : rows) {
    g1.push_back(r.gt1);
    g2.push_back(r.gt2);
    p1.push_back(r.pred1);
    p2.push_back(r.pred2);
  }
  PairAnalysis out;
  out.rows = rows.size();
  out.tau_ground_truth = kendall_tau_b(g1, g2);
  out.tau_predicted = kendall_tau_b(p1, p2);
  out.abs_difference = std::abs(out.tau_ground_truth - out.tau_predicted);
  return out;
}

std::string PairAnalysis::to_tsv() const {
  std::ostringstream os;
  os << "metric\tvalue\n"
     << "pairs\t" << rows << '\n'
     << "tau_ground_truth\t" << format_metric(tau_ground_truth) << '\n'
     << "tau_predicted\t" << format_metric(tau_predicted) << '\n'
     << "abs_difference\t" << format_metric(abs_difference) << '\n';
  return os.str();
}

UnknownAnalysis analyze_unknown(const std::vector<PredictionRecord>& records,
                                const std::vector<LabelToken>& label_space, const LabelSet& unknown,
                                const std::vector<LabelToken>& watched) {
  UnknownAnalysis out;
  out.watched = watched;
  for (const auto& t : label_space) out.counts[t] = 0;
  for (const auto& r : records) {
    if (r.dropped || !unknown.count(r.gold)) continue;
    ++out.cases;
    if (!r.predicted) {
      ++out.invalid;
      continue;
    }
    const auto it = out.counts.find(*r.predicted);
    if (it == out.counts.end()) {
      throw Error(Errc::UnknownLabel, "prediction " + r.predicted->str() + " outside the label space");
    }
    ++it->second;
  }
  if (out.cases == 0) throw Error(Errc::EmptyAfterExclusion, "no gold-Unknown cases");
  return out;
}

std::string UnknownAnalysis::to_tsv() const {
  std::ostringstream os;
  const double n = static_cast<double>(cases);
  os << "# gold_unknown_cases=" << cases << " invalid=" << invalid << "\n";
  os << "predicted\tcount\tshare\n";
  for (const auto& [label, count] : counts) {
    os << label << '\t' << count << '\t' << format_metric(count / n) << '\n';
  }
  os << "invalid\t" << invalid << '\t' << format_metric(invalid / n) << '\n';
  for (const auto& w : watched) {
    const auto it = counts.find(w);
    const std::size_t c = it == counts.end() ? 0 : it->second;
    os << "watch_category_" << w << '\t' << c << '\t' << format_metric(c / n) << '\n';
  }
  return os.str();
}

}  // namespace crashnarr
