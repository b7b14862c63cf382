#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "crashnarr/metrics.hpp"
#include "crashnarr/records.hpp"

namespace crashnarr {

/// One transcribed reference result.
struct BaselineRow {
  std::string model;
  std::string steps;
  std::string task;
  std::string subgroup;
  std::string metric;
  std::string value;  // verbatim text, e.g. "96.1" or "< 1.0"
  std::string citation;
};

inline constexpr const char* kBaselineHeader = "model\tsteps\ttask\tsubgroup\tmetric\tvalue\tcitation";

std::vector<BaselineRow> load_baselines(const std::filesystem::path& path);
std::filesystem::path default_baselines_path();

/// One message per row that lacks a citation or a value; empty when clean.
std::vector<std::string> lint_baselines(const std::vector<BaselineRow>& rows);

/// Baseline rows first (values copied verbatim), then the run's metric rows.
/// Columns: source, model, steps, task, subgroup, metric, value, citation.
std::string baseline_comparison_tsv(const std::vector<BaselineRow>& baselines,
                                    const std::vector<MetricRow>& run_rows);

/// Metric rows read back from an EvalReport file.
std::vector<MetricRow> read_metric_rows(const std::filesystem::path& path);

/// Complementary code pair whose mass should be compared between GT and predictions.
struct PairShift {
  LabelToken a, b;
  double gt_a = 0.0, gt_b = 0.0, pred_a = 0.0, pred_b = 0.0;
  bool flagged = false;  // mass moved from one code to the other
};

struct DistributionAnalysis {
  LabelDistribution ground_truth;
  LabelDistribution predicted;
  double jsd = 0.0;
  std::size_t used = 0;     // aligned positions inside the support
  std::size_t skipped = 0;  // positions with a label outside the support, or invalid
  std::vector<PairShift> shifts;
  std::string to_tsv() const;
};

/// Code pairs checked by default: (1,2) and (6,7).
std::vector<std::pair<LabelToken, LabelToken>> default_complementary_pairs();

/// Histograms of GT and predicted labels over `support` plus their JS divergence.
/// Positions where either label falls outside the support are skipped. A pair is
/// flagged when the GT-to-prediction shifts of its two codes have opposite signs
/// and both exceed `min_shift`.
DistributionAnalysis analyze_distributions(
    const std::vector<LabelToken>& gt, const std::vector<Prediction>& predicted,
    const std::vector<LabelToken>& support,
    const std::vector<std::pair<LabelToken, LabelToken>>& pairs = default_complementary_pairs(),
    double min_shift = 0.005);

/// Codes "1".."n".
std::vector<LabelToken> numeric_support(int first, int last);

struct VehiclePairRow {
  double gt1 = 0.0, gt2 = 0.0, pred1 = 0.0, pred2 = 0.0;
};

/// Kendall tau-b between the two vehicles' codes, for GT and for predictions.
/// The difference is descriptive; no direction is preferred.
struct PairAnalysis {
  std::size_t rows = 0;
  double tau_ground_truth = 0.0;
  double tau_predicted = 0.0;
  double abs_difference = 0.0;
  std::string to_tsv() const;
};

PairAnalysis analyze_pairs(const std::vector<VehiclePairRow>& rows);

/// Predicted-label histogram over cases whose gold is the Unknown class.
struct UnknownAnalysis {
  std::size_t cases = 0;
  std::size_t invalid = 0;
  std::map<LabelToken, std::size_t> counts;  // every label of the space, zeros kept
  std::vector<LabelToken> watched;           // reported on their own lines
  std::string to_tsv() const;
};

UnknownAnalysis analyze_unknown(const std::vector<PredictionRecord>& records,
                                const std::vector<LabelToken>& label_space,
                                const LabelSet& unknown = {LabelToken("9")},
                                const std::vector<LabelToken>& watched = {LabelToken("2"),
                                                                          LabelToken("6")});

}  // namespace crashnarr
