#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crashnarr/label.hpp"
#include "crashnarr/records.hpp"

namespace crashnarr {

using LabelSet = std::set<LabelToken>;

/// Fraction of predictions equal to gold over examples whose gold is not in
/// `exclude`. Invalid predictions count as wrong. Throws EmptyAfterExclusion.
double accuracy(std::span<const Prediction> predicted, std::span<const LabelToken> gold,
                const LabelSet& exclude = {});
/// Dropped records are skipped.
double accuracy(std::span<const PredictionRecord> records, const LabelSet& exclude = {});

enum class F1Average {
  GoldPresent,  // categories that occur in gold after exclusion
  LabelSpace,   // every category of a supplied label space
};

double macro_f1(std::span<const Prediction> predicted, std::span<const LabelToken> gold,
                const LabelSet& exclude = {}, F1Average average = F1Average::GoldPresent,
                const std::vector<LabelToken>& label_space = {});
double macro_f1(std::span<const PredictionRecord> records, const LabelSet& exclude = {},
                F1Average average = F1Average::GoldPresent,
                const std::vector<LabelToken>& label_space = {});

/// Fraction of positions with identical valid labels. Throws LengthMismatch.
double agreement(std::span<const Prediction> a, std::span<const Prediction> b);

/// Prediction sequences of one model over a fixed example list.
struct Participant {
  std::string id;
  std::vector<Prediction> run1;
  std::vector<Prediction> run2;  // empty when no repeat run exists; diagonal is then NaN
};

inline constexpr const char* kGroundTruthId = "GT";

struct ConsistencyMatrix {
  std::vector<std::string> participants;
  Eigen::MatrixXd values;
  bool has_ground_truth = false;  // GT, when present, is the last participant

  /// Mean of the strictly upper triangle; without GT unless asked.
  double overall(bool include_ground_truth = false) const;
  bool symmetric(double tol = 1e-12) const;
};

/// Off-diagonal (i,j) = agreement(run1_i, run1_j); diagonal = agreement(run1_i, run2_i).
/// With `ground_truth`, a GT participant with diagonal 1.0 is appended.
ConsistencyMatrix consistency_matrix(const std::vector<Participant>& participants,
                                     const std::optional<std::vector<LabelToken>>& ground_truth =
                                         std::nullopt);

struct LabelDistribution {
  std::vector<LabelToken> support;
  std::vector<double> probabilities;
};

/// Normalized frequencies over `support`, keeping zero-frequency members.
/// Throws UnknownLabel for labels outside the support.
LabelDistribution label_distribution(std::span<const LabelToken> labels,
                                     const std::vector<LabelToken>& support);

/// Base-2 Jensen-Shannon divergence. Throws SupportMismatch.
double js_divergence(const LabelDistribution& p, const LabelDistribution& q);

/// Tau-b in O(n log n). Throws TooFewPairs for n < 2 and DegenerateVariance
/// when either coordinate is constant.
double kendall_tau_b(std::span<const double> x, std::span<const double> y);

/// Pearson correlation of average ranks.
double spearman_rho(std::span<const double> x, std::span<const double> y);

/// Structured metric rows: task, model, subgroup, exclusion, metric, value.
struct MetricRow {
  std::string task;
  std::string model;
  std::string subgroup;
  std::string exclusion;
  std::string metric;
  double value = 0.0;
};

struct EvalReport {
  std::string template_version;
  std::string taxonomy_version;
  std::vector<MetricRow> rows;

  std::string to_tsv() const;
  void write(const std::filesystem::path& path) const;
};

/// Fixed-precision text for report values.
std::string format_metric(double value);

std::string matrix_to_tsv(const ConsistencyMatrix& m);

}  // namespace crashnarr
