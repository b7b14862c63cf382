#include "crashnarr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>

#include "crashnarr/error.hpp"
#include "crashnarr/jsonl.hpp"

namespace crashnarr {
namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(Errc::LengthMismatch, std::string(what) + ": lengths " + std::to_string(a) +
                                          " and " + std::to_string(b) + " differ");
  }
}

struct Columns {
  std::vector<Prediction> predicted;
  std::vector<LabelToken> gold;
};

Columns columns(std::span<const PredictionRecord> records) {
  Columns c;
  for (const auto& r : records) {
    if (r.dropped) continue;
    c.predicted.push_back(r.predicted);
    c.gold.push_back(r.gold);
  }
  return c;
}

// Merge sort on `v` counting exchanges (discordant pairs for Knight's method).
std::int64_t sort_count_swaps(std::vector<double>& v, std::vector<double>& buf, std::size_t lo,
                              std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = sort_count_swaps(v, buf, lo, mid) + sort_count_swaps(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<std::int64_t>(mid - i);
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

// Sum of t(t-1)/2 over runs of equal values in a sorted sequence.
std::int64_t tied_pairs(const std::vector<double>& sorted) {
  std::int64_t total = 0;
  std::int64_t run = 1;
  for (std::size_t i = 1; i <= sorted.size(); ++i) {
    if (i < sorted.size() && sorted[i] == sorted[i - 1]) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double accuracy(std::span<const Prediction> predicted, std::span<const LabelToken> gold,
                const LabelSet& exclude) {
  check_lengths(predicted.size(), gold.size(), "accuracy");
  std::size_t n = 0, correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (exclude.contains(gold[i])) continue;
    ++n;
    if (predicted[i] && *predicted[i] == gold[i]) ++correct;
  }
  if (n == 0) throw Error(Errc::EmptyAfterExclusion, "no examples left after exclusion");
  return static_cast<double>(correct) / static_cast<double>(n);
}

double accuracy(std::span<const PredictionRecord> records, const LabelSet& exclude) {
  const Columns c = columns(records);
  return accuracy(c.predicted, c.gold, exclude);
}

double macro_f1(std::span<const Prediction> predicted, std::span<const LabelToken> gold,
                const LabelSet& exclude, F1Average average,
                const std::vector<LabelToken>& label_space) {
  check_lengths(predicted.size(), gold.size(), "macro_f1");
  struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0;
  };
  std::map<LabelToken, Counts> counts;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (exclude.contains(gold[i])) continue;
    ++n;
    const auto& p = predicted[i];
    if (p && *p == gold[i]) {
      ++counts[gold[i]].tp;
    } else {
      ++counts[gold[i]].fn;
      if (p) ++counts[*p].fp;
    }
  }
  if (n == 0) throw Error(Errc::EmptyAfterExclusion, "no examples left after exclusion");

  std::vector<LabelToken> categories;
  if (average == F1Average::GoldPresent) {
    for (const auto& [label, c] : counts) {
      if (c.tp + c.fn > 0) categories.push_back(label);
    }
  } else {
    for (const auto& label : label_space) {
      if (!exclude.contains(label)) categories.push_back(label);
    }
    if (categories.empty()) throw Error(Errc::EmptyAfterExclusion, "empty label space");
  }
  double sum = 0.0;
  for (const auto& label : categories) {
    const auto it = counts.find(label);
    if (it == counts.end()) continue;
    const auto& c = it->second;
    const std::size_t denom = 2 * c.tp + c.fp + c.fn;
    if (denom > 0) sum += 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
  }
  return sum / static_cast<double>(categories.size());
}

double macro_f1(std::span<const PredictionRecord> records, const LabelSet& exclude,
                F1Average average, const std::vector<LabelToken>& label_space) {
  const Columns c = columns(records);
  return macro_f1(c.predicted, c.gold, exclude, average, label_space);
}

double agreement(std::span<const Prediction> a, std::span<const Prediction> b) {
  check_lengths(a.size(), b.size(), "agreement");
  if (a.empty()) throw Error(Errc::LengthMismatch, "agreement of empty sequences");
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] && b[i] && *a[i] == *b[i]) ++same;
  }
  return static_cast<double>(same) / static_cast<double>(a.size());
}

double ConsistencyMatrix::overall(bool include_ground_truth) const {
  Eigen::Index n = values.rows();
  if (has_ground_truth && !include_ground_truth) --n;
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      sum += values(i, j);
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

bool ConsistencyMatrix::symmetric(double tol) const {
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < values.cols(); ++j) {
      if (std::abs(values(i, j) - values(j, i)) > tol) return false;
    }
  }
  return true;
}

ConsistencyMatrix consistency_matrix(const std::vector<Participant>& participants,
                                     const std::optional<std::vector<LabelToken>>& ground_truth) {
  std::vector<const std::vector<Prediction>*> first;
  std::vector<Prediction> gt;
  ConsistencyMatrix m;
  for (const auto& p : participants) {
    m.participants.push_back(p.id);
    first.push_back(&p.run1);
  }
  if (ground_truth) {
    gt.assign(ground_truth->begin(), ground_truth->end());
    m.participants.push_back(kGroundTruthId);
    first.push_back(&gt);
    m.has_ground_truth = true;
  }
  const auto n = static_cast<Eigen::Index>(first.size());
  m.values = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (ui < participants.size()) {
      const auto& p = participants[ui];
      m.values(i, i) = p.run2.empty() ? std::numeric_limits<double>::quiet_NaN()
                                      : agreement(p.run1, p.run2);
    } else {
      m.values(i, i) = 1.0;
    }
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double a = agreement(*first[ui], *first[static_cast<std::size_t>(j)]);
      m.values(i, j) = a;
      m.values(j, i) = a;
    }
  }
  return m;
}

LabelDistribution label_distribution(std::span<const LabelToken> labels,
                                     const std::vector<LabelToken>& support) {
  std::map<LabelToken, std::size_t> index;
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (!index.emplace(support[i], i).second) {
      throw Error(Errc::SupportMismatch, "duplicate support member " + support[i].str());
    }
  }
  LabelDistribution d{support, std::vector<double>(support.size(), 0.0)};
  for (const auto& l : labels) {
    const auto it = index.find(l);
    if (it == index.end()) throw Error(Errc::UnknownLabel, "label " + l.str() + " not in support");
    d.probabilities[it->second] += 1.0;
  }
  if (!labels.empty()) {
    for (auto& p : d.probabilities) p /= static_cast<double>(labels.size());
  }
  return d;
}

double js_divergence(const LabelDistribution& p, const LabelDistribution& q) {
  if (p.support != q.support || p.probabilities.size() != q.probabilities.size()) {
    throw Error(Errc::SupportMismatch, "distributions have different supports");
  }
  double js = 0.0;
  for (std::size_t i = 0; i < p.probabilities.size(); ++i) {
    const double a = p.probabilities[i];
    const double b = q.probabilities[i];
    const double m = 0.5 * (a + b);
    if (a > 0.0) js += 0.5 * a * std::log2(a / m);
    if (b > 0.0) js += 0.5 * b * std::log2(b / m);
  }
  return std::clamp(js, 0.0, 1.0);
}

double kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  check_lengths(x.size(), y.size(), "kendall_tau_b");
  const std::size_t n = x.size();
  if (n < 2) throw Error(Errc::TooFewPairs, "tau needs at least 2 pairs");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = x[order[i]];
    ys[i] = y[order[i]];
  }
  const auto n0 = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  const std::int64_t n1 = tied_pairs(xs);
  std::int64_t n3 = 0;  // tied in both
  for (std::size_t i = 0, run = 1; i < n; ++i) {
    if (i + 1 < n && xs[i + 1] == xs[i] && ys[i + 1] == ys[i]) {
      ++run;
    } else {
      n3 += static_cast<std::int64_t>(run * (run - 1) / 2);
      run = 1;
    }
  }
  std::vector<double> buf(n);
  const std::int64_t swaps = sort_count_swaps(ys, buf, 0, n);
  const std::int64_t n2 = tied_pairs(ys);
  if (n0 == n1 || n0 == n2) {
    throw Error(Errc::DegenerateVariance, "one coordinate is constant");
  }
  const std::int64_t s = n0 - n1 - n2 + n3 - 2 * swaps;
  return static_cast<double>(s) /
         std::sqrt(static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2));
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  check_lengths(x.size(), y.size(), "spearman_rho");
  if (x.size() < 2) throw Error(Errc::TooFewPairs, "rho needs at least 2 pairs");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double mean = (static_cast<double>(x.size()) + 1.0) / 2.0;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(Errc::DegenerateVariance, "one coordinate is constant");
  return sxy / std::sqrt(sxx * syy);
}

std::string format_metric(double value) {
  if (std::isnan(value)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", value);
  return buf;
}

std::string EvalReport::to_tsv() const {
  std::string out = "# template_version=" + template_version +
                    " taxonomy_version=" + taxonomy_version + "\n";
  out += "task\tmodel\tsubgroup\texclusion\tmetric\tvalue\n";
  for (const auto& r : rows) {
    out += r.task + '\t' + r.model + '\t' + r.subgroup + '\t' + r.exclusion + '\t' + r.metric +
           '\t' + format_metric(r.value) + '\n';
  }
  return out;
}

void EvalReport::write(const std::filesystem::path& path) const { write_text(path, to_tsv()); }

std::string matrix_to_tsv(const ConsistencyMatrix& m) {
  std::string out = "participant";
  for (const auto& p : m.participants) out += '\t' + p;
  out += '\n';
  for (std::size_t i = 0; i < m.participants.size(); ++i) {
    out += m.participants[i];
    for (std::size_t j = 0; j < m.participants.size(); ++j) {
      out += '\t' + format_metric(m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    out += '\n';
  }
  out += "overall_models\t" + format_metric(m.overall(false)) + '\n';
  if (m.has_ground_truth) out += "overall_with_gt\t" + format_metric(m.overall(true)) + '\n';
  return out;
}

}  // namespace crashnarr
