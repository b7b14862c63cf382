#include "crashnarr/robustness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "crashnarr/error.hpp"
#include "crashnarr/metrics.hpp"
#include "crashnarr/pipeline.hpp"
#include "crashnarr/rng.hpp"

namespace crashnarr {
namespace {

using nlohmann::json;

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  return idx;
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

double mean_of(const std::vector<std::optional<double>>& v) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& x : v) {
    if (x) {
      sum += *x;
      ++n;
    }
  }
  return n == 0 ? std::nan("") : sum / static_cast<double>(n);
}

std::string join_values(const std::vector<std::optional<double>>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += v[i] ? format_metric(*v[i]) : "fail";
  }
  return out;
}

struct JournalEntry {
  std::optional<double> accuracy, macro_f1;
  std::string error;
};

using JournalKey = std::pair<std::size_t, int>;  // point index, repetition

std::map<JournalKey, JournalEntry> read_journal(const std::filesystem::path& path,
                                                const std::string& fingerprint) {
  std::map<JournalKey, JournalEntry> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      continue;  // torn final line from an interrupted write
    }
    if (!j.is_object() || j.value("fingerprint", "") != fingerprint) continue;
    JournalEntry e;
    if (j.contains("error")) {
      e.error = j.at("error").get<std::string>();
    } else {
      e.accuracy = j.at("accuracy").get<double>();
      e.macro_f1 = j.at("macro_f1").get<double>();
    }
    out[{j.at("point").get<std::size_t>(), j.at("rep").get<int>()}] = e;
  }
  return out;
}

}  // namespace

NoisedExamples inject_label_noise(const std::vector<LabeledExample>& examples, double ratio,
                                  std::uint64_t seed, const LabelSpaceFn& label_space,
                                  bool allow_original) {
  if (!(ratio >= 0.0 && ratio <= kMaxNoiseRatio)) {
    throw Error(Errc::RatioOutOfRange,
                "noise ratio " + std::to_string(ratio) + " outside [0, 0.4]");
  }
  NoisedExamples out{examples, {}};
  const auto count = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(examples.size()) + 1e-9));
  if (count == 0) return out;
  const auto order = permutation(examples.size(), mix_seed(seed, 0x401));
  out.changed.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(out.changed.begin(), out.changed.end());
  // Replacement draws use one stream per example index so they do not depend on the ratio.
  for (std::size_t i : out.changed) {
    auto& ex = out.examples[i];
    std::vector<LabelToken> space = label_space(ex);
    if (!allow_original) std::erase(space, ex.gold);
    if (space.empty()) {
      throw Error(Errc::RatioOutOfRange, ex.id() + ": label space has no alternative label");
    }
    Rng rng(mix_seed(seed, 0x402, i));
    ex.gold = space[rng.index(space.size())];
  }
  return out;
}

NoisedExamples inject_label_noise(const std::vector<LabeledExample>& examples, double ratio,
                                  std::uint64_t seed, const Taxonomy& taxonomy,
                                  bool allow_original) {
  return inject_label_noise(
      examples, ratio, seed,
      [&](const LabeledExample& ex) { return allowed_labels(taxonomy, ex); }, allow_original);
}

std::vector<LabeledExample> subsample(const std::vector<LabeledExample>& examples, std::size_t n,
                                      std::uint64_t seed) {
  if (n > examples.size()) {
    throw Error(Errc::SampleTooLarge, "requested " + std::to_string(n) + " of " +
                                          std::to_string(examples.size()) + " examples");
  }
  const auto order = permutation(examples.size(), mix_seed(seed, 0x5AB));
  std::vector<LabeledExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(examples[order[i]]);
  return out;
}

std::string_view sweep_axis_name(SweepAxis axis) {
  return axis == SweepAxis::NoiseRatio ? "noise_ratio" : "train_size";
}

SweepAxis parse_sweep_axis(std::string_view name) {
  if (name == "noise_ratio") return SweepAxis::NoiseRatio;
  if (name == "train_size") return SweepAxis::TrainSize;
  throw Error(Errc::InvalidConfig, "unknown sweep axis '" + std::string(name) + "'");
}

void SweepSpec::validate() const {
  if (points.empty()) throw Error(Errc::InvalidConfig, "sweep has no points");
  if (repetitions < 1) throw Error(Errc::InvalidConfig, "repetitions must be >= 1");
  for (double p : points) {
    if (axis == SweepAxis::NoiseRatio && !(p >= 0.0 && p <= kMaxNoiseRatio)) {
      throw Error(Errc::RatioOutOfRange, "noise ratio " + std::to_string(p) + " outside [0, 0.4]");
    }
    if (axis == SweepAxis::TrainSize && (p < 1.0 || p != std::floor(p))) {
      throw Error(Errc::InvalidConfig, "train sizes must be integers >= 1");
    }
  }
  train.validate();
}

json SweepSpec::to_json() const {
  return {{"axis", std::string(sweep_axis_name(axis))},
          {"points", points},
          {"seed", seed},
          {"repetitions", repetitions},
          {"train", train.to_json()}};
}

SweepSpec SweepSpec::from_json(const json& doc) {
  SweepSpec s;
  try {
    s.axis = parse_sweep_axis(doc.at("axis").get<std::string>());
    s.points = doc.at("points").get<std::vector<double>>();
    s.seed = doc.value("seed", s.seed);
    s.repetitions = doc.value("repetitions", s.repetitions);
    if (doc.contains("train")) s.train = TrainConfig::from_json(doc.at("train"));
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("sweep spec: ") + e.what());
  }
  s.validate();
  return s;
}

double CurvePoint::mean_accuracy() const { return mean_of(accuracy); }
double CurvePoint::mean_macro_f1() const { return mean_of(macro_f1); }

std::string CurveData::to_tsv() const {
  std::string out = std::string(sweep_axis_name(axis)) +
                    "\tmean_accuracy\tmean_macro_f1\taccuracy_per_rep\tmacro_f1_per_rep\n";
  for (const auto& p : points) {
    out += format_metric(p.value) + '\t' + format_metric(p.mean_accuracy()) + '\t' +
           format_metric(p.mean_macro_f1()) + '\t' + join_values(p.accuracy) + '\t' +
           join_values(p.macro_f1) + '\n';
  }
  return out;
}

bool CurveData::operator==(const CurveData& o) const {
  if (axis != o.axis || complete != o.complete || points.size() != o.points.size()) return false;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& a = points[i];
    const auto& b = o.points[i];
    if (a.value != b.value || a.accuracy != b.accuracy || a.macro_f1 != b.macro_f1 ||
        a.errors != b.errors) {
      return false;
    }
  }
  return true;
}

std::string sweep_fingerprint(const SweepSpec& spec, const std::vector<LabeledExample>& train,
                              const std::vector<LabeledExample>& test) {
  std::uint64_t h = fnv1a(spec.to_json().dump());
  for (const auto* pool : {&train, &test}) {
    h = fnv1a("|", h);
    for (const auto& ex : *pool) {
      h = fnv1a(ex.id(), h);
      h = fnv1a(ex.gold.str(), h);
      h = fnv1a(ex.summary, h);
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

CurveData run_sweep(const SweepSpec& spec, const std::vector<LabeledExample>& train_pool,
                    const std::vector<LabeledExample>& test_pool, const TrainEvalFn& train_eval,
                    const Taxonomy& taxonomy, const SweepOptions& options) {
  spec.validate();
  {
    std::set<std::string> train_ids;
    for (const auto& ex : train_pool) train_ids.insert(ex.id());
    for (const auto& ex : test_pool) {
      if (train_ids.contains(ex.id())) {
        throw Error(Errc::InvalidConfig, "train and test pools share example " + ex.id());
      }
    }
  }
  const std::string fingerprint = sweep_fingerprint(spec, train_pool, test_pool);
  std::map<JournalKey, JournalEntry> done;
  std::ofstream journal;
  if (options.journal) {
    if (std::filesystem::exists(*options.journal)) done = read_journal(*options.journal, fingerprint);
    if (options.journal->has_parent_path()) {
      std::filesystem::create_directories(options.journal->parent_path());
    }
    journal.open(*options.journal, std::ios::app);
    if (!journal) throw Error(Errc::IoError, "cannot open journal " + options.journal->string());
  }

  CurveData curve;
  curve.axis = spec.axis;
  std::size_t fresh = 0;
  for (std::size_t pi = 0; pi < spec.points.size(); ++pi) {
    CurvePoint point;
    point.value = spec.points[pi];
    for (int rep = 0; rep < spec.repetitions; ++rep) {
      JournalEntry entry;
      if (auto it = done.find({pi, rep}); it != done.end()) {
        entry = it->second;
      } else {
        if (options.stop_after && fresh >= *options.stop_after) {
          curve.complete = false;
          break;
        }
        const std::uint64_t data_seed = mix_seed(spec.seed, 0xDA7A, static_cast<std::uint64_t>(rep));
        const std::uint64_t train_seed = mix_seed(spec.seed, 0x7EA1, static_cast<std::uint64_t>(rep));
        try {
          std::vector<LabeledExample> train;
          if (spec.axis == SweepAxis::NoiseRatio) {
            train = inject_label_noise(train_pool, point.value, data_seed, taxonomy).examples;
          } else {
            train = subsample(train_pool, static_cast<std::size_t>(point.value), data_seed);
          }
          const PointMetrics m = train_eval(train, test_pool, train_seed);
          entry.accuracy = m.accuracy;
          entry.macro_f1 = m.macro_f1;
        } catch (const std::exception& e) {
          entry.error = e.what();
        }
        ++fresh;
        if (journal.is_open()) {
          json rec = {{"fingerprint", fingerprint}, {"point", pi}, {"value", point.value}, {"rep", rep}};
          if (entry.error.empty()) {
            rec["accuracy"] = *entry.accuracy;
            rec["macro_f1"] = *entry.macro_f1;
          } else {
            rec["error"] = entry.error;
          }
          journal << rec.dump() << '\n' << std::flush;
        }
      }
      point.accuracy.push_back(entry.accuracy);
      point.macro_f1.push_back(entry.macro_f1);
      if (!entry.error.empty()) point.errors.push_back("rep " + std::to_string(rep) + ": " + entry.error);
    }
    curve.points.push_back(std::move(point));
    if (!curve.complete) break;
  }
  return curve;
}

}  // namespace crashnarr
