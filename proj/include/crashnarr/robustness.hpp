#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "crashnarr/ingest.hpp"
#include "crashnarr/taxonomy.hpp"
#include "crashnarr/trainer.hpp"

namespace crashnarr {

inline constexpr double kMaxNoiseRatio = 0.4;

struct NoisedExamples {
  std::vector<LabeledExample> examples;
  std::vector<std::size_t> changed;  // ascending
};

/// Label space an example's gold may be replaced from.
using LabelSpaceFn = std::function<std::vector<LabelToken>(const LabeledExample&)>;

/// Changes exactly floor(ratio * n) uniformly chosen labels to a uniformly
/// drawn different label (or any label with `allow_original`). Index choice is
/// a seeded permutation prefix, so a lower ratio's changes are a subset of a
/// higher ratio's under the same seed. Throws RatioOutOfRange.
NoisedExamples inject_label_noise(const std::vector<LabeledExample>& examples, double ratio,
                                  std::uint64_t seed, const LabelSpaceFn& label_space,
                                  bool allow_original = false);
/// MANCOLL draws from the 7 categories, CRASHTYPE from the vehicle's candidate set.
NoisedExamples inject_label_noise(const std::vector<LabeledExample>& examples, double ratio,
                                  std::uint64_t seed, const Taxonomy& taxonomy,
                                  bool allow_original = false);

/// First n elements of a seeded permutation; nested across n. Throws SampleTooLarge.
std::vector<LabeledExample> subsample(const std::vector<LabeledExample>& examples, std::size_t n,
                                      std::uint64_t seed);

enum class SweepAxis { NoiseRatio, TrainSize };

std::string_view sweep_axis_name(SweepAxis axis);
SweepAxis parse_sweep_axis(std::string_view name);

struct SweepSpec {
  SweepAxis axis = SweepAxis::NoiseRatio;
  std::vector<double> points;
  std::uint64_t seed = 0;
  int repetitions = 3;
  TrainConfig train;

  void validate() const;
  nlohmann::json to_json() const;
  static SweepSpec from_json(const nlohmann::json& doc);
};

struct PointMetrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

/// Trains on `train` with `train_seed` and scores on the clean `test` pool.
using TrainEvalFn = std::function<PointMetrics(const std::vector<LabeledExample>& train,
                                               const std::vector<LabeledExample>& test,
                                               std::uint64_t train_seed)>;

struct CurvePoint {
  double value = 0.0;
  std::vector<std::optional<double>> accuracy;  // per repetition; nullopt when it failed
  std::vector<std::optional<double>> macro_f1;
  std::vector<std::string> errors;

  double mean_accuracy() const;
  double mean_macro_f1() const;
};

struct CurveData {
  SweepAxis axis = SweepAxis::NoiseRatio;
  std::vector<CurvePoint> points;
  bool complete = true;

  std::string to_tsv() const;
  bool operator==(const CurveData&) const;
};

struct SweepOptions {
  std::optional<std::filesystem::path> journal;
  /// Stop after this many newly computed runs (simulates an interruption).
  std::optional<std::size_t> stop_after;
};

/// Hash of the spec and both pools; journal records from other sweeps are ignored.
std::string sweep_fingerprint(const SweepSpec& spec, const std::vector<LabeledExample>& train,
                              const std::vector<LabeledExample>& test);

/// Every point x repetition, resuming from journal records that match the
/// sweep's fingerprint. Failed runs are recorded and the sweep continues.
CurveData run_sweep(const SweepSpec& spec, const std::vector<LabeledExample>& train_pool,
                    const std::vector<LabeledExample>& test_pool, const TrainEvalFn& train_eval,
                    const Taxonomy& taxonomy, const SweepOptions& options = {});

}  // namespace crashnarr
