#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crashnarr/label.hpp"

namespace crashnarr {

/// One model answer for one example and run.
struct PredictionRecord {
  std::string example_id;
  std::string backend_id;
  int run_index = 1;
  Prediction predicted;  // nullopt marks InvalidOutput
  LabelToken gold;
  double latency_ms = 0.0;
  bool dropped = false;     // invalid output under the drop policy; skipped by metrics
  std::string raw_output;  // offending text when invalid

  bool valid() const { return predicted.has_value(); }
  bool correct() const { return predicted && *predicted == gold; }
};

nlohmann::json record_to_json(const PredictionRecord& r);
PredictionRecord record_from_json(const nlohmann::json& j);

/// Predictions file. Latencies are not written here (they vary between runs);
/// see `write_latencies`.
void write_predictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& recs,
                       const nlohmann::json& meta = nlohmann::json::object());
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path,
                                               nlohmann::json* meta = nullptr);

/// Sidecar TSV: example_id, run_index, latency_ms.
void write_latencies(const std::filesystem::path& path, const std::vector<PredictionRecord>& recs);

/// Records of one run, in file order.
std::vector<PredictionRecord> select_run(const std::vector<PredictionRecord>& recs, int run_index);

}  // namespace crashnarr
