#include "crashnarr/records.hpp"

#include <cstdio>

#include "crashnarr/error.hpp"
#include "crashnarr/jsonl.hpp"

namespace crashnarr {

using nlohmann::json;

json record_to_json(const PredictionRecord& r) {
  json j = {{"id", r.example_id},
            {"backend", r.backend_id},
            {"run", r.run_index},
            {"predicted", r.predicted ? json(r.predicted->str()) : json(nullptr)},
            {"gold", r.gold.str()}};
  if (r.dropped) j["dropped"] = true;
  if (!r.predicted) j["raw"] = r.raw_output;
  return j;
}

PredictionRecord record_from_json(const json& j) {
  try {
    PredictionRecord r;
    r.example_id = j.at("id").get<std::string>();
    r.backend_id = j.at("backend").get<std::string>();
    r.run_index = j.at("run").get<int>();
    if (r.run_index < 1) throw Error(Errc::InvalidRecord, "run index must be >= 1");
    if (!j.at("predicted").is_null()) r.predicted = LabelToken(j.at("predicted").get<std::string>());
    r.gold = LabelToken(j.at("gold").get<std::string>());
    r.dropped = j.value("dropped", false);
    r.raw_output = j.value("raw", "");
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidRecord, std::string("bad prediction record: ") + e.what());
  }
}

void write_predictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& recs,
                       const json& meta) {
  std::vector<json> rows;
  rows.reserve(recs.size());
  for (const auto& r : recs) rows.push_back(record_to_json(r));
  json m = meta;
  m["format"] = "crashnarr-predictions/1";
  write_jsonl(path, m, rows);
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path, json* meta) {
  const JsonlFile f = read_jsonl(path);
  if (meta) *meta = f.meta;
  std::vector<PredictionRecord> out;
  out.reserve(f.records.size());
  for (const auto& j : f.records) out.push_back(record_from_json(j));
  return out;
}

void write_latencies(const std::filesystem::path& path, const std::vector<PredictionRecord>& recs) {
  std::string text = "example_id\trun_index\tlatency_ms\n";
  char buf[64];
  for (const auto& r : recs) {
    std::snprintf(buf, sizeof buf, "\t%d\t%.3f\n", r.run_index, r.latency_ms);
    text += r.example_id + buf;
  }
  write_text(path, text);
}

std::vector<PredictionRecord> select_run(const std::vector<PredictionRecord>& recs, int run_index) {
  std::vector<PredictionRecord> out;
  for (const auto& r : recs) {
    if (r.run_index == run_index) out.push_back(r);
  }
  return out;
}

}  // namespace crashnarr
