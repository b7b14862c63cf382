#include "crashnarr/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>

#include "crashnarr/csv.hpp"
#include "crashnarr/error.hpp"
#include "crashnarr/jsonl.hpp"
#include "crashnarr/rng.hpp"

namespace crashnarr {
namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::optional<int> parse_int(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::size_t require_column(const Table& t, const std::string& table, const std::string& name) {
  auto col = t.column(name);
  if (!col) throw Error(Errc::MissingColumn, "table " + table + " lacks column " + name);
  return *col;
}

bool valid_mancoll(int id) {
  return id == 0 || id == 1 || id == 2 || id == 4 || id == 5 || id == 6 || id == 9;
}

}  // namespace

ColumnMapping ColumnMapping::from_json(const json& doc) {
  ColumnMapping m;
  m.crash_table = doc.value("crash_table", m.crash_table);
  m.vehicle_table = doc.value("vehicle_table", m.vehicle_table);
  const std::string delim = doc.value("delimiter", std::string(1, m.delimiter));
  if (delim == "\\t" || delim == "tab") {
    m.delimiter = '\t';
  } else if (delim.size() == 1) {
    m.delimiter = delim[0];
  } else {
    throw Error(Errc::InvalidRecord, "delimiter must be a single character");
  }
  m.case_id = doc.value("case_id", m.case_id);
  m.year = doc.value("year", m.year);
  m.summary = doc.value("summary", m.summary);
  m.mancoll = doc.value("mancoll", m.mancoll);
  m.vehicle_index = doc.value("vehicle_index", m.vehicle_index);
  m.crashconf = doc.value("crashconf", m.crashconf);
  m.crashtype = doc.value("crashtype", m.crashtype);
  return m;
}

ColumnMapping load_column_mapping(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open column mapping " + path.string());
  return ColumnMapping::from_json(json::parse(in));
}

CaseSet load_case_set(const std::filesystem::path& dir, const ColumnMapping& m, bool strict) {
  const auto crash_path = dir / m.crash_table;
  const auto gv_path = dir / m.vehicle_table;
  if (!std::filesystem::exists(crash_path)) {
    throw Error(Errc::MissingTable, "missing CRASH table " + crash_path.string());
  }
  if (!std::filesystem::exists(gv_path)) {
    throw Error(Errc::MissingTable, "missing GV table " + gv_path.string());
  }
  const Table crash = read_delimited(crash_path, m.delimiter);
  const Table gv = read_delimited(gv_path, m.delimiter);

  const auto c_case = require_column(crash, "CRASH", m.case_id);
  const auto c_year = require_column(crash, "CRASH", m.year);
  const auto c_summary = require_column(crash, "CRASH", m.summary);
  const auto c_mancoll = require_column(crash, "CRASH", m.mancoll);
  const auto g_case = require_column(gv, "GV", m.case_id);
  const auto g_veh = require_column(gv, "GV", m.vehicle_index);
  const auto g_conf = require_column(gv, "GV", m.crashconf);
  const auto g_type = require_column(gv, "GV", m.crashtype);

  CaseSet set;
  auto report = [&](IngestIssue issue, Errc code) {
    if (strict) {
      throw Error(code, issue.table + " row " + std::to_string(issue.row) + ": " + issue.detail);
    }
    set.issues.push_back(std::move(issue));
  };

  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < crash.rows.size(); ++i) {
    const auto& row = crash.rows[i];
    CrashRecord rec;
    rec.case_id = trim(row[c_case]);
    rec.summary = trim(row[c_summary]);
    const auto year = parse_int(row[c_year]);
    const std::string mancoll_raw = trim(row[c_mancoll]);
    if (!mancoll_raw.empty()) rec.mancoll = parse_int(mancoll_raw);

    std::string problem;
    if (rec.case_id.empty()) {
      problem = "empty case id";
    } else if (by_id.count(rec.case_id)) {
      problem = "duplicate case id " + rec.case_id;
    } else if (rec.summary.empty()) {
      problem = "empty summary";
    } else if (!year || *year < kMinCaseYear || *year > kMaxCaseYear) {
      problem = "year out of range: '" + row[c_year] + "'";
    } else if (!mancoll_raw.empty() && (!rec.mancoll || !valid_mancoll(*rec.mancoll))) {
      problem = "invalid MANCOLL '" + mancoll_raw + "'";
    }
    if (!problem.empty()) {
      report({"CRASH", i + 1, "InvalidRecord", problem}, Errc::InvalidRecord);
      continue;
    }
    rec.year = *year;
    by_id[rec.case_id] = set.cases.size();
    set.cases.push_back(Case{std::move(rec), {}});
  }

  for (std::size_t i = 0; i < gv.rows.size(); ++i) {
    const auto& row = gv.rows[i];
    const std::string case_id = trim(row[g_case]);
    auto it = by_id.find(case_id);
    if (it == by_id.end()) {
      report({"GV", i + 1, "JoinOrphan", "case id '" + case_id + "' not in CRASH"},
             Errc::JoinOrphan);
      continue;
    }
    VehicleRecord v;
    v.case_id = case_id;
    const auto idx = parse_int(row[g_veh]);
    if (!idx || *idx < 1) {
      report({"GV", i + 1, "InvalidRecord", "invalid vehicle index '" + row[g_veh] + "'"},
             Errc::InvalidRecord);
      continue;
    }
    v.vehicle_index = *idx;
    if (auto conf = trim(row[g_conf]); !conf.empty()) v.crashconf = conf;
    if (auto type = trim(row[g_type]); !type.empty()) v.crashtype = LabelToken(type);
    set.cases[it->second].vehicles.push_back(std::move(v));
  }
  for (auto& c : set.cases) {
    std::stable_sort(c.vehicles.begin(), c.vehicles.end(),
                     [](const auto& a, const auto& b) { return a.vehicle_index < b.vehicle_index; });
  }
  return set;
}

std::string LabeledExample::id() const {
  if (task == Task::CrashType && vehicle_index) {
    return case_id + "/V" + std::to_string(*vehicle_index);
  }
  return case_id;
}

void validate_example(const LabeledExample& ex, const Taxonomy& taxonomy) {
  auto fail = [&](const std::string& why) {
    throw Error(Errc::InvalidRecord, "example " + ex.id() + ": " + why);
  };
  if (ex.case_id.empty()) fail("empty case id");
  if (ex.summary.find_first_not_of(" \t\r\n") == std::string::npos) fail("empty summary");
  if (ex.vehicle_count < 1) fail("vehicle_count must be >= 1");
  if (ex.task == Task::Mancoll) {
    if (ex.vehicle_index || ex.crashconf) fail("MANCOLL examples carry no vehicle fields");
    const auto tokens = taxonomy.mancoll_tokens();
    if (std::find(tokens.begin(), tokens.end(), ex.gold) == tokens.end()) {
      fail("gold '" + ex.gold.str() + "' outside the MANCOLL space");
    }
  } else {
    if (!ex.vehicle_index || !ex.crashconf) fail("CRASHTYPE examples need vehicle index and crashconf");
    if (*ex.vehicle_index < 1) fail("vehicle index must be >= 1");
    const auto& cands = taxonomy.candidate_set_for(*ex.crashconf);
    if (std::none_of(cands.begin(), cands.end(), [&](const auto& c) { return c.code == ex.gold; })) {
      fail("gold '" + ex.gold.str() + "' outside candidate set " + *ex.crashconf);
    }
  }
}

BuildResult build_examples(const CaseSet& cases, Task task, const Taxonomy& taxonomy) {
  BuildResult out;
  for (const auto& c : cases.cases) {
    const int vehicle_count = std::max<int>(1, static_cast<int>(c.vehicles.size()));
    if (task == Task::Mancoll) {
      LabeledExample ex;
      ex.case_id = c.crash.case_id;
      ex.task = task;
      ex.year = c.crash.year;
      ex.summary = c.crash.summary;
      ex.vehicle_count = vehicle_count;
      if (!c.crash.mancoll) {
        out.rejects.push_back({ex.id(), "MissingLabel", "MANCOLL absent"});
        continue;
      }
      ex.gold = LabelToken(std::to_string(*c.crash.mancoll));
      if (!valid_mancoll(*c.crash.mancoll)) {
        out.rejects.push_back({ex.id(), "InvalidGold", "MANCOLL " + ex.gold.str()});
        continue;
      }
      out.examples.push_back(std::move(ex));
      continue;
    }
    for (const auto& v : c.vehicles) {
      if (!v.crashconf) continue;
      LabeledExample ex;
      ex.case_id = c.crash.case_id;
      ex.task = task;
      ex.year = c.crash.year;
      ex.summary = c.crash.summary;
      ex.vehicle_index = v.vehicle_index;
      ex.crashconf = v.crashconf;
      ex.vehicle_count = vehicle_count;
      if (!taxonomy.has_configuration(*v.crashconf)) {
        out.rejects.push_back({ex.id(), "UnknownConfiguration", "CRASHCONF " + *v.crashconf});
        continue;
      }
      if (!v.crashtype) {
        out.rejects.push_back({ex.id(), "MissingLabel", "CRASHTYPE absent"});
        continue;
      }
      ex.gold = *v.crashtype;
      const auto& cands = taxonomy.candidate_set_for(*v.crashconf);
      if (std::none_of(cands.begin(), cands.end(), [&](const auto& t) { return t.code == ex.gold; })) {
        out.rejects.push_back({ex.id(), "PartitionMismatch",
                               "CRASHTYPE " + ex.gold.str() + " not in candidate set of " +
                                   *v.crashconf});
        continue;
      }
      out.examples.push_back(std::move(ex));
    }
  }
  return out;
}

Split split_by_year(const std::vector<LabeledExample>& examples, int train_year, int test_year,
                    std::size_t dev_count, std::uint64_t seed) {
  if (train_year == test_year) {
    throw Error(Errc::EmptySplit, "train and test year must differ (both " +
                                      std::to_string(train_year) + ")");
  }
  Split split;
  for (const auto& ex : examples) {
    if (ex.year == train_year) {
      split.train.push_back(ex);
    } else if (ex.year == test_year) {
      split.test.push_back(ex);
    } else {
      ++split.excluded;
    }
  }
  if (split.train.empty()) {
    throw Error(Errc::EmptySplit, "no examples from train year " + std::to_string(train_year));
  }
  if (split.test.empty()) {
    throw Error(Errc::EmptySplit, "no examples from test year " + std::to_string(test_year));
  }
  if (dev_count > 0) {
    if (dev_count >= split.train.size()) {
      throw Error(Errc::EmptySplit, "dev carve-out would empty the train split");
    }
    std::vector<std::size_t> order(split.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<bool> to_dev(order.size(), false);
    for (std::size_t i = 0; i < dev_count; ++i) to_dev[order[i]] = true;
    std::vector<LabeledExample> keep;
    for (std::size_t i = 0; i < split.train.size(); ++i) {
      (to_dev[i] ? split.dev : keep).push_back(std::move(split.train[i]));
    }
    split.train = std::move(keep);
  }
  return split;
}

std::size_t vehicle_bucket(int vehicle_count) {
  if (vehicle_count <= 1) return 0;
  if (vehicle_count == 2) return 1;
  if (vehicle_count == 3) return 2;
  return 3;
}

std::array<std::vector<LabeledExample>, 4> group_by_vehicle_count(
    const std::vector<LabeledExample>& examples) {
  std::array<std::vector<LabeledExample>, 4> buckets;
  for (const auto& ex : examples) buckets[vehicle_bucket(ex.vehicle_count)].push_back(ex);
  return buckets;
}

json example_to_json(const LabeledExample& ex) {
  json rec = {{"id", ex.id()},
              {"case_id", ex.case_id},
              {"task", std::string(task_name(ex.task))},
              {"year", ex.year},
              {"summary", ex.summary},
              {"gold", ex.gold.str()},
              {"vehicle_count", ex.vehicle_count}};
  rec["vehicle_index"] = ex.vehicle_index ? json(*ex.vehicle_index) : json(nullptr);
  rec["crashconf"] = ex.crashconf ? json(*ex.crashconf) : json(nullptr);
  return rec;
}

LabeledExample example_from_json(const json& rec) {
  try {
    LabeledExample ex;
    ex.case_id = rec.at("case_id").get<std::string>();
    ex.task = parse_task(rec.at("task").get<std::string>());
    ex.year = rec.at("year").get<int>();
    ex.summary = rec.at("summary").get<std::string>();
    ex.gold = LabelToken(rec.at("gold").get<std::string>());
    ex.vehicle_count = rec.at("vehicle_count").get<int>();
    if (rec.contains("vehicle_index") && !rec["vehicle_index"].is_null()) {
      ex.vehicle_index = rec["vehicle_index"].get<int>();
    }
    if (rec.contains("crashconf") && !rec["crashconf"].is_null()) {
      ex.crashconf = rec["crashconf"].get<std::string>();
    }
    return ex;
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidRecord, std::string("bad example record: ") + e.what());
  }
}

void write_examples(const std::filesystem::path& path, const std::vector<LabeledExample>& examples,
                    const json& meta) {
  std::vector<json> records;
  records.reserve(examples.size());
  for (const auto& ex : examples) records.push_back(example_to_json(ex));
  json head = meta;
  head["format"] = "crashnarr-examples/1";
  write_jsonl(path, head, records);
}

std::vector<LabeledExample> read_examples(const std::filesystem::path& path, json* meta) {
  auto file = read_jsonl(path);
  if (meta) *meta = file.meta;
  std::vector<LabeledExample> out;
  out.reserve(file.records.size());
  for (const auto& rec : file.records) out.push_back(example_from_json(rec));
  return out;
}

void write_rejects(const std::filesystem::path& path, const std::vector<Reject>& rejects) {
  std::vector<json> records;
  for (const auto& r : rejects) {
    records.push_back({{"example_id", r.example_id}, {"reason", r.reason}, {"detail", r.detail}});
  }
  write_jsonl(path, {{"format", "crashnarr-rejects/1"}}, records);
}

}  // namespace crashnarr
