#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "crashnarr/csv.hpp"
#include "crashnarr/error.hpp"
#include "crashnarr/ingest.hpp"

using namespace crashnarr;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = fs::path(CRASHNARR_TEST_DATA) / "fixtures";

const Taxonomy& tax() {
  static const Taxonomy t = load_taxonomy(default_taxonomy_path());
  return t;
}

LabeledExample mancoll_example(const std::string& id, int year, const std::string& gold) {
  LabeledExample ex;
  ex.case_id = id;
  ex.year = year;
  ex.summary = "V1 struck a tree.";
  ex.gold = LabelToken(gold);
  return ex;
}

}  // namespace

TEST(Csv, QuotedFieldsWithDelimitersAndNewlines) {
  std::istringstream in("a,b\n\"x, y\",\"line1\nline2 \"\"q\"\"\"\n");
  const auto t = parse_delimited(in);
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0][0], "x, y");
  EXPECT_EQ(t.rows[0][1], "line1\nline2 \"q\"");
  EXPECT_EQ(quote_field("a,b"), "\"a,b\"");
  EXPECT_EQ(quote_field("plain"), "plain");
}

TEST(Ingest, ThreeCrashFixtureJoins) {
  const auto set = load_case_set(kFixtures / "ciss_small");
  ASSERT_EQ(set.cases.size(), 3u);
  EXPECT_TRUE(set.issues.empty());
  std::vector<std::size_t> counts;
  for (const auto& c : set.cases) counts.push_back(c.vehicles.size());
  EXPECT_EQ(counts, (std::vector<std::size_t>{1, 2, 2}));
  // vehicles come back in index order even when the file lists V2 first
  EXPECT_EQ(set.cases[2].vehicles[0].vehicle_index, 1);
  EXPECT_NE(set.cases[2].crash.summary.find('\n'), std::string::npos);
}

TEST(Ingest, MissingVehicleTable) {
  try {
    load_case_set(kFixtures / "ciss_nogv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingTable);
  }
}

TEST(Ingest, OrphanVehicleReported) {
  const auto set = load_case_set(kFixtures / "ciss_orphan");
  ASSERT_EQ(set.issues.size(), 1u);
  EXPECT_EQ(set.issues[0].reason, "JoinOrphan");
  EXPECT_EQ(set.issues[0].table, "GV");
  EXPECT_EQ(set.issues[0].row, 2u);
  try {
    load_case_set(kFixtures / "ciss_orphan", {}, true);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::JoinOrphan);
  }
}

TEST(Ingest, MancollExamples) {
  const auto r = build_examples(load_case_set(kFixtures / "ciss_small"), Task::Mancoll, tax());
  ASSERT_EQ(r.examples.size(), 3u);
  EXPECT_TRUE(r.rejects.empty());
  EXPECT_EQ(r.examples[1].gold.str(), "1");
  EXPECT_EQ(r.examples[1].vehicle_count, 2);
  for (const auto& ex : r.examples) EXPECT_NO_THROW(validate_example(ex, tax()));
}

TEST(Ingest, CrashTypeExamplesCarryVehicleFields) {
  const auto r = build_examples(load_case_set(kFixtures / "ciss_small"), Task::CrashType, tax());
  ASSERT_EQ(r.examples.size(), 5u);
  for (const auto& ex : r.examples) {
    ASSERT_TRUE(ex.vehicle_index.has_value());
    ASSERT_TRUE(ex.crashconf.has_value());
    EXPECT_NO_THROW(validate_example(ex, tax()));
  }
  EXPECT_EQ(r.examples[1].id(), "C2/V1");
  EXPECT_EQ(r.examples[1].gold.str(), "24");
}

TEST(Ingest, PartitionMismatchRejected) {
  const auto r = build_examples(load_case_set(kFixtures / "ciss_orphan"), Task::CrashType, tax());
  ASSERT_EQ(r.rejects.size(), 1u);
  EXPECT_EQ(r.rejects[0].reason, "PartitionMismatch");
  EXPECT_EQ(r.rejects[0].example_id, "C2/V2");
}

TEST(Ingest, SplitByYear) {
  std::vector<LabeledExample> xs;
  for (int i = 0; i < 6; ++i) xs.push_back(mancoll_example("A" + std::to_string(i), 2020, "1"));
  for (int i = 0; i < 4; ++i) xs.push_back(mancoll_example("B" + std::to_string(i), 2021, "4"));
  xs.push_back(mancoll_example("C0", 2019, "0"));
  const auto s = split_by_year(xs, 2020, 2021);
  EXPECT_EQ(s.train.size(), 6u);
  EXPECT_EQ(s.test.size(), 4u);
  EXPECT_EQ(s.excluded, 1u);
  for (const auto& e : s.train) EXPECT_EQ(e.year, 2020);
  for (const auto& e : s.test) EXPECT_EQ(e.year, 2021);

  const auto d = split_by_year(xs, 2020, 2021, 2, 7);
  EXPECT_EQ(d.train.size(), 4u);
  EXPECT_EQ(d.dev.size(), 2u);
  const auto d2 = split_by_year(xs, 2020, 2021, 2, 7);
  EXPECT_EQ(d.dev, d2.dev);
}

TEST(Ingest, SplitErrors) {
  std::vector<LabeledExample> xs{mancoll_example("A", 2019, "1")};
  for (auto [train, test] : {std::pair{2019, 2019}, std::pair{2019, 2020}}) {
    try {
      split_by_year(xs, train, test);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::EmptySplit);
    }
  }
  try {
    split_by_year({}, 2020, 2021);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptySplit);
  }
}

TEST(Ingest, VehicleCountBuckets) {
  std::vector<LabeledExample> xs;
  for (int c : {1, 2, 2, 3, 5}) {
    auto ex = mancoll_example("X" + std::to_string(xs.size()), 2020, "1");
    ex.vehicle_count = c;
    xs.push_back(ex);
  }
  const auto b = group_by_vehicle_count(xs);
  EXPECT_EQ(b[0].size(), 1u);
  EXPECT_EQ(b[1].size(), 2u);
  EXPECT_EQ(b[2].size(), 1u);
  EXPECT_EQ(b[3].size(), 1u);
}

TEST(Ingest, SharedOneAndTwoVehicleProportion) {
  // 93 of every 100 cases in the first two buckets
  std::vector<LabeledExample> xs;
  for (int i = 0; i < 1000; ++i) {
    auto ex = mancoll_example("P" + std::to_string(i), 2020, "1");
    const int r = i % 100;
    ex.vehicle_count = r < 30 ? 1 : r < 93 ? 2 : r < 98 ? 3 : 4;
    xs.push_back(ex);
  }
  const auto b = group_by_vehicle_count(xs);
  EXPECT_DOUBLE_EQ(static_cast<double>(b[0].size() + b[1].size()) / xs.size(), 0.93);
}

TEST(Ingest, ExampleFileRoundTrip) {
  const auto r = build_examples(load_case_set(kFixtures / "ciss_small"), Task::CrashType, tax());
  const auto path = fs::temp_directory_path() / "crashnarr_examples_rt.jsonl";
  write_examples(path, r.examples, {{"seed", 3}});
  nlohmann::json meta;
  const auto back = read_examples(path, &meta);
  EXPECT_EQ(back, r.examples);
  EXPECT_EQ(meta["seed"], 3);
  fs::remove(path);
}

TEST(Ingest, ValidateRejectsInconsistentExamples) {
  auto ex = mancoll_example("Q", 2020, "3");
  EXPECT_THROW(validate_example(ex, tax()), Error);
  ex.gold = LabelToken("1");
  ex.vehicle_index = 1;
  EXPECT_THROW(validate_example(ex, tax()), Error);
}
