#include <gtest/gtest.h>

#include <filesystem>

#include "crashnarr/error.hpp"
#include "crashnarr/jsonl.hpp"
#include "crashnarr/prompt.hpp"

using namespace crashnarr;
namespace fs = std::filesystem;

namespace {

const fs::path kGolden = fs::path(CRASHNARR_TEST_DATA) / "golden";

// Must match the summaries in tests/golden/make_golden.py.
const std::string kMancollSummary =
    "V1 was traveling north in the left lane when the front of V1 struck the rear of V2, which "
    "had slowed for traffic.";
const std::string kCrashTypeSummary =
    "V1 was traveling east behind V2. V2 slowed for traffic and the front of V1 struck the rear of "
    "V2.";

const Taxonomy& tax() {
  static const Taxonomy t = load_taxonomy(default_taxonomy_path());
  return t;
}

const TemplateSet& templates() {
  static const TemplateSet t = TemplateSet::load_default();
  return t;
}

Errc error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::IoError;
}

}  // namespace

TEST(PromptTemplate, SlotsAndEscapes) {
  PromptTemplate t("a {x} {{literal}} {y}", "v");
  EXPECT_EQ(t.render({{"x", "1"}, {"y", "2"}}), "a 1 {literal} 2");
  EXPECT_EQ(t.slot_names(), (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(error_of([&] { t.render({{"x", "1"}}); }), Errc::TemplateError);
}

TEST(PromptTemplate, SlotValueIsNotReinterpreted) {
  PromptTemplate t("[{x}]", "v");
  EXPECT_EQ(t.render({{"x", "{y} }}"}}), "[{y} }}]");
}

TEST(Prompt, MancollGolden) {
  const auto p = build_mancoll_prompt(kMancollSummary, tax(), templates());
  EXPECT_EQ(p.text, read_text(kGolden / "mancoll_prompt.txt"));
  EXPECT_NE(p.text.find("Only respond with a single number"), std::string::npos);
  EXPECT_NE(p.text.find("classify based on\nthe **first** collision"), std::string::npos);
  EXPECT_EQ(p.allowed_tokens.size(), 7u);
  EXPECT_EQ(p.template_version, "mancoll-cot/1");
}

TEST(Prompt, CrashTypeGolden) {
  const auto p = build_crashtype_prompt(kCrashTypeSummary, 2, "D", tax(), templates());
  EXPECT_EQ(p.text, read_text(kGolden / "crashtype_prompt_D_V2.txt"));
  EXPECT_NE(p.text.find("Respond with only one number or letter"), std::string::npos);
  EXPECT_NE(p.text.find("Vehicle index: V2"), std::string::npos);
  EXPECT_EQ(p.allowed_tokens.size(), 14u);
}

TEST(Prompt, Deterministic) {
  const auto a = build_mancoll_prompt(kMancollSummary, tax(), templates());
  const auto b = build_mancoll_prompt(kMancollSummary, tax(), templates());
  EXPECT_EQ(a.text, b.text);
}

TEST(Prompt, EmptySummaryAndUnknownConf) {
  EXPECT_EQ(error_of([] { build_mancoll_prompt("  \n", tax(), templates()); }), Errc::EmptySummary);
  EXPECT_EQ(error_of([] { build_crashtype_prompt("x", 1, "Z9", tax(), templates()); }),
            Errc::UnknownConfiguration);
}

TEST(Prompt, OptionListEqualsCandidateSetForEveryConfiguration) {
  for (const auto& conf : tax().configurations()) {
    const auto p = build_crashtype_prompt(kCrashTypeSummary, 1, conf.id, tax(), templates());
    ASSERT_EQ(p.allowed_tokens.size(), conf.candidate_types.size());
    std::size_t last = 0;
    for (std::size_t i = 0; i < conf.candidate_types.size(); ++i) {
      EXPECT_EQ(p.allowed_tokens[i], conf.candidate_types[i].code);
      const auto pos = p.text.find("  " + conf.candidate_types[i].code.str() + ": \"");
      ASSERT_NE(pos, std::string::npos) << conf.id;
      EXPECT_GT(pos, last);
      last = pos;
    }
  }
}

TEST(ParseLabel, Normalization) {
  const auto allowed = tax().mancoll_tokens();
  EXPECT_EQ(parse_label(" 4\n", allowed).token->str(), "4");
  EXPECT_EQ(parse_label("\"6\".", allowed).token->str(), "6");
  const auto bad = parse_label("angle", allowed);
  EXPECT_FALSE(bad.ok());
  EXPECT_EQ(bad.offending, "angle");
  EXPECT_FALSE(parse_label("10", allowed).ok());
  EXPECT_FALSE(parse_label("4 or 5", allowed).ok());
  EXPECT_FALSE(parse_label("", allowed).ok());
}

TEST(ParseLabel, RawOutputOverload) {
  RawOutput raw{"24", "stub", 0.0};
  const std::vector<LabelToken> allowed{LabelToken("24"), LabelToken("25")};
  EXPECT_EQ(parse_label(raw, allowed).token->str(), "24");
}
