#include "crashnarr/synth.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <set>

#include "crashnarr/error.hpp"
#include "crashnarr/rng.hpp"
#include "crashnarr/tokenizer.hpp"

namespace crashnarr {
namespace {

using Strings = std::vector<std::string>;

const std::string& pick(Rng& rng, const Strings& options) {
  return options[rng.index(options.size())];
}

const Strings kModels = {"Toyota Camry",   "Honda Civic",     "Ford Escape",  "Chevrolet Malibu",
                         "Nissan Altima",  "Jeep Cherokee",   "Subaru Outback", "Hyundai Elantra",
                         "Dodge Caravan",  "Kia Soul",        "Ford Fusion",  "Toyota Tacoma",
                         "Honda Accord",   "Chevrolet Silverado"};
const Strings kRoads = {"a two-lane rural road", "a four-lane divided highway", "an urban street",
                        "a county road", "an interstate highway", "a five-lane arterial"};
const Strings kConditions = {"It was daylight and the road was dry.",
                             "It was dark and raining at the time of the crash.",
                             "The roadway was wet from earlier rain.",
                             "Traffic was light and the weather was clear.",
                             "The crash occurred in the early morning hours."};
const Strings kOutcomesOne = {"V1 was towed due to damage.",
                              "The driver of V1 was transported to a hospital.",
                              "No injuries were reported.", "Police responded to the scene."};
const Strings kOutcomesTwo = {"Both vehicles were towed due to damage.",
                              "The driver of V2 was transported to a hospital.",
                              "No injuries were reported.", "Police responded to the scene."};
const Strings kObjects = {"tree", "pole", "guardrail", "fence", "embankment"};
const std::array<std::array<const char*, 2>, 4> kOpposite = {
    {{"northbound", "southbound"}, {"southbound", "northbound"},
     {"eastbound", "westbound"}, {"westbound", "eastbound"}}};
const std::array<std::array<const char*, 2>, 4> kCrossing = {
    {{"northbound", "eastbound"}, {"southbound", "westbound"},
     {"eastbound", "southbound"}, {"westbound", "northbound"}}};
const Strings kHeadings = {"northbound", "southbound", "eastbound", "westbound"};

const std::array<Strings, 10> kKeywords = {{
    {"tree", "pole", "guardrail", "embankment", "ditch", "fence", "deer"},  // 0
    {"rear", "behind", "slowed"},                                            // 1
    {"oncoming", "frontal"},                                                 // 2
    {},
    {"intersection", "perpendicular", "junction"},                           // 4
    {"adjacent", "merging", "merged"},                                       // 5
    {"opposing", "approaching"},                                             // 6
    {},
    {},
    {"unknown", "undetermined", "unclear"},                                  // 9
}};

std::string vehicle(Rng& rng) {
  const int model_year = 2005 + static_cast<int>(rng.index(18));
  return "a " + std::to_string(model_year) + " " + pick(rng, kModels);
}

std::string join(const Strings& sentences) {
  std::string out;
  for (const auto& s : sentences) {
    if (!out.empty()) out += ' ';
    out += s;
  }
  return out;
}

struct Narrative {
  std::string text;
  int vehicle_count = 1;
};

/// Frames an event with vehicle introductions and neutral filler sentences.
Narrative frame(Rng& rng, Difficulty difficulty, int vehicles, const std::string& dir1,
                const std::string& dir2, const std::string& event) {
  const std::string road = pick(rng, kRoads);
  Strings s;
  if (rng.index(2) == 0) s.push_back(pick(rng, kConditions));
  if (vehicles == 1) {
    s.push_back("V1, " + vehicle(rng) + ", was traveling " + dir1 + " on " + road + ".");
  } else if (difficulty == Difficulty::Intertwined) {
    s.push_back("V1, " + vehicle(rng) + ", and V2, " + vehicle(rng) + ", were traveling " + dir1 +
                " and " + dir2 + " respectively on " + road + ".");
  } else {
    s.push_back("V1, " + vehicle(rng) + ", was traveling " + dir1 + " on " + road + ".");
    s.push_back("V2, " + vehicle(rng) + ", was traveling " + dir2 + " on the same road.");
  }
  s.push_back(event);
  if (rng.index(2) == 0) s.push_back(pick(rng, vehicles == 1 ? kOutcomesOne : kOutcomesTwo));
  return {join(s), vehicles};
}

Narrative mancoll_narrative(Rng& rng, int category, Difficulty difficulty) {
  const auto& opp = kOpposite[rng.index(kOpposite.size())];
  const auto& cross = kCrossing[rng.index(kCrossing.size())];
  const std::string same = pick(rng, kHeadings);
  switch (category) {
    case 0: {
      const std::string obj = pick(rng, kObjects);
      const Strings events = {
          "V1 departed the right side of the roadway, crossed a ditch and struck a " + obj + ".",
          "The driver of V1 lost control and V1 came to rest in a ditch after striking a " + obj +
              ".",
          "V1 struck a deer that entered the roadway and came to rest in a ditch.",
          "V1 drifted off the left edge of the road into a ditch and the front of V1 struck a " +
              obj + "."};
      return frame(rng, difficulty, 1, same, same, pick(rng, events));
    }
    case 1: {
      const Strings events = {
          "V2 slowed for traffic ahead and the front of V1 struck the rear of V2.",
          "V1 was following behind V2 when the front of V1 struck the rear of V2.",
          "The front of V1 struck the rear of V2 as V2 slowed to turn.",
          "V2 was stopped behind a queue of traffic when V1 struck V2 from the rear."};
      return frame(rng, difficulty, 2, same, same, pick(rng, events));
    }
    case 2: {
      const Strings events = {
          "V1 drifted over the center line into the path of oncoming V2 and the front of V1 "
          "struck the front of V2.",
          "The two vehicles collided in a frontal impact when oncoming V2 drifted into the lane of "
          "V1.",
          "V1 entered the lane of oncoming traffic and struck V2 in a frontal collision."};
      return frame(rng, difficulty, 2, opp[0], opp[1], pick(rng, events));
    }
    case 4: {
      const Strings events = {
          "V1 entered the intersection against the signal at a perpendicular angle and the front of "
          "V1 struck the right side of V2.",
          "V2 failed to yield at the junction of the two roads and struck the left side of V1 at a "
          "perpendicular angle.",
          "V1 struck V2 at a perpendicular angle within the intersection."};
      return frame(rng, difficulty, 2, cross[0], cross[1], pick(rng, events));
    }
    case 5: {
      const Strings events = {
          "V1 was merging into the adjacent lane and the right side of V1 sideswiped the left "
          "side of V2.",
          "V2 merged left into the adjacent lane and the left side of V2 contacted the right side "
          "of V1.",
          "While merging V1 drifted into the adjacent lane and the sides of the two vehicles made "
          "contact."};
      return frame(rng, difficulty, 2, same, same, pick(rng, events));
    }
    case 6: {
      const Strings events = {
          "V1 drifted toward the opposing lane and the left side of V1 sideswiped the left side "
          "of approaching V2.",
          "The left side of approaching V2 contacted the left side of V1 as V2 passed in the "
          "opposing lane.",
          "V1 and approaching V2 sideswiped each other from opposing lanes on the narrow road."};
      return frame(rng, difficulty, 2, opp[0], opp[1], pick(rng, events));
    }
    default: {
      const Strings events = {
          "The manner of the collision between V1 and V2 is unknown and remains undetermined.",
          "The sequence of events is undetermined and unclear as neither driver could recall the "
          "crash.",
          "It is unclear how V1 and V2 came into contact and the manner is unknown."};
      return frame(rng, difficulty, 2, same, pick(rng, kHeadings), pick(rng, events));
    }
  }
}

std::string case_id(const SynthOptions& o, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "-%d-%05zu", o.year, i + 1);
  return o.id_prefix + buf;
}

std::vector<LabeledExample> generate_mancoll(std::size_t n, std::uint64_t seed,
                                             const SynthOptions& o) {
  static const std::array<int, 6> kCategories = {0, 1, 2, 4, 5, 6};
  Rng rng(mix_seed(seed, 0x3A9C011));
  std::vector<LabeledExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int category = rng.uniform() < o.unknown_share
                             ? 9
                             : kCategories[rng.index(kCategories.size())];
    const Narrative nar = mancoll_narrative(rng, category, o.difficulty);
    LabeledExample ex;
    ex.case_id = case_id(o, i);
    ex.task = Task::Mancoll;
    ex.year = o.year;
    ex.summary = nar.text;
    ex.gold = LabelToken(std::to_string(category));
    ex.vehicle_count = nar.vehicle_count;
    out.push_back(std::move(ex));
  }
  return out;
}

struct VehicleLabel {
  int index;
  std::string conf;
  int code;
};

struct CrashCase {
  std::string text;
  std::vector<VehicleLabel> labels;
};

CrashCase departure_case(Rng& rng, bool right, Difficulty difficulty) {
  const std::string side = right ? "right" : "left";
  const std::string obj = pick(rng, kObjects);
  const bool lost = rng.index(2) == 1;
  const Strings controlled = {
      "The driver of V1 fell asleep and V1 drifted off the " + side +
          " side of the road and struck a " + obj + ".",
      "The driver of V1 was distracted and steered off the " + side + " edge of the roadway into a " +
          obj + "."};
  const Strings loss = {
      "V1 lost traction on the icy curve and departed the " + side +
          " side of the road, striking a " + obj + ".",
      "The driver of V1 lost control while speeding and V1 skidded off the " + side +
          " side of the roadway into a " + obj + "."};
  const Narrative nar = frame(rng, difficulty, 1, pick(rng, kHeadings), "",
                              pick(rng, lost ? loss : controlled));
  const int code = (right ? 1 : 6) + (lost ? 1 : 0);
  return {nar.text, {{1, right ? "A" : "B", code}}};
}

CrashCase rear_end_case(Rng& rng, Difficulty difficulty, bool third) {
  const int striking = static_cast<int>(rng.index(2)) + 1;
  const int struck = 3 - striking;
  const std::string s = "V" + std::to_string(striking);
  const std::string t = "V" + std::to_string(struck);
  const std::string dir = pick(rng, kHeadings);
  const std::string road = pick(rng, kRoads);
  Strings parts;
  if (rng.index(2) == 0) parts.push_back(pick(rng, kConditions));
  if (difficulty == Difficulty::Intertwined) {
    parts.push_back(s + ", " + vehicle(rng) + ", and " + t + ", " + vehicle(rng) +
                    ", were both traveling " + dir + " on " + road + " with " + t +
                    " ahead of " + s + ".");
    parts.push_back(t + " was going slower than " + s + " when the front of " + s +
                    " struck the back of " + t + ".");
  } else {
    parts.push_back(t + ", " + vehicle(rng) + ", was traveling " + dir + " on " + road +
                    " at a slower speed.");
    parts.push_back(s + ", " + vehicle(rng) + ", was traveling " + dir + " behind " + t + ".");
    parts.push_back("The front of " + s + " struck the back of " + t + ".");
  }
  CrashCase c;
  c.labels = {{striking, "D", 24}, {struck, "D", 25}};
  if (third) {
    parts.push_back("V3, " + vehicle(rng) +
                    ", was following and subsequently struck V1 in a secondary impact.");
    c.labels.push_back({3, "M", 98});
  }
  if (rng.index(2) == 0) parts.push_back(pick(rng, kOutcomesTwo));
  c.text = join(parts);
  std::sort(c.labels.begin(), c.labels.end(),
            [](const VehicleLabel& a, const VehicleLabel& b) { return a.index < b.index; });
  return c;
}

CrashCase straight_paths_case(Rng& rng, Difficulty difficulty) {
  const int striking = static_cast<int>(rng.index(2)) + 1;
  const int struck = 3 - striking;
  const std::string s = "V" + std::to_string(striking);
  const std::string t = "V" + std::to_string(struck);
  const auto& cross = kCrossing[rng.index(kCrossing.size())];
  Strings parts;
  if (rng.index(2) == 0) parts.push_back(pick(rng, kConditions));
  if (difficulty == Difficulty::Intertwined) {
    parts.push_back(s + " and " + t + " approached the intersection going straight, " + s +
                    " traveling " + cross[0] + " and " + t + " traveling " + cross[1] + ".");
    parts.push_back(t + " entered first and " + s + " struck the left side of " + t + ".");
  } else {
    parts.push_back(s + ", " + vehicle(rng) + ", was traveling " + cross[0] +
                    " straight through the intersection.");
    parts.push_back(t + ", " + vehicle(rng) + ", was traveling " + cross[1] +
                    " straight through the intersection.");
    parts.push_back("The front of " + s + " struck the left side of " + t + ".");
  }
  if (rng.index(2) == 0) parts.push_back(pick(rng, kOutcomesTwo));
  CrashCase c{join(parts), {{striking, "L", 88}, {struck, "L", 89}}};
  std::sort(c.labels.begin(), c.labels.end(),
            [](const VehicleLabel& a, const VehicleLabel& b) { return a.index < b.index; });
  return c;
}

std::vector<LabeledExample> generate_crashtype(std::size_t n, std::uint64_t seed,
                                               const SynthOptions& o) {
  Rng rng(mix_seed(seed, 0xC7A5A7E));
  std::vector<LabeledExample> out;
  out.reserve(n + 2);
  for (std::size_t i = 0; out.size() < n; ++i) {
    CrashCase c;
    if (o.difficulty == Difficulty::Intertwined) {
      c = rng.index(2) == 0 ? rear_end_case(rng, o.difficulty, false)
                            : straight_paths_case(rng, o.difficulty);
    } else {
      switch (rng.index(5)) {
        case 0: c = departure_case(rng, true, o.difficulty); break;
        case 1: c = departure_case(rng, false, o.difficulty); break;
        case 2: c = rear_end_case(rng, o.difficulty, false); break;
        case 3: c = straight_paths_case(rng, o.difficulty); break;
        default: c = rear_end_case(rng, o.difficulty, true); break;
      }
    }
    for (const auto& v : c.labels) {
      if (out.size() == n) break;
      LabeledExample ex;
      ex.case_id = case_id(o, i);
      ex.task = Task::CrashType;
      ex.year = o.year;
      ex.summary = c.text;
      ex.vehicle_index = v.index;
      ex.crashconf = v.conf;
      ex.gold = LabelToken(std::to_string(v.code));
      ex.vehicle_count = static_cast<int>(c.labels.size());
      out.push_back(std::move(ex));
    }
  }
  return out;
}

}  // namespace

std::string_view difficulty_name(Difficulty d) {
  return d == Difficulty::Plain ? "plain" : "intertwined";
}

Difficulty parse_difficulty(std::string_view name) {
  if (name == "plain") return Difficulty::Plain;
  if (name == "intertwined") return Difficulty::Intertwined;
  throw Error(Errc::UsageError, "unknown difficulty '" + std::string(name) + "'");
}

std::vector<LabeledExample> generate(Task task, std::size_t n, std::uint64_t seed,
                                     const SynthOptions& options) {
  if (n < 1) throw Error(Errc::InvalidConfig, "generate needs n >= 1");
  switch (task) {
    case Task::Mancoll: return generate_mancoll(n, seed, options);
    case Task::CrashType: return generate_crashtype(n, seed, options);
  }
  throw Error(Errc::UnknownTask, "unknown task");
}

const std::vector<std::string>& mancoll_keywords(int category) {
  if (category < 0 || category >= static_cast<int>(kKeywords.size()) ||
      kKeywords[static_cast<std::size_t>(category)].empty()) {
    throw Error(Errc::UnknownLabel, "no MANCOLL category " + std::to_string(category));
  }
  return kKeywords[static_cast<std::size_t>(category)];
}

std::optional<LabelToken> keyword_oracle(const std::string& summary) {
  std::set<int> hits;
  for (const auto& w : split_words(summary)) {
    for (std::size_t c = 0; c < kKeywords.size(); ++c) {
      for (const auto& k : kKeywords[c]) {
        if (w == k) hits.insert(static_cast<int>(c));
      }
    }
  }
  if (hits.size() != 1) return std::nullopt;
  return LabelToken(std::to_string(*hits.begin()));
}

const std::vector<int>& synth_crashtype_codes() {
  static const std::vector<int> codes = {1, 2, 6, 7, 24, 25, 88, 89, 98};
  return codes;
}

}  // namespace crashnarr
