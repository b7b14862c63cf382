#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crashnarr/ingest.hpp"

namespace crashnarr {

enum class Difficulty {
  Plain,        // one vehicle described at a time
  Intertwined,  // clauses about V1 and V2 alternate
};

std::string_view difficulty_name(Difficulty d);
Difficulty parse_difficulty(std::string_view name);

struct SynthOptions {
  Difficulty difficulty = Difficulty::Plain;
  int year = 2022;
  double unknown_share = 0.03;  // MANCOLL category 9
  std::string id_prefix = "SYN";
};

/// Seeded narratives with known gold labels. MANCOLL draws the six non-Unknown
/// categories uniformly; CRASHTYPE covers codes 1, 2, 6, 7, 24, 25, 88, 89, 98.
std::vector<LabeledExample> generate(Task task, std::size_t n, std::uint64_t seed,
                                     const SynthOptions& options = {});

/// Category-exclusive MANCOLL marker words.
const std::vector<std::string>& mancoll_keywords(int category);

/// Bag-of-keywords MANCOLL classifier; nullopt when no or conflicting markers.
std::optional<LabelToken> keyword_oracle(const std::string& summary);

/// CRASHTYPE codes the generator can emit.
const std::vector<int>& synth_crashtype_codes();

}  // namespace crashnarr
