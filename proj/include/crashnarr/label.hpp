#pragma once

#include <compare>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace crashnarr {

/// A class label as emitted by a model: a short numeral or letter ("4", "24").
class LabelToken {
 public:
  LabelToken() = default;
  explicit LabelToken(std::string token) : token_(std::move(token)) {}

  const std::string& str() const noexcept { return token_; }
  bool empty() const noexcept { return token_.empty(); }

  /// Numeric value of the token when it is a numeral.
  std::optional<int> as_int() const;

  friend auto operator<=>(const LabelToken&, const LabelToken&) = default;

 private:
  std::string token_;
};

inline std::ostream& operator<<(std::ostream& os, const LabelToken& t) {
  return os << t.str();
}

/// A prediction that may be missing because the model produced an unparseable
/// answer. `std::nullopt` is the invalid-output marker.
using Prediction = std::optional<LabelToken>;

enum class Task { Mancoll, CrashType };

std::string_view task_name(Task task);
Task parse_task(std::string_view name);

}  // namespace crashnarr

template <>
struct std::hash<crashnarr::LabelToken> {
  size_t operator()(const crashnarr::LabelToken& t) const noexcept {
    return std::hash<std::string>{}(t.str());
  }
};
