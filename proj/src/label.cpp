#include "crashnarr/label.hpp"

#include <charconv>

#include "crashnarr/error.hpp"

namespace crashnarr {

std::optional<int> LabelToken::as_int() const {
  int value = 0;
  const char* first = token_.data();
  const char* last = token_.data() + token_.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || token_.empty()) return std::nullopt;
  return value;
}

std::string_view task_name(Task task) {
  return task == Task::Mancoll ? "MANCOLL" : "CRASHTYPE";
}

Task parse_task(std::string_view name) {
  if (name == "MANCOLL" || name == "mancoll") return Task::Mancoll;
  if (name == "CRASHTYPE" || name == "crashtype") return Task::CrashType;
  throw Error(Errc::UnknownTask, "unknown task '" + std::string(name) + "'");
}

}  // namespace crashnarr
