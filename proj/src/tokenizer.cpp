#include "crashnarr/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>

#include "crashnarr/error.hpp"
#include "crashnarr/prompt.hpp"

namespace crashnarr {

Vocabulary::Vocabulary() {
  for (const char* t : {"<pad>", "<unk>", "<cls>", "<ans>", "<target>", "<mancoll>", "<crashtype>"}) {
    add(t);
  }
  for (char c = 'A'; c <= 'Z'; ++c) add(std::string("<conf:") + c + ">");
  for (int i = 0; i <= 99; ++i) add(std::to_string(i));
}

void Vocabulary::add(const std::string& token) {
  if (index_.count(token)) return;
  index_[token] = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts, int max_size) {
  Vocabulary v;
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& text : texts) {
    for (const auto& w : split_words(text)) {
      if (!v.index_.count(w)) ++counts[w];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  for (const auto& [word, n] : ranked) {
    if (v.size() >= max_size) break;
    v.add(word);
  }
  return v;
}

std::optional<int> Vocabulary::find(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::id(const std::string& token) const { return find(token).value_or(kUnk); }

int Vocabulary::label_id(const LabelToken& label) const {
  auto id = find(label.str());
  if (!id) throw Error(Errc::IndexOutOfRange, "label '" + label.str() + "' has no vocabulary slot");
  return *id;
}

int Vocabulary::conf_tag(const std::string& conf) const { return id("<conf:" + conf + ">"); }

nlohmann::json Vocabulary::to_json() const { return tokens_; }

Vocabulary Vocabulary::from_json(const nlohmann::json& doc) {
  Vocabulary v;
  v.tokens_.clear();
  v.index_.clear();
  for (const auto& t : doc) v.add(t.get<std::string>());
  const Vocabulary fresh;
  for (int i = 0; i < fresh.size(); ++i) {
    if (i >= v.size() || v.tokens_[i] != fresh.tokens_[i]) {
      throw Error(Errc::CheckpointMismatch, "vocabulary lacks the reserved token layout");
    }
  }
  return v;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (ch == '#' && cur == "v") {
      continue;  // V#1 -> v1
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

namespace {

std::vector<int> encode(const Vocabulary& vocab, bool encoder, Task task, const std::string& summary,
                        std::optional<int> vehicle_index, const std::optional<std::string>& conf,
                        int max_seq) {
  std::vector<int> ids;
  if (encoder) ids.push_back(Vocabulary::kCls);
  ids.push_back(task == Task::Mancoll ? Vocabulary::kTaskMancoll : Vocabulary::kTaskCrashType);
  if (conf) ids.push_back(vocab.conf_tag(*conf));
  if (vehicle_index) {
    ids.push_back(Vocabulary::kTarget);
    ids.push_back(vocab.id("v" + std::to_string(*vehicle_index)));
  }
  const std::size_t tail = encoder ? 0 : 1;
  const auto words = split_words(summary);
  for (const auto& w : words) {
    if (static_cast<int>(ids.size() + tail) >= max_seq) break;
    ids.push_back(vocab.id(w));
  }
  if (!encoder) ids.push_back(Vocabulary::kAnswer);
  if (static_cast<int>(ids.size()) > max_seq) {
    throw Error(Errc::SequenceTooLong, "sequence limit too small for the task header");
  }
  return ids;
}

}  // namespace

std::vector<int> encode_decoder_input(const Vocabulary& vocab, Task task, const std::string& summary,
                                      std::optional<int> vehicle_index,
                                      const std::optional<std::string>& conf, int max_seq) {
  return encode(vocab, false, task, summary, vehicle_index, conf, max_seq);
}

std::vector<int> encode_encoder_input(const Vocabulary& vocab, Task task, const std::string& summary,
                                      std::optional<int> vehicle_index,
                                      const std::optional<std::string>& conf, int max_seq) {
  return encode(vocab, true, task, summary, vehicle_index, conf, max_seq);
}

std::vector<int> encode_prompt(const Vocabulary& vocab, const Prompt& prompt, int max_seq,
                               bool encoder) {
  auto slot = [&](const char* name) -> std::optional<std::string> {
    auto it = prompt.slots.find(name);
    if (it == prompt.slots.end()) return std::nullopt;
    return it->second;
  };
  const std::string summary = slot("summary").value_or("");
  std::optional<int> vehicle;
  if (auto v = slot("vehicle_index"); v && v->size() > 1 && (*v)[0] == 'V') {
    vehicle = std::stoi(v->substr(1));
  }
  return encode(vocab, encoder, prompt.task, summary, vehicle, slot("conf"), max_seq);
}

}  // namespace crashnarr
