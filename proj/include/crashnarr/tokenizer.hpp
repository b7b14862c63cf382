#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crashnarr/label.hpp"

namespace crashnarr {

struct Prompt;

/// Closed word-level vocabulary. Ids 0..kReservedCount-1 hold control tokens
/// and the label numerals "0".."99", so every label is a single token.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kAnswer = 3;
  static constexpr int kTarget = 4;
  static constexpr int kTaskMancoll = 5;
  static constexpr int kTaskCrashType = 6;

  /// Control tokens, configuration tags "<conf:A>".."<conf:Z>", label numerals.
  Vocabulary();

  /// Adds the most frequent words of `texts` until the vocabulary reaches `max_size`.
  static Vocabulary build(const std::vector<std::string>& texts, int max_size);

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(const std::string& token) const;  // kUnk when absent
  std::optional<int> find(const std::string& token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  /// Reserved id of a label token; throws IndexOutOfRange when the label has no slot.
  int label_id(const LabelToken& label) const;
  int conf_tag(const std::string& conf) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& doc);

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
};

/// Lowercased alphanumeric words; "V#1" becomes "v1".
std::vector<std::string> split_words(const std::string& text);

/// Decoder input: task tag, optional configuration tag and target vehicle,
/// narrative words, then the answer marker. The narrative is truncated so the
/// sequence fits `max_seq`.
std::vector<int> encode_decoder_input(const Vocabulary& vocab, Task task, const std::string& summary,
                                      std::optional<int> vehicle_index,
                                      const std::optional<std::string>& conf, int max_seq);

/// Model input built from a prompt's filled slots.
std::vector<int> encode_prompt(const Vocabulary& vocab, const Prompt& prompt, int max_seq,
                               bool encoder = false);

/// Encoder input: CLS, then the same fields without the answer marker.
std::vector<int> encode_encoder_input(const Vocabulary& vocab, Task task, const std::string& summary,
                                      std::optional<int> vehicle_index,
                                      const std::optional<std::string>& conf, int max_seq);

}  // namespace crashnarr
