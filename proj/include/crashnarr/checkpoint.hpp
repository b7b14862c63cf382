#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crashnarr/label.hpp"
#include "crashnarr/tokenizer.hpp"
#include "crashnarr/transformer.hpp"

namespace crashnarr {

inline constexpr int kCheckpointFormat = 1;

enum class ModelHead { Decoder, Cls };

/// Everything the local backend needs to answer a prompt.
struct LocalModel {
  TransformerModel model;
  Vocabulary vocab;
  Task task = Task::Mancoll;
  ModelHead head = ModelHead::Decoder;
  std::vector<LabelToken> cls_labels;  // category order of the CLS head
  std::string template_version;
  std::string taxonomy_version;
};

nlohmann::json matrix_to_json(const Mat& m);
Mat matrix_from_json(const nlohmann::json& doc);

nlohmann::json checkpoint_to_json(const LocalModel& m);
/// Rejects any matrix whose shape disagrees with the stored dims, and with
/// `expected` when given (CheckpointMismatch).
LocalModel checkpoint_from_json(const nlohmann::json& doc,
                                const std::optional<ModelDims>& expected = std::nullopt);

void save_checkpoint(const std::filesystem::path& path, const LocalModel& m);
LocalModel load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelDims>& expected = std::nullopt);

}  // namespace crashnarr
