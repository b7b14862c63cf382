#include "crashnarr/checkpoint.hpp"

#include <fstream>

#include "crashnarr/error.hpp"
#include "crashnarr/jsonl.hpp"

namespace crashnarr {
namespace {

using nlohmann::json;

json dims_to_json(const ModelDims& d) {
  return {{"vocab_size", d.vocab_size}, {"d_model", d.d_model}, {"n_heads", d.n_heads},
          {"head_dim", d.head_dim},     {"n_layers", d.n_layers}, {"max_seq", d.max_seq}};
}

ModelDims dims_from_json(const json& j) {
  ModelDims d;
  d.vocab_size = j.at("vocab_size").get<int>();
  d.d_model = j.at("d_model").get<int>();
  d.n_heads = j.at("n_heads").get<int>();
  d.head_dim = j.at("head_dim").get<int>();
  d.n_layers = j.at("n_layers").get<int>();
  d.max_seq = j.at("max_seq").get<int>();
  return d;
}

Vec vector_from_json(const json& j) {
  const Mat m = matrix_from_json(j);
  if (m.cols() != 1) throw Error(Errc::CheckpointMismatch, "expected a column vector");
  return m.col(0);
}

void expect_shape(const Mat& m, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw Error(Errc::CheckpointMismatch,
                what + " is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                    ", dims require " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

}  // namespace

json matrix_to_json(const Mat& m) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Mat matrix_from_json(const json& doc) {
  const auto rows = doc.at("rows").get<Eigen::Index>();
  const auto cols = doc.at("cols").get<Eigen::Index>();
  const auto& data = doc.at("data");
  if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows * cols)) {
    throw Error(Errc::CheckpointMismatch, "matrix payload does not match its shape");
  }
  Mat m(rows, cols);
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = data[n++].get<double>();
  }
  return m;
}

json checkpoint_to_json(const LocalModel& lm) {
  const auto& m = lm.model;
  json layers = json::array();
  for (const auto& l : m.layers) {
    layers.push_back({{"wq", matrix_to_json(l.wq)},
                      {"wk", matrix_to_json(l.wk)},
                      {"wv", matrix_to_json(l.wv)},
                      {"wo", matrix_to_json(l.wo)}});
  }
  json adapters = json::array();
  for (const auto& a : m.adapters) {
    adapters.push_back({{"target", std::string(1, projection_letter(a.target))},
                        {"layer", a.layer},
                        {"alpha", a.alpha},
                        {"a", matrix_to_json(a.a)},
                        {"b", matrix_to_json(a.b)}});
  }
  json doc = {{"format", kCheckpointFormat},
              {"dims", dims_to_json(m.dims)},
              {"seed", m.seed},
              {"task", std::string(task_name(lm.task))},
              {"head", lm.head == ModelHead::Decoder ? "decoder" : "cls"},
              {"template_version", lm.template_version},
              {"taxonomy_version", lm.taxonomy_version},
              {"vocab", lm.vocab.to_json()},
              {"embed", matrix_to_json(m.embed)},
              {"positional", matrix_to_json(m.positional)},
              {"unembed", matrix_to_json(m.unembed)},
              {"layers", std::move(layers)},
              {"adapters", std::move(adapters)}};
  if (m.cls_head) {
    json labels = json::array();
    for (const auto& t : lm.cls_labels) labels.push_back(t.str());
    doc["cls_head"] = {{"w", matrix_to_json(m.cls_head->w)},
                       {"b", matrix_to_json(m.cls_head->b)},
                       {"labels", std::move(labels)}};
  }
  return doc;
}

LocalModel checkpoint_from_json(const json& doc, const std::optional<ModelDims>& expected) {
  try {
    if (doc.at("format").get<int>() != kCheckpointFormat) {
      throw Error(Errc::CheckpointMismatch, "unsupported checkpoint format");
    }
    LocalModel lm;
    auto& m = lm.model;
    m.dims = dims_from_json(doc.at("dims"));
    m.dims.validate();
    if (expected && !(*expected == m.dims)) {
      throw Error(Errc::CheckpointMismatch, "checkpoint dims differ from the requested dims");
    }
    const int d = m.dims.d_model;
    const int k = m.dims.proj_width();
    m.seed = doc.at("seed").get<std::uint64_t>();
    lm.task = parse_task(doc.at("task").get<std::string>());
    lm.head = doc.at("head").get<std::string>() == "cls" ? ModelHead::Cls : ModelHead::Decoder;
    lm.template_version = doc.value("template_version", "");
    lm.taxonomy_version = doc.value("taxonomy_version", "");
    lm.vocab = Vocabulary::from_json(doc.at("vocab"));
    if (lm.vocab.size() > m.dims.vocab_size) {
      throw Error(Errc::CheckpointMismatch, "vocabulary larger than the model's vocab_size");
    }

    m.embed = matrix_from_json(doc.at("embed"));
    expect_shape(m.embed, m.dims.vocab_size, d, "embed");
    m.positional = matrix_from_json(doc.at("positional"));
    expect_shape(m.positional, m.dims.max_seq, d, "positional");
    m.unembed = matrix_from_json(doc.at("unembed"));
    expect_shape(m.unembed, d, m.dims.vocab_size, "unembed");

    const auto& layers = doc.at("layers");
    if (layers.size() != static_cast<std::size_t>(m.dims.n_layers)) {
      throw Error(Errc::CheckpointMismatch, "layer count differs from dims");
    }
    for (const auto& l : layers) {
      AttentionWeights w{matrix_from_json(l.at("wq")), matrix_from_json(l.at("wk")),
                         matrix_from_json(l.at("wv")), matrix_from_json(l.at("wo"))};
      expect_shape(w.wq, d, k, "wq");
      expect_shape(w.wk, d, k, "wk");
      expect_shape(w.wv, d, k, "wv");
      expect_shape(w.wo, k, d, "wo");
      m.layers.push_back(std::move(w));
    }
    for (const auto& a : doc.at("adapters")) {
      LoraAdapter ad;
      ad.target = parse_projection(a.at("target").get<std::string>().at(0));
      ad.layer = a.at("layer").get<int>();
      ad.alpha = a.at("alpha").get<double>();
      ad.a = matrix_from_json(a.at("a"));
      ad.b = matrix_from_json(a.at("b"));
      if (ad.layer < 0 || ad.layer >= m.dims.n_layers) {
        throw Error(Errc::CheckpointMismatch, "adapter layer out of range");
      }
      try {
        ad.validate(d, k);
      } catch (const Error& e) {
        throw Error(Errc::CheckpointMismatch, e.what());
      }
      m.adapters.push_back(std::move(ad));
    }
    if (doc.contains("cls_head")) {
      const auto& h = doc.at("cls_head");
      ClsHead head{matrix_from_json(h.at("w")), vector_from_json(h.at("b"))};
      if (head.w.cols() != d || head.b.size() != head.w.rows()) {
        throw Error(Errc::CheckpointMismatch, "CLS head shape disagrees with dims");
      }
      for (const auto& t : h.at("labels")) lm.cls_labels.emplace_back(t.get<std::string>());
      if (lm.cls_labels.size() != static_cast<std::size_t>(head.w.rows())) {
        throw Error(Errc::CheckpointMismatch, "CLS label list disagrees with head size");
      }
      m.cls_head = std::move(head);
    }
    if (lm.head == ModelHead::Cls && !m.cls_head) {
      throw Error(Errc::CheckpointMismatch, "CLS checkpoint without a head");
    }
    return lm;
  } catch (const json::exception& e) {
    throw Error(Errc::CheckpointMismatch, std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const LocalModel& m) {
  write_text(path, checkpoint_to_json(m).dump() + "\n");
}

LocalModel load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelDims>& expected) {
  const std::string text = read_text(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::CheckpointMismatch, path.string() + ": " + e.what());
  }
  return checkpoint_from_json(doc, expected);
}

}  // namespace crashnarr
