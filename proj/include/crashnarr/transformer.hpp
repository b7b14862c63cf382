#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace crashnarr {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Shape of the micro transformer. `head_dim` is the per-head key width used
/// for attention scaling; projections are d_model x (n_heads * head_dim).
struct ModelDims {
  int vocab_size = 512;
  int d_model = 64;
  int n_heads = 2;
  int head_dim = 32;
  int n_layers = 2;
  int max_seq = 96;

  int proj_width() const { return n_heads * head_dim; }
  void validate() const;
  bool operator==(const ModelDims&) const = default;
};

/// Query, key, value and output projections of one attention layer.
struct AttentionWeights {
  Mat wq, wk, wv;  // d_model x proj_width
  Mat wo;          // proj_width x d_model
};

enum class Projection { Q, K, V };

char projection_letter(Projection p);
Projection parse_projection(char c);

/// Low-rank update on one projection of one layer: delta = (alpha / rank) * A * B.
struct LoraAdapter {
  Projection target = Projection::Q;
  int layer = 0;
  Mat a;  // d x r
  Mat b;  // r x k
  double alpha = 16.0;

  int rank() const { return static_cast<int>(a.cols()); }
  double scale() const { return alpha / static_cast<double>(rank()); }
  std::size_t parameter_count() const { return a.size() + b.size(); }
  void validate(int d, int k) const;
};

/// Linear classifier over the hidden state of the leading [CLS] token.
struct ClsHead {
  Mat w;  // categories x d_model
  Vec b;  // categories

  int categories() const { return static_cast<int>(w.rows()); }
};

struct TransformerModel {
  ModelDims dims;
  Mat embed;       // vocab x d_model
  Mat positional;  // max_seq x d_model
  Mat unembed;     // d_model x vocab
  std::vector<AttentionWeights> layers;
  std::vector<LoraAdapter> adapters;
  std::optional<ClsHead> cls_head;
  std::uint64_t seed = 0;

  const LoraAdapter* find_adapter(int layer, Projection p) const;
};

TransformerModel init_model(const ModelDims& dims, std::uint64_t seed);

/// Softmax with max shifting.
Vec softmax(const Vec& logits);
double log_sum_exp(const Vec& logits);

struct AttentionResult {
  Mat output;               // T x proj_width, heads concatenated
  std::vector<Mat> probs;   // per head, T x T, row-stochastic
};

/// softmax(Q K^T / sqrt(head_dim)) V for every head, with Q, K, V taken from
/// the (possibly adapter-augmented) projections of `x`.
AttentionResult attention_forward(const Mat& x, const AttentionWeights& weights, int n_heads,
                                  std::span<const LoraAdapter* const> adapters = {},
                                  bool causal = false);

Mat lora_delta(const LoraAdapter& adapter);
/// W + delta(adapter). The input matrix is left untouched.
Mat merge_adapter(const Mat& w, const LoraAdapter& adapter);
/// A copy of `model` with every adapter folded into its base projection.
TransformerModel merge_all(const TransformerModel& model);

/// Final-position vocabulary logits of the causal (decoder) stack.
Vec decoder_logits(const TransformerModel& model, std::span<const int> tokens);

/// Softmax of the final-step logits. With `allowed`, mass is renormalized over
/// those vocabulary ids and every other entry is zero.
Vec predict_distribution(const TransformerModel& model, std::span<const int> tokens,
                         std::span<const int> allowed = {});

double cross_entropy_loss(const Vec& logits, int target);

/// Category probabilities from the bidirectional stack; tokens[0] must be the CLS id.
Vec cls_forward(const TransformerModel& model, std::span<const int> tokens, const ClsHead& head,
                int cls_token_id);

/// Which parameter groups receive gradients.
struct TrainableSet {
  bool base = false;      // embeddings, projections, unembedding
  bool adapters = true;
  bool head = false;
};

struct Gradients {
  Mat embed, positional, unembed;
  std::vector<AttentionWeights> layers;
  std::vector<Mat> adapter_a, adapter_b;
  Mat head_w;
  Vec head_b;

  static Gradients zeros_like(const TransformerModel& model, const TrainableSet& which);
  void add_scaled(const Gradients& other, double factor);
  double squared_norm() const;
  void scale(double factor);
};

/// Cross-entropy of `target` at the final decoder position; accumulates
/// gradients into `grads`.
double decoder_loss_and_grad(const TransformerModel& model, std::span<const int> tokens,
                             int target, const TrainableSet& which, Gradients& grads);

/// Cross-entropy of category `target` through the CLS head.
double cls_loss_and_grad(const TransformerModel& model, std::span<const int> tokens, int target,
                         int cls_token_id, const TrainableSet& which, Gradients& grads);

/// Number of parameters in adapters (what LoRA training updates).
std::size_t adapter_parameter_count(const TransformerModel& model);

}  // namespace crashnarr
