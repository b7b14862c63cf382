#include "crashnarr/transformer.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "crashnarr/error.hpp"
#include "crashnarr/rng.hpp"

namespace crashnarr {
namespace {

constexpr int kProjectionCount = 3;

int projection_index(Projection p) { return static_cast<int>(p); }

Mat random_matrix(Rng& rng, int rows, int cols, double stddev) {
  Mat m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = rng.normal() * stddev;
  }
  return m;
}

void check_shape(const Mat& m, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw Error(Errc::ShapeMismatch, std::string(what) + " is " + std::to_string(m.rows()) + "x" +
                                         std::to_string(m.cols()) + ", expected " +
                                         std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Mat project(const Mat& x, const Mat& w, const LoraAdapter* adapter, Mat* xa_out) {
  Mat y = x * w;
  if (adapter) {
    Mat xa = x * adapter->a;
    y.noalias() += adapter->scale() * (xa * adapter->b);
    if (xa_out) *xa_out = std::move(xa);
  }
  return y;
}

void softmax_rows(Mat& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - m).exp();
    s.row(i) /= s.row(i).sum();
  }
}

struct LayerCache {
  Mat x;
  Mat q, k, v;
  std::vector<Mat> probs;
  Mat o;
  Mat xa[kProjectionCount];
};

struct LayerAdapters {
  const LoraAdapter* by_proj[kProjectionCount] = {nullptr, nullptr, nullptr};
  int index[kProjectionCount] = {-1, -1, -1};
};

LayerAdapters adapters_for(const TransformerModel& model, int layer) {
  LayerAdapters out;
  for (std::size_t i = 0; i < model.adapters.size(); ++i) {
    const auto& ad = model.adapters[i];
    if (ad.layer != layer) continue;
    const int p = projection_index(ad.target);
    out.by_proj[p] = &ad;
    out.index[p] = static_cast<int>(i);
  }
  return out;
}

Mat layer_forward(const Mat& x, const AttentionWeights& w, int n_heads, const LayerAdapters& ads,
                  bool causal, LayerCache* cache) {
  const int width = static_cast<int>(w.wq.cols());
  const int dk = width / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  const Eigen::Index t = x.rows();

  Mat xa[kProjectionCount];
  Mat q = project(x, w.wq, ads.by_proj[0], &xa[0]);
  Mat k = project(x, w.wk, ads.by_proj[1], &xa[1]);
  Mat v = project(x, w.wv, ads.by_proj[2], &xa[2]);

  Mat o(t, width);
  std::vector<Mat> probs;
  probs.reserve(n_heads);
  for (int h = 0; h < n_heads; ++h) {
    Mat s = q.middleCols(h * dk, dk) * k.middleCols(h * dk, dk).transpose() * inv_sqrt;
    if (causal) {
      for (Eigen::Index i = 0; i < t; ++i) {
        for (Eigen::Index j = i + 1; j < t; ++j) s(i, j) = -std::numeric_limits<double>::infinity();
      }
    }
    softmax_rows(s);
    o.middleCols(h * dk, dk).noalias() = s * v.middleCols(h * dk, dk);
    probs.push_back(std::move(s));
  }
  Mat out = x + o * w.wo;
  if (cache) {
    cache->x = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->o = std::move(o);
    for (int p = 0; p < kProjectionCount; ++p) cache->xa[p] = std::move(xa[p]);
  }
  return out;
}

// Returns d(loss)/d(layer input).
Mat layer_backward(const Mat& dout, const LayerCache& c, const AttentionWeights& w, int n_heads,
                   const LayerAdapters& ads, const TrainableSet& which, AttentionWeights* gw,
                   Gradients& grads) {
  const int width = static_cast<int>(w.wq.cols());
  const int dk = width / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  const Eigen::Index t = c.x.rows();

  if (which.base) gw->wo.noalias() += c.o.transpose() * dout;
  const Mat d_o = dout * w.wo.transpose();
  Mat dx = dout;

  Mat dq = Mat::Zero(t, width);
  Mat dkm = Mat::Zero(t, width);
  Mat dv = Mat::Zero(t, width);
  for (int h = 0; h < n_heads; ++h) {
    const Mat& p = c.probs[h];
    const auto d_oh = d_o.middleCols(h * dk, dk);
    const Mat dp = d_oh * c.v.middleCols(h * dk, dk).transpose();
    dv.middleCols(h * dk, dk).noalias() = p.transpose() * d_oh;
    const Vec row_dot = dp.cwiseProduct(p).rowwise().sum();
    Mat ds = p.cwiseProduct(dp - row_dot.replicate(1, t));
    ds *= inv_sqrt;
    dq.middleCols(h * dk, dk).noalias() = ds * c.k.middleCols(h * dk, dk);
    dkm.middleCols(h * dk, dk).noalias() = ds.transpose() * c.q.middleCols(h * dk, dk);
  }

  const Mat* dy[kProjectionCount] = {&dq, &dkm, &dv};
  const Mat* base[kProjectionCount] = {&w.wq, &w.wk, &w.wv};
  Mat* gbase[kProjectionCount] = {which.base ? &gw->wq : nullptr, which.base ? &gw->wk : nullptr,
                                  which.base ? &gw->wv : nullptr};
  for (int p = 0; p < kProjectionCount; ++p) {
    if (gbase[p]) gbase[p]->noalias() += c.x.transpose() * *dy[p];
    dx.noalias() += *dy[p] * base[p]->transpose();
    if (const LoraAdapter* ad = ads.by_proj[p]) {
      const double s = ad->scale();
      const Mat dxa = s * (*dy[p] * ad->b.transpose());
      if (which.adapters) {
        grads.adapter_b[ads.index[p]].noalias() += s * (c.xa[p].transpose() * *dy[p]);
        grads.adapter_a[ads.index[p]].noalias() += c.x.transpose() * dxa;
      }
      dx.noalias() += dxa * ad->a.transpose();
    }
  }
  return dx;
}

Mat embed_tokens(const TransformerModel& model, std::span<const int> tokens) {
  const auto t = static_cast<Eigen::Index>(tokens.size());
  if (t == 0) throw Error(Errc::ShapeMismatch, "empty token sequence");
  if (t > model.dims.max_seq) {
    throw Error(Errc::SequenceTooLong, "sequence of " + std::to_string(t) +
                                           " tokens exceeds limit " +
                                           std::to_string(model.dims.max_seq));
  }
  Mat x(t, model.dims.d_model);
  for (Eigen::Index i = 0; i < t; ++i) {
    const int tok = tokens[i];
    if (tok < 0 || tok >= model.dims.vocab_size) {
      throw Error(Errc::IndexOutOfRange, "token id " + std::to_string(tok) + " outside vocabulary");
    }
    x.row(i) = model.embed.row(tok) + model.positional.row(i);
  }
  return x;
}

Mat forward_stack(const TransformerModel& model, std::span<const int> tokens, bool causal,
                  std::vector<LayerCache>* caches) {
  Mat x = embed_tokens(model, tokens);
  if (caches) caches->resize(model.layers.size());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    x = layer_forward(x, model.layers[l], model.dims.n_heads,
                      adapters_for(model, static_cast<int>(l)), causal,
                      caches ? &(*caches)[l] : nullptr);
  }
  return x;
}

void backward_stack(const TransformerModel& model, std::span<const int> tokens, Mat dx,
                    const std::vector<LayerCache>& caches, const TrainableSet& which,
                    Gradients& grads) {
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    dx = layer_backward(dx, caches[l], model.layers[l], model.dims.n_heads,
                        adapters_for(model, static_cast<int>(l)), which,
                        which.base ? &grads.layers[l] : nullptr, grads);
  }
  if (which.base) {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      grads.embed.row(tokens[i]) += dx.row(static_cast<Eigen::Index>(i));
      grads.positional.row(static_cast<Eigen::Index>(i)) += dx.row(static_cast<Eigen::Index>(i));
    }
  }
}

}  // namespace

void ModelDims::validate() const {
  if (vocab_size <= 0 || d_model <= 0 || n_heads <= 0 || head_dim <= 0 || n_layers <= 0 ||
      max_seq <= 0) {
    throw Error(Errc::ShapeMismatch, "model dimensions must be positive");
  }
}

char projection_letter(Projection p) {
  switch (p) {
    case Projection::Q: return 'Q';
    case Projection::K: return 'K';
    case Projection::V: return 'V';
  }
  return '?';
}

Projection parse_projection(char c) {
  switch (c) {
    case 'Q': case 'q': return Projection::Q;
    case 'K': case 'k': return Projection::K;
    case 'V': case 'v': return Projection::V;
    default: break;
  }
  throw Error(Errc::InvalidConfig, std::string("unknown projection '") + c + "'");
}

void LoraAdapter::validate(int d, int k) const {
  check_shape(a, d, a.cols(), "adapter A");
  check_shape(b, a.cols(), k, "adapter B");
  const int r = rank();
  if (r < 1 || 2 * r > std::min(d, k)) {
    throw Error(Errc::ShapeMismatch, "adapter rank " + std::to_string(r) +
                                         " must satisfy 1 <= r <= min(d,k)/2");
  }
  if (!a.allFinite() || !b.allFinite()) {
    throw Error(Errc::NonFiniteInput, "adapter has non-finite entries");
  }
}

const LoraAdapter* TransformerModel::find_adapter(int layer, Projection p) const {
  for (const auto& ad : adapters) {
    if (ad.layer == layer && ad.target == p) return &ad;
  }
  return nullptr;
}

TransformerModel init_model(const ModelDims& dims, std::uint64_t seed) {
  dims.validate();
  Rng rng(seed);
  TransformerModel m;
  m.dims = dims;
  m.seed = seed;
  const int d = dims.d_model;
  const int k = dims.proj_width();
  m.embed = random_matrix(rng, dims.vocab_size, d, 1.0);
  m.positional = random_matrix(rng, dims.max_seq, d, 0.1);
  m.unembed = random_matrix(rng, d, dims.vocab_size, 1.0 / std::sqrt(static_cast<double>(d)));
  for (int l = 0; l < dims.n_layers; ++l) {
    AttentionWeights w;
    const double proj_std = 1.0 / std::sqrt(static_cast<double>(d));
    w.wq = random_matrix(rng, d, k, proj_std);
    w.wk = random_matrix(rng, d, k, proj_std);
    w.wv = random_matrix(rng, d, k, proj_std);
    w.wo = random_matrix(rng, k, d, 1.0 / std::sqrt(static_cast<double>(k)));
    m.layers.push_back(std::move(w));
  }
  return m;
}

Vec softmax(const Vec& logits) {
  const double m = logits.maxCoeff();
  Vec e = (logits.array() - m).exp();
  return e / e.sum();
}

double log_sum_exp(const Vec& logits) {
  const double m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum());
}

AttentionResult attention_forward(const Mat& x, const AttentionWeights& weights, int n_heads,
                                  std::span<const LoraAdapter* const> adapters, bool causal) {
  const auto d = x.cols();
  const auto k = weights.wq.cols();
  check_shape(weights.wq, d, k, "W_Q");
  check_shape(weights.wk, d, k, "W_K");
  check_shape(weights.wv, d, k, "W_V");
  if (n_heads < 1 || k % n_heads != 0) {
    throw Error(Errc::ShapeMismatch, "projection width not divisible by head count");
  }
  if (!x.allFinite()) throw Error(Errc::NonFiniteInput, "hidden states contain non-finite values");

  LayerAdapters ads;
  for (const LoraAdapter* ad : adapters) {
    if (!ad) continue;
    ad->validate(static_cast<int>(d), static_cast<int>(k));
    ads.by_proj[projection_index(ad->target)] = ad;
  }
  const int width = static_cast<int>(k);
  const int dk = width / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));

  AttentionResult result;
  const Mat q = project(x, weights.wq, ads.by_proj[0], nullptr);
  const Mat kk = project(x, weights.wk, ads.by_proj[1], nullptr);
  const Mat v = project(x, weights.wv, ads.by_proj[2], nullptr);
  result.output.resize(x.rows(), width);
  for (int h = 0; h < n_heads; ++h) {
    Mat s = q.middleCols(h * dk, dk) * kk.middleCols(h * dk, dk).transpose() * inv_sqrt;
    if (causal) {
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < s.cols(); ++j) {
          s(i, j) = -std::numeric_limits<double>::infinity();
        }
      }
    }
    softmax_rows(s);
    result.output.middleCols(h * dk, dk) = s * v.middleCols(h * dk, dk);
    result.probs.push_back(std::move(s));
  }
  return result;
}

Mat lora_delta(const LoraAdapter& adapter) {
  if (adapter.a.cols() != adapter.b.rows()) {
    throw Error(Errc::ShapeMismatch, "adapter inner dimensions disagree");
  }
  return adapter.scale() * (adapter.a * adapter.b);
}

Mat merge_adapter(const Mat& w, const LoraAdapter& adapter) {
  check_shape(w, adapter.a.rows(), adapter.b.cols(), "base weight");
  return w + lora_delta(adapter);
}

TransformerModel merge_all(const TransformerModel& model) {
  TransformerModel merged = model;
  for (const auto& ad : model.adapters) {
    auto& w = merged.layers.at(ad.layer);
    Mat& target = ad.target == Projection::Q ? w.wq : ad.target == Projection::K ? w.wk : w.wv;
    target = merge_adapter(target, ad);
  }
  merged.adapters.clear();
  return merged;
}

Vec decoder_logits(const TransformerModel& model, std::span<const int> tokens) {
  const Mat x = forward_stack(model, tokens, /*causal=*/true, nullptr);
  return model.unembed.transpose() * x.row(x.rows() - 1).transpose();
}

Vec predict_distribution(const TransformerModel& model, std::span<const int> tokens,
                         std::span<const int> allowed) {
  const Vec logits = decoder_logits(model, tokens);
  if (allowed.empty()) return softmax(logits);
  Vec sub(static_cast<Eigen::Index>(allowed.size()));
  for (std::size_t i = 0; i < allowed.size(); ++i) {
    if (allowed[i] < 0 || allowed[i] >= logits.size()) {
      throw Error(Errc::IndexOutOfRange, "allowed token outside vocabulary");
    }
    sub[static_cast<Eigen::Index>(i)] = logits[allowed[i]];
  }
  const Vec p = softmax(sub);
  Vec out = Vec::Zero(logits.size());
  for (std::size_t i = 0; i < allowed.size(); ++i) out[allowed[i]] = p[static_cast<Eigen::Index>(i)];
  return out;
}

double cross_entropy_loss(const Vec& logits, int target) {
  if (target < 0 || target >= logits.size()) {
    throw Error(Errc::IndexOutOfRange, "target " + std::to_string(target) + " outside logits");
  }
  return log_sum_exp(logits) - logits[target];
}

Vec cls_forward(const TransformerModel& model, std::span<const int> tokens, const ClsHead& head,
                int cls_token_id) {
  if (tokens.empty() || tokens[0] != cls_token_id) {
    throw Error(Errc::MissingClsToken, "sequence does not begin with the CLS token");
  }
  check_shape(head.w, head.w.rows(), model.dims.d_model, "CLS head W");
  const Mat x = forward_stack(model, tokens, /*causal=*/false, nullptr);
  const Vec z = head.w * x.row(0).transpose() + head.b;
  return softmax(z);
}

Gradients Gradients::zeros_like(const TransformerModel& model, const TrainableSet& which) {
  Gradients g;
  if (which.base) {
    g.embed = Mat::Zero(model.embed.rows(), model.embed.cols());
    g.positional = Mat::Zero(model.positional.rows(), model.positional.cols());
    g.unembed = Mat::Zero(model.unembed.rows(), model.unembed.cols());
    for (const auto& w : model.layers) {
      g.layers.push_back({Mat::Zero(w.wq.rows(), w.wq.cols()), Mat::Zero(w.wk.rows(), w.wk.cols()),
                          Mat::Zero(w.wv.rows(), w.wv.cols()), Mat::Zero(w.wo.rows(), w.wo.cols())});
    }
  }
  if (which.adapters) {
    for (const auto& ad : model.adapters) {
      g.adapter_a.push_back(Mat::Zero(ad.a.rows(), ad.a.cols()));
      g.adapter_b.push_back(Mat::Zero(ad.b.rows(), ad.b.cols()));
    }
  }
  if (which.head && model.cls_head) {
    g.head_w = Mat::Zero(model.cls_head->w.rows(), model.cls_head->w.cols());
    g.head_b = Vec::Zero(model.cls_head->b.size());
  }
  return g;
}

void Gradients::add_scaled(const Gradients& o, double f) {
  auto add = [f](auto& dst, const auto& src) {
    if (src.size() > 0) dst += f * src;
  };
  add(embed, o.embed);
  add(positional, o.positional);
  add(unembed, o.unembed);
  for (std::size_t i = 0; i < layers.size() && i < o.layers.size(); ++i) {
    add(layers[i].wq, o.layers[i].wq);
    add(layers[i].wk, o.layers[i].wk);
    add(layers[i].wv, o.layers[i].wv);
    add(layers[i].wo, o.layers[i].wo);
  }
  for (std::size_t i = 0; i < adapter_a.size(); ++i) {
    add(adapter_a[i], o.adapter_a[i]);
    add(adapter_b[i], o.adapter_b[i]);
  }
  add(head_w, o.head_w);
  add(head_b, o.head_b);
}

double Gradients::squared_norm() const {
  double s = embed.squaredNorm() + positional.squaredNorm() + unembed.squaredNorm() +
             head_w.squaredNorm() + head_b.squaredNorm();
  for (const auto& w : layers) {
    s += w.wq.squaredNorm() + w.wk.squaredNorm() + w.wv.squaredNorm() + w.wo.squaredNorm();
  }
  for (std::size_t i = 0; i < adapter_a.size(); ++i) {
    s += adapter_a[i].squaredNorm() + adapter_b[i].squaredNorm();
  }
  return s;
}

void Gradients::scale(double f) {
  embed *= f;
  positional *= f;
  unembed *= f;
  for (auto& w : layers) {
    w.wq *= f;
    w.wk *= f;
    w.wv *= f;
    w.wo *= f;
  }
  for (std::size_t i = 0; i < adapter_a.size(); ++i) {
    adapter_a[i] *= f;
    adapter_b[i] *= f;
  }
  head_w *= f;
  head_b *= f;
}

double decoder_loss_and_grad(const TransformerModel& model, std::span<const int> tokens,
                             int target, const TrainableSet& which, Gradients& grads) {
  std::vector<LayerCache> caches;
  const Mat x = forward_stack(model, tokens, /*causal=*/true, &caches);
  const Eigen::Index last = x.rows() - 1;
  const Vec h = x.row(last).transpose();
  const Vec logits = model.unembed.transpose() * h;
  const double loss = cross_entropy_loss(logits, target);
  Vec dlogits = softmax(logits);
  dlogits[target] -= 1.0;
  if (which.base) grads.unembed.noalias() += h * dlogits.transpose();
  Mat dx = Mat::Zero(x.rows(), x.cols());
  dx.row(last) = (model.unembed * dlogits).transpose();
  backward_stack(model, tokens, std::move(dx), caches, which, grads);
  return loss;
}

double cls_loss_and_grad(const TransformerModel& model, std::span<const int> tokens, int target,
                         int cls_token_id, const TrainableSet& which, Gradients& grads) {
  if (!model.cls_head) throw Error(Errc::ShapeMismatch, "model has no CLS head");
  if (tokens.empty() || tokens[0] != cls_token_id) {
    throw Error(Errc::MissingClsToken, "sequence does not begin with the CLS token");
  }
  const ClsHead& head = *model.cls_head;
  std::vector<LayerCache> caches;
  const Mat x = forward_stack(model, tokens, /*causal=*/false, &caches);
  const Vec h = x.row(0).transpose();
  const Vec z = head.w * h + head.b;
  const double loss = cross_entropy_loss(z, target);
  Vec dz = softmax(z);
  dz[target] -= 1.0;
  if (which.head) {
    grads.head_w.noalias() += dz * h.transpose();
    grads.head_b += dz;
  }
  Mat dx = Mat::Zero(x.rows(), x.cols());
  dx.row(0) = (head.w.transpose() * dz).transpose();
  backward_stack(model, tokens, std::move(dx), caches, which, grads);
  return loss;
}

std::size_t adapter_parameter_count(const TransformerModel& model) {
  std::size_t n = 0;
  for (const auto& ad : model.adapters) n += ad.parameter_count();
  return n;
}

}  // namespace crashnarr
