#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "crashnarr/trainer.hpp"
#include "crashnarr/transformer.hpp"

namespace oracle {

using crashnarr::LabelToken;
using crashnarr::Prediction;

double accuracy(const std::vector<Prediction>& pred, const std::vector<LabelToken>& gold,
                const crashnarr::LabelSet& exclude) {
  int n = 0, hit = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (exclude.count(gold[i])) continue;
    ++n;
    if (pred[i].has_value() && pred[i]->str() == gold[i].str()) ++hit;
  }
  return static_cast<double>(hit) / n;
}

double macro_f1(const std::vector<Prediction>& pred, const std::vector<LabelToken>& gold,
                const crashnarr::LabelSet& exclude) {
  std::set<std::string> present;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (!exclude.count(gold[i])) present.insert(gold[i].str());
  }
  // confusion[gold][pred]; invalid predictions use the key "<invalid>".
  std::map<std::string, std::map<std::string, int>> confusion;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (exclude.count(gold[i])) continue;
    confusion[gold[i].str()][pred[i] ? pred[i]->str() : "<invalid>"]++;
  }
  double sum = 0.0;
  for (const auto& c : present) {
    int tp = 0, fn = 0, fp = 0;
    for (const auto& [g, row] : confusion) {
      for (const auto& [p, count] : row) {
        if (g == c && p == c) tp += count;
        if (g == c && p != c) fn += count;
        if (g != c && p == c) fp += count;
      }
    }
    const double denom = 2.0 * tp + fp + fn;
    sum += denom == 0.0 ? 0.0 : 2.0 * tp / denom;
  }
  return sum / static_cast<double>(present.size());
}

double agreement(const std::vector<Prediction>& a, const std::vector<Prediction>& b) {
  int same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] && b[i] && a[i]->str() == b[i]->str()) ++same;
  }
  return static_cast<double>(same) / static_cast<double>(a.size());
}

double jsd(const std::vector<double>& p, const std::vector<double>& q) {
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0) total += 0.5 * p[i] * std::log2(p[i] / m);
    if (q[i] > 0) total += 0.5 * q[i] * std::log2(q[i] / m);
  }
  return total;
}

double tau_b(const std::vector<double>& x, const std::vector<double>& y) {
  long long concordant = 0, discordant = 0, tie_x = 0, tie_y = 0;
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0 && dy == 0) {
        ++tie_x;
        ++tie_y;
      } else if (dx == 0) {
        ++tie_x;
      } else if (dy == 0) {
        ++tie_y;
      } else if ((dx > 0) == (dy > 0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const double n0 = static_cast<double>(n) * (n - 1) / 2.0;
  return (concordant - discordant) / std::sqrt((n0 - tie_x) * (n0 - tie_y));
}

double log_sum_exp(const Eigen::VectorXd& v) {
  double m = v[0];
  for (Eigen::Index i = 1; i < v.size(); ++i) m = std::max(m, v[i]);
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

Eigen::MatrixXd attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                          const Eigen::MatrixXd& v, double scale_dim, bool causal) {
  const auto t = q.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(t, v.cols());
  for (Eigen::Index i = 0; i < t; ++i) {
    std::vector<double> w(static_cast<std::size_t>(t), 0.0);
    double z = 0.0;
    for (Eigen::Index j = 0; j < t; ++j) {
      if (causal && j > i) continue;
      double dot = 0.0;
      for (Eigen::Index c = 0; c < q.cols(); ++c) dot += q(i, c) * k(j, c);
      w[j] = std::exp(dot / std::sqrt(scale_dim));
      z += w[j];
    }
    for (Eigen::Index j = 0; j < t; ++j) {
      for (Eigen::Index c = 0; c < v.cols(); ++c) out(i, c) += w[j] / z * v(j, c);
    }
  }
  return out;
}

std::vector<Prediction> random_predictions(crashnarr::Rng& rng, std::size_t n,
                                           const std::vector<std::string>& labels,
                                           double invalid_rate) {
  std::vector<Prediction> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.uniform() < invalid_rate) {
      out.emplace_back(std::nullopt);
    } else {
      out.emplace_back(LabelToken(labels[rng.index(labels.size())]));
    }
  }
  return out;
}

ConsistencyFixture load_consistency_fixture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  ConsistencyFixture fx;
  std::string line;
  std::getline(in, line);
  {
    std::istringstream hs(line);
    std::string cell;
    std::getline(hs, cell, '\t');  // id
    std::getline(hs, cell, '\t');  // GT
    while (std::getline(hs, cell, '\t')) fx.models.push_back(cell);
  }
  fx.predictions.resize(fx.models.size());
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string cell;
    std::getline(ls, cell, '\t');
    std::getline(ls, cell, '\t');
    fx.ground_truth.emplace_back(cell);
    for (std::size_t m = 0; m < fx.models.size(); ++m) {
      std::getline(ls, cell, '\t');
      fx.predictions[m].emplace_back(LabelToken(cell));
    }
  }
  return fx;
}

}  // namespace oracle

namespace oracle {
namespace {

using crashnarr::Gradients;
using crashnarr::TrainableSet;
using crashnarr::TransformerModel;

constexpr double kStep = 1e-5;

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), 1e-7);
}

struct Sample {
  std::vector<int> tokens;
  int target;
};

// Probes one parameter group: `coord` picks a coordinate, `slot` exposes it in
// the model and `analytic` reads the matching gradient entry.
template <typename Slot, typename Analytic>
double probe_group(TransformerModel& model, crashnarr::Rng& rng, int probes,
                   const std::function<double(const TransformerModel&)>& loss,
                   const std::function<std::pair<Eigen::Index, Eigen::Index>(crashnarr::Rng&)>& coord,
                   Slot slot, Analytic analytic) {
  double worst = 0.0;
  for (int p = 0; p < probes; ++p) {
    const auto [i, j] = coord(rng);
    double& x = slot(model, i, j);
    const double saved = x;
    x = saved + kStep;
    const double up = loss(model);
    x = saved - kStep;
    const double down = loss(model);
    x = saved;
    worst = std::max(worst, rel_error(analytic(i, j), (up - down) / (2 * kStep)));
  }
  return worst;
}

}  // namespace

double GradCheck::worst() const {
  return std::max({adapter_a, adapter_b, head_w, head_b, base});
}

GradCheck gradient_check(std::uint64_t seed, int probes) {
  crashnarr::ModelDims dims;
  dims.vocab_size = 24;
  dims.d_model = 8;
  dims.n_heads = 2;
  dims.head_dim = 4;
  dims.n_layers = 2;
  dims.max_seq = 8;
  crashnarr::Rng rng(seed);
  TransformerModel model = crashnarr::init_model(dims, seed);
  crashnarr::TrainConfig cfg;
  cfg.rank = 2;
  cfg.seed = seed;
  crashnarr::install_adapters(model, cfg);
  for (auto& ad : model.adapters) {
    for (Eigen::Index i = 0; i < ad.b.size(); ++i) ad.b.data()[i] = 0.3 * rng.normal();
  }
  const int categories = 5;
  crashnarr::install_cls_head(model, categories, seed + 1);
  for (Eigen::Index i = 0; i < model.cls_head->b.size(); ++i) model.cls_head->b[i] = 0.1 * rng.normal();

  std::vector<Sample> dec, enc;
  for (int s = 0; s < 3; ++s) {
    Sample d{{}, static_cast<int>(rng.index(dims.vocab_size))};
    Sample e{{2}, static_cast<int>(rng.index(categories))};
    const int len = 3 + static_cast<int>(rng.index(4));
    for (int t = 0; t < len; ++t) {
      d.tokens.push_back(7 + static_cast<int>(rng.index(dims.vocab_size - 7)));
      e.tokens.push_back(7 + static_cast<int>(rng.index(dims.vocab_size - 7)));
    }
    dec.push_back(d);
    enc.push_back(e);
  }

  const TrainableSet lora{false, true, false};
  const TrainableSet cls{false, true, true};
  const TrainableSet full{true, true, true};
  auto dec_loss = [&](const TransformerModel& m) {
    double total = 0.0;
    auto g = Gradients::zeros_like(m, lora);
    for (const auto& s : dec) total += crashnarr::decoder_loss_and_grad(m, s.tokens, s.target, lora, g);
    return total;
  };
  auto cls_loss = [&](const TransformerModel& m, const TrainableSet& which) {
    double total = 0.0;
    auto g = Gradients::zeros_like(m, which);
    for (const auto& s : enc) total += crashnarr::cls_loss_and_grad(m, s.tokens, s.target, 2, which, g);
    return total;
  };

  auto dec_grads = Gradients::zeros_like(model, lora);
  for (const auto& s : dec) crashnarr::decoder_loss_and_grad(model, s.tokens, s.target, lora, dec_grads);
  auto cls_grads = Gradients::zeros_like(model, full);
  for (const auto& s : enc) crashnarr::cls_loss_and_grad(model, s.tokens, s.target, 2, full, cls_grads);

  GradCheck out;
  const auto n_ad = model.adapters.size();
  std::size_t which_ad = 0;
  auto pick_a = [&](crashnarr::Rng& r) {
    which_ad = r.index(n_ad);
    const auto& a = model.adapters[which_ad].a;
    return std::pair<Eigen::Index, Eigen::Index>(r.index(a.rows()), r.index(a.cols()));
  };
  auto pick_b = [&](crashnarr::Rng& r) {
    which_ad = r.index(n_ad);
    const auto& b = model.adapters[which_ad].b;
    return std::pair<Eigen::Index, Eigen::Index>(r.index(b.rows()), r.index(b.cols()));
  };
  const std::function<double(const TransformerModel&)> dl = dec_loss;
  const std::function<double(const TransformerModel&)> cl = [&](const TransformerModel& m) {
    return cls_loss(m, cls);
  };
  out.adapter_a = probe_group(
      model, rng, probes, dl, pick_a,
      [&](TransformerModel& m, Eigen::Index i, Eigen::Index j) -> double& { return m.adapters[which_ad].a(i, j); },
      [&](Eigen::Index i, Eigen::Index j) { return dec_grads.adapter_a[which_ad](i, j); });
  out.adapter_b = probe_group(
      model, rng, probes, dl, pick_b,
      [&](TransformerModel& m, Eigen::Index i, Eigen::Index j) -> double& { return m.adapters[which_ad].b(i, j); },
      [&](Eigen::Index i, Eigen::Index j) { return dec_grads.adapter_b[which_ad](i, j); });
  out.head_w = probe_group(
      model, rng, probes, cl,
      [&](crashnarr::Rng& r) {
        return std::pair<Eigen::Index, Eigen::Index>(r.index(categories), r.index(dims.d_model));
      },
      [](TransformerModel& m, Eigen::Index i, Eigen::Index j) -> double& { return m.cls_head->w(i, j); },
      [&](Eigen::Index i, Eigen::Index j) { return cls_grads.head_w(i, j); });
  out.head_b = probe_group(
      model, rng, probes, cl,
      [&](crashnarr::Rng& r) { return std::pair<Eigen::Index, Eigen::Index>(r.index(categories), 0); },
      [](TransformerModel& m, Eigen::Index i, Eigen::Index) -> double& { return m.cls_head->b[i]; },
      [&](Eigen::Index i, Eigen::Index) { return cls_grads.head_b[i]; });

  // Base parameters through the CLS path: a projection entry or an embedding row.
  int group = 0;
  std::size_t layer = 0;
  const std::function<double(const TransformerModel&)> fl = [&](const TransformerModel& m) {
    return cls_loss(m, full);
  };
  out.base = probe_group(
      model, rng, probes, fl,
      [&](crashnarr::Rng& r) {
        group = static_cast<int>(r.index(5));
        layer = r.index(model.layers.size());
        if (group == 4) {
          const auto& tok = enc[r.index(enc.size())].tokens;
          return std::pair<Eigen::Index, Eigen::Index>(tok[r.index(tok.size())], r.index(dims.d_model));
        }
        const auto& w = group == 3 ? model.layers[layer].wo : model.layers[layer].wq;
        return std::pair<Eigen::Index, Eigen::Index>(r.index(w.rows()), r.index(w.cols()));
      },
      [&](TransformerModel& m, Eigen::Index i, Eigen::Index j) -> double& {
        auto& L = m.layers[layer];
        switch (group) {
          case 0: return L.wq(i, j);
          case 1: return L.wk(i, j);
          case 2: return L.wv(i, j);
          case 3: return L.wo(i, j);
          default: return m.embed(i, j);
        }
      },
      [&](Eigen::Index i, Eigen::Index j) {
        const auto& G = cls_grads.layers[layer];
        switch (group) {
          case 0: return G.wq(i, j);
          case 1: return G.wk(i, j);
          case 2: return G.wv(i, j);
          case 3: return G.wo(i, j);
          default: return cls_grads.embed(i, j);
        }
      });
  return out;
}

}  // namespace oracle
