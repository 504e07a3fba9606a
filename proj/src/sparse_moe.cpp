// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

#include "moerob/sparse_moe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "moerob/errors.hpp"
#include "moerob/smooth_moe.hpp"

namespace moerob {

Vector MlpExpert::operator()(const Vector& x) const {
  const Vector h = (hidden_weights * x + hidden_bias).cwiseMax(0.0);
  return out_weights * h + out_bias;
}

namespace {

void validate_mlp(const MlpExpert& m, Eigen::Index in, Eigen::Index out, const std::string& where) {
  if (m.in_dim() != in || m.out_dim() != out || m.hidden_bias.size() != m.hidden() ||
      m.out_bias.size() != out || m.out_weights.cols() != m.hidden()) {
    throw ContractError(where + ": inconsistent MLP dimensions");
  }
}

}  // namespace

void SparseMoE::validate() const {
  if (moe_layers.empty()) throw ContractError("SparseMoE: no MoE layers");
  if (moe_layers.size() != dense_blocks.size() + 1) {
    throw ContractError("SparseMoE: expected one more MoE layer than dense blocks");
  }
  const Eigen::Index d = dim();
  for (std::size_t l = 0; l < moe_layers.size(); ++l) {
    const auto& layer = moe_layers[l];
    const bool is_head = l + 1 == moe_layers.size();
    const Eigen::Index out = is_head ? num_classes : d;
    const int e = layer.router.num_experts();
    if (e < 1 || layer.router.dim() != d) throw ContractError("SparseMoE: bad router shape in layer " + std::to_string(l));
    if (layer.router.k < 1 || layer.router.k > e) {
      throw ContractError("SparseMoE: k = " + std::to_string(layer.router.k) + " outside [1, " + std::to_string(e) + "]");
    }
    if (layer.router.noise_enabled && !(layer.router.noise_sigma > 0.0)) {
      throw ContractError("SparseMoE: noise_sigma must be positive when noise is enabled");
    }
    if (static_cast<int>(layer.experts.size()) != e) throw ContractError("SparseMoE: expert count differs from router");
    if (layer.residual == is_head) throw ContractError("SparseMoE: only hidden MoE layers are residual");
    for (const auto& ex : layer.experts) validate_mlp(ex, d, out, "SparseMoE layer " + std::to_string(l));
  }
  for (const auto& blk : dense_blocks) validate_mlp(blk, d, d, "SparseMoE dense block");
}

namespace {

MlpExpert init_mlp(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, Rng& rng) {
  std::normal_distribution<double> n1(0.0, std::sqrt(2.0 / static_cast<double>(in)));
  std::normal_distribution<double> n2(0.0, std::sqrt(1.0 / static_cast<double>(hidden)));
  MlpExpert m{Matrix(hidden, in), Vector::Zero(hidden), Matrix(out, hidden), Vector::Zero(out)};
  for (Eigen::Index r = 0; r < hidden; ++r)
    for (Eigen::Index c = 0; c < in; ++c) m.hidden_weights(r, c) = n1(rng);
  for (Eigen::Index r = 0; r < out; ++r)
    for (Eigen::Index c = 0; c < hidden; ++c) m.out_weights(r, c) = n2(rng);
  return m;
}

MoeLayer init_layer(const SparseMoeShape& s, Eigen::Index out, bool residual, Rng& rng) {
  MoeLayer layer;
  std::normal_distribution<double> nr(0.0, std::sqrt(1.0 / static_cast<double>(s.dim)));
  layer.router.routing_params = Matrix(s.num_experts, s.dim);
  for (int r = 0; r < s.num_experts; ++r)
    for (int c = 0; c < s.dim; ++c) layer.router.routing_params(r, c) = nr(rng);
  layer.router.k = s.k;
  layer.router.noise_sigma = s.noise_sigma > 0 ? s.noise_sigma : 1.0 / s.num_experts;
  layer.router.noise_enabled = true;
  for (int e = 0; e < s.num_experts; ++e) layer.experts.push_back(init_mlp(s.dim, s.hidden, out, rng));
  layer.residual = residual;
  return layer;
}

}  // namespace

SparseMoE init_sparse_moe(const SparseMoeShape& s, std::uint64_t seed) {
  if (s.dim < 1 || s.num_experts < 1 || s.hidden < 1 || s.num_classes < 1 || s.num_blocks < 0) {
    throw ContractError("init_sparse_moe: sizes must be positive");
  }
  if (s.k < 1 || s.k > s.num_experts) throw ContractError("init_sparse_moe: k must lie in [1, E]");
  Rng rng(seed);
  SparseMoE m;
  m.num_classes = s.num_classes;
  for (int b = 0; b < s.num_blocks; ++b) {
    m.dense_blocks.push_back(init_mlp(s.dim, s.hidden, s.dim, rng));
    m.moe_layers.push_back(init_layer(s, s.dim, true, rng));
  }
  m.moe_layers.push_back(init_layer(s, s.num_classes, false, rng));
  m.validate();
  return m;
}

SparseMoeShape shape_of(const SparseMoE& m) {
  SparseMoeShape s;
  s.dim = static_cast<int>(m.dim());
  s.num_experts = m.head().router.num_experts();
  s.k = m.head().router.k;
  s.hidden = static_cast<int>(m.head().experts.front().hidden());
  s.num_classes = m.num_classes;
  s.num_blocks = static_cast<int>(m.dense_blocks.size());
  s.noise_sigma = m.head().router.noise_sigma;
  return s;
}

SparseMoE zeros_like(const SparseMoE& model) {
  SparseMoE z = model;
  for (auto block : parameter_blocks(z)) std::fill(block.begin(), block.end(), 0.0);
  return z;
}

namespace {

template <typename Model, typename Span>
std::vector<Span> collect_blocks(Model& m) {
  std::vector<Span> out;
  auto add = [&out](auto& eigen_obj) { out.emplace_back(eigen_obj.data(), static_cast<std::size_t>(eigen_obj.size())); };
  auto add_mlp = [&add](auto& mlp) {
    add(mlp.hidden_weights);
    add(mlp.hidden_bias);
    add(mlp.out_weights);
    add(mlp.out_bias);
  };
  for (std::size_t l = 0; l < m.moe_layers.size(); ++l) {
    if (l < m.dense_blocks.size()) add_mlp(m.dense_blocks[l]);
    auto& layer = m.moe_layers[l];
    add(layer.router.routing_params);
    for (auto& e : layer.experts) add_mlp(e);
  }
  return out;
}

}  // namespace

std::vector<std::span<double>> parameter_blocks(SparseMoE& model) {
  return collect_blocks<SparseMoE, std::span<double>>(model);
}

std::vector<std::span<const double>> parameter_blocks(const SparseMoE& model) {
  return collect_blocks<const SparseMoE, std::span<const double>>(model);
}

std::size_t parameter_count(const SparseMoE& model) {
  std::size_t n = 0;
  for (auto b : parameter_blocks(model)) n += b.size();
  return n;
}

std::vector<RoutingRecord> ForwardTrace::routing() const {
  std::vector<RoutingRecord> out;
  for (const auto& layer : moe) out.push_back({layer.selected, softmax(layer.clean_logits), layer.noisy_logits});
  return out;
}

Vector noisy_logits(const NoisyTopKRouter& router, const Vector& x, Rng& rng, bool apply_noise) {
  if (x.size() != router.dim()) throw ContractError("noisy_logits: input dimension mismatch");
  Vector logits = router.routing_params * x;
  if (apply_noise) {
    std::normal_distribution<double> noise(0.0, router.noise_sigma);
    for (Eigen::Index j = 0; j < logits.size(); ++j) logits(j) += noise(rng);
  }
  return logits;
}

std::vector<int> select_topk(const Vector& scores, int k, Rng& rng) {
  const int e = static_cast<int>(scores.size());
  if (k < 1 || k > e) throw ContractError("select_topk: k = " + std::to_string(k) + " outside [1, " + std::to_string(e) + "]");
  std::vector<int> order(static_cast<std::size_t>(e));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores(a) > scores(b); });
  const double cutoff = scores(order[static_cast<std::size_t>(k - 1)]);

  std::vector<int> chosen;
  std::vector<int> tied;
  for (int i : order) {
    if (scores(i) > cutoff)
      chosen.push_back(i);
    else if (scores(i) == cutoff)
      tied.push_back(i);
  }
  const std::size_t need = static_cast<std::size_t>(k) - chosen.size();
  if (tied.size() > need) std::shuffle(tied.begin(), tied.end(), rng);
  chosen.insert(chosen.end(), tied.begin(), tied.begin() + static_cast<std::ptrdiff_t>(need));
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

namespace {

MlpTrace mlp_forward(const MlpExpert& m, const Vector& x) {
  MlpTrace t;
  t.input = x;
  t.pre = m.hidden_weights * x + m.hidden_bias;
  t.hidden = t.pre.cwiseMax(0.0);
  t.output = m.out_weights * t.hidden + m.out_bias;
  return t;
}

// Returns the gradient with respect to the MLP input.
Vector mlp_backward(const MlpExpert& m, const MlpTrace& t, const Vector& d_out, MlpExpert* grads) {
  const Vector d_hidden = m.out_weights.transpose() * d_out;
  const Vector d_pre = (t.pre.array() > 0.0).select(d_hidden, 0.0);
  if (grads) {
    grads->out_weights.noalias() += d_out * t.hidden.transpose();
    grads->out_bias += d_out;
    grads->hidden_weights.noalias() += d_pre * t.input.transpose();
    grads->hidden_bias += d_pre;
  }
  return m.hidden_weights.transpose() * d_pre;
}

MoeLayerTrace layer_forward(const MoeLayer& layer, const Vector& x, CombineMode mode, RouterMode router_mode,
                            Rng& rng) {
  MoeLayerTrace t;
  t.input = x;
  t.clean_logits = layer.router.routing_params * x;
  const bool noisy = router_mode == RouterMode::Train && layer.router.noise_enabled;
  t.noisy_logits = t.clean_logits;
  if (noisy) {
    std::normal_distribution<double> noise(0.0, layer.router.noise_sigma);
    for (Eigen::Index j = 0; j < t.noisy_logits.size(); ++j) t.noisy_logits(j) += noise(rng);
  }
  t.probs = softmax(t.noisy_logits);
  const int k = mode == CombineMode::Hard ? 1 : layer.router.k;
  t.selected = select_topk(t.noisy_logits, k, rng);

  const Eigen::Index out_dim = layer.experts.front().out_dim();
  t.output = layer.residual ? x : Vector::Zero(out_dim);
  for (int i : t.selected) {
    MlpTrace et = mlp_forward(layer.experts[static_cast<std::size_t>(i)], x);
    const double w = mode == CombineMode::Hard ? 1.0 : t.probs(i);
    t.output += w * et.output;
    t.experts.push_back(std::move(et));
  }
  return t;
}

Vector layer_backward(const MoeLayer& layer, const MoeLayerTrace& t, CombineMode mode, const Vector& d_out,
                      const LayerAuxGrad* aux, MoeLayer* grads) {
  const Eigen::Index e = t.probs.size();
  Vector d_input = layer.residual ? d_out : Vector::Zero(t.input.size());
  Vector d_probs = Vector::Zero(e);
  for (std::size_t s = 0; s < t.selected.size(); ++s) {
    const int i = t.selected[s];
    const auto& et = t.experts[s];
    const double w = mode == CombineMode::Hard ? 1.0 : t.probs(i);
    if (mode == CombineMode::Weighted) d_probs(i) += d_out.dot(et.output);
    d_input += mlp_backward(layer.experts[static_cast<std::size_t>(i)], et, w * d_out,
                            grads ? &grads->experts[static_cast<std::size_t>(i)] : nullptr);
  }
  if (aux && aux->d_probs.size()) d_probs += aux->d_probs;
  Vector d_logits = t.probs.cwiseProduct(d_probs - Vector::Constant(e, t.probs.dot(d_probs)));
  if (aux && aux->d_noisy_logits.size()) d_logits += aux->d_noisy_logits;
  if (aux && aux->d_clean_logits.size()) d_logits += aux->d_clean_logits;
  if (grads) grads->router.routing_params.noalias() += d_logits * t.input.transpose();
  d_input.noalias() += layer.router.routing_params.transpose() * d_logits;
  return d_input;
}

}  // namespace

ForwardTrace sparse_forward(const SparseMoE& model, const Vector& x, CombineMode mode, RouterMode router_mode,
                            Rng& rng) {
  if (x.size() != model.dim()) {
    throw ContractError("sparse_forward: input dimension " + std::to_string(x.size()) + ", model expects " +
                        std::to_string(model.dim()));
  }
  ForwardTrace trace;
  trace.mode = mode;
  Vector h = x;
  for (std::size_t l = 0; l < model.moe_layers.size(); ++l) {
    if (l < model.dense_blocks.size()) {
      MlpTrace dt = mlp_forward(model.dense_blocks[l], h);
      h = h + dt.output;
      trace.dense.push_back(std::move(dt));
    }
    MoeLayerTrace lt = layer_forward(model.moe_layers[l], h, mode, router_mode, rng);
    h = lt.output;
    trace.moe.push_back(std::move(lt));
  }
  trace.logits = h;
  return trace;
}

void sparse_backward(const SparseMoE& model, const ForwardTrace& trace, const Vector& d_logits,
                     const std::vector<LayerAuxGrad>* aux, SparseMoE* param_grads, Vector* input_grad) {
  Vector g = d_logits;
  for (std::size_t l = model.moe_layers.size(); l-- > 0;) {
    const LayerAuxGrad* a = aux && l < aux->size() ? &(*aux)[l] : nullptr;
    g = layer_backward(model.moe_layers[l], trace.moe[l], trace.mode, g, a,
                       param_grads ? &param_grads->moe_layers[l] : nullptr);
    if (l < model.dense_blocks.size()) {
      g += mlp_backward(model.dense_blocks[l], trace.dense[l], g, param_grads ? &param_grads->dense_blocks[l] : nullptr);
    }
  }
  if (input_grad) *input_grad = g;
}

namespace {

// Squared coefficient of variation (population std) and its gradient.
double cv_squared(const Vector& v, Vector* grad, const char* what) {
  const double n = static_cast<double>(v.size());
  const double mean = v.mean();
  if (!(mean != 0.0)) throw ContractError(std::string(what) + ": mean over experts is zero");
  const Vector centred = v.array() - mean;
  const double var = centred.squaredNorm() / n;
  if (grad) *grad = (2.0 / (n * mean * mean)) * centred - Vector::Constant(v.size(), 2.0 * var / (n * mean * mean * mean));
  return var / (mean * mean);
}

// Index of the k-th largest entry (ties resolved towards the lowest index).
Eigen::Index kth_largest_index(const Vector& row, int k) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(row.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return row(a) > row(b); });
  return order[static_cast<std::size_t>(k - 1)];
}

void check_load_args(const Matrix& clean, const Matrix& noisy, int k, double sigma) {
  if (clean.rows() != noisy.rows() || clean.cols() != noisy.cols()) throw ContractError("load_loss: shape mismatch");
  if (k < 1 || k > clean.cols()) throw ContractError("load_loss: k outside [1, E]");
  if (!(sigma > 0.0)) throw ContractError("load_loss: sigma must be positive");
}

double importance_with_grad(const Matrix& probs, Vector* importance, Matrix* d_probs) {
  if (probs.rows() < 1) throw ContractError("importance_loss: empty batch");
  const Vector imp = probs.colwise().sum().transpose();
  Vector g;
  const double loss = cv_squared(imp, d_probs ? &g : nullptr, "importance_loss");
  if (importance) *importance = imp;
  if (d_probs) *d_probs = Matrix::Ones(probs.rows(), 1) * g.transpose();
  return loss;
}

double load_with_grad(const Matrix& clean, const Matrix& noisy, int k, double sigma, Vector* load, Matrix* d_clean,
                      Matrix* d_noisy) {
  check_load_args(clean, noisy, k, sigma);
  if (clean.rows() < 1) throw ContractError("load_loss: empty batch");
  const Eigen::Index n = clean.rows();
  const Eigen::Index e = clean.cols();
  Matrix z(n, e);
  std::vector<Eigen::Index> tau_idx(static_cast<std::size_t>(n));
  Matrix pi(n, e);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector row = noisy.row(i).transpose();
    tau_idx[static_cast<std::size_t>(i)] = kth_largest_index(row, k);
    const double tau = row(tau_idx[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < e; ++j) {
      z(i, j) = (tau - clean(i, j)) / sigma;
      pi(i, j) = 1.0 - gaussian_cdf(z(i, j));
    }
  }
  const Vector l = pi.colwise().sum().transpose();
  Vector g;
  const bool want_grad = d_clean || d_noisy;
  const double loss = cv_squared(l, want_grad ? &g : nullptr, "load_loss");
  if (load) *load = l;
  if (want_grad) {
    Matrix dc(n, e);
    Matrix dn = Matrix::Zero(n, e);
    for (Eigen::Index i = 0; i < n; ++i) {
      double d_tau = 0.0;
      for (Eigen::Index j = 0; j < e; ++j) {
        const double dpi_dclean = gaussian_pdf(z(i, j)) / sigma;
        dc(i, j) = g(j) * dpi_dclean;
        d_tau -= g(j) * dpi_dclean;
      }
      dn(i, tau_idx[static_cast<std::size_t>(i)]) = d_tau;
    }
    if (d_clean) *d_clean = std::move(dc);
    if (d_noisy) *d_noisy = std::move(dn);
  }
  return loss;
}

}  // namespace

double importance_loss(const Matrix& probs) { return importance_with_grad(probs, nullptr, nullptr); }

Matrix load_probabilities(const Matrix& clean, const Matrix& noisy, int k, double sigma) {
  check_load_args(clean, noisy, k, sigma);
  Matrix pi(clean.rows(), clean.cols());
  for (Eigen::Index i = 0; i < clean.rows(); ++i) {
    const Vector row = noisy.row(i).transpose();
    const double tau = row(kth_largest_index(row, k));
    for (Eigen::Index j = 0; j < clean.cols(); ++j) pi(i, j) = 1.0 - gaussian_cdf((tau - clean(i, j)) / sigma);
  }
  return pi;
}

double load_loss(const Matrix& clean, const Matrix& noisy, int k, double sigma) {
  return load_with_grad(clean, noisy, k, sigma, nullptr, nullptr, nullptr);
}

LossResult total_loss(const SparseMoE& model, const Matrix& x, const Matrix& labels, const LossWeights& weights,
                      RouterMode router_mode, std::uint64_t noise_seed, SparseMoE* param_grads, Matrix* input_grads) {
  const Eigen::Index n = x.rows();
  if (n < 1) throw ContractError("total_loss: empty batch");
  if (labels.rows() != n || labels.cols() != model.num_classes) throw ContractError("total_loss: label shape mismatch");

  LossResult res;
  res.traces.reserve(static_cast<std::size_t>(n));
  Matrix d_logits(n, model.num_classes);
  for (Eigen::Index i = 0; i < n; ++i) {
    Rng rng(derive_seed(noise_seed, static_cast<std::uint64_t>(i)));
    res.traces.push_back(sparse_forward(model, x.row(i).transpose(), CombineMode::Weighted, router_mode, rng));
    const Vector& z = res.traces.back().logits;
    const double mass = labels.row(i).sum();
    if (!(mass > 0.0)) throw ContractError("total_loss: row " + std::to_string(i) + " has no positive label");
    const Vector target = labels.row(i).transpose() / mass;
    const double top = z.maxCoeff();
    const double lse = top + std::log((z.array() - top).exp().sum());
    res.classification += lse - target.dot(z);
    d_logits.row(i) = ((softmax(z) - target) / static_cast<double>(n)).transpose();
  }
  res.classification /= static_cast<double>(n);
  res.total = res.classification;

  const bool want_grad = param_grads || input_grads;
  const int layers = model.num_moe_layers();
  std::vector<std::vector<LayerAuxGrad>> aux_grads(static_cast<std::size_t>(n),
                                                   std::vector<LayerAuxGrad>(static_cast<std::size_t>(layers)));
  for (int l = 0; l < layers; ++l) {
    const auto& router = model.moe_layers[static_cast<std::size_t>(l)].router;
    const Eigen::Index e = router.num_experts();
    Matrix probs(n, e), clean(n, e), noisy(n, e);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& lt = res.traces[static_cast<std::size_t>(i)].moe[static_cast<std::size_t>(l)];
      probs.row(i) = lt.probs.transpose();
      clean.row(i) = lt.clean_logits.transpose();
      noisy.row(i) = lt.noisy_logits.transpose();
    }
    AuxLossReport rep;
    Matrix d_probs, d_clean, d_noisy;
    rep.importance_loss = importance_with_grad(probs, &rep.importance, want_grad ? &d_probs : nullptr);
    rep.load_loss = load_with_grad(clean, noisy, router.k, router.noise_sigma, &rep.load,
                                   want_grad ? &d_clean : nullptr, want_grad ? &d_noisy : nullptr);
    res.total += weights.importance * rep.importance_loss + weights.load * rep.load_loss;
    if (want_grad) {
      for (Eigen::Index i = 0; i < n; ++i) {
        auto& ag = aux_grads[static_cast<std::size_t>(i)][static_cast<std::size_t>(l)];
        ag.d_probs = weights.importance * d_probs.row(i).transpose();
        ag.d_clean_logits = weights.load * d_clean.row(i).transpose();
        ag.d_noisy_logits = weights.load * d_noisy.row(i).transpose();
      }
    }
    res.aux.push_back(std::move(rep));
  }

  if (want_grad) {
    if (input_grads) *input_grads = Matrix(n, x.cols());
    Vector dx;
    for (Eigen::Index i = 0; i < n; ++i) {
      sparse_backward(model, res.traces[static_cast<std::size_t>(i)], d_logits.row(i).transpose(),
                      &aux_grads[static_cast<std::size_t>(i)], param_grads, input_grads ? &dx : nullptr);
      if (input_grads) input_grads->row(i) = dx.transpose();
    }
  }
  return res;
}

double train_step(SparseMoE& model, const LabeledDataset& batch, double learning_rate, const LossWeights& weights,
                  std::uint64_t noise_seed) {
  if (!(learning_rate >= 0.0)) throw ContractError("train_step: learning rate must be non-negative");
  SparseMoE grads = zeros_like(model);
  const LossResult res = total_loss(model, batch.x, batch.labels, weights, RouterMode::Train, noise_seed, &grads);
  if (!std::isfinite(res.total)) throw DivergenceError("train_step: non-finite loss");
  auto params = parameter_blocks(model);
  const auto g = parameter_blocks(std::as_const(grads));
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (std::size_t j = 0; j < params[b].size(); ++j) {
      if (!std::isfinite(g[b][j])) throw DivergenceError("train_step: non-finite gradient");
    }
  }
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (std::size_t j = 0; j < params[b].size(); ++j) params[b][j] -= learning_rate * g[b][j];
  }
  return res.total;
}

std::vector<Eigen::Index> minibatch_indices(Eigen::Index rows, int batch_size, int step, std::uint64_t seed) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(rows));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  if (batch_size <= 0 || batch_size >= rows) return idx;
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(step)));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(batch_size));
  return idx;
}

TrainLog train(SparseMoE& model, const LabeledDataset& data, const TrainConfig& cfg, std::uint64_t seed) {
  TrainLog log;
  const std::uint64_t noise_root = derive_seed(seed, "router-noise");
  const std::uint64_t batch_root = derive_seed(seed, "minibatch");
  for (int step = 0; step < cfg.steps; ++step) {
    const auto idx = minibatch_indices(data.rows(), cfg.batch_size, step, batch_root);
    const LabeledDataset batch = idx.size() == static_cast<std::size_t>(data.rows()) ? data : data.take(idx);
    log.losses.push_back(train_step(model, batch, cfg.learning_rate, cfg.aux,
                                    derive_seed(noise_root, static_cast<std::uint64_t>(step))));
  }
  return log;
}

Matrix predict_logits(const SparseMoE& model, const Matrix& x, std::uint64_t tie_seed) {
  Matrix out(x.rows(), model.num_classes);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Rng rng(derive_seed(tie_seed, static_cast<std::uint64_t>(i)));
    out.row(i) = sparse_forward(model, x.row(i).transpose(), CombineMode::Weighted, RouterMode::Eval, rng).logits.transpose();
  }
  return out;
}

}  // namespace moerob
