// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "moerob/numeric.hpp"
#include "moerob/rng.hpp"
#include "moerob/synth_data.hpp"

namespace moerob {

/// Linear-logit router with optional Gaussian logit noise; selects the top k experts.
struct NoisyTopKRouter {
  Matrix routing_params;  // E x D
  int k = 1;
  double noise_sigma = 1.0;
  bool noise_enabled = true;

  int num_experts() const { return static_cast<int>(routing_params.rows()); }
  Eigen::Index dim() const { return routing_params.cols(); }
};

/// One-hidden-layer rectifier network in_dim -> hidden -> out_dim.
struct MlpExpert {
  Matrix hidden_weights;  // H x D
  Vector hidden_bias;     // H
  Matrix out_weights;     // C x H
  Vector out_bias;        // C

  Eigen::Index in_dim() const { return hidden_weights.cols(); }
  Eigen::Index hidden() const { return hidden_weights.rows(); }
  Eigen::Index out_dim() const { return out_weights.rows(); }
  Vector operator()(const Vector& x) const;
};

struct MoeLayer {
  NoisyTopKRouter router;
  std::vector<MlpExpert> experts;
  bool residual = false;  // output = input + mixture (hidden layers only)
};

/// A stack of (dense residual MLP, residual MoE layer) blocks followed by an MoE
/// classification head. With zero blocks this is a single sparse MoE layer whose experts
/// emit class logits.
struct SparseMoE {
  std::vector<MlpExpert> dense_blocks;
  std::vector<MoeLayer> moe_layers;  // dense_blocks.size() + 1 entries, head last
  int num_classes = 0;

  const MoeLayer& head() const { return moe_layers.back(); }
  MoeLayer& head() { return moe_layers.back(); }
  int num_moe_layers() const { return static_cast<int>(moe_layers.size()); }
  Eigen::Index dim() const { return moe_layers.front().router.dim(); }
  void validate() const;
};

struct SparseMoeShape {
  int dim = 16;
  int num_experts = 8;
  int k = 2;
  int hidden = 16;
  int num_classes = 4;
  int num_blocks = 0;
  double noise_sigma = 0.0;  // <= 0 selects 1/E
};

SparseMoE init_sparse_moe(const SparseMoeShape& shape, std::uint64_t seed);
SparseMoeShape shape_of(const SparseMoE& model);
SparseMoE zeros_like(const SparseMoE& model);

/// Parameter storage in checkpoint order: per block the dense MLP, then per MoE layer the
/// router followed by experts in index order; within an MLP hidden weights, hidden bias,
/// out weights, out bias.
std::vector<std::span<double>> parameter_blocks(SparseMoE& model);
std::vector<std::span<const double>> parameter_blocks(const SparseMoE& model);
std::size_t parameter_count(const SparseMoE& model);

enum class CombineMode { Hard, Weighted };
enum class RouterMode { Train, Eval };

struct RoutingRecord {
  std::vector<int> selected;  // ascending expert indices, size k (1 in hard mode)
  Vector clean_probs;
  Vector noisy_logits;
};

/// <s_j, x> + eps_j with eps_j ~ N(0, noise_sigma^2) when apply_noise, otherwise the clean logits.
Vector noisy_logits(const NoisyTopKRouter& router, const Vector& x, Rng& rng, bool apply_noise);

/// Indices of the k largest scores, ascending. Ties straddling the cutoff are broken uniformly at random.
std::vector<int> select_topk(const Vector& scores, int k, Rng& rng);

struct MlpTrace {
  Vector input, pre, hidden, output;
};

struct MoeLayerTrace {
  Vector input;
  Vector clean_logits;
  Vector noisy_logits;
  Vector probs;  // softmax of the noisy logits (equal to the clean ones in eval mode)
  std::vector<int> selected;
  std::vector<MlpTrace> experts;  // parallel to `selected`
  Vector output;
};

struct ForwardTrace {
  CombineMode mode = CombineMode::Weighted;
  std::vector<MlpTrace> dense;
  std::vector<MoeLayerTrace> moe;
  Vector logits;

  std::vector<RoutingRecord> routing() const;
};

/// Hard mode: the single argmax expert's output. Weighted mode: sum over the top-k of p_i f_i
/// with unrenormalised probabilities. Noise is drawn from `rng` only in Train mode with noise enabled.
ForwardTrace sparse_forward(const SparseMoE& model, const Vector& x, CombineMode mode, RouterMode router_mode,
                            Rng& rng);

/// Extra upstream gradients for one MoE layer coming from batch-level auxiliary losses.
struct LayerAuxGrad {
  Vector d_probs;
  Vector d_clean_logits;
  Vector d_noisy_logits;
};

/// Backpropagates d_logits (and optional per-layer auxiliary gradients) through a trace.
/// The expert selection is held fixed; unselected experts receive no gradient.
void sparse_backward(const SparseMoE& model, const ForwardTrace& trace, const Vector& d_logits,
                     const std::vector<LayerAuxGrad>* aux, SparseMoE* param_grads, Vector* input_grad);

/// Squared coefficient of variation (population std) of per-expert summed probabilities.
/// probs is batch x E. Throws ContractError when the mean importance is zero.
double importance_loss(const Matrix& probs);

/// pi_ij = 1 - Phi((tau_k(x_i) - clean_ij) / sigma), tau_k the k-th largest noisy logit of row i.
Matrix load_probabilities(const Matrix& clean_logits, const Matrix& noisy_logits, int k, double sigma);
/// Squared coefficient of variation of Load_j = sum_i pi_ij.
double load_loss(const Matrix& clean_logits, const Matrix& noisy_logits, int k, double sigma);

struct AuxLossReport {
  Vector importance;
  Vector load;
  double importance_loss = 0.0;
  double load_loss = 0.0;
};

struct LossWeights {
  double importance = 0.005;
  double load = 0.005;
};

struct LossResult {
  double total = 0.0;
  double classification = 0.0;  // mean softmax cross-entropy
  std::vector<AuxLossReport> aux;  // per MoE layer
  std::vector<ForwardTrace> traces;
};

/// Softmax cross-entropy of the weighted forward against the normalised label row,
/// averaged over the batch, plus weighted importance and load losses summed over MoE layers.
/// Per-example noise and tie-breaks come from derive_seed(noise_seed, row).
/// When param_grads / input_grads are given they receive the exact gradient of `total`.
LossResult total_loss(const SparseMoE& model, const Matrix& x, const Matrix& labels, const LossWeights& weights,
                      RouterMode router_mode, std::uint64_t noise_seed, SparseMoE* param_grads = nullptr,
                      Matrix* input_grads = nullptr);

/// One plain gradient-descent step in place; returns the loss before the update.
/// Throws DivergenceError on a non-finite loss or gradient.
double train_step(SparseMoE& model, const LabeledDataset& batch, double learning_rate, const LossWeights& weights,
                  std::uint64_t noise_seed);

struct TrainConfig {
  int steps = 500;
  double learning_rate = 0.1;
  int batch_size = 0;  // 0 = full batch
  LossWeights aux;
};

struct TrainLog {
  std::vector<double> losses;
};

TrainLog train(SparseMoE& model, const LabeledDataset& data, const TrainConfig& cfg, std::uint64_t seed);

/// Evaluation-mode class logits (N x C) for every row.
Matrix predict_logits(const SparseMoE& model, const Matrix& x, std::uint64_t tie_seed = 0);

/// Indices of the minibatch used at `step` (all rows when batch_size is 0 or >= N).
std::vector<Eigen::Index> minibatch_indices(Eigen::Index rows, int batch_size, int step, std::uint64_t seed);

}  // namespace moerob
