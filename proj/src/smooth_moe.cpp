// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

#include "moerob/smooth_moe.hpp"

#include <algorithm>
#include <random>
#include <string>

#include "moerob/errors.hpp"
#include "moerob/rng.hpp"

namespace moerob {

void SmoothMoE::validate() const {
  if (router.num_experts() < 1) throw ContractError("SmoothMoE: router has no experts");
  if (static_cast<int>(experts.size()) != router.num_experts()) {
    throw ContractError("SmoothMoE: " + std::to_string(experts.size()) + " experts but router has " +
                        std::to_string(router.num_experts()));
  }
  for (const auto& e : experts) {
    if (e.weights.size() != router.dim()) throw ContractError("SmoothMoE: expert dimension mismatch");
  }
}

Vector softmax(const Vector& logits) {
  const double top = logits.maxCoeff();
  Vector p = (logits.array() - top).exp().matrix();
  return p / p.sum();
}

namespace {

void check_dim(const SoftmaxRouter& router, const Vector& x) {
  if (x.size() != router.dim()) {
    throw ContractError("input has dimension " + std::to_string(x.size()) + ", router expects " +
                        std::to_string(router.dim()));
  }
}

Vector expert_outputs(const SmoothMoE& model, const Vector& x) {
  Vector f(static_cast<Eigen::Index>(model.experts.size()));
  for (std::size_t i = 0; i < model.experts.size(); ++i) f(static_cast<Eigen::Index>(i)) = model.experts[i](x);
  return f;
}

}  // namespace

Vector routing_probs(const SoftmaxRouter& router, const Vector& x) {
  check_dim(router, x);
  return softmax(router.routing_params * x);
}

double forward(const SmoothMoE& model, const Vector& x) {
  model.validate();
  return routing_probs(model.router, x).dot(expert_outputs(model, x));
}

Vector input_gradient(const SmoothMoE& model, const Vector& x) {
  model.validate();
  const Vector p = routing_probs(model.router, x);
  const Vector f = expert_outputs(model, x);
  const Matrix& s = model.router.routing_params;
  const Vector sbar = s.transpose() * p;
  Vector g = Vector::Zero(x.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    g += p(i) * model.experts[static_cast<std::size_t>(i)].weights;
    g += p(i) * f(i) * (s.row(i).transpose() - sbar);
  }
  return g;
}

Lemma1Report lemma1_pointwise(const SmoothMoE& model, const Vector& x) {
  model.validate();
  const Vector p = routing_probs(model.router, x);
  const Vector f = expert_outputs(model, x);
  const Matrix& s = model.router.routing_params;

  Lemma1Report rep;
  rep.sbar = s.transpose() * p;
  Vector router_vec = Vector::Zero(x.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    rep.expert_term += p(i) * model.experts[static_cast<std::size_t>(i)].lipschitz();
    router_vec += p(i) * f(i) * (s.row(i).transpose() - rep.sbar);
  }
  rep.router_term = router_vec.norm();
  rep.bound = rep.expert_term + rep.router_term;
  rep.grad_norm = input_gradient(model, x).norm();
  if (rep.grad_norm > rep.bound + 1e-9 * (1.0 + rep.bound)) {
    throw NumericalFailure("lemma1_pointwise: gradient norm exceeds the bound");
  }
  return rep;
}

std::vector<Vector> sample_box(const BoxDomain& domain, Eigen::Index dim, int num_samples, std::uint64_t seed) {
  if (num_samples < 1) throw ContractError("sample_box: num_samples must be >= 1");
  const Vector center = domain.center.size() ? domain.center : Vector::Zero(dim);
  if (center.size() != dim) throw ContractError("sample_box: domain centre dimension mismatch");
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-domain.radius, domain.radius);
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(num_samples));
  for (int n = 0; n < num_samples; ++n) {
    Vector x(dim);
    for (Eigen::Index c = 0; c < dim; ++c) x(c) = center(c) + u(rng);
    out.push_back(std::move(x));
  }
  return out;
}

Lemma1Global lemma1_global(const SmoothMoE& model, const BoxDomain& domain, int num_samples, std::uint64_t seed) {
  model.validate();
  Lemma1Global out;
  for (const auto& e : model.experts) out.max_expert_lipschitz = std::max(out.max_expert_lipschitz, e.lipschitz());
  for (const Vector& x : sample_box(domain, model.dim(), num_samples, seed)) {
    const Lemma1Report rep = lemma1_pointwise(model, x);
    out.sup_router_term = std::max(out.sup_router_term, rep.router_term);
    out.pointwise_bounds.push_back(rep.bound);
  }
  out.global_bound = out.max_expert_lipschitz + out.sup_router_term;
  return out;
}

SmoothMoE random_smooth_moe(int num_experts, int dim, double scale, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  SmoothMoE m;
  m.router.routing_params = Matrix(num_experts, dim);
  for (int i = 0; i < num_experts; ++i)
    for (int c = 0; c < dim; ++c) m.router.routing_params(i, c) = normal(rng);
  for (int i = 0; i < num_experts; ++i) {
    LinearExpert e{Vector(dim), normal(rng)};
    for (int c = 0; c < dim; ++c) e.weights(c) = normal(rng);
    m.experts.push_back(std::move(e));
  }
  return m;
}

}  // namespace moerob
