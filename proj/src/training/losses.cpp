// Copyright 2026 The noisegate Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "noisegate/training/losses.hpp"

#include "noisegate/error.hpp"

namespace noisegate::training {
namespace F = torch::nn::functional;

namespace {

void require_finite(const torch::Tensor& t, const char* what) {
  if (!torch::isfinite(t.detach()).all().item<bool>()) {
    throw NumericFailure(std::string(what) + " contains non-finite scores");
  }
}

}  // namespace

torch::Tensor g_loss(const torch::Tensor& fake_scores) {
  require_finite(fake_scores, "g_loss input");
  return F::softplus(-fake_scores).mean();
}

torch::Tensor d_loss(const torch::Tensor& real_scores, const torch::Tensor& fake_scores) {
  require_finite(real_scores, "d_loss real input");
  require_finite(fake_scores, "d_loss fake input");
  return F::softplus(-real_scores).mean() + F::softplus(fake_scores).mean();
}

torch::Tensor r1_penalty(const ScoreFn& d, const torch::Tensor& real_batch, double gamma, bool create_graph) {
  auto x = real_batch.detach().requires_grad_(true);
  auto scores = d(x);
  if (!scores.requires_grad()) {
    // Score independent of the input: the gradient is identically zero.
    return torch::zeros({}, real_batch.options());
  }
  auto grads = torch::autograd::grad({scores.sum()}, {x}, {}, /*retain_graph=*/true, create_graph,
                                     /*allow_unused=*/true)[0];
  if (!grads.defined()) return torch::zeros({}, real_batch.options());
  auto penalty = grads.square().flatten(1).sum(1).mean() * (gamma / 2.0);
  if (!torch::isfinite(penalty.detach()).item<bool>()) throw NumericFailure("R1 penalty is non-finite");
  return penalty;
}

}  // namespace noisegate::training
