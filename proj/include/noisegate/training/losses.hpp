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

#pragma once

#include <torch/torch.h>

#include <functional>

namespace noisegate::training {

/// Non-saturating generator loss: mean softplus(-D(G(z))).
torch::Tensor g_loss(const torch::Tensor& fake_scores);

/// Logistic discriminator loss: mean softplus(-D(x)) + mean softplus(D(G(z))).
torch::Tensor d_loss(const torch::Tensor& real_scores, const torch::Tensor& fake_scores);

using ScoreFn = std::function<torch::Tensor(const torch::Tensor&)>;

/// R1 gradient penalty (gamma / 2) * mean_b ||grad_x D(x_b)||^2 at the real
/// batch. With `create_graph` the result can be backpropagated into the
/// parameters of `d`.
torch::Tensor r1_penalty(const ScoreFn& d, const torch::Tensor& real_batch, double gamma, bool create_graph = true);

}  // namespace noisegate::training
