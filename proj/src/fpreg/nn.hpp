// Copyright 2026 The fpreg Authors.
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

// A small CPU convolutional network: 3x3 same-padded convolutions, ReLU,
// 2x2 max pooling and dense layers under a softmax cross-entropy head,
// trained by plain SGD on the regularised objective.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fpreg/data.hpp"
#include "fpreg/mixture.hpp"
#include "fpreg/numeric.hpp"
#include "fpreg/params.hpp"
#include "fpreg/regularizer.hpp"

namespace fpreg {

enum class LayerKind { kConv3x3, kRelu, kMaxPool2, kFlatten, kDense };

struct LayerSpec {
  LayerKind kind;
  std::size_t units = 0;  // output channels (conv) or features (dense)
};

struct Architecture {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::vector<LayerSpec> layers;

  // Comma-separated layer list, e.g. "conv:16,relu,pool,flatten,dense:10".
  static Architecture parse(std::string_view layers, std::size_t channels, std::size_t height,
                            std::size_t width);
  // conv(3->16)-relu-pool-conv(16->32)-relu-pool-dense on 3x32x32 inputs.
  static Architecture reference(std::size_t classes = 10);

  std::string layer_string() const;
};

class Network {
 public:
  // He-style fan-in scaled normal weights from seed; zero biases.
  static Network build(const Architecture& arch, std::uint64_t seed);

  const Architecture& architecture() const { return arch_; }
  NamedTensors& params() { return params_; }
  const NamedTensors& params() const { return params_; }
  std::size_t parameter_count() const;
  std::size_t num_classes() const { return classes_; }
  std::size_t input_size() const { return arch_.channels * arch_.height * arch_.width; }

  // Adds every parameter whose name matches the glob to the frozen set and
  // returns how many matched.
  std::size_t freeze(std::string_view pattern);
  bool is_frozen(std::string_view name) const { return frozen_.count(std::string(name)) != 0; }
  const std::set<std::string>& frozen() const { return frozen_; }

  // Replaces parameter values from a snapshot with identical names and shapes.
  void load(const NamedTensors& values);

  struct Plan {
    LayerKind kind;
    std::size_t in_c, in_h, in_w;
    std::size_t out_c, out_h, out_w;
    int weight = -1;  // index into params, -1 if none
    int bias = -1;
    std::size_t in_size() const { return in_c * in_h * in_w; }
    std::size_t out_size() const { return out_c * out_h * out_w; }
  };
  const std::vector<Plan>& plan() const { return plan_; }

 private:
  Architecture arch_;
  std::vector<Plan> plan_;
  NamedTensors params_;
  std::set<std::string> frozen_;
  std::size_t classes_ = 0;
};

struct Batch {
  std::size_t count = 0;
  std::vector<double> inputs;  // count x input_size
  std::vector<std::uint32_t> labels;
};

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices);
Batch make_batch(const Dataset& data, std::size_t begin, std::size_t end);

struct ForwardResult {
  Matrix logits;      // count x classes
  double loss = 0.0;  // mean cross-entropy
};

// Throws kInput on shape mismatch and kNumeric (naming the layer) on a
// non-finite activation.
ForwardResult forward(const Network& net, const Batch& batch);

struct BackwardResult {
  double loss = 0.0;
  NamedTensors grads;  // aligned with net.params(); zero for frozen tensors
};

// Mean cross-entropy and its gradient with respect to every parameter.
BackwardResult backward(const Network& net, const Batch& batch);

// w <- w - lr (g + alpha w) - lr * reg_grad for every unfrozen tensor. The
// regulariser is only evaluated when lambda != 0.
void sgd_step(Network& net, const NamedTensors& grads, double learning_rate, const RegConfig& reg,
              const GaussianMixture* model);

// Complete training objective on one batch: mean CE + alpha/2 |w|^2 +
// reg_loss, with weight decay restricted to unfrozen parameters.
double objective(const Network& net, const Batch& batch, const GaussianMixture* model,
                 const RegConfig& reg);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

Evaluation evaluate(const Network& net, const Dataset& data, std::size_t limit = 0);

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  std::size_t iterations = 0;
  std::uint64_t seed = 0;
  RegConfig reg;
  std::size_t eval_every = 100;
  std::size_t eval_train_limit = 0;  // 0: evaluate on the whole train split
  std::vector<std::size_t> snapshot_iters;
  std::size_t freeze_at = 0;  // 0: never
  std::string freeze_pattern = "conv*";
};

struct EvalRecord {
  std::size_t iteration = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;
  bool operator==(const EvalRecord&) const = default;
};

struct TrainHooks {
  std::function<void(const EvalRecord&)> on_eval;
  std::function<void(std::size_t iteration, const Network&)> on_snapshot;
  std::function<void(std::size_t iteration, std::size_t matched)> on_freeze;
};

// Deterministic SGD: the shuffle order derives from cfg.seed only.
// Records an evaluation at iteration 0, every eval_every iterations and at
// the last iteration. kNumeric if the loss diverges.
std::vector<EvalRecord> train(Network& net, const Dataset& train_set, const Dataset& test_set,
                              const TrainConfig& cfg, const GaussianMixture* model,
                              const TrainHooks& hooks = {});

std::string render_train_log_csv(std::span<const EvalRecord> log);

}  // namespace fpreg
