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

#include "fpreg/nn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fpreg/error.hpp"
#include "fpreg/stats.hpp"

namespace fpreg {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

void check_finite(std::span<const double> v, std::size_t layer) {
  if (!all_finite(v))
    fail(ErrorKind::kNumeric, "non-finite activation at layer " + std::to_string(layer));
}

void conv_forward(const double* in, double* out, const double* w, const double* b,
                  std::size_t cin, std::size_t cout, std::size_t h, std::size_t wd) {
  const std::size_t hw = h * wd;
  for (std::size_t co = 0; co < cout; ++co) {
    double* o = out + co * hw;
    std::fill(o, o + hw, b[co]);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* src = in + ci * hw;
      const double* k = w + (co * cin + ci) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const std::size_t y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? h - 1 : h;
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const std::size_t x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? wd - 1 : wd;
          const double kv = k[ky * 3 + kx];
          for (std::size_t y = y0; y < y1; ++y) {
            const double* s = src + (y + dy) * wd + dx;
            double* d = o + y * wd;
            for (std::size_t x = x0; x < x1; ++x) d[x] += kv * s[x];
          }
        }
      }
    }
  }
}

// Accumulates dW, db and (when gin != nullptr) dInput for one example.
void conv_backward(const double* in, const double* gout, const double* w, double* gw, double* gb,
                   double* gin, std::size_t cin, std::size_t cout, std::size_t h, std::size_t wd) {
  const std::size_t hw = h * wd;
  for (std::size_t co = 0; co < cout; ++co) {
    const double* g = gout + co * hw;
    if (gb) {
      double s = 0.0;
      for (std::size_t i = 0; i < hw; ++i) s += g[i];
      gb[co] += s;
    }
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* src = in + ci * hw;
      double* gsrc = gin ? gin + ci * hw : nullptr;
      const double* k = w + (co * cin + ci) * 9;
      double* gk = gw ? gw + (co * cin + ci) * 9 : nullptr;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const std::size_t y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? h - 1 : h;
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const std::size_t x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? wd - 1 : wd;
          const double kv = k[ky * 3 + kx];
          double acc = 0.0;
          for (std::size_t y = y0; y < y1; ++y) {
            const std::ptrdiff_t off = (static_cast<std::ptrdiff_t>(y) + dy) * static_cast<std::ptrdiff_t>(wd) + dx;
            const double* gy = g + y * wd;
            if (gk) {
              const double* s = src + off;
              for (std::size_t x = x0; x < x1; ++x) acc += gy[x] * s[x];
            }
            if (gsrc) {
              double* gs = gsrc + off;
              for (std::size_t x = x0; x < x1; ++x) gs[x] += kv * gy[x];
            }
          }
          if (gk) gk[ky * 3 + kx] += acc;
        }
      }
    }
  }
}

struct ExampleTrace {
  std::vector<std::vector<double>> acts;  // acts[l] is the input of layer l
  std::vector<std::vector<std::uint32_t>> pool_index;
};

// Runs one example through the network, keeping every intermediate.
void forward_example(const Network& net, std::span<const double> input, ExampleTrace& t) {
  const auto& plan = net.plan();
  const auto& params = net.params();
  t.acts.resize(plan.size() + 1);
  t.pool_index.resize(plan.size());
  t.acts[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < plan.size(); ++l) {
    const auto& p = plan[l];
    const auto& in = t.acts[l];
    auto& out = t.acts[l + 1];
    out.assign(p.out_size(), 0.0);
    switch (p.kind) {
      case LayerKind::kConv3x3:
        conv_forward(in.data(), out.data(), params[p.weight].values.data(),
                     params[p.bias].values.data(), p.in_c, p.out_c, p.in_h, p.in_w);
        break;
      case LayerKind::kRelu:
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
        break;
      case LayerKind::kMaxPool2: {
        auto& idx = t.pool_index[l];
        idx.resize(p.out_size());
        for (std::size_t c = 0; c < p.out_c; ++c)
          for (std::size_t y = 0; y < p.out_h; ++y)
            for (std::size_t x = 0; x < p.out_w; ++x) {
              const std::size_t base = (c * p.in_h + 2 * y) * p.in_w + 2 * x;
              const std::size_t cand[4] = {base, base + 1, base + p.in_w, base + p.in_w + 1};
              std::size_t arg = cand[0];
              for (int q = 1; q < 4; ++q)
                if (in[cand[q]] > in[arg]) arg = cand[q];
              const std::size_t o = (c * p.out_h + y) * p.out_w + x;
              out[o] = in[arg];
              idx[o] = static_cast<std::uint32_t>(arg);
            }
        break;
      }
      case LayerKind::kFlatten:
        out = in;
        break;
      case LayerKind::kDense: {
        const double* w = params[p.weight].values.data();
        const double* b = params[p.bias].values.data();
        const std::size_t fin = p.in_size();
        for (std::size_t o = 0; o < p.out_c; ++o) {
          double s = b[o];
          const double* row = w + o * fin;
          for (std::size_t i = 0; i < fin; ++i) s += row[i] * in[i];
          out[o] = s;
        }
        break;
      }
    }
    check_finite(out, l);
  }
}

// Cross-entropy of one logit vector with max subtraction; fills the softmax.
double softmax_xent(std::span<const double> logits, std::uint32_t label, std::vector<double>* probs) {
  const double lse = log_sum_exp(logits);
  if (probs) {
    probs->resize(logits.size());
    for (std::size_t c = 0; c < logits.size(); ++c) (*probs)[c] = std::exp(logits[c] - lse);
  }
  return lse - logits[label];
}

void check_batch(const Network& net, const Batch& batch) {
  if (batch.count == 0) fail(ErrorKind::kInput, "empty batch");
  if (batch.inputs.size() != batch.count * net.input_size() || batch.labels.size() != batch.count)
    fail(ErrorKind::kInput, "batch shape does not match the network input");
  for (auto l : batch.labels)
    if (l >= net.num_classes()) fail(ErrorKind::kInput, "label out of range for the network head");
}

}  // namespace

Architecture Architecture::parse(std::string_view layers, std::size_t channels, std::size_t height,
                                 std::size_t width) {
  Architecture a;
  a.channels = channels;
  a.height = height;
  a.width = width;
  std::stringstream ss{std::string(layers)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    const std::string kind = item.substr(0, colon);
    std::size_t units = 0;
    if (colon != std::string::npos) {
      try {
        units = std::stoul(item.substr(colon + 1));
      } catch (const std::exception&) {
        fail(ErrorKind::kConfig, "bad layer size in '" + item + "'");
      }
    }
    if (kind == "conv" || kind == "conv3x3") {
      a.layers.push_back({LayerKind::kConv3x3, units});
    } else if (kind == "relu") {
      a.layers.push_back({LayerKind::kRelu, 0});
    } else if (kind == "pool" || kind == "maxpool") {
      a.layers.push_back({LayerKind::kMaxPool2, 0});
    } else if (kind == "flatten") {
      a.layers.push_back({LayerKind::kFlatten, 0});
    } else if (kind == "dense" || kind == "fc") {
      a.layers.push_back({LayerKind::kDense, units});
    } else {
      fail(ErrorKind::kConfig, "unknown layer '" + item + "'");
    }
    const auto k = a.layers.back().kind;
    if ((k == LayerKind::kConv3x3 || k == LayerKind::kDense) && units == 0)
      fail(ErrorKind::kConfig, "layer '" + item + "' needs a positive size");
  }
  return a;
}

Architecture Architecture::reference(std::size_t classes) {
  return parse("conv:16,relu,pool,conv:32,relu,pool,flatten,dense:" + std::to_string(classes), 3, 32, 32);
}

std::string Architecture::layer_string() const {
  std::string s;
  for (const auto& l : layers) {
    if (!s.empty()) s += ',';
    switch (l.kind) {
      case LayerKind::kConv3x3: s += "conv:" + std::to_string(l.units); break;
      case LayerKind::kRelu: s += "relu"; break;
      case LayerKind::kMaxPool2: s += "pool"; break;
      case LayerKind::kFlatten: s += "flatten"; break;
      case LayerKind::kDense: s += "dense:" + std::to_string(l.units); break;
    }
  }
  return s;
}

Network Network::build(const Architecture& arch, std::uint64_t seed) {
  if (arch.layers.empty() || arch.layers.back().kind != LayerKind::kDense)
    fail(ErrorKind::kConfig, "the architecture must end in a dense layer feeding the softmax head");
  if (arch.channels == 0 || arch.height == 0 || arch.width == 0)
    fail(ErrorKind::kConfig, "input shape must be positive");

  Network net;
  net.arch_ = arch;
  Rng rng(seed);
  std::size_t c = arch.channels, h = arch.height, w = arch.width;
  std::size_t conv_i = 0, dense_i = 0;
  auto add_param = [&](std::string name, Shape shape, double stddev) {
    NamedTensor t{std::move(name), std::move(shape), {}};
    t.values.resize(shape_numel(t.shape));
    for (auto& v : t.values) v = stddev > 0.0 ? stddev * rng.normal() : 0.0;
    net.params_.push_back(std::move(t));
    return static_cast<int>(net.params_.size() - 1);
  };

  for (std::size_t l = 0; l < arch.layers.size(); ++l) {
    const auto& spec = arch.layers[l];
    Plan p{spec.kind, c, h, w, c, h, w};
    switch (spec.kind) {
      case LayerKind::kConv3x3: {
        const std::string stem = "conv" + std::to_string(++conv_i);
        p.out_c = spec.units;
        p.weight = add_param(stem + ".weight", {static_cast<std::uint32_t>(spec.units),
                                                static_cast<std::uint32_t>(c), 3, 3},
                             std::sqrt(2.0 / static_cast<double>(c * 9)));
        p.bias = add_param(stem + ".bias", {static_cast<std::uint32_t>(spec.units)}, 0.0);
        break;
      }
      case LayerKind::kRelu:
        break;
      case LayerKind::kMaxPool2:
        if (h < 2 || w < 2) fail(ErrorKind::kConfig, "pooling a map smaller than 2x2");
        p.out_h = h / 2;
        p.out_w = w / 2;
        break;
      case LayerKind::kFlatten:
        p.out_c = c * h * w;
        p.out_h = p.out_w = 1;
        break;
      case LayerKind::kDense: {
        const std::string stem = "fc" + std::to_string(++dense_i);
        const std::size_t fin = c * h * w;
        p.out_c = spec.units;
        p.out_h = p.out_w = 1;
        p.weight = add_param(stem + ".weight", {static_cast<std::uint32_t>(spec.units),
                                                static_cast<std::uint32_t>(fin)},
                             std::sqrt(2.0 / static_cast<double>(fin)));
        p.bias = add_param(stem + ".bias", {static_cast<std::uint32_t>(spec.units)}, 0.0);
        break;
      }
    }
    if (spec.kind == LayerKind::kConv3x3 && (h == 0 || w == 0))
      fail(ErrorKind::kConfig, "convolution on an empty map");
    net.plan_.push_back(p);
    c = p.out_c;
    h = p.out_h;
    w = p.out_w;
  }
  net.classes_ = c * h * w;
  return net;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.numel();
  return n;
}

std::size_t Network::freeze(std::string_view pattern) {
  std::size_t matched = 0;
  for (const auto& p : params_)
    if (glob_match(pattern, p.name)) {
      frozen_.insert(p.name);
      ++matched;
    }
  return matched;
}

void Network::load(const NamedTensors& values) {
  for (auto& p : params_) {
    const NamedTensor* src = find_tensor(values, p.name);
    if (!src) fail(ErrorKind::kInput, "snapshot has no tensor '" + p.name + "'");
    if (src->shape != p.shape) fail(ErrorKind::kInput, "snapshot tensor '" + p.name + "' has the wrong shape");
    p.values = src->values;
  }
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  Batch b;
  b.count = indices.size();
  const std::size_t sz = data.example_size();
  b.inputs.resize(b.count * sz);
  b.labels.resize(b.count);
  for (std::size_t i = 0; i < b.count; ++i) {
    const auto img = data.image(indices[i]);
    std::copy(img.begin(), img.end(), b.inputs.begin() + i * sz);
    b.labels[i] = data.labels[indices[i]];
  }
  return b;
}

Batch make_batch(const Dataset& data, std::size_t begin, std::size_t end) {
  std::vector<std::size_t> idx(end - begin);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
  return make_batch(data, idx);
}

ForwardResult forward(const Network& net, const Batch& batch) {
  check_batch(net, batch);
  ForwardResult r;
  const std::size_t classes = net.num_classes(), sz = net.input_size();
  r.logits = Matrix(batch.count, classes);
  ExampleTrace t;
  CompensatedSum loss;
  for (std::size_t n = 0; n < batch.count; ++n) {
    forward_example(net, {batch.inputs.data() + n * sz, sz}, t);
    const auto& z = t.acts.back();
    std::copy(z.begin(), z.end(), r.logits.row(n).begin());
    loss.add(softmax_xent(z, batch.labels[n], nullptr));
  }
  r.loss = loss.value() / static_cast<double>(batch.count);
  return r;
}

BackwardResult backward(const Network& net, const Batch& batch) {
  check_batch(net, batch);
  const auto& plan = net.plan();
  const auto& params = net.params();
  BackwardResult r;
  r.grads = zeros_like(params);

  std::vector<bool> trainable(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) trainable[i] = !net.is_frozen(params[i].name);
  // Input gradients are only needed below a layer if something trainable
  // sits underneath it.
  std::vector<bool> need_gin(plan.size(), false);
  bool below = false;
  for (std::size_t l = 0; l < plan.size(); ++l) {
    need_gin[l] = below;
    const auto& p = plan[l];
    if ((p.weight >= 0 && trainable[p.weight]) || (p.bias >= 0 && trainable[p.bias])) below = true;
  }

  const std::size_t sz = net.input_size();
  const double scale = 1.0 / static_cast<double>(batch.count);
  ExampleTrace t;
  std::vector<double> probs, gout, gin;
  CompensatedSum loss;
  for (std::size_t n = 0; n < batch.count; ++n) {
    forward_example(net, {batch.inputs.data() + n * sz, sz}, t);
    loss.add(softmax_xent(t.acts.back(), batch.labels[n], &probs));
    gout = probs;
    gout[batch.labels[n]] -= 1.0;
    for (double& g : gout) g *= scale;

    for (std::size_t l = plan.size(); l-- > 0;) {
      const auto& p = plan[l];
      const auto& in = t.acts[l];
      const bool want_gin = need_gin[l];
      if (want_gin) gin.assign(p.in_size(), 0.0);
      switch (p.kind) {
        case LayerKind::kConv3x3: {
          double* gw = trainable[p.weight] ? r.grads[p.weight].values.data() : nullptr;
          double* gb = trainable[p.bias] ? r.grads[p.bias].values.data() : nullptr;
          if (gw || gb || want_gin)
            conv_backward(in.data(), gout.data(), params[p.weight].values.data(), gw, gb,
                          want_gin ? gin.data() : nullptr, p.in_c, p.out_c, p.in_h, p.in_w);
          break;
        }
        case LayerKind::kRelu:
          if (want_gin)
            for (std::size_t i = 0; i < in.size(); ++i) gin[i] = in[i] > 0.0 ? gout[i] : 0.0;
          break;
        case LayerKind::kMaxPool2:
          if (want_gin) {
            const auto& idx = t.pool_index[l];
            for (std::size_t o = 0; o < idx.size(); ++o) gin[idx[o]] += gout[o];
          }
          break;
        case LayerKind::kFlatten:
          if (want_gin) gin = gout;
          break;
        case LayerKind::kDense: {
          const std::size_t fin = p.in_size();
          const double* w = params[p.weight].values.data();
          if (trainable[p.weight]) {
            double* gw = r.grads[p.weight].values.data();
            for (std::size_t o = 0; o < p.out_c; ++o) {
              const double g = gout[o];
              double* row = gw + o * fin;
              for (std::size_t i = 0; i < fin; ++i) row[i] += g * in[i];
            }
          }
          if (trainable[p.bias]) {
            double* gb = r.grads[p.bias].values.data();
            for (std::size_t o = 0; o < p.out_c; ++o) gb[o] += gout[o];
          }
          if (want_gin)
            for (std::size_t o = 0; o < p.out_c; ++o) {
              const double g = gout[o];
              const double* row = w + o * fin;
              for (std::size_t i = 0; i < fin; ++i) gin[i] += g * row[i];
            }
          break;
        }
      }
      if (!want_gin) break;
      gout.swap(gin);
    }
  }
  r.loss = loss.value() / static_cast<double>(batch.count);
  return r;
}

void sgd_step(Network& net, const NamedTensors& grads, double learning_rate, const RegConfig& reg,
              const GaussianMixture* model) {
  auto& params = net.params();
  if (grads.size() != params.size())
    fail(ErrorKind::kInput, "gradient list does not match the parameter list");
  for (std::size_t t = 0; t < params.size(); ++t)
    if (grads[t].name != params[t].name || grads[t].values.size() != params[t].values.size())
      fail(ErrorKind::kInput, "gradient tensor '" + grads[t].name + "' does not match its parameter");

  NamedTensors rg;
  const bool regularise = reg.lambda != 0.0;
  if (regularise) rg = reg_grad(params, model, reg);

  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& p = params[t];
    if (net.is_frozen(p.name)) continue;
    const auto& g = grads[t].values;
    std::vector<double> next(p.values.size());
    for (std::size_t i = 0; i < next.size(); ++i)
      next[i] = p.values[i] - learning_rate * (g[i] + reg.alpha * p.values[i]);
    if (regularise) {
      const auto& r = rg[t].values;
      for (std::size_t i = 0; i < next.size(); ++i) next[i] -= learning_rate * r[i];
    }
    if (!all_finite(next)) fail(ErrorKind::kNumeric, "non-finite update of '" + p.name + "'");
    p.values = std::move(next);
  }
}

double objective(const Network& net, const Batch& batch, const GaussianMixture* model,
                 const RegConfig& reg) {
  NamedTensors trainable;
  for (const auto& p : net.params())
    if (!net.is_frozen(p.name)) trainable.push_back(p);
  return total_objective(forward(net, batch).loss, trainable, model, reg);
}

Evaluation evaluate(const Network& net, const Dataset& data, std::size_t limit) {
  const std::size_t n = limit == 0 ? data.size() : std::min(limit, data.size());
  if (n == 0) fail(ErrorKind::kInput, "evaluation on an empty dataset");
  const std::size_t chunk = 256;
  CompensatedSum loss;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < n; b += chunk) {
    const std::size_t e = std::min(n, b + chunk);
    const Batch batch = make_batch(data, b, e);
    const auto fr = forward(net, batch);
    loss.add(fr.loss * static_cast<double>(e - b));
    for (std::size_t i = 0; i < batch.count; ++i) {
      const auto row = fr.logits.row(i);
      const auto arg = static_cast<std::uint32_t>(std::max_element(row.begin(), row.end()) - row.begin());
      correct += arg == batch.labels[i];
    }
  }
  return {loss.value() / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)};
}

std::vector<EvalRecord> train(Network& net, const Dataset& train_set, const Dataset& test_set,
                              const TrainConfig& cfg, const GaussianMixture* model,
                              const TrainHooks& hooks) {
  if (train_set.size() == 0 || test_set.size() == 0) fail(ErrorKind::kInput, "training on an empty dataset");
  if (cfg.batch_size == 0 || cfg.eval_every == 0 || !(cfg.learning_rate > 0.0))
    fail(ErrorKind::kConfig, "batch_size, eval_every and learning_rate must be positive");
  train_set.validate();
  test_set.validate();

  std::vector<EvalRecord> log;
  auto record = [&](std::size_t it) {
    const auto tr = evaluate(net, train_set, cfg.eval_train_limit);
    const auto te = evaluate(net, test_set);
    EvalRecord rec{it, tr.loss, te.loss, te.accuracy};
    log.push_back(rec);
    if (hooks.on_eval) hooks.on_eval(rec);
  };
  record(0);

  Rng shuffle(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order(train_set.size());
  std::size_t cursor = order.size();
  std::vector<std::size_t> idx(cfg.batch_size);
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    for (auto& i : idx) {
      if (cursor == order.size()) {
        for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
        for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[shuffle.below(k)]);
        cursor = 0;
      }
      i = order[cursor++];
    }
    const Batch batch = make_batch(train_set, idx);
    const auto bw = backward(net, batch);
    if (!std::isfinite(bw.loss))
      fail(ErrorKind::kNumeric, "training diverged at iteration " + std::to_string(it));
    sgd_step(net, bw.grads, cfg.learning_rate, cfg.reg, model);

    if (cfg.freeze_at != 0 && it == cfg.freeze_at) {
      const auto matched = net.freeze(cfg.freeze_pattern);
      if (hooks.on_freeze) hooks.on_freeze(it, matched);
    }
    if (hooks.on_snapshot &&
        std::find(cfg.snapshot_iters.begin(), cfg.snapshot_iters.end(), it) != cfg.snapshot_iters.end())
      hooks.on_snapshot(it, net);
    if (it % cfg.eval_every == 0 || it == cfg.iterations) record(it);
  }
  return log;
}

std::string render_train_log_csv(std::span<const EvalRecord> log) {
  std::string out = "iteration,train_loss,test_loss,test_acc\n";
  for (const auto& r : log)
    out += std::to_string(r.iteration) + "," + format_real17(r.train_loss) + "," +
           format_real17(r.test_loss) + "," + format_real17(r.test_accuracy) + "\n";
  return out;
}

}  // namespace fpreg
