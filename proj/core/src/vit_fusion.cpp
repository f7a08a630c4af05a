// Copyright 2026 The beecurate Authors.
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

#include "beecurate/vit_fusion.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

#include "beecurate/error.hpp"
#include "beecurate/rng.hpp"

namespace beecurate::vit {

namespace {

void fill_uniform(Matrix& m, double scale, CounterRng rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * (2.0 * rng.uniform() - 1.0);
}

void fill_uniform(RowVector& v, double scale, CounterRng rng) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = scale * (2.0 * rng.uniform() - 1.0);
}

Matrix layer_norm(const Matrix& x, const LayerNormParams& p) {
  Matrix out(x.rows(), x.cols());
  const double d = static_cast<double>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).sum() / d;
    const double var = (x.row(r).array() - mean).square().sum() / d;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    out.row(r) = ((x.row(r).array() - mean) * inv * p.gamma.array() + p.beta.array()).matrix();
  }
  return out;
}

void softmax_rows(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp().matrix();
    m.row(r) /= m.row(r).sum();
  }
}

Matrix add_bias(Matrix m, const RowVector& b) {
  m.rowwise() += b;
  return m;
}

Matrix attention(const Matrix& xn, const BlockParams& p, int heads) {
  const Eigen::Index n = xn.rows();
  const Eigen::Index d = xn.cols();
  const Eigen::Index dh = d / heads;
  const Matrix qkv = add_bias(xn * p.w_qkv, p.b_qkv);
  Matrix mixed(n, d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < heads; ++h) {
    const auto q = qkv.middleCols(h * dh, dh);
    const auto k = qkv.middleCols(d + h * dh, dh);
    const auto v = qkv.middleCols(2 * d + h * dh, dh);
    Matrix scores = (q * k.transpose()) * scale;
    softmax_rows(scores);
    mixed.middleCols(h * dh, dh) = scores * v;
  }
  return add_bias(mixed * p.w_attn_out, p.b_attn_out);
}

Matrix feed_forward(const Matrix& xn, const BlockParams& p) {
  Matrix hidden = add_bias(xn * p.w_ff1, p.b_ff1);
  hidden = hidden.unaryExpr([](double v) { return gelu(v); });
  return add_bias(hidden * p.w_ff2, p.b_ff2);
}

Matrix run_block(const Matrix& x, const BlockParams& p, int heads) {
  Matrix h = x + attention(layer_norm(x, p.ln1), p, heads);
  return h + feed_forward(layer_norm(h, p.ln2), p);
}

template <typename Fn>
void for_each_tensor(const TrunkParams& t, Fn&& fn) {
  fn(t.patch_w.data(), t.patch_w.size());
  fn(t.patch_b.data(), t.patch_b.size());
  for (const auto& b : t.blocks) {
    fn(b.ln1.gamma.data(), b.ln1.gamma.size());
    fn(b.ln1.beta.data(), b.ln1.beta.size());
    fn(b.w_qkv.data(), b.w_qkv.size());
    fn(b.b_qkv.data(), b.b_qkv.size());
    fn(b.w_attn_out.data(), b.w_attn_out.size());
    fn(b.b_attn_out.data(), b.b_attn_out.size());
    fn(b.ln2.gamma.data(), b.ln2.gamma.size());
    fn(b.ln2.beta.data(), b.ln2.beta.size());
    fn(b.w_ff1.data(), b.w_ff1.size());
    fn(b.b_ff1.data(), b.b_ff1.size());
    fn(b.w_ff2.data(), b.w_ff2.size());
    fn(b.b_ff2.data(), b.b_ff2.size());
  }
}

int parse_int(std::string_view s, std::string_view context) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ValidationError(std::string(s), "invalid layer index '" + std::string(s) + "' in '" +
                                              std::string(context) + "'");
  return v;
}

int parse_layer_ref(std::string_view s, int depth, std::string_view context) {
  const auto aliases = layer_aliases(depth);
  if (s == "shallow") return aliases.shallow;
  if (s == "middle") return aliases.middle;
  if (s == "deep") return aliases.deep;
  return parse_int(s, context);
}

std::vector<std::string_view> split(std::string_view s, std::string_view seps) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto j = s.find_first_of(seps, i);
    const auto end = j == std::string_view::npos ? s.size() : j;
    if (end > i) out.push_back(s.substr(i, end - i));
    i = end + 1;
  }
  return out;
}

// Maps a block index of a 32-block encoder onto this trunk by depth fraction.
int scale_reference_layer(int ref, int depth) {
  constexpr int kReferenceDepth = 32;
  return (ref * depth + kReferenceDepth - 1) / kReferenceDepth;
}

bool parse_ablation_row(std::string_view text, int depth, FusionStrategy& out) {
  if (text == "w/o layer selection" || text == "w/o_layer_selection") {
    out.variant = LastOnly{};
    return true;
  }
  if (!text.starts_with("layer") || text.find(':') != std::string_view::npos) return false;
  std::string_view rest = text.substr(5);
  const bool mean = rest.ends_with("_mean");
  if (mean) rest.remove_suffix(5);
  std::vector<int> layers;
  for (auto part : split(rest, "_")) layers.push_back(scale_reference_layer(parse_int(part, text), depth));
  if (layers.empty()) return false;
  if (mean) {
    out.variant = MultiLayerMean{layers};
  } else if (layers.size() == 1) {
    out.variant = SingleLayer{layers.front()};
  } else {
    return false;
  }
  return true;
}

bool uses_combine_weight(const FusionStrategy& s) {
  return s.combine == CombineMode::ConcatProject && !std::holds_alternative<LastOnly>(s.variant);
}

struct Forward {
  Matrix concat;    // empty unless ConcatProject
  Matrix fused;
  Matrix pre_act;
  Matrix hidden;
  Matrix out;
};

Matrix tap_part(const TapFeatures& f, const FusionStrategy& s) {
  const auto fetch = [&](int layer) -> const Matrix& {
    auto it = f.taps.find(layer);
    if (it == f.taps.end())
      throw ValidationError(std::to_string(layer), "fusion needs tap " + std::to_string(layer) + " which was not captured");
    if (it->second.rows() != f.final.rows() || it->second.cols() != f.final.cols())
      throw ValidationError(std::to_string(layer), "tap " + std::to_string(layer) + " shape differs from final map");
    return it->second;
  };
  if (const auto* single = std::get_if<SingleLayer>(&s.variant)) return fetch(single->layer);
  const auto& layers = std::get<MultiLayerMean>(s.variant).layers;
  if (layers.empty()) throw ValidationError("mean", "mean fusion needs at least one layer");
  Matrix sum = fetch(layers.front());
  for (std::size_t i = 1; i < layers.size(); ++i) sum += fetch(layers[i]);
  return sum / static_cast<double>(layers.size());
}

// Writes the channel concatenation into `concat` when the strategy uses it.
Matrix fuse_into(const TapFeatures& f, const FusionStrategy& s, const ProjectorParams& p, Matrix& concat) {
  if (std::holds_alternative<LastOnly>(s.variant)) return f.final;
  Matrix part = tap_part(f, s);
  if (s.combine == CombineMode::Additive) return part + f.final;
  const auto d = f.final.cols();
  if (p.combine_w.rows() != 2 * d || p.combine_w.cols() != d)
    throw ValidationError("combine_w", "combine weight must be 2d x d for concat fusion");
  concat.resize(f.final.rows(), 2 * d);
  concat << part, f.final;
  return concat * p.combine_w;
}

Forward run_forward(const TapFeatures& f, const FusionStrategy& s, const ProjectorParams& p) {
  Forward fw;
  fw.fused = fuse_into(f, s, p, fw.concat);
  if (fw.fused.cols() != p.w1.rows())
    throw ValidationError("w1", "projector input width " + std::to_string(p.w1.rows()) + " does not match fused width " +
                                    std::to_string(fw.fused.cols()));
  fw.pre_act = add_bias(fw.fused * p.w1, p.b1);
  fw.hidden = p.activation == Activation::Gelu ? Matrix(fw.pre_act.unaryExpr([](double v) { return gelu(v); }))
                                               : fw.pre_act;
  fw.out = add_bias(fw.hidden * p.w2, p.b2);
  return fw;
}

}  // namespace

void TrunkConfig::validate() const {
  if (depth < 2) throw DomainError("trunk depth must be at least 2");
  if (hidden_dim < 4) throw DomainError("trunk hidden_dim must be at least 4");
  if (num_patches < 1) throw DomainError("trunk num_patches must be positive");
  if (patch_dim < 1) throw DomainError("trunk patch_dim must be positive");
  if (heads < 1 || hidden_dim % heads != 0) throw DomainError("trunk heads must divide hidden_dim");
}

std::size_t TrunkParams::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor(*this, [&](const double*, Eigen::Index size) { n += static_cast<std::size_t>(size); });
  return n;
}

std::vector<double> TrunkParams::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for_each_tensor(*this, [&](const double* data, Eigen::Index size) { out.insert(out.end(), data, data + size); });
  return out;
}

TrunkParams init_trunk(const TrunkConfig& config) {
  config.validate();
  const int d = config.hidden_dim;
  const int ff = kFeedForwardExpansion * d;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const CounterRng root(config.seed);
  std::uint64_t stream = 0;

  TrunkParams t;
  t.config = config;
  t.patch_w = Matrix(config.patch_dim, d);
  fill_uniform(t.patch_w, scale, root.split(stream++));
  t.patch_b = RowVector::Zero(d);

  t.blocks.resize(static_cast<std::size_t>(config.depth));
  for (auto& b : t.blocks) {
    b.ln1 = {RowVector::Ones(d), RowVector::Zero(d)};
    b.ln2 = {RowVector::Ones(d), RowVector::Zero(d)};
    b.w_qkv = Matrix(d, 3 * d);
    b.w_attn_out = Matrix(d, d);
    b.w_ff1 = Matrix(d, ff);
    b.w_ff2 = Matrix(ff, d);
    fill_uniform(b.w_qkv, scale, root.split(stream++));
    fill_uniform(b.w_attn_out, scale, root.split(stream++));
    fill_uniform(b.w_ff1, scale, root.split(stream++));
    fill_uniform(b.w_ff2, scale, root.split(stream++));
    b.b_qkv = RowVector::Zero(3 * d);
    b.b_attn_out = RowVector::Zero(d);
    b.b_ff1 = RowVector::Zero(ff);
    b.b_ff2 = RowVector::Zero(d);
  }
  return t;
}

void zero_residual_branches(TrunkParams& trunk) {
  for (auto& b : trunk.blocks) {
    b.w_attn_out.setZero();
    b.b_attn_out.setZero();
    b.w_ff2.setZero();
    b.b_ff2.setZero();
  }
}

Matrix embed_patches(const TrunkParams& trunk, const Matrix& patches) {
  if (patches.cols() != trunk.patch_w.rows())
    throw ValidationError("patches", "patch width " + std::to_string(patches.cols()) + " does not match patch_dim " +
                                         std::to_string(trunk.patch_w.rows()));
  return add_bias(patches * trunk.patch_w, trunk.patch_b);
}

LayerAliases layer_aliases(int depth) {
  return {(depth + 3) / 4, (depth + 1) / 2, (3 * depth + 3) / 4};
}

TapFeatures forward_with_taps(const TrunkParams& trunk, const Matrix& embeddings, const std::set<int>& tap_set) {
  const int depth = static_cast<int>(trunk.blocks.size());
  for (const int k : tap_set)
    if (k < 1 || k > depth)
      throw ValidationError(std::to_string(k), "tap index " + std::to_string(k) + " outside [1, " +
                                                   std::to_string(depth) + "]");
  if (embeddings.cols() != trunk.config.hidden_dim)
    throw ValidationError("embeddings", "embedding width does not match hidden_dim");

  TapFeatures out;
  Matrix x = embeddings;
  for (int k = 1; k <= depth; ++k) {
    x = run_block(x, trunk.blocks[static_cast<std::size_t>(k - 1)], trunk.config.heads);
    if (tap_set.contains(k)) out.taps.emplace(k, x);
  }
  out.final = std::move(x);
  return out;
}

std::vector<int> FusionStrategy::required_taps() const {
  if (const auto* s = std::get_if<SingleLayer>(&variant)) return {s->layer};
  if (const auto* m = std::get_if<MultiLayerMean>(&variant)) return m->layers;
  return {};
}

void FusionStrategy::validate(int depth) const {
  const auto layers = required_taps();
  if (std::holds_alternative<MultiLayerMean>(variant) && layers.empty())
    throw ValidationError("mean", "mean fusion needs at least one layer");
  std::set<int> seen;
  for (const int k : layers) {
    if (k < 1 || k > depth)
      throw ValidationError(std::to_string(k), "fusion layer " + std::to_string(k) + " outside [1, " +
                                                   std::to_string(depth) + "]");
    if (!seen.insert(k).second)
      throw ValidationError(std::to_string(k), "fusion layer " + std::to_string(k) + " listed twice");
  }
}

std::string FusionStrategy::to_string() const {
  std::ostringstream out;
  if (std::holds_alternative<LastOnly>(variant)) {
    out << "last";
  } else if (const auto* s = std::get_if<SingleLayer>(&variant)) {
    out << "layer:" << s->layer;
  } else {
    out << "mean:";
    const auto& layers = std::get<MultiLayerMean>(variant).layers;
    for (std::size_t i = 0; i < layers.size(); ++i) out << (i ? "," : "") << layers[i];
  }
  out << " combine=" << (combine == CombineMode::Additive ? "add" : "concat");
  return out.str();
}

FusionStrategy parse_fusion_strategy(std::string_view text, int depth) {
  FusionStrategy s;
  auto trimmed = text;
  while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.front()))) trimmed.remove_prefix(1);
  while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.back()))) trimmed.remove_suffix(1);

  if (parse_ablation_row(trimmed, depth, s)) {
    s.validate(depth);
    return s;
  }

  const auto tokens = split(trimmed, " \t;");
  if (tokens.empty()) throw ValidationError(std::string(text), "empty fusion strategy");
  bool have_variant = false;
  for (const auto tok : tokens) {
    if (tok.starts_with("combine=")) {
      const auto mode = tok.substr(8);
      if (mode == "add") {
        s.combine = CombineMode::Additive;
      } else if (mode == "concat") {
        s.combine = CombineMode::ConcatProject;
      } else {
        throw ValidationError(std::string(tok), "unknown combine mode '" + std::string(mode) + "'");
      }
      continue;
    }
    if (have_variant) throw ValidationError(std::string(tok), "unexpected token '" + std::string(tok) + "'");
    have_variant = true;
    if (tok == "last") {
      s.variant = LastOnly{};
    } else if (tok.starts_with("layer:")) {
      s.variant = SingleLayer{parse_layer_ref(tok.substr(6), depth, text)};
    } else if (tok.starts_with("mean:")) {
      MultiLayerMean m;
      for (auto part : split(tok.substr(5), ",")) m.layers.push_back(parse_layer_ref(part, depth, text));
      s.variant = std::move(m);
    } else if (!parse_ablation_row(tok, depth, s)) {
      throw ValidationError(std::string(tok), "unknown fusion strategy '" + std::string(tok) + "'");
    }
  }
  if (!have_variant) throw ValidationError(std::string(text), "fusion strategy names no variant");
  s.validate(depth);
  return s;
}

std::size_t ProjectorParams::parameter_count() const {
  return static_cast<std::size_t>(combine_w.size() + w1.size() + b1.size() + w2.size() + b2.size());
}

ProjectorParams init_projector(const ProjectorShape& shape, std::uint64_t seed) {
  if (shape.input_dim < 1 || shape.hidden_dim < 1 || shape.output_dim < 1)
    throw DomainError("projector dimensions must be positive");
  const CounterRng root(seed);
  ProjectorParams p;
  p.activation = shape.activation;
  const double in_scale = 1.0 / std::sqrt(static_cast<double>(shape.input_dim));
  if (shape.with_combine) {
    p.combine_w = Matrix(2 * shape.input_dim, shape.input_dim);
    fill_uniform(p.combine_w, 1.0 / std::sqrt(2.0 * shape.input_dim), root.split(0));
  }
  p.w1 = Matrix(shape.input_dim, shape.hidden_dim);
  fill_uniform(p.w1, in_scale, root.split(1));
  p.b1 = RowVector(shape.hidden_dim);
  fill_uniform(p.b1, 0.1, root.split(2));
  p.w2 = Matrix(shape.hidden_dim, shape.output_dim);
  fill_uniform(p.w2, 1.0 / std::sqrt(static_cast<double>(shape.hidden_dim)), root.split(3));
  p.b2 = RowVector(shape.output_dim);
  fill_uniform(p.b2, 0.1, root.split(4));
  return p;
}

Matrix fuse(const TapFeatures& features, const FusionStrategy& strategy, const ProjectorParams& params) {
  Matrix concat;
  return fuse_into(features, strategy, params, concat);
}

Matrix project(const Matrix& fused, const ProjectorParams& params) {
  if (fused.cols() != params.w1.rows() || params.b1.size() != params.w1.cols() ||
      params.w2.rows() != params.w1.cols() || params.b2.size() != params.w2.cols())
    throw ValidationError("projector", "projector shape mismatch");
  Matrix h = add_bias(fused * params.w1, params.b1);
  if (params.activation == Activation::Gelu) h = h.unaryExpr([](double v) { return gelu(v); });
  return add_bias(h * params.w2, params.b2);
}

double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
}

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

double probe_loss(const TapFeatures& features, const FusionStrategy& strategy, const ProjectorParams& params) {
  return run_forward(features, strategy, params).out.squaredNorm();
}

ProjectorGradients probe_gradients(const TapFeatures& features, const FusionStrategy& strategy,
                                   const ProjectorParams& params) {
  const Forward fw = run_forward(features, strategy, params);
  ProjectorGradients g;
  g.loss = fw.out.squaredNorm();

  const Matrix d_out = 2.0 * fw.out;
  g.w2 = fw.hidden.transpose() * d_out;
  g.b2 = d_out.colwise().sum();
  const Matrix d_hidden = d_out * params.w2.transpose();
  Matrix d_pre = d_hidden;
  if (params.activation == Activation::Gelu)
    d_pre = d_hidden.cwiseProduct(fw.pre_act.unaryExpr([](double v) { return gelu_derivative(v); }));
  g.w1 = fw.fused.transpose() * d_pre;
  g.b1 = d_pre.colwise().sum();
  if (uses_combine_weight(strategy)) {
    const Matrix d_fused = d_pre * params.w1.transpose();
    g.combine_w = fw.concat.transpose() * d_fused;
  }
  return g;
}

GradCheckResult grad_check(const FusionStrategy& strategy, const ProjectorParams& params,
                           const TapFeatures& probe) {
  if (!probe.final.allFinite()) throw ValidationError("final", "probe features must be finite");
  for (const auto& [layer, map] : probe.taps)
    if (!map.allFinite()) throw ValidationError(std::to_string(layer), "probe tap must be finite");

  const ProjectorGradients analytic = probe_gradients(probe, strategy, params);
  ProjectorParams work = params;
  GradCheckResult result;

  const auto check_tensor = [&](const char* name, auto& tensor, const auto& grad) {
    for (Eigen::Index i = 0; i < tensor.size(); ++i) {
      const Eigen::Index cols = tensor.cols();
      const std::string label = std::string(name) + "[" + std::to_string(i / cols) + "," +
                                std::to_string(i % cols) + "]";
      const double a = grad.data()[i];
      if (!std::isfinite(a)) throw ValidationError(label, "non-finite analytic gradient for " + label);

      double& theta = tensor.data()[i];
      const double saved = theta;
      const double h = 1e-4 * std::max(1.0, std::abs(saved));
      const double up = saved + h;
      const double down = saved - h;
      theta = up;
      const double loss_up = probe_loss(probe, strategy, work);
      theta = down;
      const double loss_down = probe_loss(probe, strategy, work);
      theta = saved;

      const double fd = (loss_up - loss_down) / (up - down);
      if (!std::isfinite(fd)) throw ValidationError(label, "non-finite finite-difference gradient for " + label);
      const double err = std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
      if (result.worst_parameter.empty() || err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_parameter = label;
      }
      ++result.parameters_checked;
    }
  };

  if (uses_combine_weight(strategy)) check_tensor("combine_w", work.combine_w, analytic.combine_w);
  check_tensor("w1", work.w1, analytic.w1);
  check_tensor("b1", work.b1, analytic.b1);
  check_tensor("w2", work.w2, analytic.w2);
  check_tensor("b2", work.b2, analytic.b2);
  return result;
}

}  // namespace beecurate::vit
