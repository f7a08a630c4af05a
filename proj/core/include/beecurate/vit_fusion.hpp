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

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace beecurate::vit {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

/// Shape of the desk-scale trunk. Layers are numbered 1..depth.
struct TrunkConfig {
  int depth = 8;
  int hidden_dim = 32;
  int num_patches = 16;
  int heads = 4;
  int patch_dim = 48;  // raw patch vector width fed to the patch embedding
  std::uint64_t seed = 0;

  /// Throws DomainError on non-positive sizes, depth < 2, hidden_dim < 4 or
  /// heads not dividing hidden_dim.
  void validate() const;
};

struct LayerNormParams {
  RowVector gamma;
  RowVector beta;
};

/// Pre-norm block: h = x + Attn(LN1(x)); y = h + FF(LN2(h)).
struct BlockParams {
  LayerNormParams ln1;
  Matrix w_qkv;  // d x 3d
  RowVector b_qkv;
  Matrix w_attn_out;  // d x d
  RowVector b_attn_out;
  LayerNormParams ln2;
  Matrix w_ff1;  // d x 4d
  RowVector b_ff1;
  Matrix w_ff2;  // 4d x d
  RowVector b_ff2;
};

struct TrunkParams {
  TrunkConfig config;
  Matrix patch_w;  // patch_dim x d
  RowVector patch_b;
  std::vector<BlockParams> blocks;

  std::size_t parameter_count() const;
  /// All parameters in a fixed traversal order.
  std::vector<double> flatten() const;
};

inline constexpr int kFeedForwardExpansion = 4;
inline constexpr double kLayerNormEps = 1e-5;

/// Uniform(-1/sqrt(d), 1/sqrt(d)) weights, zero biases, unit LayerNorm gains.
/// Bit-identical for identical configs.
TrunkParams init_trunk(const TrunkConfig& config);

/// Zeroes the attention output and second feed-forward projections so every
/// block reduces to the identity on its residual stream.
void zero_residual_branches(TrunkParams& trunk);

/// Linear patch embedding: N x patch_dim -> N x d.
Matrix embed_patches(const TrunkParams& trunk, const Matrix& patches);

/// Layer indices matching the shallow/middle/deep split of a deeper encoder
/// (blocks 8/16/24 of 32): ceil(L/4), ceil(L/2), ceil(3L/4).
struct LayerAliases {
  int shallow = 0;
  int middle = 0;
  int deep = 0;
};
LayerAliases layer_aliases(int depth);

/// Feature maps captured during one forward pass. `taps[k]` is the output of
/// block k (after its residual add); `final` is the output of the last block.
struct TapFeatures {
  std::map<int, Matrix> taps;
  Matrix final;
};

/// Runs every block on `embeddings` (N x d) and records the requested taps.
/// The final map does not depend on the tap set.
TapFeatures forward_with_taps(const TrunkParams& trunk, const Matrix& embeddings, const std::set<int>& tap_set);

// ---------------------------------------------------------------------------
// Fusion

enum class CombineMode { Additive, ConcatProject };

struct LastOnly {
  friend bool operator==(const LastOnly&, const LastOnly&) = default;
};
struct SingleLayer {
  int layer = 0;
  friend bool operator==(const SingleLayer&, const SingleLayer&) = default;
};
struct MultiLayerMean {
  std::vector<int> layers;
  friend bool operator==(const MultiLayerMean&, const MultiLayerMean&) = default;
};

struct FusionStrategy {
  std::variant<LastOnly, SingleLayer, MultiLayerMean> variant;
  CombineMode combine = CombineMode::ConcatProject;

  /// Layers whose taps the strategy reads, in declaration order.
  std::vector<int> required_taps() const;
  /// Throws ValidationError for indices outside [1, depth], empty or duplicated sets.
  void validate(int depth) const;
  /// Canonical text form, e.g. "mean:4,6 combine=concat".
  std::string to_string() const;

  friend bool operator==(const FusionStrategy&, const FusionStrategy&) = default;
};

/// Parses `last`, `layer:<k>`, `mean:<k1,k2,...>` with k a layer number or one
/// of `shallow|middle|deep`, optionally followed by `combine=add|concat`
/// (space or ';' separated). Also accepts the ablation row names `layer_16`,
/// `layer_24`, `layer16_24_mean`, `layer_8_16_24_mean` and `w/o layer selection`,
/// whose numbers refer to a 32-block encoder and are mapped by depth fraction.
FusionStrategy parse_fusion_strategy(std::string_view text, int depth);

enum class Activation { Gelu, Identity };

/// Two-layer perceptron head, plus the combine weight used by ConcatProject.
struct ProjectorParams {
  Activation activation = Activation::Gelu;
  Matrix combine_w;  // 2d x d; empty when unused
  Matrix w1;         // d x d_mid
  RowVector b1;
  Matrix w2;  // d_mid x d_out
  RowVector b2;

  std::size_t parameter_count() const;
};

struct ProjectorShape {
  int input_dim = 32;
  int hidden_dim = 64;
  int output_dim = 32;
  bool with_combine = true;
  Activation activation = Activation::Gelu;
};

ProjectorParams init_projector(const ProjectorShape& shape, std::uint64_t seed);

/// Combines the strategy's tap part with the final map. Throws ValidationError
/// naming the layer when a required tap is missing.
Matrix fuse(const TapFeatures& features, const FusionStrategy& strategy, const ProjectorParams& params);

/// Row-wise perceptron: act(X W1 + b1) W2 + b2.
Matrix project(const Matrix& fused, const ProjectorParams& params);

double gelu(double x);
double gelu_derivative(double x);

// ---------------------------------------------------------------------------
// Gradients of the probe loss  L = ||project(fuse(features))||_F^2  with
// respect to the trainable combine/projector parameters. Trunk features are
// inputs (the encoder is frozen).

struct ProjectorGradients {
  double loss = 0.0;
  Matrix combine_w;  // empty unless the strategy uses ConcatProject
  Matrix w1;
  RowVector b1;
  Matrix w2;
  RowVector b2;
};

double probe_loss(const TapFeatures& features, const FusionStrategy& strategy, const ProjectorParams& params);

ProjectorGradients probe_gradients(const TapFeatures& features, const FusionStrategy& strategy,
                                   const ProjectorParams& params);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;  // e.g. "w1[3,7]"
  std::size_t parameters_checked = 0;
};

/// Compares analytic gradients with central finite differences, step
/// h = 1e-4 * max(1, |theta|). Error per parameter is |a - f| / max(1, |a|, |f|).
/// Throws ValidationError naming the parameter on a non-finite gradient.
GradCheckResult grad_check(const FusionStrategy& strategy, const ProjectorParams& params,
                           const TapFeatures& probe);

}  // namespace beecurate::vit
