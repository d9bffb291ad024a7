#pragma once

// Binocular fusion quality network: staged spatial extractor, left-to-right
// cross-attention, channel (transposed) attention, motion and semantic
// branches, and an MLP head. Forward pass only; backbones are pluggable.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vqs/common.hpp"

namespace vqs::fusion {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// frames x channels x (height * width), row-major.
class FeatureMap {
 public:
  FeatureMap(std::size_t frames, std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0);
  FeatureMap(std::size_t frames, std::size_t channels, std::size_t height, std::size_t width,
             std::vector<double> values);

  // Seeded standard-normal content; handy for toy inputs.
  static FeatureMap random(std::size_t frames, std::size_t channels, std::size_t height, std::size_t width, Rng& rng);

  std::size_t frames() const { return frames_; }
  std::size_t channels() const { return channels_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t positions() const { return height_ * width_; }

  // channels x positions view of frame t.
  Eigen::Map<RowMatrix> frame(std::size_t t);
  Eigen::Map<const RowMatrix> frame(std::size_t t) const;

  double& at(std::size_t t, std::size_t c, std::size_t y, std::size_t x) {
    return values_[((t * channels_ + c) * height_ + y) * width_ + x];
  }
  double at(std::size_t t, std::size_t c, std::size_t y, std::size_t x) const {
    return values_[((t * channels_ + c) * height_ + y) * width_ + x];
  }

  const std::vector<double>& values() const { return values_; }
  bool all_finite() const;

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::size_t frames_;
  std::size_t channels_;
  std::size_t height_;
  std::size_t width_;
  std::vector<double> values_;
};

// Uniformly spaced indices floor(k * frame_count / key_frames), k < key_frames.
std::vector<std::size_t> sample_key_frames(std::size_t frame_count, std::size_t key_frames);
FeatureMap select_frames(const FeatureMap& map, std::span<const std::size_t> indices);

// Non-overlapping average pooling over factor x factor windows.
FeatureMap average_pool(const FeatureMap& map, std::size_t factor);

// Mean over frames and positions, one entry per channel.
Vector pool_channels(const FeatureMap& map);

Matrix softmax_rows(const Matrix& logits);

// ---------------------------------------------------------------------------
// Spatial stages

struct Stage {
  std::size_t blocks = 1;
  std::size_t channels = 1;
  std::size_t downsample = 2;
};

struct StagePlan {
  std::size_t input_channels = 1;
  std::vector<Stage> stages;

  // Blocks 3, 4, 21 and a final stage of 5, factor-2 downsampling throughout.
  static StagePlan reference(std::size_t input_channels, std::size_t width);
  void validate() const;
};

class SpatialBlock {
 public:
  virtual ~SpatialBlock() = default;
  virtual std::string name() const = 0;
  // Block `index` of `stage`; maps x.channels() to out_channels.
  virtual FeatureMap apply(const FeatureMap& x, std::size_t out_channels, std::size_t stage,
                           std::size_t index) const = 0;
};

class IdentityBlock final : public SpatialBlock {
 public:
  std::string name() const override { return "identity"; }
  FeatureMap apply(const FeatureMap& x, std::size_t out_channels, std::size_t stage,
                   std::size_t index) const override;
};

// tanh(W x) per position with W ~ N(0, 1/c_in), seeded per (stage, block).
class RandomMixingBlock final : public SpatialBlock {
 public:
  explicit RandomMixingBlock(std::uint64_t seed) : seed_(seed) {}
  std::string name() const override { return "random-mixing"; }
  FeatureMap apply(const FeatureMap& x, std::size_t out_channels, std::size_t stage,
                   std::size_t index) const override;

 private:
  std::uint64_t seed_;
};

// Per stage: downsample, then the stage's blocks. Returns the last output.
FeatureMap stage_pipeline(const FeatureMap& input, const StagePlan& plan, const SpatialBlock& block);
// Same, keeping every stage's output.
std::vector<FeatureMap> stage_trace(const FeatureMap& input, const StagePlan& plan, const SpatialBlock& block);

// ---------------------------------------------------------------------------
// Attention

// Projections act on channel vectors: query/key are d_k x c, value is d_v x c.
// `output` (W_p) is only used by transposed attention and must be d_v x d_v.
struct AttentionParams {
  Matrix query;
  Matrix key;
  Matrix value;
  Matrix output;
  double scale = 1.0;  // d_k (or d_k'); logits are divided by sqrt(scale)

  static AttentionParams random(std::size_t channels, std::size_t key_dim, std::size_t value_dim, Rng& rng);
};

struct AttentionResult {
  FeatureMap features;
  std::vector<Matrix> maps;  // one attention map per frame
};

// Queries from the left view, keys and values from the right; attention over
// positions. Output has value_dim channels.
AttentionResult cross_attention_detailed(const FeatureMap& left, const FeatureMap& right, const AttentionParams& p);
FeatureMap cross_attention(const FeatureMap& left, const FeatureMap& right, const AttentionParams& p);

// Channel attention: A = softmax_rows(Q K^T / sqrt(scale)) contracts over
// positions (channels x channels); output = W_p (A V) + input.
AttentionResult transposed_attention_detailed(const FeatureMap& fused, const AttentionParams& p);
FeatureMap transposed_attention(const FeatureMap& fused, const AttentionParams& p);

// ---------------------------------------------------------------------------
// Motion and semantic branches

// Frame sequence -> fixed-width feature vector.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual std::string name() const = 0;
  virtual std::size_t width() const = 0;
  virtual Vector extract(const FeatureMap& frames) const = 0;
};

class ZeroProvider final : public FeatureProvider {
 public:
  explicit ZeroProvider(std::size_t width) : width_(width) {}
  std::string name() const override { return "zero"; }
  std::size_t width() const override { return width_; }
  Vector extract(const FeatureMap& frames) const override;

 private:
  std::size_t width_;
};

// Stand-in for a 3D-CNN action model: per-channel intensity and temporal
// difference statistics, projected by a seeded matrix and squashed with tanh.
class TemporalDifferenceProvider final : public FeatureProvider {
 public:
  TemporalDifferenceProvider(std::size_t channels, std::size_t width, std::uint64_t seed);
  std::string name() const override { return "temporal-difference"; }
  std::size_t width() const override { return static_cast<std::size_t>(projection_.rows()); }
  Vector extract(const FeatureMap& frames) const override;

 private:
  Matrix projection_;
};

// Frames -> token matrix (tokens x width).
class PatchEmbedding {
 public:
  virtual ~PatchEmbedding() = default;
  virtual std::size_t width() const = 0;
  virtual Matrix embed(const FeatureMap& frames) const = 0;
};

// One token per (frame, patch): the per-channel patch mean.
class MeanPoolEmbedding final : public PatchEmbedding {
 public:
  MeanPoolEmbedding(std::size_t channels, std::size_t patch) : channels_(channels), patch_(patch) {}
  std::size_t width() const override { return channels_; }
  Matrix embed(const FeatureMap& frames) const override;

 private:
  std::size_t channels_;
  std::size_t patch_;
};

// Flattened patch times a seeded projection.
class LinearPatchEmbedding final : public PatchEmbedding {
 public:
  LinearPatchEmbedding(std::size_t channels, std::size_t patch, std::size_t width, std::uint64_t seed);
  std::size_t width() const override { return static_cast<std::size_t>(projection_.rows()); }
  Matrix embed(const FeatureMap& frames) const override;

 private:
  std::size_t channels_;
  std::size_t patch_;
  Matrix projection_;
};

class TokenTransformer {
 public:
  virtual ~TokenTransformer() = default;
  virtual Matrix encode(const Matrix& tokens) const = 0;
};

class IdentityTransformer final : public TokenTransformer {
 public:
  Matrix encode(const Matrix& tokens) const override { return tokens; }
};

// m pre-normalized single-head self-attention layers with a tanh feed-forward.
class SelfAttentionTransformer final : public TokenTransformer {
 public:
  SelfAttentionTransformer(std::size_t layers, std::size_t width, std::uint64_t seed);
  Matrix encode(const Matrix& tokens) const override;

 private:
  struct Layer {
    AttentionParams attention;
    Matrix feed_forward;
  };
  std::vector<Layer> layers_;
};

// M(x_left) ++ M(x_right).
Vector motion_features(const FeatureMap& left, const FeatureMap& right, const FeatureProvider& provider);

// Token-mean of T(P(y)) per view, left then right.
Vector semantic_features(const FeatureMap& left, const FeatureMap& right, const PatchEmbedding& embed,
                         const TokenTransformer& transformer);
Vector semantic_view(const FeatureMap& frames, const PatchEmbedding& embed, const TokenTransformer& transformer);

// ---------------------------------------------------------------------------
// Head

enum class Activation { relu, identity };

struct MlpHead {
  Matrix hidden_weights;  // hidden x input
  Vector hidden_bias;
  Vector output_weights;  // hidden
  double output_bias = 0.0;
  Activation activation = Activation::relu;

  std::size_t input_width() const { return static_cast<std::size_t>(hidden_weights.cols()); }
  double operator()(const Vector& input) const;

  static MlpHead random(std::size_t input_width, std::size_t hidden, Rng& rng);
};

// MLP(pool(F_V) ++ F_M ++ F_S).
double predict_quality(const FeatureMap& spatial, const Vector& motion, const Vector& semantic, const MlpHead& head);

// PLCC of a batch, the training objective (to be maximized).
double plcc_objective(std::span<const double> predicted, std::span<const double> targets);

// ---------------------------------------------------------------------------
// Assembled network

struct NetworkConfig {
  std::size_t key_frames = 8;
  std::size_t patch = 1;          // spatial patch embedding (average pool)
  StagePlan plan = StagePlan::reference(8, 8);
  std::size_t key_dim = 8;        // d_k for cross-attention, d_k' for transposed
  std::size_t motion_width = 16;
  std::size_t semantic_patch = 2;
  std::size_t semantic_width = 16;
  std::size_t semantic_layers = 2;
  std::size_t hidden = 128;
};

class QualityNet {
 public:
  // All weights drawn from `seed`; stand-in backbones are seeded from it too.
  QualityNet(NetworkConfig config, std::uint64_t seed);

  double predict(const FeatureMap& left, const FeatureMap& right) const;
  // Single-view mode: no other-view branch, no cross-attention, no concatenation.
  double predict_single(const FeatureMap& view) const;

  // Patch embedding of key frames into the first feature map.
  FeatureMap embed_frames(const FeatureMap& key_frames) const;

  const NetworkConfig& config() const { return config_; }
  const SpatialBlock& block() const { return *block_; }
  const AttentionParams& cross() const { return cross_; }
  const AttentionParams& channel() const { return channel_; }
  const FeatureProvider& motion() const { return *motion_; }
  const PatchEmbedding& semantic_embed() const { return *semantic_embed_; }
  const TokenTransformer& semantic_encoder() const { return *semantic_encoder_; }
  const MlpHead& head() const { return head_; }
  const MlpHead& single_head() const { return single_head_; }

 private:
  NetworkConfig config_;
  Matrix embed_projection_;  // c_0 x 3
  std::shared_ptr<const SpatialBlock> block_;
  AttentionParams cross_;
  AttentionParams channel_;
  std::shared_ptr<const FeatureProvider> motion_;
  std::shared_ptr<const PatchEmbedding> semantic_embed_;
  std::shared_ptr<const TokenTransformer> semantic_encoder_;
  MlpHead head_;
  MlpHead single_head_;
};

// ---------------------------------------------------------------------------
// Binary tensor layout: u32 rank, u32 dims, then f64 values, all little-endian,
// row-major.

struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<double> values;
};

void write_tensor(std::ostream& out, const Tensor& tensor);
Tensor read_tensor(std::istream& in);
void write_tensor_file(const std::string& path, const Tensor& tensor);
Tensor read_tensor_file(const std::string& path);

Tensor to_tensor(const FeatureMap& map);
FeatureMap to_feature_map(const Tensor& tensor);

}  // namespace vqs::fusion
