#include "vqs/fusion.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "vqs/metrics.hpp"

namespace vqs::fusion {

namespace {

void require(bool ok, ErrorKind kind, const std::string& message) {
  if (!ok) throw Error(kind, message);
}

std::string dims_of(const FeatureMap& m) {
  return std::to_string(m.frames()) + "x" + std::to_string(m.channels()) + "x" + std::to_string(m.height()) + "x" +
         std::to_string(m.width());
}

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = stddev * rng.normal();
  }
  return m;
}

// Zero-mean, unit-variance rows.
Matrix normalize_rows(const Matrix& x) {
  Matrix out = x;
  const auto w = static_cast<double>(x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).sum() / w;
    const double var = (x.row(i).array() - mean).square().sum() / w;
    out.row(i) = (x.row(i).array() - mean) / std::sqrt(var + 1e-6);
  }
  return out;
}

}  // namespace

FeatureMap::FeatureMap(std::size_t frames, std::size_t channels, std::size_t height, std::size_t width, double fill)
    : FeatureMap(frames, channels, height, width, std::vector<double>(frames * channels * height * width, fill)) {}

FeatureMap::FeatureMap(std::size_t frames, std::size_t channels, std::size_t height, std::size_t width,
                       std::vector<double> values)
    : frames_(frames), channels_(channels), height_(height), width_(width), values_(std::move(values)) {
  require(frames > 0 && channels > 0 && height > 0 && width > 0, ErrorKind::invalid_argument,
          "feature map dimensions must be positive");
  require(values_.size() == frames * channels * height * width, ErrorKind::shape_mismatch,
          "feature map value count does not match its dimensions");
}

FeatureMap FeatureMap::random(std::size_t frames, std::size_t channels, std::size_t height, std::size_t width,
                              Rng& rng) {
  std::vector<double> values(frames * channels * height * width);
  for (auto& v : values) v = rng.normal();
  return FeatureMap(frames, channels, height, width, std::move(values));
}

Eigen::Map<RowMatrix> FeatureMap::frame(std::size_t t) {
  return {values_.data() + t * channels_ * positions(), static_cast<Eigen::Index>(channels_),
          static_cast<Eigen::Index>(positions())};
}

Eigen::Map<const RowMatrix> FeatureMap::frame(std::size_t t) const {
  return {values_.data() + t * channels_ * positions(), static_cast<Eigen::Index>(channels_),
          static_cast<Eigen::Index>(positions())};
}

bool FeatureMap::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

std::vector<std::size_t> sample_key_frames(std::size_t frame_count, std::size_t key_frames) {
  require(key_frames >= 1, ErrorKind::invalid_argument, "at least one key frame is required");
  require(key_frames <= frame_count, ErrorKind::invalid_argument,
          "cannot sample " + std::to_string(key_frames) + " key frames from " + std::to_string(frame_count));
  std::vector<std::size_t> idx(key_frames);
  for (std::size_t k = 0; k < key_frames; ++k) idx[k] = k * frame_count / key_frames;
  return idx;
}

FeatureMap select_frames(const FeatureMap& map, std::span<const std::size_t> indices) {
  require(!indices.empty(), ErrorKind::invalid_argument, "frame selection is empty");
  const std::size_t block = map.channels() * map.positions();
  std::vector<double> values;
  values.reserve(indices.size() * block);
  for (std::size_t t : indices) {
    require(t < map.frames(), ErrorKind::invalid_argument, "frame index out of range");
    const auto first = map.values().begin() + static_cast<std::ptrdiff_t>(t * block);
    values.insert(values.end(), first, first + static_cast<std::ptrdiff_t>(block));
  }
  return FeatureMap(indices.size(), map.channels(), map.height(), map.width(), std::move(values));
}

FeatureMap average_pool(const FeatureMap& map, std::size_t factor) {
  require(factor >= 1, ErrorKind::invalid_argument, "downsample factor must be positive");
  if (factor == 1) return map;
  require(map.height() % factor == 0 && map.width() % factor == 0, ErrorKind::shape_mismatch,
          "spatial size " + std::to_string(map.height()) + "x" + std::to_string(map.width()) +
              " is not divisible by downsample factor " + std::to_string(factor));
  const std::size_t h = map.height() / factor;
  const std::size_t w = map.width() / factor;
  FeatureMap out(map.frames(), map.channels(), h, w);
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t t = 0; t < map.frames(); ++t) {
    for (std::size_t c = 0; c < map.channels(); ++c) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          double sum = 0.0;
          for (std::size_t dy = 0; dy < factor; ++dy) {
            for (std::size_t dx = 0; dx < factor; ++dx) sum += map.at(t, c, y * factor + dy, x * factor + dx);
          }
          out.at(t, c, y, x) = sum * inv;
        }
      }
    }
  }
  return out;
}

Vector pool_channels(const FeatureMap& map) {
  Vector out = Vector::Zero(static_cast<Eigen::Index>(map.channels()));
  for (std::size_t t = 0; t < map.frames(); ++t) out += map.frame(t).rowwise().sum();
  return out / static_cast<double>(map.frames() * map.positions());
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double peak = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - peak).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

// ---------------------------------------------------------------------------

StagePlan StagePlan::reference(std::size_t input_channels, std::size_t width) {
  StagePlan plan;
  plan.input_channels = input_channels;
  for (std::size_t blocks : {3, 4, 21, 5}) plan.stages.push_back({blocks, width, 2});
  return plan;
}

void StagePlan::validate() const {
  require(!stages.empty(), ErrorKind::invalid_argument, "stage plan needs at least one stage");
  require(input_channels > 0, ErrorKind::invalid_argument, "stage plan input width must be positive");
  for (const auto& s : stages) {
    require(s.blocks > 0 && s.channels > 0 && s.downsample > 0, ErrorKind::invalid_argument,
            "stage blocks, widths and downsample factors must be positive");
  }
}

FeatureMap IdentityBlock::apply(const FeatureMap& x, std::size_t out_channels, std::size_t, std::size_t) const {
  require(out_channels == x.channels(), ErrorKind::shape_mismatch,
          "identity block cannot change width " + std::to_string(x.channels()) + " -> " +
              std::to_string(out_channels));
  return x;
}

FeatureMap RandomMixingBlock::apply(const FeatureMap& x, std::size_t out_channels, std::size_t stage,
                                    std::size_t index) const {
  Rng rng(derive_seed(derive_seed(seed_, stage), index));
  const Matrix mix = gaussian(static_cast<Eigen::Index>(out_channels), static_cast<Eigen::Index>(x.channels()),
                              1.0 / std::sqrt(static_cast<double>(x.channels())), rng);
  FeatureMap out(x.frames(), out_channels, x.height(), x.width());
  for (std::size_t t = 0; t < x.frames(); ++t) out.frame(t) = (mix * x.frame(t)).array().tanh().matrix();
  return out;
}

std::vector<FeatureMap> stage_trace(const FeatureMap& input, const StagePlan& plan, const SpatialBlock& block) {
  plan.validate();
  require(input.channels() == plan.input_channels, ErrorKind::shape_mismatch,
          "input has " + std::to_string(input.channels()) + " channels, plan expects " +
              std::to_string(plan.input_channels));
  std::vector<FeatureMap> trace;
  FeatureMap x = input;
  for (std::size_t s = 0; s < plan.stages.size(); ++s) {
    const Stage& stage = plan.stages[s];
    x = average_pool(x, stage.downsample);
    for (std::size_t b = 0; b < stage.blocks; ++b) x = block.apply(x, stage.channels, s, b);
    trace.push_back(x);
  }
  return trace;
}

FeatureMap stage_pipeline(const FeatureMap& input, const StagePlan& plan, const SpatialBlock& block) {
  return stage_trace(input, plan, block).back();
}

// ---------------------------------------------------------------------------

AttentionParams AttentionParams::random(std::size_t channels, std::size_t key_dim, std::size_t value_dim, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(channels));
  AttentionParams p;
  p.query = gaussian(static_cast<Eigen::Index>(key_dim), static_cast<Eigen::Index>(channels), s, rng);
  p.key = gaussian(static_cast<Eigen::Index>(key_dim), static_cast<Eigen::Index>(channels), s, rng);
  p.value = gaussian(static_cast<Eigen::Index>(value_dim), static_cast<Eigen::Index>(channels), s, rng);
  p.output = gaussian(static_cast<Eigen::Index>(value_dim), static_cast<Eigen::Index>(value_dim),
                      1.0 / std::sqrt(static_cast<double>(value_dim)), rng);
  p.scale = static_cast<double>(key_dim);
  return p;
}

AttentionResult cross_attention_detailed(const FeatureMap& left, const FeatureMap& right, const AttentionParams& p) {
  require(left.frames() == right.frames() && left.channels() == right.channels() &&
              left.height() == right.height() && left.width() == right.width(),
          ErrorKind::shape_mismatch, "view feature maps differ: " + dims_of(left) + " vs " + dims_of(right));
  const auto c = static_cast<Eigen::Index>(left.channels());
  require(p.query.cols() == c && p.key.cols() == c && p.value.cols() == c, ErrorKind::shape_mismatch,
          "attention projections do not take " + std::to_string(c) + " channels");
  require(p.query.rows() == p.key.rows() && p.query.rows() > 0 && p.value.rows() > 0, ErrorKind::shape_mismatch,
          "query and key projections must share a positive width");
  require(p.scale > 0.0, ErrorKind::invalid_argument, "attention scale must be positive");
  require(left.all_finite() && right.all_finite(), ErrorKind::non_finite, "non-finite value in view features");

  const double inv_sqrt = 1.0 / std::sqrt(p.scale);
  AttentionResult result{FeatureMap(left.frames(), static_cast<std::size_t>(p.value.rows()), left.height(),
                                    left.width()),
                         {}};
  for (std::size_t t = 0; t < left.frames(); ++t) {
    const Matrix q = p.query * left.frame(t);   // d_k x P
    const Matrix k = p.key * right.frame(t);    // d_k x P
    const Matrix v = p.value * right.frame(t);  // d_v x P
    Matrix attn = softmax_rows((q.transpose() * k) * inv_sqrt);  // P x P, rows over right positions
    result.features.frame(t) = v * attn.transpose();
    result.maps.push_back(std::move(attn));
  }
  return result;
}

FeatureMap cross_attention(const FeatureMap& left, const FeatureMap& right, const AttentionParams& p) {
  return cross_attention_detailed(left, right, p).features;
}

AttentionResult transposed_attention_detailed(const FeatureMap& fused, const AttentionParams& p) {
  const auto c = static_cast<Eigen::Index>(fused.channels());
  require(p.query.rows() == c && p.query.cols() == c && p.key.rows() == c && p.key.cols() == c &&
              p.value.rows() == c && p.value.cols() == c,
          ErrorKind::shape_mismatch, "transposed attention projections must be " + std::to_string(c) + "x" +
                                         std::to_string(c));
  require(p.output.rows() == c && p.output.cols() == c, ErrorKind::shape_mismatch,
          "output projection must map back to " + std::to_string(c) + " channels");
  require(p.scale > 0.0, ErrorKind::invalid_argument, "attention scale must be positive");
  require(fused.all_finite(), ErrorKind::non_finite, "non-finite value in fused features");

  const double inv_sqrt = 1.0 / std::sqrt(p.scale);
  AttentionResult result{fused, {}};
  for (std::size_t t = 0; t < fused.frames(); ++t) {
    const Matrix q = p.query * fused.frame(t);
    const Matrix k = p.key * fused.frame(t);
    const Matrix v = p.value * fused.frame(t);
    Matrix attn = softmax_rows((q * k.transpose()) * inv_sqrt);  // C x C
    result.features.frame(t) = p.output * (attn * v) + fused.frame(t);
    result.maps.push_back(std::move(attn));
  }
  return result;
}

FeatureMap transposed_attention(const FeatureMap& fused, const AttentionParams& p) {
  return transposed_attention_detailed(fused, p).features;
}

// ---------------------------------------------------------------------------

Vector ZeroProvider::extract(const FeatureMap&) const { return Vector::Zero(static_cast<Eigen::Index>(width_)); }

TemporalDifferenceProvider::TemporalDifferenceProvider(std::size_t channels, std::size_t width, std::uint64_t seed) {
  Rng rng(seed);
  projection_ = gaussian(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(3 * channels),
                         1.0 / std::sqrt(static_cast<double>(3 * channels)), rng);
}

Vector TemporalDifferenceProvider::extract(const FeatureMap& frames) const {
  const auto c = static_cast<Eigen::Index>(frames.channels());
  require(3 * c == projection_.cols(), ErrorKind::shape_mismatch, "motion provider channel count mismatch");
  Vector stats = Vector::Zero(3 * c);
  const auto positions = static_cast<double>(frames.positions());
  for (std::size_t t = 0; t < frames.frames(); ++t) {
    const auto cur = frames.frame(t);
    stats.segment(0, c) += cur.rowwise().sum() / positions;
    stats.segment(2 * c, c) += cur.array().square().matrix().rowwise().sum() / positions;
    if (t > 0) stats.segment(c, c) += (cur - frames.frame(t - 1)).cwiseAbs().rowwise().sum() / positions;
  }
  const auto n = static_cast<double>(frames.frames());
  stats.segment(0, c) /= n;
  stats.segment(2 * c, c) = (stats.segment(2 * c, c) / n - stats.segment(0, c).cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
  if (frames.frames() > 1) stats.segment(c, c) /= n - 1.0;
  return (projection_ * stats).array().tanh().matrix();
}

Matrix MeanPoolEmbedding::embed(const FeatureMap& frames) const {
  require(frames.channels() == channels_, ErrorKind::shape_mismatch, "patch embedding channel count mismatch");
  const FeatureMap pooled = average_pool(frames, patch_);
  Matrix tokens(static_cast<Eigen::Index>(pooled.frames() * pooled.positions()),
                static_cast<Eigen::Index>(channels_));
  for (std::size_t t = 0; t < pooled.frames(); ++t) {
    tokens.middleRows(static_cast<Eigen::Index>(t * pooled.positions()), static_cast<Eigen::Index>(pooled.positions())) =
        pooled.frame(t).transpose();
  }
  return tokens;
}

LinearPatchEmbedding::LinearPatchEmbedding(std::size_t channels, std::size_t patch, std::size_t width,
                                           std::uint64_t seed)
    : channels_(channels), patch_(patch) {
  require(patch > 0 && width > 0 && channels > 0, ErrorKind::invalid_argument, "patch embedding sizes must be positive");
  Rng rng(seed);
  const std::size_t flat = channels * patch * patch;
  projection_ = gaussian(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(flat),
                         1.0 / std::sqrt(static_cast<double>(flat)), rng);
}

Matrix LinearPatchEmbedding::embed(const FeatureMap& frames) const {
  require(frames.channels() == channels_, ErrorKind::shape_mismatch, "patch embedding channel count mismatch");
  require(frames.height() % patch_ == 0 && frames.width() % patch_ == 0, ErrorKind::shape_mismatch,
          "frame size is not divisible by the patch size");
  const std::size_t ph = frames.height() / patch_;
  const std::size_t pw = frames.width() / patch_;
  Matrix tokens(static_cast<Eigen::Index>(frames.frames() * ph * pw), projection_.rows());
  Vector flat(projection_.cols());
  Eigen::Index row = 0;
  for (std::size_t t = 0; t < frames.frames(); ++t) {
    for (std::size_t py = 0; py < ph; ++py) {
      for (std::size_t px = 0; px < pw; ++px) {
        Eigen::Index k = 0;
        for (std::size_t c = 0; c < channels_; ++c) {
          for (std::size_t dy = 0; dy < patch_; ++dy) {
            for (std::size_t dx = 0; dx < patch_; ++dx) flat(k++) = frames.at(t, c, py * patch_ + dy, px * patch_ + dx);
          }
        }
        tokens.row(row++) = (projection_ * flat).transpose();
      }
    }
  }
  return tokens;
}

SelfAttentionTransformer::SelfAttentionTransformer(std::size_t layers, std::size_t width, std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t l = 0; l < layers; ++l) {
    Layer layer;
    layer.attention = AttentionParams::random(width, width, width, rng);
    layer.feed_forward = gaussian(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(width),
                                  1.0 / std::sqrt(static_cast<double>(width)), rng);
    layers_.push_back(std::move(layer));
  }
}

Matrix SelfAttentionTransformer::encode(const Matrix& tokens) const {
  Matrix x = tokens;
  for (const auto& layer : layers_) {
    const auto& a = layer.attention;
    require(a.query.cols() == x.cols(), ErrorKind::shape_mismatch, "token width does not match the transformer");
    const Matrix xn = normalize_rows(x);
    const Matrix q = xn * a.query.transpose();
    const Matrix k = xn * a.key.transpose();
    const Matrix v = xn * a.value.transpose();
    x += softmax_rows((q * k.transpose()) / std::sqrt(a.scale)) * v;
    x += (normalize_rows(x) * layer.feed_forward.transpose()).array().tanh().matrix();
  }
  return x;
}

Vector motion_features(const FeatureMap& left, const FeatureMap& right, const FeatureProvider& provider) {
  require(left.frames() == right.frames(), ErrorKind::shape_mismatch, "view sequences differ in length");
  const Vector l = provider.extract(left);
  const Vector r = provider.extract(right);
  const auto w = static_cast<Eigen::Index>(provider.width());
  require(l.size() == w && r.size() == w, ErrorKind::shape_mismatch,
          "provider '" + provider.name() + "' returned a width different from its declared " + std::to_string(w));
  Vector out(2 * w);
  out << l, r;
  return out;
}

Vector semantic_view(const FeatureMap& frames, const PatchEmbedding& embed, const TokenTransformer& transformer) {
  const Matrix tokens = embed.embed(frames);
  require(tokens.cols() == static_cast<Eigen::Index>(embed.width()), ErrorKind::shape_mismatch,
          "patch embedding returned a width different from its declaration");
  const Matrix encoded = transformer.encode(tokens);
  require(encoded.cols() == tokens.cols() && encoded.rows() > 0, ErrorKind::shape_mismatch,
          "transformer changed the token width");
  return encoded.colwise().mean().transpose();
}

Vector semantic_features(const FeatureMap& left, const FeatureMap& right, const PatchEmbedding& embed,
                         const TokenTransformer& transformer) {
  require(left.frames() == right.frames(), ErrorKind::shape_mismatch, "view key-frame counts differ");
  const Vector l = semantic_view(left, embed, transformer);
  const Vector r = semantic_view(right, embed, transformer);
  Vector out(l.size() + r.size());
  out << l, r;
  return out;
}

// ---------------------------------------------------------------------------

double MlpHead::operator()(const Vector& input) const {
  require(input.size() == hidden_weights.cols(), ErrorKind::shape_mismatch,
          "head expects width " + std::to_string(hidden_weights.cols()) + ", got " + std::to_string(input.size()));
  require(hidden_bias.size() == hidden_weights.rows() && output_weights.size() == hidden_weights.rows(),
          ErrorKind::shape_mismatch, "head layer sizes are inconsistent");
  Vector h = hidden_weights * input + hidden_bias;
  if (activation == Activation::relu) h = h.cwiseMax(0.0);
  return output_weights.dot(h) + output_bias;
}

MlpHead MlpHead::random(std::size_t input_width, std::size_t hidden, Rng& rng) {
  MlpHead head;
  head.hidden_weights = gaussian(static_cast<Eigen::Index>(hidden), static_cast<Eigen::Index>(input_width),
                                 1.0 / std::sqrt(static_cast<double>(input_width)), rng);
  head.hidden_bias = gaussian(static_cast<Eigen::Index>(hidden), 1, 0.01, rng);
  head.output_weights = gaussian(static_cast<Eigen::Index>(hidden), 1, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  head.output_bias = 0.0;
  return head;
}

double predict_quality(const FeatureMap& spatial, const Vector& motion, const Vector& semantic, const MlpHead& head) {
  const Vector pooled = pool_channels(spatial);
  Vector joined(pooled.size() + motion.size() + semantic.size());
  joined << pooled, motion, semantic;
  require(static_cast<std::size_t>(joined.size()) == head.input_width(), ErrorKind::shape_mismatch,
          "concatenated width " + std::to_string(joined.size()) + " does not match head input " +
              std::to_string(head.input_width()));
  return head(joined);
}

double plcc_objective(std::span<const double> predicted, std::span<const double> targets) {
  return vqs::plcc(predicted, targets);
}

// ---------------------------------------------------------------------------

QualityNet::QualityNet(NetworkConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.plan.validate();
  require(config_.patch > 0 && config_.key_frames > 0 && config_.hidden > 0 && config_.key_dim > 0,
          ErrorKind::invalid_argument, "network sizes must be positive");
  Rng rng(seed);
  const std::size_t c0 = config_.plan.input_channels;
  const std::size_t c = config_.plan.stages.back().channels;
  embed_projection_ = gaussian(static_cast<Eigen::Index>(c0), 3, 1.0 / std::sqrt(3.0), rng);
  block_ = std::make_shared<RandomMixingBlock>(derive_seed(seed, 1));
  cross_ = AttentionParams::random(c, config_.key_dim, c, rng);
  channel_ = AttentionParams::random(c, c, c, rng);
  channel_.scale = static_cast<double>(config_.key_dim);
  motion_ = std::make_shared<TemporalDifferenceProvider>(3, config_.motion_width, derive_seed(seed, 2));
  semantic_embed_ = std::make_shared<LinearPatchEmbedding>(3, config_.semantic_patch, config_.semantic_width,
                                                           derive_seed(seed, 3));
  semantic_encoder_ =
      std::make_shared<SelfAttentionTransformer>(config_.semantic_layers, config_.semantic_width, derive_seed(seed, 4));
  head_ = MlpHead::random(c + 2 * config_.motion_width + 2 * config_.semantic_width, config_.hidden, rng);
  single_head_ = MlpHead::random(c + config_.motion_width + config_.semantic_width, config_.hidden, rng);
}

FeatureMap QualityNet::embed_frames(const FeatureMap& key_frames) const {
  require(key_frames.channels() == 3, ErrorKind::shape_mismatch, "frames must have 3 colour channels");
  const FeatureMap pooled = average_pool(key_frames, config_.patch);
  FeatureMap out(pooled.frames(), static_cast<std::size_t>(embed_projection_.rows()), pooled.height(), pooled.width());
  for (std::size_t t = 0; t < pooled.frames(); ++t) out.frame(t) = embed_projection_ * pooled.frame(t);
  return out;
}

double QualityNet::predict(const FeatureMap& left, const FeatureMap& right) const {
  require(left.frames() == right.frames() && left.height() == right.height() && left.width() == right.width() &&
              left.channels() == right.channels(),
          ErrorKind::shape_mismatch, "left and right sequences differ: " + dims_of(left) + " vs " + dims_of(right));
  const auto keys = sample_key_frames(left.frames(), config_.key_frames);
  const FeatureMap key_left = select_frames(left, keys);
  const FeatureMap key_right = select_frames(right, keys);
  const FeatureMap stage_left = stage_pipeline(embed_frames(key_left), config_.plan, *block_);
  const FeatureMap stage_right = stage_pipeline(embed_frames(key_right), config_.plan, *block_);
  const FeatureMap spatial = transposed_attention(cross_attention(stage_left, stage_right, cross_), channel_);
  const Vector motion = motion_features(left, right, *motion_);
  const Vector semantic = semantic_features(key_left, key_right, *semantic_embed_, *semantic_encoder_);
  return predict_quality(spatial, motion, semantic, head_);
}

double QualityNet::predict_single(const FeatureMap& view) const {
  const auto keys = sample_key_frames(view.frames(), config_.key_frames);
  const FeatureMap key_frames = select_frames(view, keys);
  const FeatureMap spatial =
      transposed_attention(stage_pipeline(embed_frames(key_frames), config_.plan, *block_), channel_);
  const Vector motion = motion_->extract(view);
  require(static_cast<std::size_t>(motion.size()) == motion_->width(), ErrorKind::shape_mismatch,
          "motion provider returned an undeclared width");
  const Vector semantic = semantic_view(key_frames, *semantic_embed_, *semantic_encoder_);
  return predict_quality(spatial, motion, semantic, single_head_);
}

// ---------------------------------------------------------------------------

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

void put_f64(std::ostream& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

std::uint64_t get_le(std::istream& in, int width) {
  unsigned char bytes[8] = {};
  in.read(reinterpret_cast<char*>(bytes), width);
  require(in.gcount() == width, ErrorKind::io, "truncated tensor stream");
  std::uint64_t v = 0;
  for (int i = width - 1; i >= 0; --i) v = (v << 8) | bytes[i];
  return v;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& tensor) {
  std::size_t count = 1;
  for (auto d : tensor.dims) count *= d;
  require(count == tensor.values.size(), ErrorKind::shape_mismatch, "tensor value count does not match its dims");
  put_u32(out, static_cast<std::uint32_t>(tensor.dims.size()));
  for (auto d : tensor.dims) put_u32(out, d);
  for (double v : tensor.values) put_f64(out, v);
  require(static_cast<bool>(out), ErrorKind::io, "failed to write tensor");
}

Tensor read_tensor(std::istream& in) {
  Tensor tensor;
  const auto rank = static_cast<std::uint32_t>(get_le(in, 4));
  require(rank <= 16, ErrorKind::io, "implausible tensor rank " + std::to_string(rank));
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    tensor.dims.push_back(static_cast<std::uint32_t>(get_le(in, 4)));
    count *= tensor.dims.back();
  }
  require(count <= (std::size_t{1} << 32), ErrorKind::io, "tensor too large");
  tensor.values.resize(count);
  for (auto& v : tensor.values) v = std::bit_cast<double>(get_le(in, 8));
  return tensor;
}

void write_tensor_file(const std::string& path, const Tensor& tensor) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::io, "cannot open '" + path + "' for writing");
  write_tensor(out, tensor);
}

Tensor read_tensor_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open '" + path + "'");
  return read_tensor(in);
}

Tensor to_tensor(const FeatureMap& map) {
  return Tensor{{static_cast<std::uint32_t>(map.frames()), static_cast<std::uint32_t>(map.channels()),
                 static_cast<std::uint32_t>(map.height()), static_cast<std::uint32_t>(map.width())},
                map.values()};
}

FeatureMap to_feature_map(const Tensor& tensor) {
  require(tensor.dims.size() == 4, ErrorKind::shape_mismatch,
          "feature maps are rank-4 tensors (frames, channels, height, width)");
  return FeatureMap(tensor.dims[0], tensor.dims[1], tensor.dims[2], tensor.dims[3], tensor.values);
}

}  // namespace vqs::fusion
