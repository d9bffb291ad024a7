#include "doctest.h"

#include <cmath>
#include <sstream>

#include "vqs/common.hpp"
#include "vqs/fusion.hpp"
#include "vqs/metrics.hpp"

using namespace vqs;
using namespace vqs::fusion;
using doctest::Approx;

namespace {

// Provider returning fixed vectors, alternating between two calls.
class FixedProvider final : public FeatureProvider {
 public:
  FixedProvider(Vector first, Vector second, std::size_t declared)
      : first_(std::move(first)), second_(std::move(second)), declared_(declared) {}
  std::string name() const override { return "fixed"; }
  std::size_t width() const override { return declared_; }
  Vector extract(const FeatureMap&) const override { return (calls_++ % 2 == 0) ? first_ : second_; }

 private:
  Vector first_;
  Vector second_;
  std::size_t declared_;
  mutable std::size_t calls_ = 0;
};

AttentionParams identity_params(std::size_t c) {
  AttentionParams p;
  p.query = Matrix::Identity(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c));
  p.key = p.query;
  p.value = p.query;
  p.output = Matrix::Zero(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c));
  p.scale = 1.0;
  return p;
}

}  // namespace

TEST_CASE("sample_key_frames") {
  CHECK(sample_key_frames(8, 8) == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK(sample_key_frames(10, 5) == std::vector<std::size_t>{0, 2, 4, 6, 8});
  CHECK(sample_key_frames(7, 3) == std::vector<std::size_t>{0, 2, 4});
  CHECK_THROWS_AS(sample_key_frames(3, 4), Error);
  CHECK_THROWS_AS(sample_key_frames(3, 0), Error);
}

TEST_CASE("average_pool and stages") {
  Rng rng(1);
  const FeatureMap x = FeatureMap::random(2, 3, 8, 8, rng);
  CHECK(average_pool(x, 1) == x);
  CHECK_THROWS_AS(average_pool(FeatureMap(1, 1, 6, 6), 4), Error);

  StagePlan flat{3, {{2, 3, 1}, {1, 3, 1}}};
  CHECK(stage_pipeline(x, flat, IdentityBlock{}) == x);

  const FeatureMap constant(1, 2, 4, 4, 2.5);
  const FeatureMap pooled = stage_pipeline(constant, StagePlan{2, {{1, 2, 2}}}, IdentityBlock{});
  CHECK(pooled.positions() == 4);
  for (double v : pooled.values()) CHECK(v == 2.5);

  const FeatureMap input(1, 4, 32, 32, 1.0);
  const FeatureMap out = stage_pipeline(input, StagePlan{4, {{1, 4, 2}, {1, 4, 2}, {1, 4, 2}}}, IdentityBlock{});
  CHECK(out.positions() == 16);

  const auto plan = StagePlan::reference(3, 6);
  REQUIRE(plan.stages.size() == 4);
  CHECK(plan.stages[0].blocks == 3);
  CHECK(plan.stages[1].blocks == 4);
  CHECK(plan.stages[2].blocks == 21);
  CHECK(plan.stages[3].blocks == 5);
  const auto trace = stage_trace(FeatureMap::random(1, 3, 64, 64, rng), plan, RandomMixingBlock(3));
  REQUIRE(trace.size() == 4);
  CHECK(trace[0].positions() == 1024);
  CHECK(trace[1].positions() == 256);
  CHECK(trace[2].positions() == 64);
  CHECK(trace[3].positions() == 16);
  CHECK(trace[3].channels() == 6);

  CHECK_THROWS_AS(stage_pipeline(FeatureMap(1, 2, 4, 4), plan, IdentityBlock{}), Error);
  CHECK_THROWS_AS((StagePlan{1, {}}).validate(), Error);
  CHECK_THROWS_AS((StagePlan{1, {{1, 1, 0}}}).validate(), Error);
}

TEST_CASE("softmax_rows") {
  Matrix logits(2, 3);
  logits << 1000.0, 1000.0, 1000.0, -1.0, 0.0, 1.0;
  const Matrix s = softmax_rows(logits);
  CHECK(s(0, 0) == Approx(1.0 / 3.0).epsilon(1e-15));
  const double z = std::exp(-1.0) + 1.0 + std::exp(1.0);
  CHECK(s(1, 2) == Approx(std::exp(1.0) / z).epsilon(1e-14));
  CHECK(s.row(1).sum() == Approx(1.0).epsilon(1e-15));
}

TEST_CASE("cross_attention") {
  SUBCASE("2x2 hand fixture") {
    // Two channels, two positions; identity projections.
    FeatureMap left(1, 2, 1, 2, std::vector<double>{0.3, -0.7, 1.1, 0.4});
    FeatureMap right(1, 2, 1, 2, std::vector<double>{0.9, 0.2, -0.5, 1.3});
    AttentionParams p = identity_params(2);
    p.scale = 2.0;
    const auto res = cross_attention_detailed(left, right, p);
    for (std::size_t i = 0; i < 2; ++i) {
      double logit[2];
      for (std::size_t j = 0; j < 2; ++j) {
        logit[j] = (left.at(0, 0, 0, i) * right.at(0, 0, 0, j) + left.at(0, 1, 0, i) * right.at(0, 1, 0, j)) /
                   std::sqrt(2.0);
      }
      const double w0 = 1.0 / (1.0 + std::exp(logit[1] - logit[0]));
      const double w1 = 1.0 - w0;
      CHECK(res.maps[0](static_cast<Eigen::Index>(i), 0) == Approx(w0).epsilon(1e-12));
      for (std::size_t c = 0; c < 2; ++c) {
        const double expected = w0 * right.at(0, c, 0, 0) + w1 * right.at(0, c, 0, 1);
        CHECK(std::abs(res.features.at(0, c, 0, i) - expected) < 1e-12);
      }
    }
  }
  SUBCASE("identical keys give a uniform map") {
    Rng rng(2);
    FeatureMap left = FeatureMap::random(1, 3, 2, 2, rng);
    FeatureMap right = FeatureMap::random(1, 3, 2, 2, rng);
    AttentionParams p = AttentionParams::random(3, 2, 3, rng);
    p.key.setZero();
    const auto res = cross_attention_detailed(left, right, p);
    for (Eigen::Index i = 0; i < 4; ++i) {
      for (Eigen::Index j = 0; j < 4; ++j) CHECK(res.maps[0](i, j) == 0.25);
    }
  }
  SUBCASE("single position returns the value row") {
    Rng rng(3);
    FeatureMap left = FeatureMap::random(2, 3, 1, 1, rng);
    FeatureMap right = FeatureMap::random(2, 3, 1, 1, rng);
    AttentionParams p = AttentionParams::random(3, 4, 5, rng);
    const auto res = cross_attention_detailed(left, right, p);
    CHECK(res.maps[0](0, 0) == 1.0);
    const Matrix v = p.value * right.frame(1);
    for (Eigen::Index c = 0; c < 5; ++c) CHECK(res.features.frame(1)(c, 0) == v(c, 0));
  }
  SUBCASE("errors") {
    Rng rng(4);
    AttentionParams p = AttentionParams::random(3, 2, 3, rng);
    CHECK_THROWS_AS(cross_attention(FeatureMap(1, 3, 2, 2), FeatureMap(1, 3, 2, 1), p), Error);
    FeatureMap bad(1, 3, 1, 1);
    bad.at(0, 1, 0, 0) = NAN;
    CHECK_THROWS_AS(cross_attention(bad, FeatureMap(1, 3, 1, 1), p), Error);
    CHECK_THROWS_AS(cross_attention(FeatureMap(1, 2, 1, 1), FeatureMap(1, 2, 1, 1), p), Error);
  }
}

TEST_CASE("transposed_attention") {
  SUBCASE("3-channel hand fixture") {
    // Three channels, two positions, hand-set projections.
    FeatureMap f(1, 3, 1, 2, std::vector<double>{0.5, -1.0, 2.0, 0.25, -0.75, 1.5});
    AttentionParams p;
    p.query.resize(3, 3);
    p.query << 1, 0, 0.5, 0, 1, 0, 0.2, 0, 1;
    p.key.resize(3, 3);
    p.key << 0.5, 0, 0, 0, 1, -0.5, 0, 0.3, 1;
    p.value.resize(3, 3);
    p.value << 1, 1, 0, 0, 1, 1, 1, 0, 1;
    p.output.resize(3, 3);
    p.output << 0.1, 0, 0, 0, 0.2, 0, 0, 0, 0.3;
    p.scale = 3.0;

    double x[3][2];
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < 2; ++i) x[c][i] = f.at(0, static_cast<std::size_t>(c), 0, static_cast<std::size_t>(i));
    }
    double q[3][2];
    double k[3][2];
    double v[3][2];
    for (int r = 0; r < 3; ++r) {
      for (int i = 0; i < 2; ++i) {
        q[r][i] = k[r][i] = v[r][i] = 0.0;
        for (int c = 0; c < 3; ++c) {
          q[r][i] += p.query(r, c) * x[c][i];
          k[r][i] += p.key(r, c) * x[c][i];
          v[r][i] += p.value(r, c) * x[c][i];
        }
      }
    }
    double a[3][3];
    for (int r = 0; r < 3; ++r) {
      double denom = 0.0;
      for (int s = 0; s < 3; ++s) {
        a[r][s] = std::exp((q[r][0] * k[s][0] + q[r][1] * k[s][1]) / std::sqrt(3.0));
        denom += a[r][s];
      }
      for (int s = 0; s < 3; ++s) a[r][s] /= denom;
    }
    const auto res = transposed_attention_detailed(f, p);
    for (int r = 0; r < 3; ++r) {
      for (int i = 0; i < 2; ++i) {
        double av = 0.0;
        for (int s = 0; s < 3; ++s) av += a[r][s] * v[s][i];
        const double expected = p.output(r, r) * av + x[r][i];
        CHECK(std::abs(res.features.at(0, static_cast<std::size_t>(r), 0, static_cast<std::size_t>(i)) - expected) <
              1e-12);
      }
      for (int s = 0; s < 3; ++s) CHECK(std::abs(res.maps[0](r, s) - a[r][s]) < 1e-12);
    }
  }
  SUBCASE("zero output projection is the identity") {
    Rng rng(5);
    const FeatureMap f = FeatureMap::random(3, 4, 2, 3, rng);
    AttentionParams p = AttentionParams::random(4, 4, 4, rng);
    p.output.setZero();
    CHECK(transposed_attention(f, p) == f);
  }
  SUBCASE("single channel") {
    FeatureMap f(1, 1, 2, 2, std::vector<double>{1, 2, 3, 4});
    AttentionParams p;
    p.query = Matrix::Constant(1, 1, 0.7);
    p.key = Matrix::Constant(1, 1, -1.3);
    p.value = Matrix::Constant(1, 1, 2.0);
    p.output = Matrix::Constant(1, 1, 0.5);
    const auto res = transposed_attention_detailed(f, p);
    CHECK(res.maps[0](0, 0) == 1.0);
    for (std::size_t i = 0; i < 4; ++i) CHECK(res.features.values()[i] == 0.5 * 2.0 * f.values()[i] + f.values()[i]);
  }
  SUBCASE("shape errors") {
    Rng rng(6);
    AttentionParams p = AttentionParams::random(3, 3, 3, rng);
    CHECK_THROWS_AS(transposed_attention(FeatureMap(1, 4, 2, 2), p), Error);
    p.output = Matrix::Zero(2, 3);
    CHECK_THROWS_AS(transposed_attention(FeatureMap(1, 3, 2, 2), p), Error);
  }
}

TEST_CASE("motion and semantic branches") {
  const FeatureMap frames(4, 3, 4, 4, 0.5);
  CHECK(motion_features(frames, frames, ZeroProvider(5)) == Vector::Zero(10));

  Vector a(2);
  a << 1, 2;
  Vector b(1);
  b << 3;
  // Declared widths differ per call, so the concatenation is checked through
  // a provider that declares the wider width and is rejected.
  CHECK_THROWS_AS(motion_features(frames, frames, FixedProvider(a, b, 2)), Error);
  Vector b2(2);
  b2 << 3, 4;
  const Vector joined = motion_features(frames, frames, FixedProvider(a, b2, 2));
  CHECK(joined(0) == 1.0);
  CHECK(joined(1) == 2.0);
  CHECK(joined(2) == 3.0);
  CHECK(joined(3) == 4.0);

  Rng rng(7);
  const FeatureMap left = FeatureMap::random(4, 3, 4, 4, rng);
  const FeatureMap right = FeatureMap::random(4, 3, 4, 4, rng);
  const TemporalDifferenceProvider motion(3, 6, 11);
  const Vector same = motion_features(left, left, motion);
  CHECK(same.head(6) == same.tail(6));

  const FeatureMap constant(2, 3, 4, 4, 0.8);
  const Vector sem = semantic_features(constant, constant, MeanPoolEmbedding(3, 2), IdentityTransformer{});
  for (Eigen::Index i = 0; i < sem.size(); ++i) CHECK(sem(i) == Approx(0.8).epsilon(1e-15));

  const LinearPatchEmbedding embed(3, 2, 8, 5);
  const SelfAttentionTransformer encoder(2, 8, 9);
  const Vector lr = semantic_features(left, right, embed, encoder);
  const Vector rl = semantic_features(right, left, embed, encoder);
  CHECK(lr.head(8) == rl.tail(8));
  CHECK(lr.tail(8) == rl.head(8));
  CHECK(semantic_features(left, right, embed, encoder) == lr);
}

TEST_CASE("predict_quality and the head") {
  const FeatureMap spatial(1, 2, 1, 2, std::vector<double>{1, 3, -2, 4});  // pooled: [2, 1]
  Vector motion(1);
  motion << 5;
  Vector semantic(1);
  semantic << -1;

  MlpHead zero;
  zero.hidden_weights = Matrix::Zero(3, 4);
  zero.hidden_bias = Vector::Zero(3);
  zero.output_weights = Vector::Zero(3);
  zero.output_bias = 0.25;
  CHECK(predict_quality(spatial, motion, semantic, zero) == 0.25);

  MlpHead linear;
  linear.activation = Activation::identity;
  linear.hidden_weights = Matrix::Zero(1, 4);
  linear.hidden_weights << 0.5, -1.0, 2.0, 3.0;
  linear.hidden_bias = Vector::Constant(1, 0.1);
  linear.output_weights = Vector::Constant(1, 2.0);
  linear.output_bias = -1.0;
  // 2*(0.5*2 - 1*1 + 2*5 + 3*(-1) + 0.1) - 1
  CHECK(predict_quality(spatial, motion, semantic, linear) == Approx(13.2).epsilon(1e-14));

  // Permuted concatenation with permuted first-layer columns.
  Rng rng(8);
  MlpHead head = MlpHead::random(4, 16, rng);
  Vector joined(4);
  joined << 2, 1, 5, -1;
  Vector permuted(4);
  permuted << 5, -1, 2, 1;
  MlpHead swapped = head;
  swapped.hidden_weights.col(0) = head.hidden_weights.col(2);
  swapped.hidden_weights.col(1) = head.hidden_weights.col(3);
  swapped.hidden_weights.col(2) = head.hidden_weights.col(0);
  swapped.hidden_weights.col(3) = head.hidden_weights.col(1);
  CHECK(swapped(permuted) == Approx(head(joined)).epsilon(1e-14));

  CHECK_THROWS_AS(predict_quality(spatial, motion, Vector::Zero(3), linear), Error);
}

TEST_CASE("plcc_objective") {
  std::vector<double> t{1, 4, 2, 8, 5, 7, 3, 9, 6, 10};
  CHECK(plcc_objective(t, t) == Approx(1.0).epsilon(1e-15));
  std::vector<double> neg;
  for (double v : t) neg.push_back(-v);
  CHECK(plcc_objective(neg, t) == Approx(-1.0).epsilon(1e-15));
  std::vector<double> p{0.3, 0.1, 0.9, 0.4, 0.4, 0.8, 0.2, 0.7, 0.5, 0.6};
  CHECK(plcc_objective(p, t) == vqs::plcc(p, t));
  CHECK_THROWS_AS(plcc_objective(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), Error);
}

TEST_CASE("QualityNet") {
  NetworkConfig config;
  config.key_frames = 4;
  config.plan = StagePlan{8, {{3, 8, 2}, {4, 8, 2}, {21, 8, 2}, {5, 8, 1}}};
  config.hidden = 32;

  SUBCASE("single-view mode equals the hand-assembled graph") {
    Rng rng(9);
    const QualityNet net(config, 42);
    const FeatureMap view = FeatureMap::random(6, 3, 8, 8, rng);
    const auto keys = sample_key_frames(view.frames(), config.key_frames);
    const FeatureMap key_frames = select_frames(view, keys);
    const FeatureMap spatial =
        transposed_attention(stage_pipeline(net.embed_frames(key_frames), config.plan, net.block()), net.channel());
    const Vector motion = net.motion().extract(view);
    const Vector semantic = semantic_view(key_frames, net.semantic_embed(), net.semantic_encoder());
    CHECK(net.predict_single(view) == predict_quality(spatial, motion, semantic, net.single_head()));
  }
  SUBCASE("finite output over many seeds on a 4-frame 8x8 toy") {
    int finite = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      Rng rng(seed);
      const FeatureMap left = FeatureMap::random(4, 3, 8, 8, rng);
      const FeatureMap right = FeatureMap::random(4, 3, 8, 8, rng);
      const QualityNet net(config, seed);
      if (std::isfinite(net.predict(left, right))) ++finite;
    }
    CHECK(finite == 1000);
  }
  SUBCASE("deterministic and shape-checked") {
    Rng rng(10);
    const FeatureMap left = FeatureMap::random(4, 3, 8, 8, rng);
    const FeatureMap right = FeatureMap::random(4, 3, 8, 8, rng);
    CHECK(QualityNet(config, 3).predict(left, right) == QualityNet(config, 3).predict(left, right));
    CHECK_THROWS_AS(QualityNet(config, 3).predict(left, FeatureMap(4, 3, 4, 4)), Error);
  }
}

TEST_CASE("tensor files round-trip") {
  Rng rng(11);
  const FeatureMap f = FeatureMap::random(2, 3, 4, 5, rng);
  std::stringstream buffer;
  write_tensor(buffer, to_tensor(f));
  const std::string bytes = buffer.str();
  CHECK(bytes.size() == 4 + 4 * 4 + 8 * f.values().size());
  // Little-endian rank header.
  CHECK(static_cast<unsigned char>(bytes[0]) == 4);
  CHECK(static_cast<unsigned char>(bytes[1]) == 0);
  const FeatureMap back = to_feature_map(read_tensor(buffer));
  CHECK(back == f);

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_tensor(truncated), Error);
  CHECK_THROWS_AS(to_feature_map(Tensor{{2, 2}, {1, 2, 3, 4}}), Error);
}
