#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "oracles.hpp"

using namespace sdiar;
using sdiar::testing::blank_window;
using sdiar::testing::TempDir;

namespace {

SegmentationMatrix one_frame(std::vector<float> s) {
  SegmentationMatrix m{Matrix<float>(1, s.size()), 0, 0, 0.0};
  for (std::size_t k = 0; k < s.size(); ++k) m.probs(0, k) = s[k];
  return m;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

}  // namespace

TEST(OverlapWeights, WorkedExamples) {
  auto zero = overlap_weights(one_frame({0, 0, 0, 0}), 10.0, 3.0);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(zero.weights(0, k), 0.0);

  auto hot = overlap_weights(one_frame({1, 0, 0, 0}), 10.0, 3.0);
  const double e10 = std::exp(10.0);
  EXPECT_NEAR(hot.weights(0, 0), std::pow(e10 / (e10 + 3.0), 3.0), 1e-15);
  EXPECT_NEAR(hot.weights(0, 0), 0.9996, 5e-5);
  for (std::size_t k = 1; k < 4; ++k) EXPECT_EQ(hot.weights(0, k), 0.0);

  auto pair = overlap_weights(one_frame({0.8f, 0.8f, 0, 0}), 10.0, 3.0);
  EXPECT_NEAR(pair.weights(0, 0), 0.0639, 5e-5);
  EXPECT_EQ(pair.weights(0, 0), pair.weights(0, 1));
}

TEST(OverlapWeights, MatchesHighPrecisionOracle) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int i = 0; i < 2000; ++i) {
    std::vector<float> s(4);
    for (auto& v : s) v = u(rng);
    const auto w = overlap_weights(one_frame(s), 10.0, 3.0);
    const auto want = oracle::overlap_weights_hp({s.begin(), s.end()}, 10.0, 3.0);
    for (std::size_t k = 0; k < 4; ++k) ASSERT_NEAR(w.weights(0, k), want[k], 1e-9);
  }
}

TEST(OverlapWeights, LargeBetaDoesNotOverflow) {
  const auto w = overlap_weights(one_frame({1, 1, 0, 0}), 5000.0, 3.0);
  EXPECT_NEAR(w.weights(0, 0), 0.125, 1e-12);
  EXPECT_TRUE(std::isfinite(w.weights(0, 2)));
}

TEST(OverlapWeights, RejectsGammaBelowOne) {
  EXPECT_THROW(overlap_weights(one_frame({1, 0}), 10.0, 0.5), InvalidArgument);
}

// Weights lie in [0, 1] and never exceed the raw activity.
TEST(OverlapWeights, BoundedByActivity) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int i = 0; i < 5000; ++i) {
    std::vector<float> s(4);
    for (auto& v : s) v = u(rng);
    const auto w = overlap_weights(one_frame(s), 10.0, 3.0);
    for (std::size_t k = 0; k < 4; ++k) {
      ASSERT_GE(w.weights(0, k), 0.0);
      ASSERT_LE(w.weights(0, k), static_cast<double>(s[k]) + 1e-12);
    }
  }
}

TEST(DirectWeights, EqualSegmentation) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  auto s = empty_segmentation(blank_window(FrameGrid{}, 5.0), 4);
  for (auto& v : s.probs.data()) v = u(rng);
  const auto w = direct_weights(s);
  for (std::size_t r = 0; r < s.frames(); ++r)
    for (std::size_t k = 0; k < 4; ++k)
      ASSERT_EQ(w.weights(r, k), static_cast<double>(s.probs(r, k)));
}

TEST(DirectWeights, OneHotLimitAgreesWithOverlapWeights) {
  const auto s = one_frame({0, 1, 0, 0});
  const auto direct = direct_weights(s);
  const auto sharp = overlap_weights(s, 60.0, 1.0);
  EXPECT_EQ(direct.weights(0, 1), 1.0);
  EXPECT_NEAR(sharp.weights(0, 1), 1.0, 1e-12);
}

TEST(StatsPool, UniformWeightsGivePlainMoments) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 3.0);
  Matrix<float> x(50, 6);
  for (auto& v : x.data()) v = static_cast<float>(n(rng));
  const auto st = weighted_stats_pool(x, std::vector<double>(50, 1.0));
  for (std::size_t d = 0; d < 6; ++d) {
    double mean = 0.0;
    for (std::size_t r = 0; r < 50; ++r) mean += x(r, d);
    mean /= 50.0;
    double var = 0.0;
    for (std::size_t r = 0; r < 50; ++r) var += (x(r, d) - mean) * (x(r, d) - mean);
    const double sd = std::sqrt(var / 49.0);
    EXPECT_NEAR(st.mean[d], mean, 1e-12 * std::max(1.0, std::abs(mean)));
    EXPECT_NEAR(st.stddev[d], sd, 1e-12 * sd);
  }
}

TEST(StatsPool, HandWorkedExample) {
  Matrix<float> x(2, 2);
  x(0, 0) = 1;
  x(0, 1) = 2;
  x(1, 0) = 3;
  x(1, 1) = 4;
  const auto st = weighted_stats_pool(x, std::vector<double>{1.0, 3.0});
  EXPECT_EQ(st.mean, (std::vector<double>{2.5, 3.5}));
  EXPECT_EQ(st.stddev[0], std::sqrt(2.0));
  EXPECT_EQ(st.stddev[1], std::sqrt(2.0));
}

TEST(StatsPool, SingleNonzeroWeight) {
  Matrix<float> x(3, 2);
  x(1, 0) = 7;
  x(1, 1) = -2;
  const auto st = weighted_stats_pool(x, std::vector<double>{0.0, 0.4, 0.0});
  EXPECT_EQ(st.mean, (std::vector<double>{7.0, -2.0}));
  EXPECT_EQ(st.stddev, (std::vector<double>{0.0, 0.0}));
}

TEST(StatsPool, Errors) {
  Matrix<float> x(2, 2);
  EXPECT_THROW(weighted_stats_pool(x, std::vector<double>{0.0, 0.0}), EmptySupport);
  EXPECT_THROW(weighted_stats_pool(x, std::vector<double>{1.0}), InvalidArgument);
  EXPECT_THROW(weighted_stats_pool(x, std::vector<double>{1.0, -1.0}), InvalidArgument);
}

TEST(StatsPool, RescalingInvariance) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix<float> x(40, 4);
    for (auto& v : x.data()) v = static_cast<float>(n(rng));
    std::vector<double> w(40), scaled(40);
    const double c = std::exp(6.0 * u(rng) - 3.0);
    for (std::size_t i = 0; i < 40; ++i) {
      w[i] = u(rng);
      scaled[i] = c * w[i];
    }
    const auto a = weighted_stats_pool(x, w), b = weighted_stats_pool(x, scaled);
    for (std::size_t d = 0; d < 4; ++d) {
      ASSERT_NEAR(a.mean[d], b.mean[d], 1e-12 * std::max(1.0, std::abs(a.mean[d])));
      ASSERT_NEAR(a.stddev[d], b.stddev[d], 1e-12 * std::max(1.0, a.stddev[d]));
    }
  }
}

TEST(Embedding, L2NormAndDegenerate) {
  std::vector<double> v{3.0, 4.0};
  normalize_in_place(v);
  EXPECT_DOUBLE_EQ(l2_norm(v), 1.0);
  std::vector<double> z{0.0, 0.0};
  EXPECT_THROW(normalize_in_place(z), DegenerateVector);
}

TEST(Embedding, TwoActiveChannelsTwoEmbeddings) {
  const FrameGrid g;
  auto w = blank_window(g, 5.0, 0, 3);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : w.features.frames.data()) v = static_cast<float>(n(rng));
  auto s = empty_segmentation(w, 4);
  for (std::size_t r = 0; r < 100; ++r) s.probs(r, 1) = 1.0f;
  for (std::size_t r = 150; r < 312; ++r) s.probs(r, 3) = 0.8f;
  const auto locals = active_speakers(s, 0.5);
  const auto e = embed_locals(w.features, overlap_weights(s, 10, 3), s, locals);
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[0].channel, 1u);
  EXPECT_EQ(e[1].channel, 3u);
  for (const auto& x : e) {
    EXPECT_EQ(x.vector.size(), 6u);
    EXPECT_NEAR(l2_norm(x.vector), 1.0, 1e-12);
  }
  EXPECT_FLOAT_EQ(static_cast<float>(e[0].activity_mass), 100.0f);
  EXPECT_NEAR(e[1].activity_seconds(g), 162 * 0.8 * 0.016, 1e-5);
}

TEST(Embedding, SplitTurnsPoolIntoOne) {
  const FrameGrid g;
  Annotation ref{"r", {}};
  ref.add(0.2, 1.0, "A");
  ref.add(3.0, 1.5, "A");
  ref.add(1.5, 1.0, "B");
  const auto sigs = random_signatures({"A", "B"}, 16, 3);
  auto w = blank_window(g, 5.0, 0, 16);
  w.features = oracle_frame_features(ref, w, sigs, 0.0);
  const auto s = oracle_segmentation(ref, w, 0);
  const auto locals = active_speakers(s, 0.5);
  ASSERT_EQ(locals.k_buffer(), 2u);
  const auto e = embed_locals(w.features, direct_weights(s), s, locals);
  ASSERT_EQ(e.size(), 2u);
  const auto& a = sigs.at("A");
  // Whichever embedding belongs to A has mean part equal to A's signature.
  bool found = false;
  for (const auto& x : e) {
    const std::span<const double> mean(x.vector.data(), 16);
    if (cosine(mean, a) > 1.0 - 1e-9) found = true;
  }
  EXPECT_TRUE(found);
}

TEST(Embedding, NoActiveLocalsRejected) {
  auto w = blank_window(FrameGrid{}, 5.0);
  auto s = empty_segmentation(w, 4);
  EXPECT_THROW(embed_locals(w.features, direct_weights(s), s, LocalSpeakers{}),
               InvalidArgument);
}

TEST(Embedding, OverlapAwareCloserOnOverlapWindows) {
  const FrameGrid g;
  const auto sigs = random_signatures({"A", "B"}, 32, 77);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int windows = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Annotation ref{"r", {}};
    const double a0 = 2.0 * u(rng), a1 = a0 + 1.0 + u(rng);
    const double b0 = a1 - 0.3 - 0.6 * u(rng), b1 = b0 + 1.0 + u(rng);
    ref.add(a0, a1 - a0, "A");
    ref.add(b0, std::min(b1, 5.0) - b0, "B");
    auto w = blank_window(g, 5.0, 0, 32);
    w.features = oracle_frame_features(ref, w, sigs, 0.0);
    const auto s = oracle_segmentation(ref, w, static_cast<std::uint64_t>(trial));
    const auto locals = active_speakers(s, 0.5);
    const auto ov = embed_locals(w.features, overlap_weights(s, 10, 3), s, locals);
    const auto di = embed_locals(w.features, direct_weights(s), s, locals);
    for (std::size_t i = 0; i < ov.size(); ++i) {
      // Identify the speaker of the channel by its first active frame.
      std::size_t first = 0;
      while (s.probs(first, ov[i].channel) == 0.0f) ++first;
      const bool is_a = frame_center(g, static_cast<FrameIndex>(first)) < b0;
      const auto& sig = sigs.at(is_a ? "A" : "B");
      const std::span<const double> mo(ov[i].vector.data(), 32);
      const std::span<const double> md(di[i].vector.data(), 32);
      ASSERT_GT(cosine(mo, sig), cosine(md, sig)) << "trial " << trial;
    }
    ++windows;
  }
  EXPECT_EQ(windows, 100);
}

TEST(OracleFeatures, Examples) {
  const FrameGrid g;
  Annotation ref{"r", {}};
  ref.add(0.0, 3.0, "A");
  ref.add(2.0, 3.0, "B");
  const auto sigs = random_signatures({"A", "B"}, 8, 1);
  const OracleFeatures f(ref, sigs, g, 0.0, 0);
  std::vector<float> v(8);
  f.frame(10, v);
  for (std::size_t d = 0; d < 8; ++d) EXPECT_FLOAT_EQ(v[d], static_cast<float>(sigs.at("A")[d]));
  f.frame(time_to_frame(g, 2.5), v);
  const std::vector<double> vd(v.begin(), v.end());
  EXPECT_NEAR(cosine(vd, sigs.at("A")), cosine(vd, sigs.at("B")), 1e-6);
  EXPECT_NEAR(l2_norm(vd), 1.0, 1e-6);
  f.frame(time_to_frame(g, 6.0), v);
  for (float x : v) EXPECT_EQ(x, 0.0f);
}

TEST(OracleFeatures, NoisyCosineMonteCarlo) {
  const FrameGrid g;
  Annotation ref{"r", {}};
  ref.add(0.0, 10000 * g.frame_step + 1.0, "A");
  const auto sigs = random_signatures({"A"}, 32, 5);
  const OracleFeatures f(ref, sigs, g, 0.1, 99);
  std::vector<float> v(32);
  int good = 0;
  for (FrameIndex i = 0; i < 10000; ++i) {
    f.frame(i, v);
    const std::vector<double> vd(v.begin(), v.end());
    good += cosine(vd, sigs.at("A")) > 0.9;
  }
  EXPECT_GE(good, 9900);
}

TEST(OracleFeatures, MissingSignatureRejected) {
  Annotation ref{"r", {}};
  ref.add(0.0, 1.0, "A");
  EXPECT_THROW(OracleFeatures(ref, random_signatures({"B"}, 4, 0), FrameGrid{}, 0.0, 0),
               InvalidArgument);
}

TEST(EmbeddingFile, RoundTripAndProvider) {
  TempDir dir("sdem");
  const FrameGrid g;
  {
    EmbeddingWriter writer(dir / "e.sdem", 3);
    Matrix<float> v0(1, 3);
    v0(0, 0) = 2.0f;
    writer.write({{2}, v0});
    writer.write({{}, Matrix<float>(0, 3)});
    Matrix<float> v2(2, 3);
    v2(0, 1) = 1.0f;
    v2(1, 2) = -3.0f;
    writer.write({{0, 1}, v2});
  }
  EmbeddingReader reader(dir / "e.sdem");
  EXPECT_EQ(reader.dim(), 3u);
  EXPECT_EQ(reader.next()->channels, (std::vector<std::uint32_t>{2}));
  EXPECT_TRUE(reader.next()->channels.empty());
  EXPECT_EQ(reader.next()->vectors(1, 2), -3.0f);
  EXPECT_FALSE(reader.next().has_value());

  FileEmbeddings provider(dir / "e.sdem");
  auto w0 = blank_window(g, 0.5, 0);
  auto s0 = empty_segmentation(w0, 4);
  s0.probs(311, 2) = 1.0f;
  auto e0 = provider.embed(w0, s0, direct_weights(s0), active_speakers(s0, 0.5));
  ASSERT_EQ(e0.size(), 1u);
  EXPECT_EQ(e0[0].vector, (std::vector<double>{1.0, 0.0, 0.0}));
  EXPECT_EQ(e0[0].activity_mass, 1.0);

  // Window 2: channel 3 is active but has no stored vector and is dropped.
  auto w2 = blank_window(g, 1.5, 2);
  auto s2 = empty_segmentation(w2, 4);
  s2.probs(300, 1) = 1.0f;
  s2.probs(300, 3) = 1.0f;
  auto e2 = provider.embed(w2, s2, direct_weights(s2), active_speakers(s2, 0.5));
  ASSERT_EQ(e2.size(), 1u);
  EXPECT_EQ(e2[0].channel, 1u);
  EXPECT_THROW(provider.embed(w0, s0, direct_weights(s0), active_speakers(s0, 0.5)),
               OrderViolation);
}
