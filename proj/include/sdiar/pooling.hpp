#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sdiar/binary_io.hpp"
#include "sdiar/errors.hpp"
#include "sdiar/matrix.hpp"
#include "sdiar/segmentation.hpp"
#include "sdiar/stream.hpp"
#include "sdiar/timebase.hpp"

namespace sdiar {

/// Frame x channel pooling weights.
struct PoolingWeights {
  Matrix<double> weights;
  double beta = 10.0;
  double gamma = 3.0;

  std::vector<double> column(std::size_t k) const { return weights.column(k); }
};

/// Overlap-aware weights: w_f = (s_f * softmax(beta * s_f))^gamma, with the
/// softmax taken over all channels of the frame. Frames with several confident
/// speakers, or with low confidence, get small weights.
inline PoolingWeights overlap_weights(const SegmentationMatrix& s, double beta,
                                      double gamma) {
  if (!(gamma >= 1.0)) throw InvalidArgument("gamma must be >= 1");
  if (!std::isfinite(beta)) throw InvalidArgument("beta must be finite");
  const std::size_t frames = s.frames();
  const std::size_t k_max = s.k_max();
  PoolingWeights out{Matrix<double>(frames, k_max, 0.0), beta, gamma};
  std::vector<double> exps(k_max);
  for (std::size_t f = 0; f < frames; ++f) {
    auto row = s.probs.row(f);
    double peak = -std::numeric_limits<double>::infinity();
    for (float p : row) peak = std::max(peak, beta * static_cast<double>(p));
    double total = 0.0;
    for (std::size_t k = 0; k < k_max; ++k) {
      exps[k] = std::exp(beta * static_cast<double>(row[k]) - peak);
      total += exps[k];
    }
    for (std::size_t k = 0; k < k_max; ++k)
      out.weights(f, k) =
          std::pow(static_cast<double>(row[k]) * exps[k] / total, gamma);
  }
  return out;
}

/// Plain activity-probability weights (no overlap penalty).
inline PoolingWeights direct_weights(const SegmentationMatrix& s) {
  PoolingWeights out{Matrix<double>(s.frames(), s.k_max(), 0.0), 0.0, 1.0};
  for (std::size_t f = 0; f < s.frames(); ++f)
    for (std::size_t k = 0; k < s.k_max(); ++k)
      out.weights(f, k) = s.probs(f, k);
  return out;
}

struct PooledStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

/// Below this reliability-weight denominator the std is reported as zero.
inline constexpr double kVarianceFloor = 1e-9;

/// Weighted mean and unbiased (reliability-weight) standard deviation of the
/// frame features. Reduces to the plain mean and sample std for uniform
/// weights.
inline PooledStats weighted_stats_pool(const Matrix<float>& frames,
                                       std::span<const double> weights) {
  if (weights.size() != frames.rows())
    throw InvalidArgument("weight column length differs from frame count");
  const std::size_t dim = frames.cols();
  double sum_w = 0.0;
  double sum_w2 = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw InvalidArgument("pooling weights must be >= 0");
    sum_w += w;
    sum_w2 += w * w;
  }
  if (!(sum_w > 0.0)) throw EmptySupport("weight column has zero mass");

  PooledStats out{std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
  for (std::size_t f = 0; f < frames.rows(); ++f) {
    if (weights[f] == 0.0) continue;
    auto x = frames.row(f);
    for (std::size_t d = 0; d < dim; ++d)
      out.mean[d] += weights[f] * static_cast<double>(x[d]);
  }
  for (double& m : out.mean) m /= sum_w;

  const double denom = sum_w - sum_w2 / sum_w;
  if (denom <= kVarianceFloor) return out;
  for (std::size_t f = 0; f < frames.rows(); ++f) {
    if (weights[f] == 0.0) continue;
    auto x = frames.row(f);
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = static_cast<double>(x[d]) - out.mean[d];
      out.stddev[d] += weights[f] * diff * diff;
    }
  }
  for (double& v : out.stddev) v = std::sqrt(v / denom);
  return out;
}

/// One local speaker's embedding together with its estimated activity.
struct SpeakerEmbedding {
  std::vector<double> vector;
  /// Sum of raw activity probabilities, in frames.
  double activity_mass = 0.0;
  std::size_t channel = 0;

  Seconds activity_seconds(const FrameGrid& grid) const {
    return activity_mass * grid.frame_step;
  }
};

/// Maps pooled (mean, std) statistics to an embedding vector.
using ProjectionHead =
    std::function<std::vector<double>(const PooledStats& stats)>;

/// Concatenation of mean and standard deviation.
inline std::vector<double> identity_head(const PooledStats& stats) {
  std::vector<double> v(stats.mean);
  v.insert(v.end(), stats.stddev.begin(), stats.stddev.end());
  return v;
}

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline void normalize_in_place(std::vector<double>& v) {
  const double n = l2_norm(v);
  if (!(n > 0.0) || !std::isfinite(n))
    throw DegenerateVector("embedding has zero or non-finite norm");
  for (double& x : v) x /= n;
}

inline double activity_mass(const SegmentationMatrix& s, std::size_t channel) {
  double mass = 0.0;
  for (std::size_t f = 0; f < s.frames(); ++f) mass += s.probs(f, channel);
  return mass;
}

inline SpeakerEmbedding embed_channel(const FrameFeatures& features,
                                      const PoolingWeights& weights,
                                      const SegmentationMatrix& s,
                                      std::size_t channel,
                                      const ProjectionHead& head = identity_head) {
  const auto column = weights.column(channel);
  SpeakerEmbedding e;
  e.vector = head(weighted_stats_pool(features.frames, column));
  normalize_in_place(e.vector);
  e.activity_mass = activity_mass(s, channel);
  e.channel = channel;
  return e;
}

/// Exactly one unit-norm embedding per active channel, pooled over every
/// frame of the window (all speech turns of that speaker).
inline std::vector<SpeakerEmbedding> embed_locals(
    const FrameFeatures& features, const PoolingWeights& weights,
    const SegmentationMatrix& s, const LocalSpeakers& locals,
    const ProjectionHead& head = identity_head) {
  if (locals.empty()) throw InvalidArgument("no active local speakers");
  std::vector<SpeakerEmbedding> out;
  out.reserve(locals.k_buffer());
  for (std::size_t k : locals.active)
    out.push_back(embed_channel(features, weights, s, k, head));
  return out;
}

/// Produces embeddings for the active channels of a window. Channels that
/// cannot be embedded are omitted from the result.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<SpeakerEmbedding> embed(const BufferWindow& window,
                                              const SegmentationMatrix& s,
                                              const PoolingWeights& weights,
                                              const LocalSpeakers& locals) = 0;
};

/// Statistics pooling over the window's frame features plus a projection head.
class PooledEmbeddings final : public EmbeddingProvider {
 public:
  explicit PooledEmbeddings(ProjectionHead head = identity_head)
      : head_(std::move(head)) {}

  std::vector<SpeakerEmbedding> embed(const BufferWindow& window,
                                      const SegmentationMatrix& s,
                                      const PoolingWeights& weights,
                                      const LocalSpeakers& locals) override {
    std::vector<SpeakerEmbedding> out;
    for (std::size_t k : locals.active) {
      try {
        out.push_back(embed_channel(window.features, weights, s, k, head_));
      } catch (const EmptySupport&) {
      } catch (const DegenerateVector&) {
      }
    }
    return out;
  }

 private:
  ProjectionHead head_;
};

inline constexpr std::string_view kEmbeddingMagic = "SDEM";

/// Embeddings of one window as stored in an SDEM file.
struct EmbeddingBlock {
  std::vector<std::uint32_t> channels;
  Matrix<float> vectors;
};

class EmbeddingWriter {
 public:
  EmbeddingWriter(const std::filesystem::path& path, std::size_t dim)
      : out_(path, std::ios::binary), dim_(dim) {
    if (!out_) throw FormatError("cannot create " + path.string());
    binary::write_magic(out_, kEmbeddingMagic);
    binary::write_le(out_, static_cast<std::uint32_t>(dim));
  }

  void write(const EmbeddingBlock& block) {
    if (block.channels.size() != block.vectors.rows() ||
        (!block.channels.empty() && block.vectors.cols() != dim_))
      throw FormatError("embedding block shape mismatch");
    binary::write_le(out_, static_cast<std::uint32_t>(block.channels.size()));
    for (auto c : block.channels) binary::write_le(out_, c);
    for (float v : block.vectors.data()) binary::write_le(out_, v);
  }

 private:
  std::ofstream out_;
  std::size_t dim_;
};

/// Reads SDEM blocks sequentially, one per window.
class EmbeddingReader {
 public:
  explicit EmbeddingReader(const std::filesystem::path& path)
      : in_(path, std::ios::binary) {
    if (!in_) throw FormatError("cannot open embedding file " + path.string());
    binary::expect_magic(in_, kEmbeddingMagic);
    dim_ = binary::read_le<std::uint32_t>(in_);
    if (dim_ == 0) throw FormatError("embedding dimension is zero");
  }

  std::size_t dim() const { return dim_; }

  std::optional<EmbeddingBlock> next() {
    if (in_.peek() == std::char_traits<char>::eof()) return std::nullopt;
    EmbeddingBlock block;
    const auto count = binary::read_le<std::uint32_t>(in_);
    block.channels.resize(count);
    for (auto& c : block.channels) c = binary::read_le<std::uint32_t>(in_);
    block.vectors = Matrix<float>(count, dim_);
    for (auto& v : block.vectors.data()) v = binary::read_le<float>(in_);
    return block;
  }

 private:
  std::ifstream in_;
  std::size_t dim_ = 0;
};

/// Precomputed embeddings from an SDEM file. Windows must be requested in
/// order; activity mass is still taken from the segmentation.
class FileEmbeddings final : public EmbeddingProvider {
 public:
  explicit FileEmbeddings(const std::filesystem::path& path) : reader_(path) {}

  std::vector<SpeakerEmbedding> embed(const BufferWindow& window,
                                      const SegmentationMatrix& s,
                                      const PoolingWeights&,
                                      const LocalSpeakers& locals) override {
    if (window.window_index < blocks_read_)
      throw OrderViolation("embedding file is read sequentially");
    std::optional<EmbeddingBlock> block;
    while (blocks_read_ <= window.window_index) {
      block = reader_.next();
      if (!block)
        throw FormatError("embedding file has no block for window " +
                          std::to_string(window.window_index));
      ++blocks_read_;
    }
    std::vector<SpeakerEmbedding> out;
    for (std::size_t k : locals.active) {
      auto it = std::find(block->channels.begin(), block->channels.end(),
                          static_cast<std::uint32_t>(k));
      if (it == block->channels.end()) continue;
      const auto row = static_cast<std::size_t>(it - block->channels.begin());
      SpeakerEmbedding e;
      auto src = block->vectors.row(row);
      e.vector.assign(src.begin(), src.end());
      try {
        normalize_in_place(e.vector);
      } catch (const DegenerateVector&) {
        continue;
      }
      e.activity_mass = activity_mass(s, k);
      e.channel = k;
      out.push_back(std::move(e));
    }
    return out;
  }

 private:
  EmbeddingReader reader_;
  std::size_t blocks_read_ = 0;
};

/// Random unit vectors, one per label, drawn from an isotropic Gaussian.
inline std::map<std::string, std::vector<double>> random_signatures(
    const std::vector<std::string>& labels, std::size_t dim,
    std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0xC0FFEEull));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::map<std::string, std::vector<double>> out;
  for (const auto& label : labels) {
    std::vector<double> v(dim);
    for (auto& x : v) x = normal(rng);
    normalize_in_place(v);
    out.emplace(label, std::move(v));
  }
  return out;
}

/// Synthetic frame features driven by a reference annotation: each frame is
/// the normalised sum of the signatures of the speakers active at its centre,
/// plus isotropic Gaussian noise of total scale `noise_sigma` (per-dimension
/// std noise_sigma / sqrt(D)). Noise depends only on (seed, frame), so
/// overlapping windows see identical frames.
class OracleFeatures {
 public:
  OracleFeatures(const Annotation& reference,
                 std::map<std::string, std::vector<double>> signatures,
                 FrameGrid grid, double noise_sigma, std::uint64_t seed)
      : timelines_(speaker_timelines(reference)),
        signatures_(std::move(signatures)),
        grid_(grid),
        noise_sigma_(noise_sigma),
        seed_(seed) {
    if (signatures_.empty()) throw InvalidArgument("no signatures");
    dim_ = signatures_.begin()->second.size();
    for (const auto& [label, sig] : signatures_)
      if (sig.size() != dim_)
        throw InvalidArgument("signatures must share one dimension");
    for (const auto& [label, tl] : timelines_)
      if (!signatures_.contains(label))
        throw InvalidArgument("no signature for speaker " + label);
  }

  std::size_t dim() const { return dim_; }

  void frame(FrameIndex f, std::span<float> out) const {
    std::vector<double> v(dim_, 0.0);
    const Seconds centre = frame_center(grid_, f);
    bool any = false;
    for (const auto& [label, tl] : timelines_) {
      if (!timeline_contains(tl, centre)) continue;
      const auto& sig = signatures_.at(label);
      for (std::size_t d = 0; d < dim_; ++d) v[d] += sig[d];
      any = true;
    }
    if (any) normalize_in_place(v);
    if (noise_sigma_ > 0.0) {
      std::mt19937_64 rng(mix_seed(seed_, static_cast<std::uint64_t>(f)));
      std::normal_distribution<double> normal(
          0.0, noise_sigma_ / std::sqrt(static_cast<double>(dim_)));
      for (auto& x : v) x += normal(rng);
    }
    for (std::size_t d = 0; d < dim_; ++d) out[d] = static_cast<float>(v[d]);
  }

 private:
  std::map<std::string, std::vector<Interval>> timelines_;
  std::map<std::string, std::vector<double>> signatures_;
  FrameGrid grid_;
  double noise_sigma_;
  std::uint64_t seed_;
  std::size_t dim_ = 0;
};

/// Streams OracleFeatures frames for [0, frame_count).
class OracleFeatureSource final : public FrameSource {
 public:
  OracleFeatureSource(OracleFeatures features, FrameIndex frame_count)
      : features_(std::move(features)), frame_count_(frame_count) {}

  std::size_t dim() const override { return features_.dim(); }

  bool next_frame(std::span<float> out) override {
    if (next_ >= frame_count_) return false;
    features_.frame(next_++, out);
    return true;
  }

 private:
  OracleFeatures features_;
  FrameIndex frame_count_;
  FrameIndex next_ = 0;
};

/// Features of one window; padded rows stay zero.
inline FrameFeatures oracle_frame_features(const OracleFeatures& oracle,
                                           const BufferWindow& window) {
  FrameFeatures out;
  out.start_time = window.start_time;
  out.frames = Matrix<float>(window.features.frames.rows(), oracle.dim(), 0.0f);
  for (std::size_t r = 0; r < out.frames.rows(); ++r) {
    const FrameIndex f = window.first_frame + static_cast<FrameIndex>(r);
    if (f >= 0) oracle.frame(f, out.frames.row(r));
  }
  return out;
}

inline FrameFeatures oracle_frame_features(
    const Annotation& reference, const BufferWindow& window,
    const std::map<std::string, std::vector<double>>& signatures,
    double noise_sigma, std::uint64_t seed = 0, const FrameGrid& grid = {}) {
  return oracle_frame_features(
      OracleFeatures(reference, signatures, grid, noise_sigma, seed), window);
}

}  // namespace sdiar
