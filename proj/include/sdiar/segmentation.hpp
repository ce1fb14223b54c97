#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "sdiar/binary_io.hpp"
#include "sdiar/errors.hpp"
#include "sdiar/matrix.hpp"
#include "sdiar/stream.hpp"
#include "sdiar/timebase.hpp"

namespace sdiar {

/// splitmix64 finalizer; derives independent per-window seeds from a run seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Frame x channel speaker-activity probabilities for one window.
struct SegmentationMatrix {
  Matrix<float> probs;
  std::size_t window_index = 0;
  FrameIndex first_frame = 0;
  Seconds end_time = 0.0;

  std::size_t k_max() const { return probs.cols(); }
  std::size_t frames() const { return probs.rows(); }
};

inline SegmentationMatrix empty_segmentation(const BufferWindow& window,
                                             std::size_t k_max) {
  return {Matrix<float>(window.features.frames.rows(), k_max, 0.0f),
          window.window_index, window.first_frame, window.end_time};
}

struct LocalSpeakers {
  /// Sorted, unique channel indices.
  std::vector<std::size_t> active;

  std::size_t k_buffer() const { return active.size(); }
  bool empty() const { return active.empty(); }
};

/// Channel k is active iff its probability exceeds tau at least once.
inline LocalSpeakers active_speakers(const SegmentationMatrix& s,
                                     double tau_active) {
  if (!(tau_active > 0.0 && tau_active < 1.0))
    throw InvalidArgument("tau_active must lie in (0, 1)");
  LocalSpeakers out;
  for (std::size_t k = 0; k < s.k_max(); ++k) {
    for (std::size_t f = 0; f < s.frames(); ++f) {
      if (s.probs(f, k) > tau_active) {
        out.active.push_back(k);
        break;
      }
    }
  }
  return out;
}

class SegmentationProvider {
 public:
  virtual ~SegmentationProvider() = default;
  virtual std::size_t k_max() const = 0;
  virtual SegmentationMatrix segment(const BufferWindow& window) = 0;
};

inline SegmentationMatrix segment(SegmentationProvider& provider,
                                  const BufferWindow& window) {
  auto s = provider.segment(window);
  if (s.frames() != window.features.frames.rows() ||
      s.k_max() != provider.k_max())
    throw FormatError("segmentation shape mismatch at window " +
                      std::to_string(window.window_index));
  return s;
}

/// Frame f belongs to a speaker when the frame centre lies in one of the
/// speaker's segments.
inline Seconds frame_center(const FrameGrid& grid, FrameIndex f) {
  return (static_cast<double>(f) + 0.5) * grid.frame_step;
}

/// Perfect binary segmentation rasterised from a reference annotation.
///
/// Speakers present in the window are dealt onto channels by a permutation
/// drawn independently for every window, so channel identity is not stable
/// over time.
class OracleSegmentation final : public SegmentationProvider {
 public:
  OracleSegmentation(const Annotation& reference, FrameGrid grid,
                     std::size_t k_max, std::uint64_t seed)
      : timelines_(speaker_timelines(reference)),
        grid_(grid),
        k_max_(k_max),
        seed_(seed) {
    if (k_max == 0) throw InvalidArgument("k_max must be positive");
  }

  std::size_t k_max() const override { return k_max_; }

  SegmentationMatrix segment(const BufferWindow& window) override {
    auto out = empty_segmentation(window, k_max_);
    const std::size_t rows = out.frames();
    std::vector<std::vector<std::size_t>> active_rows;
    for (const auto& [label, timeline] : timelines_) {
      std::vector<std::size_t> hits;
      for (std::size_t r = 0; r < rows; ++r) {
        const FrameIndex f = window.first_frame + static_cast<FrameIndex>(r);
        if (f >= 0 && timeline_contains(timeline, frame_center(grid_, f)))
          hits.push_back(r);
      }
      if (!hits.empty()) active_rows.push_back(std::move(hits));
    }
    if (active_rows.size() > k_max_)
      throw CapacityExceeded(std::to_string(active_rows.size()) +
                             " reference speakers in window " +
                             std::to_string(window.window_index) +
                             " exceed k_max=" + std::to_string(k_max_));

    std::vector<std::size_t> channels(k_max_);
    std::iota(channels.begin(), channels.end(), std::size_t{0});
    std::mt19937_64 rng(mix_seed(seed_, window.window_index));
    std::shuffle(channels.begin(), channels.end(), rng);
    for (std::size_t i = 0; i < active_rows.size(); ++i)
      for (std::size_t r : active_rows[i]) out.probs(r, channels[i]) = 1.0f;
    return out;
  }

 private:
  std::map<std::string, std::vector<Interval>> timelines_;
  FrameGrid grid_;
  std::size_t k_max_;
  std::uint64_t seed_;
};

inline SegmentationMatrix oracle_segmentation(const Annotation& reference,
                                              const BufferWindow& window,
                                              std::uint64_t permutation_seed,
                                              const FrameGrid& grid = {},
                                              std::size_t k_max = 4) {
  OracleSegmentation provider(reference, grid, k_max, permutation_seed);
  return provider.segment(window);
}

/// Adds uniform jitter in [-epsilon, epsilon] to another provider's output,
/// clipped to [0, 1]. Padded rows stay zero.
class NoisySegmentation final : public SegmentationProvider {
 public:
  NoisySegmentation(SegmentationProvider& inner, double epsilon,
                    std::uint64_t seed)
      : inner_(&inner), epsilon_(epsilon), seed_(seed) {}

  std::size_t k_max() const override { return inner_->k_max(); }

  SegmentationMatrix segment(const BufferWindow& window) override {
    auto s = inner_->segment(window);
    std::mt19937_64 rng(mix_seed(seed_ ^ 0x5EEDull, window.window_index));
    std::uniform_real_distribution<double> jitter(-epsilon_, epsilon_);
    for (std::size_t r = static_cast<std::size_t>(window.padded_frames);
         r < s.frames(); ++r)
      for (auto& p : s.probs.row(r))
        p = static_cast<float>(
            std::clamp(static_cast<double>(p) + jitter(rng), 0.0, 1.0));
    return s;
  }

 private:
  SegmentationProvider* inner_;
  double epsilon_;
  std::uint64_t seed_;
};

inline constexpr std::string_view kSegmentationMagic = "SDSG";

/// Appends one F x K_max block per window to an SDSG file.
class SegmentationWriter {
 public:
  SegmentationWriter(const std::filesystem::path& path, std::size_t k_max,
                     double frame_step)
      : out_(path, std::ios::binary), k_max_(k_max) {
    if (!out_) throw FormatError("cannot create " + path.string());
    binary::write_header(out_, kSegmentationMagic,
                         {1, static_cast<std::uint32_t>(k_max), frame_step});
  }

  void write(const SegmentationMatrix& s) {
    if (s.k_max() != k_max_) throw FormatError("segmentation width mismatch");
    if (s.window_index != next_index_)
      throw FormatError("segmentation blocks must be written in window order");
    for (float v : s.probs.data()) binary::write_le(out_, v);
    ++next_index_;
  }

 private:
  std::ofstream out_;
  std::size_t k_max_;
  std::size_t next_index_ = 0;
};

/// Serves precomputed segmentation blocks from an SDSG file by window index.
class FileSegmentation final : public SegmentationProvider {
 public:
  FileSegmentation(const std::filesystem::path& path, const FrameGrid& grid)
      : in_(path, std::ios::binary), frames_(grid.frames_per_window()) {
    if (!in_) throw FormatError("cannot open segmentation file " + path.string());
    header_ = binary::read_header(in_, kSegmentationMagic);
    if (std::abs(header_.frame_step - grid.frame_step) > 1e-12)
      throw FormatError("segmentation frame step does not match the grid");
  }

  std::size_t k_max() const override { return header_.dim; }

  SegmentationMatrix segment(const BufferWindow& window) override {
    const auto cols = static_cast<std::size_t>(header_.dim);
    const auto rows = static_cast<std::size_t>(frames_);
    const std::streamoff block = static_cast<std::streamoff>(rows * cols * 4);
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(binary::ContainerHeader::kBytes) +
              block * static_cast<std::streamoff>(window.window_index));
    if (!in_)
      throw FormatError("segmentation file has no block for window " +
                        std::to_string(window.window_index));
    SegmentationMatrix s{Matrix<float>(rows, cols), window.window_index,
                         window.first_frame, window.end_time};
    for (auto& v : s.probs.data()) {
      v = binary::read_le<float>(in_);
      if (!(v >= 0.0f && v <= 1.0f))
        throw FormatError("segmentation probability outside [0, 1]");
    }
    return s;
  }

 private:
  std::ifstream in_;
  FrameIndex frames_;
  binary::ContainerHeader header_;
};

}  // namespace sdiar
