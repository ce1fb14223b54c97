#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdiar/binary_io.hpp"
#include "sdiar/errors.hpp"
#include "sdiar/matrix.hpp"
#include "sdiar/timebase.hpp"

namespace sdiar {

/// Sequential, time-ordered producer of fixed-dimension frame vectors.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::size_t dim() const = 0;
  /// Writes the next frame into `out` (size dim()). False at end of stream.
  virtual bool next_frame(std::span<float> out) = 0;
};

/// Frames held in memory, one row per frame.
class MatrixSource final : public FrameSource {
 public:
  explicit MatrixSource(Matrix<float> frames) : frames_(std::move(frames)) {}

  std::size_t dim() const override { return frames_.cols(); }

  bool next_frame(std::span<float> out) override {
    if (cursor_ >= frames_.rows()) return false;
    auto row = frames_.row(cursor_++);
    std::copy(row.begin(), row.end(), out.begin());
    return true;
  }

 private:
  Matrix<float> frames_;
  std::size_t cursor_ = 0;
};

inline constexpr std::string_view kFeatureMagic = "SDFE";

/// Streams rows from an SDFE feature file without loading it whole.
class FeatureFileSource final : public FrameSource {
 public:
  explicit FeatureFileSource(const std::filesystem::path& path)
      : in_(path, std::ios::binary) {
    if (!in_) throw FormatError("cannot open feature file " + path.string());
    header_ = binary::read_header(in_, kFeatureMagic);
  }

  std::size_t dim() const override { return header_.dim; }
  double frame_step() const { return header_.frame_step; }

  bool next_frame(std::span<float> out) override {
    if (in_.peek() == std::char_traits<char>::eof()) return false;
    for (auto& v : out) v = binary::read_le<float>(in_);
    return true;
  }

 private:
  std::ifstream in_;
  binary::ContainerHeader header_;
};

struct FeatureFile {
  double frame_step = 0.0;
  Matrix<float> frames;
};

inline void write_features(const std::filesystem::path& path,
                           const Matrix<float>& frames, double frame_step) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot create " + path.string());
  binary::write_header(
      out, kFeatureMagic,
      {1, static_cast<std::uint32_t>(frames.cols()), frame_step});
  for (float v : frames.data()) binary::write_le(out, v);
}

inline FeatureFile read_features(const std::filesystem::path& path) {
  FeatureFileSource source(path);
  FeatureFile file{source.frame_step(), {}};
  std::vector<float> row(source.dim());
  while (source.next_frame(row)) file.frames.append_row(row);
  if (file.frames.empty()) file.frames = Matrix<float>(0, source.dim());
  return file;
}

/// Per-frame representations of one buffer window; row 0 is the oldest frame.
struct FrameFeatures {
  Matrix<float> frames;
  Seconds start_time = 0.0;
};

/// One position of the rolling buffer.
struct BufferWindow {
  std::size_t window_index = 0;
  Seconds start_time = 0.0;
  Seconds end_time = 0.0;
  FrameFeatures features;
  /// Leading zero-filled rows (warm-up).
  FrameIndex padded_frames = 0;
  /// Absolute frame index of row 0; negative while padded.
  FrameIndex first_frame = 0;

  FrameIndex end_frame() const {
    return first_frame + static_cast<FrameIndex>(features.frames.rows());
  }
};

/// Cuts a frame stream into rolling-buffer windows stepped by the hop.
///
/// Window i ends at `first_end + i * hop` and holds the F frames immediately
/// before that time. Without warm-up padding the first window ends once a
/// full buffer has arrived; with padding it ends after one hop and missing
/// history is zero-filled. A trailing stretch shorter than one hop produces no
/// window.
class WindowIterator {
 public:
  WindowIterator(FrameSource& source, FrameGrid grid, bool pad_warmup)
      : source_(&source), grid_(grid), pad_warmup_(pad_warmup) {
    grid_.validate();
    frames_per_window_ = grid_.frames_per_window();
    scratch_.resize(source.dim());
  }

  std::optional<BufferWindow> next() {
    if (done_) return std::nullopt;
    const Seconds first_end = pad_warmup_ ? grid_.hop : grid_.window_duration;
    const Seconds end_time =
        first_end + static_cast<double>(index_) * grid_.hop;
    const FrameIndex end_frame = time_to_frame(grid_, end_time);
    while (frames_read_ < end_frame) {
      if (!source_->next_frame(scratch_)) {
        done_ = true;
        return std::nullopt;
      }
      history_.push_back(scratch_);
      ++frames_read_;
      if (static_cast<FrameIndex>(history_.size()) > frames_per_window_)
        history_.pop_front();
    }

    BufferWindow w;
    w.window_index = index_++;
    w.end_time = end_time;
    w.start_time = end_time - grid_.window_duration;
    w.first_frame = end_frame - frames_per_window_;
    w.padded_frames = std::max<FrameIndex>(0, -w.first_frame);
    const std::size_t dim = source_->dim();
    w.features.start_time = w.start_time;
    w.features.frames =
        Matrix<float>(static_cast<std::size_t>(frames_per_window_), dim, 0.0f);
    // history_ holds frames [end_frame - history_.size(), end_frame).
    const std::size_t offset =
        static_cast<std::size_t>(frames_per_window_) - history_.size();
    for (std::size_t i = 0; i < history_.size(); ++i) {
      auto dst = w.features.frames.row(offset + i);
      std::copy(history_[i].begin(), history_[i].end(), dst.begin());
    }
    return w;
  }

  const FrameGrid& grid() const { return grid_; }

 private:
  FrameSource* source_;
  FrameGrid grid_;
  bool pad_warmup_;
  FrameIndex frames_per_window_ = 0;
  FrameIndex frames_read_ = 0;
  std::size_t index_ = 0;
  bool done_ = false;
  std::deque<std::vector<float>> history_;
  std::vector<float> scratch_;
};

inline WindowIterator open_stream(FrameSource& source, const FrameGrid& grid,
                                  bool pad_warmup) {
  return WindowIterator(source, grid, pad_warmup);
}

inline std::optional<BufferWindow> next_window(WindowIterator& it) {
  return it.next();
}

}  // namespace sdiar
