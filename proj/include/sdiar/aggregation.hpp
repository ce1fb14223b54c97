#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sdiar/errors.hpp"
#include "sdiar/matrix.hpp"
#include "sdiar/segmentation.hpp"
#include "sdiar/timebase.hpp"

namespace sdiar {

/// Globally labelled activity for the rightmost `latency` seconds of a window.
struct GlobalSlice {
  std::size_t window_index = 0;
  Seconds end_time = 0.0;
  /// Absolute frame range [begin, end).
  FrameIndex begin = 0;
  FrameIndex end = 0;
  /// Global speaker index of each column of `probs`.
  std::vector<std::size_t> speakers;
  Matrix<float> probs;

  FrameIndex frames() const { return end - begin; }
  bool empty() const { return speakers.empty(); }
};

/// First absolute frame of the output region of a window ending at `end_time`.
inline FrameIndex output_region_begin(const FrameGrid& grid, Seconds end_time,
                                      Seconds latency) {
  const FrameIndex begin = static_cast<FrameIndex>(std::floor(
      (end_time - latency) / grid.frame_step + detail::kFrameSnap));
  return std::max<FrameIndex>(begin, 0);
}

/// Keeps labelled channels only and trims to the output region
/// [end_time - latency, end_time) on the frame grid.
inline GlobalSlice relabel(const SegmentationMatrix& s,
                           const std::map<std::size_t, std::size_t>& label_map,
                           const FrameGrid& grid, Seconds latency) {
  GlobalSlice out;
  out.window_index = s.window_index;
  out.end_time = s.end_time;
  out.end = s.first_frame + static_cast<FrameIndex>(s.frames());
  out.begin = std::max(output_region_begin(grid, s.end_time, latency),
                       std::max<FrameIndex>(s.first_frame, 0));
  out.begin = std::min(out.begin, out.end);
  for (const auto& [channel, global] : label_map) out.speakers.push_back(global);
  out.probs = Matrix<float>(static_cast<std::size_t>(out.frames()),
                            out.speakers.size(), 0.0f);
  std::size_t col = 0;
  for (const auto& [channel, global] : label_map) {
    for (FrameIndex f = out.begin; f < out.end; ++f)
      out.probs(static_cast<std::size_t>(f - out.begin), col) =
          s.probs(static_cast<std::size_t>(f - s.first_frame), channel);
    ++col;
  }
  return out;
}

/// Averaged activity of one output frame, indexed by global speaker.
struct FinalizedFrame {
  FrameIndex frame = 0;
  std::vector<double> probs;
  int contributions = 0;
};

/// Averages overlapping window slices frame by frame.
///
/// A frame is finalised as soon as no later window's output region can reach
/// it. A window that does not mention a speaker counts as probability zero for
/// that speaker on the frames it covers.
class FrameAccumulator {
 public:
  FrameAccumulator(FrameGrid grid, Seconds latency)
      : grid_(grid), latency_(latency) {}

  std::vector<FinalizedFrame> add(const GlobalSlice& slice) {
    if (last_window_ && slice.window_index <= *last_window_)
      throw OrderViolation("slice for window " +
                           std::to_string(slice.window_index) +
                           " arrived after window " +
                           std::to_string(*last_window_));
    if (!base_) base_ = slice.begin;
    if (slice.begin < *base_)
      throw OrderViolation("slice reaches into finalized frames");
    last_window_ = slice.window_index;

    const auto needed = static_cast<std::size_t>(slice.end - *base_);
    if (pending_.size() < needed) pending_.resize(needed);
    for (FrameIndex f = slice.begin; f < slice.end; ++f) {
      auto& p = pending_[static_cast<std::size_t>(f - *base_)];
      ++p.contributions;
      for (std::size_t c = 0; c < slice.speakers.size(); ++c) {
        const std::size_t g = slice.speakers[c];
        if (p.sums.size() <= g) p.sums.resize(g + 1, 0.0);
        p.sums[g] += slice.probs(static_cast<std::size_t>(f - slice.begin), c);
      }
    }
    // The next window's output region starts here.
    const FrameIndex horizon =
        output_region_begin(grid_, slice.end_time + grid_.hop, latency_);
    return release(horizon);
  }

  /// Finalises everything still pending (end of stream).
  std::vector<FinalizedFrame> flush() {
    if (!base_) return {};
    return release(*base_ + static_cast<FrameIndex>(pending_.size()));
  }

  /// First frame not yet finalised.
  std::optional<FrameIndex> high_water() const { return base_; }

 private:
  struct Pending {
    std::vector<double> sums;
    int contributions = 0;
  };

  std::vector<FinalizedFrame> release(FrameIndex horizon) {
    std::vector<FinalizedFrame> out;
    while (!pending_.empty() && *base_ < horizon) {
      Pending p = std::move(pending_.front());
      pending_.pop_front();
      if (p.contributions > 0) {
        FinalizedFrame f{*base_, std::move(p.sums), p.contributions};
        for (double& v : f.probs) v /= p.contributions;
        out.push_back(std::move(f));
      }
      ++*base_;
    }
    return out;
  }

  FrameGrid grid_;
  Seconds latency_;
  std::optional<FrameIndex> base_;
  std::optional<std::size_t> last_window_;
  std::deque<Pending> pending_;
};

inline std::vector<FinalizedFrame> aggregate(FrameAccumulator& acc,
                                             const GlobalSlice& slice) {
  return acc.add(slice);
}

/// Turns finalised frames into closed segments as soon as each run ends.
/// Speaker k is active on a frame iff its probability exceeds tau.
class Binarizer {
 public:
  struct Closed {
    std::size_t speaker;
    Segment segment;
  };

  Binarizer(FrameGrid grid, double tau_active)
      : grid_(grid), tau_(tau_active) {}

  std::vector<Closed> push(const FinalizedFrame& frame) {
    std::vector<Closed> out;
    if (last_frame_ && frame.frame != *last_frame_ + 1) close_all(out);
    last_frame_ = frame.frame;
    if (open_.size() < frame.probs.size()) open_.resize(frame.probs.size());
    for (std::size_t g = 0; g < open_.size(); ++g) {
      const double p = g < frame.probs.size() ? frame.probs[g] : 0.0;
      if (p > tau_) {
        if (!open_[g]) open_[g] = frame.frame;
      } else if (open_[g]) {
        out.push_back(close(g, frame.frame));
      }
    }
    return out;
  }

  std::vector<Closed> finish() {
    std::vector<Closed> out;
    close_all(out);
    return out;
  }

 private:
  Closed close(std::size_t g, FrameIndex end) {
    const FrameIndex start = *open_[g];
    open_[g].reset();
    return {g,
            {frame_to_time(grid_, start),
             static_cast<double>(end - start) * grid_.frame_step}};
  }

  void close_all(std::vector<Closed>& out) {
    if (!last_frame_) return;
    for (std::size_t g = 0; g < open_.size(); ++g)
      if (open_[g]) out.push_back(close(g, *last_frame_ + 1));
  }

  FrameGrid grid_;
  double tau_;
  std::optional<FrameIndex> last_frame_;
  std::vector<std::optional<FrameIndex>> open_;
};

/// Batch binarisation of an ordered frame sequence.
inline Annotation binarize(const std::vector<FinalizedFrame>& frames,
                           double tau_active, const FrameGrid& grid,
                           const std::vector<std::string>& labels,
                           std::string uri = {}) {
  Binarizer b(grid, tau_active);
  Annotation a{std::move(uri), {}};
  auto emit = [&](const std::vector<Binarizer::Closed>& closed) {
    for (const auto& c : closed)
      a.add(c.segment.onset, c.segment.duration, labels.at(c.speaker));
  };
  for (const auto& f : frames) emit(b.push(f));
  emit(b.finish());
  a.sort();
  return a;
}

}  // namespace sdiar
