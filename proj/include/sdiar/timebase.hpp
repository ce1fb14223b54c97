#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sdiar/errors.hpp"

namespace sdiar {

using Seconds = double;
using FrameIndex = std::int64_t;

namespace detail {
// Absorbs representation error in quotients such as 4.992 / 0.016.
inline constexpr double kFrameSnap = 1e-9;

inline FrameIndex floor_frames(double t, double step) {
  return static_cast<FrameIndex>(std::floor(t / step + kFrameSnap));
}
}  // namespace detail

/// Frame geometry of a run: output frame rate, rolling-buffer length and hop.
struct FrameGrid {
  Seconds frame_step = 0.016;
  Seconds window_duration = 5.0;
  Seconds hop = 0.5;

  void validate() const {
    if (!(frame_step > 0.0) || !(window_duration > 0.0) || !(hop > 0.0))
      throw InvalidArgument("frame grid durations must be positive");
    if (hop > window_duration)
      throw InvalidArgument("hop must not exceed the window duration");
    if (frames_per_window() < 1)
      throw InvalidArgument("window shorter than one frame");
  }

  /// F. The last partial frame of the window is dropped.
  FrameIndex frames_per_window() const {
    return detail::floor_frames(window_duration, frame_step);
  }

  bool operator==(const FrameGrid&) const = default;
};

inline FrameIndex time_to_frame(const FrameGrid& grid, Seconds t) {
  if (!(t >= 0.0)) throw InvalidArgument("time must be non-negative");
  return detail::floor_frames(t, grid.frame_step);
}

inline Seconds frame_to_time(const FrameGrid& grid, FrameIndex frame) {
  return static_cast<double>(frame) * grid.frame_step;
}

struct Segment {
  Seconds onset = 0.0;
  Seconds duration = 0.0;

  Seconds end() const { return onset + duration; }
  bool operator==(const Segment&) const = default;
};

struct LabeledSegment {
  Segment segment;
  std::string label;

  bool operator==(const LabeledSegment&) const = default;
};

/// Diarization output or reference: who spoke when, for one recording.
struct Annotation {
  std::string uri;
  std::vector<LabeledSegment> segments;

  void add(Seconds onset, Seconds duration, std::string label) {
    if (!(duration > 0.0) || !std::isfinite(onset + duration) || onset < 0.0)
      throw InvalidArgument("segment must have onset >= 0 and duration > 0");
    if (label.empty()) throw InvalidArgument("segment label must not be empty");
    segments.push_back({{onset, duration}, std::move(label)});
  }

  /// Stable sort by onset, then label.
  void sort() {
    std::stable_sort(segments.begin(), segments.end(),
                     [](const LabeledSegment& a, const LabeledSegment& b) {
                       if (a.segment.onset != b.segment.onset)
                         return a.segment.onset < b.segment.onset;
                       return a.label < b.label;
                     });
  }

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (const auto& s : segments) out.push_back(s.label);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  bool empty() const { return segments.empty(); }
  bool operator==(const Annotation&) const = default;
};

using Interval = std::pair<Seconds, Seconds>;

/// Per-label union of intervals, each list sorted and disjoint.
inline std::map<std::string, std::vector<Interval>> speaker_timelines(
    const Annotation& a) {
  std::map<std::string, std::vector<Interval>> raw;
  for (const auto& s : a.segments)
    raw[s.label].emplace_back(s.segment.onset, s.segment.end());
  for (auto& [label, intervals] : raw) {
    std::sort(intervals.begin(), intervals.end());
    std::vector<Interval> merged;
    for (const auto& iv : intervals) {
      if (!merged.empty() && iv.first <= merged.back().second)
        merged.back().second = std::max(merged.back().second, iv.second);
      else
        merged.push_back(iv);
    }
    intervals = std::move(merged);
  }
  return raw;
}

/// Sum over speakers of the measure of each speaker's own union of segments.
inline Seconds annotation_total_speech(const Annotation& a) {
  Seconds total = 0.0;
  for (const auto& [label, intervals] : speaker_timelines(a))
    for (const auto& [lo, hi] : intervals) total += hi - lo;
  return total;
}

/// True if `t` falls in one of the speaker's half-open intervals.
inline bool timeline_contains(const std::vector<Interval>& timeline, Seconds t) {
  auto it = std::upper_bound(
      timeline.begin(), timeline.end(), t,
      [](Seconds v, const Interval& iv) { return v < iv.first; });
  if (it == timeline.begin()) return false;
  --it;
  return t >= it->first && t < it->second;
}

}  // namespace sdiar
