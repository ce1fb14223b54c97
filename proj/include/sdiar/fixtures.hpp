#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "sdiar/errors.hpp"
#include "sdiar/pooling.hpp"
#include "sdiar/segmentation.hpp"
#include "sdiar/timebase.hpp"

namespace sdiar {

/// Parameters of a synthetic conversation.
struct ConversationSpec {
  std::size_t speakers = 3;
  Seconds duration = 300.0;
  /// Target fraction of speech time with two or more speakers.
  double overlap = 0.1;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  std::size_t feature_dim = 32;
  std::string uri = "fixture";
  Seconds min_turn = 1.0;
  Seconds max_turn = 4.0;
  Seconds max_pause = 0.6;
  /// No span of `capacity_window` seconds holds more than this many speakers.
  std::size_t capacity = 4;
  Seconds capacity_window = 5.0;
};

/// Reference annotation plus the oracle signatures that voice it.
struct Conversation {
  ConversationSpec spec;
  Annotation reference;
  std::map<std::string, std::vector<double>> signatures;

  OracleFeatures features(const FrameGrid& grid) const {
    return OracleFeatures(reference, signatures, grid, spec.noise_sigma,
                          mix_seed(spec.seed, 0xFEA7ull));
  }

  FrameIndex frame_count(const FrameGrid& grid) const {
    return time_to_frame(grid, spec.duration);
  }

  OracleFeatureSource feature_source(const FrameGrid& grid) const {
    return OracleFeatureSource(features(grid), frame_count(grid));
  }
};

inline std::string speaker_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "spk%02zu", i);
  return buf;
}

namespace detail {

inline Seconds round_ms(Seconds t) { return std::round(t * 1000.0) / 1000.0; }

// Seconds of speech and of overlapped speech in an annotation.
inline std::pair<Seconds, Seconds> speech_and_overlap(const Annotation& a) {
  std::vector<std::pair<Seconds, int>> events;
  for (const auto& s : a.segments) {
    events.emplace_back(s.segment.onset, +1);
    events.emplace_back(s.segment.end(), -1);
  }
  std::sort(events.begin(), events.end());
  Seconds speech = 0.0, overlap = 0.0, prev = 0.0;
  int depth = 0;
  for (const auto& [t, delta] : events) {
    if (depth >= 1) speech += t - prev;
    if (depth >= 2) overlap += t - prev;
    depth += delta;
    prev = t;
  }
  return {speech, overlap};
}

}  // namespace detail

/// Random turn-taking conversation. Speakers are introduced in order, turns
/// are separated by short pauses or overlap the previous turn, and overlap is
/// steered towards `spec.overlap` of the speech time. Boundaries fall on
/// whole milliseconds.
inline Conversation generate_conversation(const ConversationSpec& spec) {
  if (spec.speakers == 0) throw InvalidArgument("need at least one speaker");
  if (spec.capacity < 2 && spec.speakers > 1 && spec.overlap > 0.0)
    throw InvalidArgument("overlap needs capacity >= 2");
  if (!(spec.duration > 0.0)) throw InvalidArgument("duration must be positive");

  std::mt19937_64 rng(mix_seed(spec.seed, 0xD1A1ull));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  Conversation conv;
  conv.spec = spec;
  conv.reference.uri = spec.uri;
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < spec.speakers; ++i) labels.push_back(speaker_name(i));

  // Speakers already present near [lo, hi).
  auto speakers_near = [&](Seconds lo, Seconds hi) {
    std::set<std::string> out;
    for (const auto& s : conv.reference.segments)
      if (s.segment.end() > lo && s.segment.onset < hi) out.insert(s.label);
    return out;
  };
  auto pick_speaker = [&](Seconds onset, Seconds end, const std::string& avoid,
                          std::size_t introduced) -> std::string {
    std::vector<std::string> pool;
    const std::size_t limit = std::min(spec.speakers, introduced + 1);
    for (std::size_t i = 0; i < limit; ++i)
      if (labels[i] != avoid) pool.push_back(labels[i]);
    if (pool.empty()) return avoid;
    // Prefer the next unseen speaker so everyone is introduced early.
    if (introduced < spec.speakers && labels[introduced] != avoid)
      pool = {labels[introduced]};
    const auto near = speakers_near(onset - spec.capacity_window,
                                    end + spec.capacity_window);
    std::vector<std::string> allowed;
    for (const auto& p : pool)
      if (near.contains(p) || near.size() < spec.capacity) allowed.push_back(p);
    if (allowed.empty()) {
      for (const auto& l : labels)
        if (l != avoid && near.contains(l)) allowed.push_back(l);
    }
    if (allowed.empty()) return {};
    return allowed[static_cast<std::size_t>(unit(rng) * allowed.size()) %
                   allowed.size()];
  };

  std::size_t introduced = 0;
  Seconds t = detail::round_ms(uniform(0.0, spec.max_pause));
  Seconds prev_onset = 0.0, prev_end = 0.0;
  std::string current;
  Seconds speech = 0.0, overlapped = 0.0;
  while (t < spec.duration - spec.min_turn) {
    const Seconds length = detail::round_ms(uniform(spec.min_turn, spec.max_turn));
    Seconds onset = t;
    const bool want_overlap = !current.empty() && spec.speakers > 1 &&
                              overlapped < spec.overlap * std::max(speech, 1.0);
    if (want_overlap) {
      const Seconds max_depth =
          std::min(1.5, 0.6 * std::min(prev_end - prev_onset, length));
      if (max_depth > 0.2)
        onset = detail::round_ms(prev_end - uniform(0.2, max_depth));
    }
    std::string who = pick_speaker(onset, onset + length, current, introduced);
    if (who.empty() && onset < t) {
      // No room for another voice here; take a plain pause instead.
      onset = t;
      who = pick_speaker(onset, onset + length, current, introduced);
    }
    if (who.empty()) who = current;
    const Seconds end = std::min(detail::round_ms(onset + length), spec.duration);
    if (end - onset < 0.1) break;
    if (introduced < spec.speakers && who == labels[introduced]) ++introduced;
    conv.reference.add(onset, end - onset, who);
    std::tie(speech, overlapped) = detail::speech_and_overlap(conv.reference);
    current = who;
    prev_onset = onset;
    prev_end = std::max(prev_end, end);
    t = detail::round_ms(prev_end + uniform(0.05, spec.max_pause));
  }
  conv.reference.sort();
  conv.signatures = random_signatures(labels, spec.feature_dim,
                                      mix_seed(spec.seed, 0x51Eull));
  return conv;
}

/// Fraction of speech time covered by two or more speakers.
inline double overlap_ratio(const Annotation& a) {
  const auto [speech, overlap] = detail::speech_and_overlap(a);
  return speech > 0.0 ? overlap / speech : 0.0;
}

}  // namespace sdiar
