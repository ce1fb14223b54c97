#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "sdiar/assignment.hpp"
#include "sdiar/errors.hpp"
#include "sdiar/matrix.hpp"
#include "sdiar/timebase.hpp"

namespace sdiar {

/// Error durations in seconds. No collar; overlapped speech is scored.
struct DerBreakdown {
  Seconds false_alarm = 0.0;
  Seconds missed = 0.0;
  Seconds confusion = 0.0;
  Seconds total_reference = 0.0;

  Seconds errors() const { return false_alarm + missed + confusion; }

  /// Ratio of errors to reference speech; 0 when both are zero and +inf when
  /// there are errors but no reference speech.
  double der() const {
    if (total_reference > 0.0) return errors() / total_reference;
    return errors() > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  }
  double false_alarm_rate() const { return rate(false_alarm); }
  double missed_rate() const { return rate(missed); }
  double confusion_rate() const { return rate(confusion); }

  DerBreakdown& operator+=(const DerBreakdown& o) {
    false_alarm += o.false_alarm;
    missed += o.missed;
    confusion += o.confusion;
    total_reference += o.total_reference;
    return *this;
  }

 private:
  double rate(Seconds v) const {
    return total_reference > 0.0 ? v / total_reference : 0.0;
  }
};

/// Hypothesis label -> reference label.
using LabelMapping = std::map<std::string, std::string>;

namespace detail {

inline Seconds intersection_length(const std::vector<Interval>& a,
                                   const std::vector<Interval>& b) {
  Seconds total = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const Seconds lo = std::max(a[i].first, b[j].first);
    const Seconds hi = std::min(a[i].second, b[j].second);
    if (hi > lo) total += hi - lo;
    if (a[i].second < b[j].second)
      ++i;
    else
      ++j;
  }
  return total;
}

}  // namespace detail

/// One-to-one mapping maximising the total time each mapped pair speaks
/// together. Pairs that never co-occur are left unmapped.
inline LabelMapping optimal_label_mapping(const Annotation& ref,
                                          const Annotation& hyp) {
  const auto ref_tl = speaker_timelines(ref);
  const auto hyp_tl = speaker_timelines(hyp);
  LabelMapping out;
  if (ref_tl.empty() || hyp_tl.empty()) return out;

  std::vector<const std::string*> hyp_labels, ref_labels;
  for (const auto& [label, tl] : hyp_tl) hyp_labels.push_back(&label);
  for (const auto& [label, tl] : ref_tl) ref_labels.push_back(&label);
  Matrix<double> overlap(hyp_labels.size(), ref_labels.size());
  Matrix<double> cost(hyp_labels.size(), ref_labels.size());
  for (std::size_t h = 0; h < hyp_labels.size(); ++h)
    for (std::size_t r = 0; r < ref_labels.size(); ++r) {
      overlap(h, r) = detail::intersection_length(hyp_tl.at(*hyp_labels[h]),
                                                  ref_tl.at(*ref_labels[r]));
      cost(h, r) = -overlap(h, r);
    }
  const Mapping m = constrained_assign(cost);
  for (std::size_t h = 0; h < m.size(); ++h)
    if (m[h] != kNewSpeaker && overlap(h, m[h]) > 0.0)
      out[*hyp_labels[h]] = *ref_labels[m[h]];
  return out;
}

namespace detail {

inline void check_uri(const Annotation& ref, const Annotation& hyp) {
  if (!ref.uri.empty() && !hyp.uri.empty() && ref.uri != hyp.uri)
    throw UriMismatch("reference uri '" + ref.uri + "' vs hypothesis uri '" +
                      hyp.uri + "'");
}

// Scores each elementary region between consecutive boundaries and hands the
// region's contribution to `sink(region_start, breakdown)`.
template <typename Sink>
void score_regions(const Annotation& ref, const Annotation& hyp,
                   const LabelMapping& mapping,
                   const std::vector<Seconds>& extra_cuts, Sink&& sink) {
  const auto ref_tl = speaker_timelines(ref);
  const auto hyp_tl = speaker_timelines(hyp);
  std::vector<Seconds> cuts(extra_cuts);
  for (const auto* tls : {&ref_tl, &hyp_tl})
    for (const auto& [label, tl] : *tls)
      for (const auto& [lo, hi] : tl) {
        cuts.push_back(lo);
        cuts.push_back(hi);
      }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::vector<std::string> active_ref;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const Seconds a = cuts[i], b = cuts[i + 1];
    const Seconds mid = 0.5 * (a + b);
    const Seconds len = b - a;
    active_ref.clear();
    for (const auto& [label, tl] : ref_tl)
      if (timeline_contains(tl, mid)) active_ref.push_back(label);
    std::size_t h_count = 0, matched = 0;
    for (const auto& [label, tl] : hyp_tl) {
      if (!timeline_contains(tl, mid)) continue;
      ++h_count;
      auto it = mapping.find(label);
      if (it != mapping.end() &&
          std::find(active_ref.begin(), active_ref.end(), it->second) !=
              active_ref.end())
        ++matched;
    }
    const std::size_t r_count = active_ref.size();
    if (r_count == 0 && h_count == 0) continue;
    DerBreakdown d;
    d.total_reference = len * static_cast<double>(r_count);
    if (r_count > h_count)
      d.missed = len * static_cast<double>(r_count - h_count);
    else
      d.false_alarm = len * static_cast<double>(h_count - r_count);
    d.confusion =
        len * static_cast<double>(std::min(r_count, h_count) - matched);
    sink(a, d);
  }
}

}  // namespace detail

/// Scores `hyp` against `ref` under a fixed label mapping.
inline DerBreakdown der_with_mapping(const Annotation& ref,
                                     const Annotation& hyp,
                                     const LabelMapping& mapping) {
  detail::check_uri(ref, hyp);
  DerBreakdown total;
  detail::score_regions(ref, hyp, mapping, {},
                        [&](Seconds, const DerBreakdown& d) { total += d; });
  return total;
}

/// Diarization error rate under the optimal label mapping.
inline DerBreakdown der(const Annotation& ref, const Annotation& hyp) {
  detail::check_uri(ref, hyp);
  return der_with_mapping(ref, hyp, optimal_label_mapping(ref, hyp));
}

struct LocalDer {
  Seconds start = 0.0;
  DerBreakdown breakdown;
};

/// Error breakdown per [i * bin, (i + 1) * bin) using one mapping computed on
/// the whole recording.
inline std::vector<LocalDer> local_der_curve(const Annotation& ref,
                                             const Annotation& hyp,
                                             Seconds bin) {
  if (!(bin > 0.0)) throw InvalidArgument("bin must be positive");
  detail::check_uri(ref, hyp);
  Seconds last = 0.0;
  for (const auto* a : {&ref, &hyp})
    for (const auto& s : a->segments) last = std::max(last, s.segment.end());
  const auto bins = static_cast<std::size_t>(std::ceil(last / bin - detail::kFrameSnap));
  std::vector<LocalDer> out(bins);
  std::vector<Seconds> cuts;
  for (std::size_t i = 0; i < bins; ++i) {
    out[i].start = static_cast<double>(i) * bin;
    cuts.push_back(out[i].start);
  }
  const auto mapping = optimal_label_mapping(ref, hyp);
  detail::score_regions(ref, hyp, mapping, cuts,
                        [&](Seconds start, const DerBreakdown& d) {
                          auto it = std::upper_bound(
                              out.begin(), out.end(), start,
                              [](Seconds t, const LocalDer& b) { return t < b.start; });
                          if (it != out.begin()) --it;
                          it->breakdown += d;
                        });
  return out;
}

}  // namespace sdiar
