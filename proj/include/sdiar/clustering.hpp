#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sdiar/assignment.hpp"
#include "sdiar/binary_io.hpp"
#include "sdiar/errors.hpp"
#include "sdiar/matrix.hpp"
#include "sdiar/pooling.hpp"
#include "sdiar/timebase.hpp"

namespace sdiar {

/// 1 - cos(c, e), in [0, 2].
inline double cosine_distance(std::span<const double> c,
                              std::span<const double> e) {
  if (c.size() != e.size())
    throw InvalidArgument("cosine distance on vectors of different sizes");
  double dot = 0.0, cc = 0.0, ee = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    dot += c[i] * e[i];
    cc += c[i] * c[i];
    ee += e[i] * e[i];
  }
  if (!(cc > 0.0) || !(ee > 0.0))
    throw DegenerateVector("cosine distance on a zero-norm vector");
  const double cosine = dot / (std::sqrt(cc) * std::sqrt(ee));
  return std::clamp(1.0 - cosine, 0.0, 2.0);
}

/// Global speakers. Row k of `sums` is the running sum of every embedding
/// used to build or refine speaker k; rows are never removed.
class CentroidSet {
 public:
  CentroidSet() = default;
  explicit CentroidSet(std::size_t dim) : sums_(0, dim) {}

  std::size_t size() const { return counts_.size(); }
  std::size_t dim() const { return sums_.cols(); }
  bool empty() const { return counts_.empty(); }

  std::span<const double> centroid(std::size_t k) const { return sums_.row(k); }
  std::size_t count(std::size_t k) const { return counts_[k]; }
  const std::string& label(std::size_t k) const { return labels_[k]; }
  const std::vector<std::string>& labels() const { return labels_; }
  const Matrix<double>& sums() const { return sums_; }
  const std::vector<std::size_t>& counts() const { return counts_; }

  /// Appends a new global speaker named speaker_<K>; returns its index.
  std::size_t append(std::span<const double> embedding) {
    if (!empty() && embedding.size() != dim())
      throw InvalidArgument("embedding dimension differs from centroids");
    sums_.append_row(embedding);
    counts_.push_back(1);
    labels_.push_back("speaker_" + std::to_string(counts_.size() - 1));
    return counts_.size() - 1;
  }

  void accumulate(std::size_t k, std::span<const double> embedding) {
    auto row = sums_.row(k);
    for (std::size_t d = 0; d < row.size(); ++d) row[d] += embedding[d];
    ++counts_[k];
  }

  /// Restores a set from checkpointed state.
  static CentroidSet restore(Matrix<double> sums,
                             std::vector<std::size_t> counts,
                             std::vector<std::string> labels) {
    if (sums.rows() != counts.size() || counts.size() != labels.size())
      throw FormatError("inconsistent centroid checkpoint");
    CentroidSet c;
    c.sums_ = std::move(sums);
    c.counts_ = std::move(counts);
    c.labels_ = std::move(labels);
    return c;
  }

  bool operator==(const CentroidSet&) const = default;

 private:
  Matrix<double> sums_;
  std::vector<std::size_t> counts_;
  std::vector<std::string> labels_;
};

/// Local x centroid cosine distances.
inline Matrix<double> distance_matrix(const CentroidSet& centroids,
                                      const std::vector<SpeakerEmbedding>& locals) {
  Matrix<double> out(locals.size(), centroids.size());
  for (std::size_t k = 0; k < locals.size(); ++k)
    for (std::size_t j = 0; j < centroids.size(); ++j)
      out(k, j) = cosine_distance(centroids.centroid(j), locals[k].vector);
  return out;
}

struct AssignmentResult {
  /// Per local embedding: centroid index, or kNewSpeaker.
  Mapping mapping;
  /// Distance to the assigned centroid; +inf for kNewSpeaker.
  std::vector<double> distances;
};

inline AssignmentResult make_assignment(const Matrix<double>& distances,
                                        Mapping mapping) {
  AssignmentResult r{std::move(mapping), {}};
  r.distances.resize(r.mapping.size(), std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < r.mapping.size(); ++k)
    if (r.mapping[k] != kNewSpeaker) r.distances[k] = distances(k, r.mapping[k]);
  return r;
}

struct StepOutcome {
  /// Mapping after new-speaker detection; every entry is a centroid index.
  AssignmentResult assignment;
  /// Local channel -> global centroid index.
  std::map<std::size_t, std::size_t> labels;
  std::vector<std::size_t> new_speakers;
  std::vector<std::size_t> updated;
};

/// One incremental clustering step.
///
/// Local embeddings are matched to centroids under the cannot-link constraint.
/// A match farther than `delta_new` is a new speaker and gets its own
/// centroid, as do locals left unmatched because they outnumber the
/// centroids. A returning speaker refines its centroid only when its activity
/// exceeds `rho_update` seconds.
inline StepOutcome step_update(CentroidSet& centroids,
                               const std::vector<SpeakerEmbedding>& locals,
                               double delta_new, Seconds rho_update,
                               const FrameGrid& grid) {
  const Matrix<double> distances = distance_matrix(centroids, locals);
  StepOutcome out;
  out.assignment = make_assignment(distances, constrained_assign(distances));

  auto& mapping = out.assignment.mapping;
  for (std::size_t k = 0; k < locals.size(); ++k) {
    if (mapping[k] != kNewSpeaker && out.assignment.distances[k] > delta_new)
      mapping[k] = kNewSpeaker;
  }
  for (std::size_t k = 0; k < locals.size(); ++k) {
    if (mapping[k] == kNewSpeaker) continue;
    if (locals[k].activity_seconds(grid) > rho_update) {
      centroids.accumulate(mapping[k], locals[k].vector);
      out.updated.push_back(mapping[k]);
    }
  }
  for (std::size_t k = 0; k < locals.size(); ++k) {
    if (mapping[k] != kNewSpeaker) continue;
    mapping[k] = centroids.append(locals[k].vector);
    out.assignment.distances[k] = 0.0;
    out.new_speakers.push_back(mapping[k]);
  }
  for (std::size_t k = 0; k < locals.size(); ++k)
    out.labels[locals[k].channel] = mapping[k];
  return out;
}

inline constexpr std::string_view kCheckpointMagic = "SDCK";

/// SDCK layout: magic, u32 K, u32 D, K*D f64 sums, K u32 counts, then K
/// labels as (u32 byte length, bytes).
inline void write_centroids(const std::filesystem::path& path,
                            const CentroidSet& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot create " + path.string());
  binary::write_magic(out, kCheckpointMagic);
  binary::write_le(out, static_cast<std::uint32_t>(c.size()));
  binary::write_le(out, static_cast<std::uint32_t>(c.dim()));
  for (double v : c.sums().data()) binary::write_le(out, v);
  for (auto n : c.counts()) binary::write_le(out, static_cast<std::uint32_t>(n));
  for (const auto& label : c.labels()) {
    binary::write_le(out, static_cast<std::uint32_t>(label.size()));
    out.write(label.data(), static_cast<std::streamsize>(label.size()));
  }
}

inline CentroidSet read_centroids(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  binary::expect_magic(in, kCheckpointMagic);
  const auto k = binary::read_le<std::uint32_t>(in);
  const auto d = binary::read_le<std::uint32_t>(in);
  Matrix<double> sums(k, d);
  for (auto& v : sums.data()) v = binary::read_le<double>(in);
  std::vector<std::size_t> counts(k);
  for (auto& n : counts) n = binary::read_le<std::uint32_t>(in);
  std::vector<std::string> labels(k);
  for (auto& label : labels) {
    const auto len = binary::read_le<std::uint32_t>(in);
    label.resize(len);
    in.read(label.data(), len);
    if (in.gcount() != static_cast<std::streamsize>(len))
      throw FormatError("truncated centroid label");
  }
  return CentroidSet::restore(std::move(sums), std::move(counts),
                              std::move(labels));
}

}  // namespace sdiar
