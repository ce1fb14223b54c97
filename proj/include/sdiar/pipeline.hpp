#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "sdiar/aggregation.hpp"
#include "sdiar/clustering.hpp"
#include "sdiar/config.hpp"
#include "sdiar/errors.hpp"
#include "sdiar/metrics.hpp"
#include "sdiar/pooling.hpp"
#include "sdiar/segmentation.hpp"
#include "sdiar/stream.hpp"
#include "sdiar/timebase.hpp"

namespace sdiar {

struct StepReport {
  std::size_t window_index = 0;
  std::size_t k_buffer = 0;
  std::size_t new_speakers = 0;
  /// Global speakers after the step.
  std::size_t centroids = 0;
  /// Active locals that could not be embedded and were discarded.
  std::size_t dropped_locals = 0;
  std::size_t frames_finalized = 0;
  double step_seconds = 0.0;
};

/// A segment that has closed and will never change.
struct EmittedSegment {
  std::string label;
  Segment segment;
};

/// Online diarization of one stream: feed windows in order, then finish().
class OnlineDiarizer {
 public:
  using SegmentCallback = std::function<void(const EmittedSegment&)>;
  using WarningCallback = std::function<void(const std::string&)>;

  OnlineDiarizer(PipelineConfig config, SegmentationProvider& segmentation,
                 EmbeddingProvider& embeddings, std::string uri = "stream")
      : config_(std::move(config)),
        segmentation_(&segmentation),
        embeddings_(&embeddings),
        accumulator_(config_.grid, config_.latency),
        binarizer_(config_.grid, config_.tau_active) {
    config_.validate();
    if (segmentation.k_max() != config_.k_max)
      throw InvalidArgument("segmentation provider k_max differs from config");
    output_.uri = std::move(uri);
  }

  void on_segment(SegmentCallback cb) { on_segment_ = std::move(cb); }
  void on_warning(WarningCallback cb) { on_warning_ = std::move(cb); }

  /// segment -> active speakers -> weights -> embeddings -> assignment and
  /// centroid update -> relabel -> aggregate -> emit.
  StepReport step(const BufferWindow& window) {
    const auto started = std::chrono::steady_clock::now();
    StepReport report;
    report.window_index = window.window_index;

    const SegmentationMatrix s = segment(*segmentation_, window);
    const LocalSpeakers locals = active_speakers(s, config_.tau_active);
    report.k_buffer = locals.k_buffer();

    std::map<std::size_t, std::size_t> labels;
    if (!locals.empty()) {
      const PoolingWeights weights =
          config_.weighting_mode == WeightingMode::overlap_aware
              ? overlap_weights(s, config_.beta, config_.gamma)
              : direct_weights(s);
      auto embedded = embeddings_->embed(window, s, weights, locals);
      report.dropped_locals = locals.k_buffer() - embedded.size();
      if (report.dropped_locals > 0)
        warn("window " + std::to_string(window.window_index) + ": dropped " +
             std::to_string(report.dropped_locals) +
             " active local speaker(s) without pooling support");
      if (!embedded.empty()) {
        if (centroids_.empty()) centroids_ = CentroidSet(embedded.front().vector.size());
        auto outcome = step_update(centroids_, embedded, config_.delta_new,
                                   config_.rho_update, config_.grid);
        report.new_speakers = outcome.new_speakers.size();
        labels = std::move(outcome.labels);
      }
    }
    report.centroids = centroids_.size();

    const GlobalSlice slice = relabel(s, labels, config_.grid, config_.latency);
    const auto finalized = accumulator_.add(slice);
    report.frames_finalized = finalized.size();
    consume(finalized);

    report.step_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
            .count();
    return report;
  }

  /// Flushes pending frames and returns the full annotation, sorted by onset.
  Annotation finish() {
    consume(accumulator_.flush());
    emit(binarizer_.finish());
    Annotation out = output_;
    out.sort();
    return out;
  }

  const CentroidSet& centroids() const { return centroids_; }
  const PipelineConfig& config() const { return config_; }

 private:
  void consume(const std::vector<FinalizedFrame>& frames) {
    for (const auto& f : frames) emit(binarizer_.push(f));
  }

  void emit(const std::vector<Binarizer::Closed>& closed) {
    for (const auto& c : closed) {
      EmittedSegment e{centroids_.label(c.speaker), c.segment};
      output_.add(e.segment.onset, e.segment.duration, e.label);
      if (on_segment_) on_segment_(e);
    }
  }

  void warn(const std::string& message) {
    if (on_warning_) on_warning_(message);
  }

  PipelineConfig config_;
  SegmentationProvider* segmentation_;
  EmbeddingProvider* embeddings_;
  CentroidSet centroids_;
  FrameAccumulator accumulator_;
  Binarizer binarizer_;
  Annotation output_;
  SegmentCallback on_segment_;
  WarningCallback on_warning_ = [](const std::string& m) {
    std::clog << "warning: " << m << '\n';
  };
};

struct RunResult {
  Annotation annotation;
  std::vector<StepReport> steps;
  CentroidSet centroids;
};

struct RunOptions {
  std::string uri = "stream";
  OnlineDiarizer::SegmentCallback on_segment;
  std::optional<OnlineDiarizer::WarningCallback> on_warning;
};

/// Runs the online loop over a whole frame source.
inline RunResult run(const PipelineConfig& config,
                     SegmentationProvider& segmentation,
                     EmbeddingProvider& embeddings, FrameSource& source,
                     const RunOptions& options = {}) {
  OnlineDiarizer diarizer(config, segmentation, embeddings, options.uri);
  if (options.on_segment) diarizer.on_segment(options.on_segment);
  if (options.on_warning) diarizer.on_warning(*options.on_warning);
  RunResult result;
  auto windows = open_stream(source, config.grid, config.pad_warmup);
  while (auto window = windows.next()) {
    try {
      result.steps.push_back(diarizer.step(*window));
    } catch (const CapacityExceeded&) {
      throw;
    } catch (const Error& e) {
      throw Error("window " + std::to_string(window->window_index) + ": " +
                  e.what());
    }
  }
  result.annotation = diarizer.finish();
  result.centroids = diarizer.centroids();
  return result;
}

/// Oracle-driven run: segmentation rasterised from `reference` and embeddings
/// pooled from `source`.
inline RunResult run_oracle(const PipelineConfig& config,
                            const Annotation& reference, FrameSource& source,
                            const RunOptions& options = {}) {
  OracleSegmentation segmentation(reference, config.grid, config.k_max,
                                  config.seed);
  PooledEmbeddings embeddings;
  RunOptions opts = options;
  if (opts.uri == "stream" && !reference.uri.empty()) opts.uri = reference.uri;
  return run(config, segmentation, embeddings, source, opts);
}

struct StepLatencyStats {
  std::size_t steps = 0;
  double mean = 0.0;
  double p95 = 0.0;
  double max = 0.0;
  std::size_t max_centroids = 0;
};

/// Nearest-rank percentile of an unsorted sample; q in [0, 1].
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

/// Wall time of each pipeline step over `repetitions` full runs. Time spent
/// pulling frames from the source is excluded.
inline StepLatencyStats bench_step(
    const PipelineConfig& config,
    const std::function<std::unique_ptr<SegmentationProvider>()>& make_segmentation,
    const std::function<std::unique_ptr<FrameSource>()>& make_source,
    std::size_t repetitions) {
  if (repetitions == 0) throw InvalidArgument("repetitions must be >= 1");
  std::vector<double> times;
  StepLatencyStats stats;
  for (std::size_t r = 0; r < repetitions; ++r) {
    auto segmentation = make_segmentation();
    auto source = make_source();
    PooledEmbeddings embeddings;
    auto result = run(config, *segmentation, embeddings, *source,
                      {"bench", {}, [](const std::string&) {}});
    for (const auto& s : result.steps) {
      times.push_back(s.step_seconds);
      stats.max_centroids = std::max(stats.max_centroids, s.centroids);
    }
  }
  stats.steps = times.size();
  if (times.empty()) return stats;
  stats.mean = std::accumulate(times.begin(), times.end(), 0.0) /
               static_cast<double>(times.size());
  stats.p95 = percentile(times, 0.95);
  stats.max = *std::max_element(times.begin(), times.end());
  return stats;
}

/// One recording of a development set.
struct DevFile {
  Annotation reference;
  /// Fresh frame source for the recording.
  std::function<std::unique_ptr<FrameSource>()> make_source;
  /// Precomputed segmentation; oracle segmentation from `reference` if unset.
  std::function<std::unique_ptr<SegmentationProvider>(const PipelineConfig&)>
      make_segmentation;
};

/// Candidate values for the tuned hyper-parameters.
struct TuneGrid {
  std::vector<double> tau_active;
  std::vector<double> delta_new;
  std::vector<double> rho_update;
};

struct TunePoint {
  double tau_active = 0.0;
  double delta_new = 0.0;
  double rho_update = 0.0;
  double mean_der = 0.0;
};

struct TuneReport {
  PipelineConfig best;
  double best_der = 0.0;
  std::vector<TunePoint> points;
};

inline double run_dev_file(const PipelineConfig& config, const DevFile& file) {
  auto source = file.make_source();
  std::unique_ptr<SegmentationProvider> segmentation =
      file.make_segmentation
          ? file.make_segmentation(config)
          : std::make_unique<OracleSegmentation>(file.reference, config.grid,
                                                 config.k_max, config.seed);
  PooledEmbeddings embeddings;
  auto result = run(config, *segmentation, embeddings, *source,
                    {file.reference.uri, {}, [](const std::string&) {}});
  return der(file.reference, result.annotation).der();
}

/// Exhaustive grid search minimising mean DER over the dev files. Points are
/// visited in (tau, delta, rho) order and the first minimum wins.
inline TuneReport tune(const PipelineConfig& base, const TuneGrid& grid,
                       const std::vector<DevFile>& dev) {
  if (dev.empty()) throw InvalidArgument("empty development set");
  auto values = [](const std::vector<double>& v, double fallback) {
    return v.empty() ? std::vector<double>{fallback} : v;
  };
  TuneReport report;
  bool have_best = false;
  for (double tau : values(grid.tau_active, base.tau_active))
    for (double delta : values(grid.delta_new, base.delta_new))
      for (double rho : values(grid.rho_update, base.rho_update)) {
        PipelineConfig c = base;
        c.tau_active = tau;
        c.delta_new = delta;
        c.rho_update = rho;
        c.validate();
        double total = 0.0;
        for (const auto& file : dev) total += run_dev_file(c, file);
        const double mean = total / static_cast<double>(dev.size());
        report.points.push_back({tau, delta, rho, mean});
        if (!have_best || mean < report.best_der) {
          report.best = c;
          report.best_der = mean;
          have_best = true;
        }
      }
  return report;
}

}  // namespace sdiar
