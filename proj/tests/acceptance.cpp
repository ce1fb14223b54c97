// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails. Thresholds and fixture parameters are fixed here.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "oracles.hpp"

using namespace sdiar;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double time_limit;  // seconds; <= 0 means unbounded
  std::function<Outcome()> check;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Conversation make_conversation(std::size_t speakers, Seconds duration, double overlap,
                               double noise, std::uint64_t seed) {
  ConversationSpec spec;
  spec.speakers = speakers;
  spec.duration = duration;
  spec.overlap = overlap;
  spec.noise_sigma = noise;
  spec.seed = seed;
  spec.uri = "fx" + std::to_string(seed);
  return generate_conversation(spec);
}

RunResult run_fixture(const PipelineConfig& c, const Conversation& conv) {
  auto source = conv.feature_source(c.grid);
  return run_oracle(c, conv.reference, source,
                    {conv.reference.uri, {}, [](const std::string&) {}});
}

// ---------------------------------------------------------------- 1

Outcome pooling_correctness() {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 2.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_plain = 0.0, worst_scale = 0.0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t frames = 2 + t % 300, dim = 1 + t % 8;
    Matrix<float> x(frames, dim);
    for (auto& v : x.data()) v = static_cast<float>(n(rng));
    const auto st = weighted_stats_pool(x, std::vector<double>(frames, 1.0));
    for (std::size_t d = 0; d < dim; ++d) {
      long double mean = 0.0L;
      for (std::size_t r = 0; r < frames; ++r) mean += x(r, d);
      mean /= static_cast<long double>(frames);
      long double ss = 0.0L;
      for (std::size_t r = 0; r < frames; ++r) ss += (x(r, d) - mean) * (x(r, d) - mean);
      const double sd = static_cast<double>(std::sqrt(ss / static_cast<long double>(frames - 1)));
      const double m = static_cast<double>(mean);
      worst_plain = std::max(worst_plain, std::abs(st.mean[d] - m) / std::max(std::abs(m), 1e-300));
      worst_plain = std::max(worst_plain, std::abs(st.stddev[d] - sd) / sd);
    }
    std::vector<double> w(frames), scaled(frames);
    const double c = std::exp(8.0 * u(rng) - 4.0);
    for (std::size_t r = 0; r < frames; ++r) {
      w[r] = u(rng);
      scaled[r] = c * w[r];
    }
    const auto a = weighted_stats_pool(x, w), b = weighted_stats_pool(x, scaled);
    for (std::size_t d = 0; d < dim; ++d) {
      worst_scale = std::max(worst_scale, std::abs(a.mean[d] - b.mean[d]) /
                                              std::max(std::abs(a.mean[d]), 1e-300));
      worst_scale = std::max(worst_scale, std::abs(a.stddev[d] - b.stddev[d]) / a.stddev[d]);
    }
  }
  Matrix<float> x(2, 2);
  x(0, 0) = 1;
  x(0, 1) = 2;
  x(1, 0) = 3;
  x(1, 1) = 4;
  const auto hw = weighted_stats_pool(x, std::vector<double>{1.0, 3.0});
  const bool hand = hw.mean == std::vector<double>{2.5, 3.5} &&
                    hw.stddev[0] == std::sqrt(2.0) && hw.stddev[1] == std::sqrt(2.0);
  return {worst_plain <= 1e-12 && worst_scale <= 1e-12 && hand,
          fmt("uniform rel err %.2e, rescale rel err %.2e, hand-worked sigma=(%.17g, %.17g) vs sqrt(2)",
              worst_plain, worst_scale, hw.stddev[0], hw.stddev[1])};
}

// ---------------------------------------------------------------- 2

Outcome overlap_weight_correctness() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 10000; ++t) {
    SegmentationMatrix s{Matrix<float>(1, 4), 0, 0, 0.0};
    for (auto& v : s.probs.data()) {
      // Mix of generic values, exact zeros and exact ones.
      const double r = u(rng);
      v = r < 0.1 ? 0.0f : r < 0.2 ? 1.0f : static_cast<float>(u(rng));
    }
    const auto w = overlap_weights(s, 10.0, 3.0);
    const std::vector<double> sv(s.probs.data().begin(), s.probs.data().end());
    const auto want = oracle::overlap_weights_hp(sv, 10.0, 3.0);
    for (std::size_t k = 0; k < 4; ++k) worst = std::max(worst, std::abs(w.weights(0, k) - want[k]));
  }
  auto one = [](std::vector<float> v) {
    SegmentationMatrix s{Matrix<float>(1, 4), 0, 0, 0.0};
    for (std::size_t k = 0; k < 4; ++k) s.probs(0, k) = v[k];
    return overlap_weights(s, 10.0, 3.0);
  };
  const auto z = one({0, 0, 0, 0}), h = one({1, 0, 0, 0}), p = one({0.8f, 0.8f, 0, 0});
  const bool ex1 = z.weights(0, 0) == 0 && z.weights(0, 1) == 0 && z.weights(0, 2) == 0 &&
                   z.weights(0, 3) == 0;
  const bool ex2 = std::abs(h.weights(0, 0) - 0.9996) < 5e-5 && h.weights(0, 1) == 0.0;
  const bool ex3 = std::abs(p.weights(0, 0) - 0.0639) < 5e-5 && p.weights(0, 0) == p.weights(0, 1);
  return {worst <= 1e-9 && ex1 && ex2 && ex3,
          fmt("max |err| %.2e over 1e4 vectors; examples: 0 -> 0 %s, one-hot -> %.6f, "
              "(0.8,0.8) -> %.6f",
              worst, ex1 ? "ok" : "BAD", h.weights(0, 0), p.weights(0, 0))};
}

// ---------------------------------------------------------------- 3

Outcome assignment_correctness() {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> rows(1, 4), cols(1, 6);
  std::uniform_int_distribution<int> level(0, 3);
  int mismatched = 0, ties = 0;
  for (int t = 0; t < 1000; ++t) {
    auto c = testing::random_matrix(rng, rows(rng), cols(rng));
    if (t % 4 == 0) {
      for (auto& v : c.data()) v = 0.5 * level(rng);
      ++ties;
    }
    const auto got = constrained_assign(c);
    const auto want = oracle::brute_force_assign(c);
    if (got != want.mapping || mapping_cost(c, got) != want.cost) ++mismatched;
  }
  return {mismatched == 0,
          fmt("%d/1000 mismatches vs exhaustive enumeration (%d tie-heavy matrices)",
              mismatched, ties)};
}

// ---------------------------------------------------------------- 4

Outcome der_correctness() {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> spk(1, 4), segs(1, 6);
  int mismatched = 0;
  for (int t = 0; t < 200; ++t) {
    const auto ref = oracle::random_grid_annotation(rng, spk(rng), segs(rng), 60.0, 0.125, "r");
    const auto hyp = oracle::random_grid_annotation(rng, spk(rng), segs(rng), 60.0, 0.125, "h");
    const auto got = der(ref, hyp);
    const auto want = oracle::brute_force_der(ref, hyp, 0.125);
    if (got.errors() != want.errors() || got.total_reference != want.total_reference ||
        got.false_alarm != want.false_alarm || got.missed != want.missed)
      ++mismatched;
  }
  Annotation ref{"r", {}}, miss{"r", {}}, split{"r", {}};
  ref.add(0.0, 10.0, "A");
  miss.add(0.0, 8.0, "X");
  split.add(0.0, 5.0, "X");
  split.add(5.0, 5.0, "Y");
  const auto dm = der(ref, miss), dc = der(ref, split);
  const bool hand = dm.missed == 2.0 && dm.der() == 0.2 && dc.confusion == 5.0 && dc.der() == 0.5;
  return {mismatched == 0 && hand,
          fmt("%d/200 mismatches vs brute-force scorer; Miss=%.1f DER=%.2f; Conf=%.1f DER=%.2f",
              mismatched, dm.missed, dm.der(), dc.confusion, dc.der())};
}

// ------------------------------------------------------ tuned operating point

// delta_new is not published; pick it (with rho and tau) on dev fixtures that
// share no seed with the evaluation fixtures.
PipelineConfig tuned_config() {
  static const PipelineConfig tuned = [] {
    std::vector<DevFile> dev;
    for (std::uint64_t seed = 9000; seed < 9004; ++seed) {
      const auto conv = make_conversation(3, 120.0, 0.1, 0.3, seed);
      dev.push_back({conv.reference,
                     [conv] {
                       return std::make_unique<OracleFeatureSource>(
                           conv.feature_source(FrameGrid{}));
                     },
                     {}});
    }
    TuneGrid grid{{0.5}, {0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0}, {0.1, 0.5}};
    const auto report = tune(PipelineConfig{}, grid, dev);
    std::printf("       tuned on 4 dev fixtures: tau_active=%g delta_new=%g rho_update=%g "
                "(dev DER %.3f%%)\n",
                report.best.tau_active, report.best.delta_new, report.best.rho_update,
                100.0 * report.best_der);
    return report.best;
  }();
  return tuned;
}

// ---------------------------------------------------------------- 5

Outcome oracle_end_to_end() {
  const auto conv = make_conversation(3, 300.0, 0.1, 0.0, 0);
  PipelineConfig c = tuned_config();
  c.latency = 0.5;
  const auto r = run_fixture(c, conv);
  const double d = der(conv.reference, r.annotation).der();
  const double ov = overlap_ratio(conv.reference);
  return {r.centroids.size() == 3 && r.annotation.labels().size() == 3 && d < 0.02,
          fmt("speakers %zu (output labels %zu), DER %.3f%% (< 2%%), overlap %.1f%%",
              r.centroids.size(), r.annotation.labels().size(), 100.0 * d, 100.0 * ov)};
}

// Shared by criteria 6 and 7: 20 seeded 10-minute noisy fixtures at two
// latencies.
struct NoisyRuns {
  DerBreakdown low_latency_total, high_latency_total;
  double conf_low = 0, conf_high = 0, fa_low = 0, fa_high = 0, miss_low = 0, miss_high = 0;
  std::vector<std::vector<LocalDer>> curves;
};

const NoisyRuns& noisy_runs() {
  static const NoisyRuns runs = [] {
    NoisyRuns out;
    const int seeds = 20;
    for (std::uint64_t seed = 0; seed < static_cast<std::uint64_t>(seeds); ++seed) {
      const auto conv = make_conversation(3, 600.0, 0.1, 0.3, seed);
      PipelineConfig low = tuned_config(), high = tuned_config();
      low.latency = 0.5;
      high.latency = 5.0;
      const auto rl = run_fixture(low, conv);
      const auto rh = run_fixture(high, conv);
      const auto dl = der(conv.reference, rl.annotation);
      const auto dh = der(conv.reference, rh.annotation);
      out.conf_low += dl.confusion_rate() / seeds;
      out.conf_high += dh.confusion_rate() / seeds;
      out.fa_low += dl.false_alarm_rate() / seeds;
      out.fa_high += dh.false_alarm_rate() / seeds;
      out.miss_low += dl.missed_rate() / seeds;
      out.miss_high += dh.missed_rate() / seeds;
      out.curves.push_back(local_der_curve(conv.reference, rl.annotation, 60.0));
    }
    return out;
  }();
  return runs;
}

// ---------------------------------------------------------------- 6

Outcome latency_trend() {
  const auto& r = noisy_runs();
  const double dfa = std::abs(r.fa_high - r.fa_low), dmiss = std::abs(r.miss_high - r.miss_low);
  return {r.conf_high <= r.conf_low && dfa < 0.005 && dmiss < 0.005,
          fmt("mean conf %.4f%% @5s vs %.4f%% @0.5s; |dFA| %.4f%%, |dMiss| %.4f%% (< 0.5%%)",
              100 * r.conf_high, 100 * r.conf_low, 100 * dfa, 100 * dmiss)};
}

// ---------------------------------------------------------------- 7

Outcome continual_learning_trend() {
  const auto& r = noisy_runs();
  // Bin 0 is the warm-up bin; compare the first bin after it with the last.
  double first = 0.0, last = 0.0, warmup = 0.0;
  for (const auto& curve : r.curves) {
    warmup += curve.at(0).breakdown.der() / static_cast<double>(r.curves.size());
    first += curve.at(1).breakdown.der() / static_cast<double>(r.curves.size());
    last += curve.back().breakdown.der() / static_cast<double>(r.curves.size());
  }
  return {last <= first,
          fmt("mean local DER: last 60s bin %.4f%% vs first post-warm-up bin %.4f%% "
              "(warm-up bin %.4f%%)",
              100 * last, 100 * first, 100 * warmup)};
}

// ---------------------------------------------------------------- 8

Outcome realtime_budget() {
  PipelineConfig c = tuned_config();
  ConversationSpec spec;
  spec.speakers = 20;
  spec.duration = 600.0;
  spec.feature_dim = 256;
  spec.noise_sigma = 0.3;
  spec.overlap = 0.1;
  spec.seed = 8;
  spec.capacity = c.k_max;
  const auto conv = generate_conversation(spec);
  const auto stats = bench_step(
      c,
      [&] { return std::make_unique<OracleSegmentation>(conv.reference, c.grid, c.k_max, c.seed); },
      [&] { return std::make_unique<OracleFeatureSource>(conv.feature_source(c.grid)); }, 1);
  return {stats.p95 < 0.5,
          fmt("p95 %.2f ms, mean %.2f ms, max %.2f ms over %zu steps; D=256 F=%lld K_max=%zu, "
              "centroids up to %zu",
              stats.p95 * 1e3, stats.mean * 1e3, stats.max * 1e3, stats.steps,
              static_cast<long long>(c.grid.frames_per_window()), c.k_max, stats.max_centroids)};
}

// ---------------------------------------------------------------- 9

Outcome determinism() {
  testing::TempDir dir("acceptance_det");
  const auto conv = make_conversation(3, 300.0, 0.1, 0.3, 9);
  const PipelineConfig c = tuned_config();
  for (const char* name : {"a.rttm", "b.rttm"})
    write_rttm(run_fixture(c, conv).annotation, dir / name);
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const auto a = slurp(dir / "a.rttm"), b = slurp(dir / "b.rttm");
  return {!a.empty() && a == b, fmt("%zu vs %zu bytes, %s", a.size(), b.size(),
                                    a == b ? "identical" : "DIFFERENT")};
}

// --------------------------------------------------------------- 10

Outcome overlap_ablation() {
  double aware = 0.0, direct = 0.0;
  const int seeds = 20;
  for (std::uint64_t seed = 0; seed < static_cast<std::uint64_t>(seeds); ++seed) {
    const auto conv = make_conversation(2, 300.0, 0.3, 0.3, 1000 + seed);
    PipelineConfig c = tuned_config();
    c.weighting_mode = WeightingMode::overlap_aware;
    aware += der(conv.reference, run_fixture(c, conv).annotation).der() / seeds;
    c.weighting_mode = WeightingMode::direct;
    direct += der(conv.reference, run_fixture(c, conv).annotation).der() / seeds;
  }
  return {aware <= direct,
          fmt("mean DER overlap_aware %.4f%% vs direct %.4f%%", 100 * aware, 100 * direct)};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "pooling correctness", 1.0, pooling_correctness},
      {2, "overlap-aware weight correctness", 1.0, overlap_weight_correctness},
      {3, "assignment correctness", 5.0, assignment_correctness},
      {4, "DER correctness", 10.0, der_correctness},
      {5, "end-to-end oracle run", 30.0, oracle_end_to_end},
      {6, "latency trend", 0.0, latency_trend},
      {7, "continual-learning trend", 0.0, continual_learning_trend},
      {8, "real-time budget", 0.0, realtime_budget},
      {9, "determinism", 0.0, determinism},
      {10, "overlap-aware ablation direction", 0.0, overlap_ablation},
  };
  // Operating point and shared fixture runs are prepared outside the timed
  // sections.
  (void)tuned_config();

  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.time_limit <= 0.0 || secs < c.time_limit;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::string limit = c.time_limit > 0.0 ? fmt(" (limit %.0fs)", c.time_limit) : "";
    std::printf("[%s] criterion %2d  %-34s %s | %.2fs%s%s\n", pass ? "PASS" : "FAIL", c.id,
                c.name, o.detail.c_str(), secs, limit.c_str(),
                in_time ? "" : " TIME LIMIT EXCEEDED");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
