// Command-line front end: run, score, tune, bench and fixture generation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sdiar/sdiar.hpp"

namespace fs = std::filesystem;
using namespace sdiar;

namespace {

PipelineConfig load_or_default(const std::string& path) {
  return path.empty() ? PipelineConfig{} : load_config(path);
}

void check_frame_step(double file_step, const FrameGrid& grid, const std::string& what) {
  if (std::abs(file_step - grid.frame_step) > 1e-12)
    throw FormatError(what + " frame step " + std::to_string(file_step) +
                      " differs from config frame_step " + std::to_string(grid.frame_step));
}

// ---------------------------------------------------------------- run

struct RunArgs {
  std::string config, features, segmentation, embeddings, ref, output = "-", uri;
  std::string dump_centroids;
  double latency = -1.0, tau_active = -1.0;
  bool emit = false, verbose = false;
};

int cmd_run(const RunArgs& a) {
  PipelineConfig config = load_or_default(a.config);
  if (a.latency > 0.0) config.latency = a.latency;
  if (a.tau_active > 0.0) config.tau_active = a.tau_active;
  config.validate();

  FeatureFileSource source(a.features);
  check_frame_step(source.frame_step(), config.grid, "feature file");

  std::unique_ptr<SegmentationProvider> segmentation;
  Annotation reference;
  if (!a.ref.empty()) reference = parse_rttm(fs::path(a.ref));
  if (!a.segmentation.empty()) {
    segmentation = std::make_unique<FileSegmentation>(a.segmentation, config.grid);
  } else if (!a.ref.empty()) {
    segmentation = std::make_unique<OracleSegmentation>(reference, config.grid,
                                                        config.k_max, config.seed);
  } else {
    throw InvalidArgument("need --segmentation or --ref for oracle segmentation");
  }
  if (segmentation->k_max() != config.k_max) config.k_max = segmentation->k_max();

  std::unique_ptr<EmbeddingProvider> embeddings;
  if (!a.embeddings.empty())
    embeddings = std::make_unique<FileEmbeddings>(a.embeddings);
  else
    embeddings = std::make_unique<PooledEmbeddings>();

  std::string uri = a.uri;
  if (uri.empty()) uri = !reference.uri.empty() ? reference.uri : fs::path(a.features).stem().string();

  RunOptions options;
  options.uri = uri;
  if (a.emit)
    options.on_segment = [&uri](const EmittedSegment& e) {
      std::cout << rttm_line(uri, {e.segment, e.label}) << std::endl;
    };
  const RunResult result = run(config, *segmentation, *embeddings, source, options);

  if (a.output == "-") {
    if (!a.emit) write_rttm(result.annotation, std::cout);
  } else {
    write_rttm(result.annotation, fs::path(a.output));
  }
  if (!a.dump_centroids.empty()) write_centroids(a.dump_centroids, result.centroids);
  if (a.verbose) {
    double worst = 0.0;
    for (const auto& s : result.steps) worst = std::max(worst, s.step_seconds);
    std::cerr << "windows " << result.steps.size() << ", speakers "
              << result.centroids.size() << ", slowest step " << worst * 1e3 << " ms\n";
  }
  if (!reference.empty())
    std::cerr << "DER vs reference: " << der(reference, result.annotation).der() << '\n';
  return 0;
}

// -------------------------------------------------------------- score

struct ScoreArgs {
  std::string ref, hyp, csv;
  double bin = 0.0;
};

void csv_row(std::ostream& os, const std::string& name, const DerBreakdown& d) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%.3f,%.3f,%.3f,%.3f,%.6f", name.c_str(),
                d.false_alarm, d.missed, d.confusion, d.total_reference, d.der());
  os << buf << '\n';
}

int cmd_score(const ScoreArgs& a) {
  const auto refs = parse_rttm_all(fs::path(a.ref));
  const auto hyps = parse_rttm_all(fs::path(a.hyp));
  if (refs.empty()) throw FormatError("reference RTTM is empty");

  std::ostringstream csv;
  csv << "uri,fa,miss,conf,total,der\n";
  DerBreakdown total;
  std::printf("%-24s %9s %9s %9s %9s %8s\n", "uri", "FA", "Miss", "Conf", "Total", "DER%");
  for (const auto& [uri, ref] : refs) {
    auto it = hyps.find(uri);
    const Annotation hyp = it == hyps.end() ? Annotation{uri, {}} : it->second;
    const DerBreakdown d = der(ref, hyp);
    total += d;
    std::printf("%-24s %9.3f %9.3f %9.3f %9.3f %8.2f\n", uri.c_str(), d.false_alarm,
                d.missed, d.confusion, d.total_reference, 100.0 * d.der());
    csv_row(csv, uri, d);
    if (a.bin > 0.0) {
      for (const auto& b : local_der_curve(ref, hyp, a.bin))
        std::printf("  [%8.1f, %8.1f) DER %6.2f%%  conf %6.2f%%\n", b.start, b.start + a.bin,
                    100.0 * b.breakdown.der(), 100.0 * b.breakdown.confusion_rate());
    }
  }
  for (const auto& [uri, hyp] : hyps)
    if (!refs.contains(uri)) std::fprintf(stderr, "warning: no reference for uri %s\n", uri.c_str());
  std::printf("%-24s %9.3f %9.3f %9.3f %9.3f %8.2f\n", "TOTAL", total.false_alarm,
              total.missed, total.confusion, total.total_reference, 100.0 * total.der());
  csv_row(csv, "TOTAL", total);

  if (a.csv.empty()) {
    std::cout << '\n' << csv.str();
  } else {
    std::ofstream out(a.csv);
    if (!out) throw FormatError("cannot create " + a.csv);
    out << csv.str();
  }
  return 0;
}

// --------------------------------------------------------------- tune

struct TuneArgs {
  std::string grid, dev, config, output;
};

std::vector<double> parse_list(const std::string& key, std::string_view text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto comma = text.find(',', start);
    if (comma == std::string_view::npos) comma = text.size();
    const auto item = detail::trim(text.substr(start, comma - start));
    if (!item.empty()) out.push_back(detail::parse_number<double>(key, item));
    start = comma + 1;
  }
  return out;
}

TuneGrid load_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open grid " + path);
  TuneGrid grid;
  std::string line;
  while (std::getline(in, line)) {
    std::string_view view(line);
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = detail::trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) throw FormatError("grid line needs key = v1, v2, ...");
    const std::string key(detail::trim(view.substr(0, eq)));
    auto values = parse_list(key, view.substr(eq + 1));
    if (key == "tau_active") grid.tau_active = std::move(values);
    else if (key == "delta_new") grid.delta_new = std::move(values);
    else if (key == "rho_update") grid.rho_update = std::move(values);
    else throw FormatError("grid key must be tau_active, delta_new or rho_update");
  }
  return grid;
}

// A dev directory holds <uri>.rttm and <uri>.sdfe, optionally <uri>.sdsg.
std::vector<DevFile> load_dev(const std::string& dir, const FrameGrid& grid) {
  std::vector<fs::path> rttms;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".rttm") rttms.push_back(entry.path());
  std::sort(rttms.begin(), rttms.end());
  std::vector<DevFile> dev;
  for (const auto& rttm : rttms) {
    fs::path features = rttm, segmentation = rttm;
    features.replace_extension(".sdfe");
    segmentation.replace_extension(".sdsg");
    if (!fs::exists(features)) throw FormatError("missing " + features.string());
    check_frame_step(FeatureFileSource(features).frame_step(), grid, features.string());
    DevFile file;
    file.reference = parse_rttm(rttm, rttm.stem().string());
    file.make_source = [features] { return std::make_unique<FeatureFileSource>(features); };
    if (fs::exists(segmentation))
      file.make_segmentation = [segmentation](const PipelineConfig& c) {
        return std::make_unique<FileSegmentation>(segmentation, c.grid);
      };
    dev.push_back(std::move(file));
  }
  return dev;
}

int cmd_tune(const TuneArgs& a) {
  const PipelineConfig base = load_or_default(a.config);
  const TuneReport report = tune(base, load_grid(a.grid), load_dev(a.dev, base.grid));
  std::printf("%10s %10s %10s %10s\n", "tau", "delta", "rho", "DER%");
  for (const auto& p : report.points)
    std::printf("%10.4f %10.4f %10.4f %10.3f\n", p.tau_active, p.delta_new, p.rho_update,
                100.0 * p.mean_der);
  std::printf("best: tau_active=%g delta_new=%g rho_update=%g mean DER %.3f%%\n",
              report.best.tau_active, report.best.delta_new, report.best.rho_update,
              100.0 * report.best_der);
  if (!a.output.empty()) {
    std::ofstream out(a.output);
    if (!out) throw FormatError("cannot create " + a.output);
    out << format_config(report.best);
  }
  return 0;
}

// -------------------------------------------------------------- bench

struct BenchArgs {
  std::string config;
  std::size_t speakers = 20, dim = 256, reps = 1;
  double duration = 300.0;
  std::uint64_t seed = 0;
};

int cmd_bench(const BenchArgs& a) {
  const PipelineConfig config = load_or_default(a.config);
  ConversationSpec spec;
  spec.speakers = a.speakers;
  spec.duration = a.duration;
  spec.feature_dim = a.dim;
  spec.seed = a.seed;
  spec.noise_sigma = 0.3;
  spec.capacity = config.k_max;
  const Conversation conv = generate_conversation(spec);
  const auto stats = bench_step(
      config,
      [&] {
        return std::make_unique<OracleSegmentation>(conv.reference, config.grid,
                                                    config.k_max, config.seed);
      },
      [&] { return std::make_unique<OracleFeatureSource>(conv.feature_source(config.grid)); },
      a.reps);
  std::printf("steps %zu  D=%zu F=%lld K_max=%zu  centroids up to %zu\n", stats.steps, a.dim,
              static_cast<long long>(config.grid.frames_per_window()), config.k_max,
              stats.max_centroids);
  std::printf("step wall time: mean %.3f ms  p95 %.3f ms  max %.3f ms\n", stats.mean * 1e3,
              stats.p95 * 1e3, stats.max * 1e3);
  return 0;
}

// ----------------------------------------------------------- fixtures

struct FixtureArgs {
  std::size_t speakers = 3, dim = 32;
  double duration = 300.0, overlap = 0.1, noise = 0.0;
  std::uint64_t seed = 0;
  std::string out_dir = ".", uri = "fixture", config;
};

int cmd_fixtures(const FixtureArgs& a) {
  const PipelineConfig config = load_or_default(a.config);
  ConversationSpec spec;
  spec.speakers = a.speakers;
  spec.duration = a.duration;
  spec.overlap = a.overlap;
  spec.noise_sigma = a.noise;
  spec.seed = a.seed;
  spec.feature_dim = a.dim;
  spec.uri = a.uri;
  spec.capacity = config.k_max;
  const Conversation conv = generate_conversation(spec);

  fs::create_directories(a.out_dir);
  const fs::path base = fs::path(a.out_dir) / a.uri;
  write_rttm(conv.reference, fs::path(base.string() + ".rttm"));

  auto source = conv.feature_source(config.grid);
  Matrix<float> frames(0, source.dim());
  std::vector<float> row(source.dim());
  while (source.next_frame(row)) frames.append_row(row);
  write_features(base.string() + ".sdfe", frames, config.grid.frame_step);

  MatrixSource replay(frames);
  OracleSegmentation oracle(conv.reference, config.grid, config.k_max, config.seed);
  SegmentationWriter writer(base.string() + ".sdsg", config.k_max, config.grid.frame_step);
  auto windows = open_stream(replay, config.grid, config.pad_warmup);
  std::size_t n = 0;
  while (auto w = windows.next()) {
    writer.write(oracle.segment(*w));
    ++n;
  }
  std::printf("%s: %zu speakers, %.1f s, overlap %.3f, %lld frames, %zu windows\n",
              a.uri.c_str(), conv.reference.labels().size(), a.duration,
              overlap_ratio(conv.reference), static_cast<long long>(frames.rows()), n);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online speaker diarization toolkit"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Diarize one feature stream");
  run_cmd->add_option("--config", run_args.config, "Pipeline config file");
  run_cmd->add_option("--features", run_args.features, "SDFE feature file")->required();
  run_cmd->add_option("--segmentation", run_args.segmentation, "SDSG segmentation file");
  run_cmd->add_option("--embeddings", run_args.embeddings, "SDEM embedding file");
  run_cmd->add_option("--ref", run_args.ref, "Reference RTTM (oracle segmentation, scoring)");
  run_cmd->add_option("--latency", run_args.latency, "Override latency (s)");
  run_cmd->add_option("--tau-active", run_args.tau_active, "Override activity threshold");
  run_cmd->add_option("--output", run_args.output, "Output RTTM, '-' for stdout");
  run_cmd->add_option("--uri", run_args.uri, "Recording id for the output");
  run_cmd->add_option("--dump-centroids", run_args.dump_centroids, "Write final centroids (SDCK)");
  run_cmd->add_flag("--emit", run_args.emit, "Print segments to stdout as they close");
  run_cmd->add_flag("-v,--verbose", run_args.verbose, "Print run statistics");

  ScoreArgs score_args;
  auto* score_cmd = app.add_subcommand("score", "Diarization error rate");
  score_cmd->add_option("--ref", score_args.ref, "Reference RTTM")->required();
  score_cmd->add_option("--hyp", score_args.hyp, "Hypothesis RTTM")->required();
  score_cmd->add_option("--bin", score_args.bin, "Local DER bin width (s)");
  score_cmd->add_option("--csv", score_args.csv, "Write CSV here instead of stdout");

  TuneArgs tune_args;
  auto* tune_cmd = app.add_subcommand("tune", "Grid search on a development set");
  tune_cmd->add_option("--grid", tune_args.grid, "Grid file: key = v1, v2, ...")->required();
  tune_cmd->add_option("--dev", tune_args.dev, "Directory of <uri>.rttm/.sdfe[/.sdsg]")->required();
  tune_cmd->add_option("--config", tune_args.config, "Base config");
  tune_cmd->add_option("--output", tune_args.output, "Write the best config here");

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("bench", "Per-step latency with oracle providers");
  bench_cmd->add_option("--config", bench_args.config, "Pipeline config file");
  bench_cmd->add_option("--speakers", bench_args.speakers, "Speakers in the synthetic stream");
  bench_cmd->add_option("--duration", bench_args.duration, "Stream length (s)");
  bench_cmd->add_option("--dim", bench_args.dim, "Feature dimension");
  bench_cmd->add_option("--reps", bench_args.reps, "Repetitions")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--seed", bench_args.seed, "Fixture seed");

  FixtureArgs fx;
  auto* fixtures_cmd = app.add_subcommand("fixtures", "Synthetic test data");
  fixtures_cmd->require_subcommand(1);
  auto* generate_cmd = fixtures_cmd->add_subcommand("generate", "Write RTTM, SDFE and SDSG");
  generate_cmd->add_option("--speakers", fx.speakers, "Number of speakers");
  generate_cmd->add_option("--duration", fx.duration, "Length (s)");
  generate_cmd->add_option("--overlap", fx.overlap, "Target overlapped-speech fraction");
  generate_cmd->add_option("--noise", fx.noise, "Feature noise scale");
  generate_cmd->add_option("--seed", fx.seed, "Random seed");
  generate_cmd->add_option("--dim", fx.dim, "Feature dimension");
  generate_cmd->add_option("--uri", fx.uri, "Recording id and file stem");
  generate_cmd->add_option("--out-dir", fx.out_dir, "Output directory");
  generate_cmd->add_option("--config", fx.config, "Config supplying the frame grid");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return cmd_run(run_args);
    if (*score_cmd) return cmd_score(score_args);
    if (*tune_cmd) return cmd_tune(tune_args);
    if (*bench_cmd) return cmd_bench(bench_args);
    if (*generate_cmd) return cmd_fixtures(fx);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
