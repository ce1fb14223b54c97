#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>

#include "sdiar/errors.hpp"
#include "sdiar/timebase.hpp"

namespace sdiar {

enum class WeightingMode { overlap_aware, direct };

inline std::string_view to_string(WeightingMode m) {
  return m == WeightingMode::overlap_aware ? "overlap_aware" : "direct";
}

/// Every tunable of the online pipeline.
struct PipelineConfig {
  FrameGrid grid;
  std::size_t k_max = 4;
  double tau_active = 0.5;
  /// Cosine distance above which a matched local speaker is declared new.
  double delta_new = 1.0;
  /// Minimum activity (seconds) for an embedding to refine its centroid.
  Seconds rho_update = 0.1;
  double beta = 10.0;
  double gamma = 3.0;
  Seconds latency = 0.5;
  WeightingMode weighting_mode = WeightingMode::overlap_aware;
  bool pad_warmup = true;
  std::uint64_t seed = 0;

  void validate() const {
    grid.validate();
    if (k_max == 0) throw InvalidArgument("k_max must be positive");
    if (!(tau_active > 0.0 && tau_active < 1.0))
      throw InvalidArgument("tau_active must lie in (0, 1)");
    if (!(delta_new > 0.0 && delta_new < 2.0))
      throw InvalidArgument("delta_new must lie in (0, 2)");
    if (!(rho_update >= 0.0)) throw InvalidArgument("rho_update must be >= 0");
    if (!(gamma >= 1.0)) throw InvalidArgument("gamma must be >= 1");
    if (!(latency >= grid.hop && latency <= grid.window_duration))
      throw InvalidArgument("latency must lie between the hop and the window");
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    throw FormatError("bad value '" + std::string(value) + "' for " +
                      std::string(key));
  return out;
}

inline bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw FormatError("bad boolean '" + std::string(value) + "' for " +
                    std::string(key));
}

}  // namespace detail

/// Applies one `key = value` setting. Unknown keys are errors.
inline void set_config_value(PipelineConfig& c, std::string_view key,
                             std::string_view value) {
  using detail::parse_number;
  if (key == "frame_step") c.grid.frame_step = parse_number<double>(key, value);
  else if (key == "window_duration") c.grid.window_duration = parse_number<double>(key, value);
  else if (key == "hop") c.grid.hop = parse_number<double>(key, value);
  else if (key == "k_max") c.k_max = parse_number<std::size_t>(key, value);
  else if (key == "tau_active") c.tau_active = parse_number<double>(key, value);
  else if (key == "delta_new") c.delta_new = parse_number<double>(key, value);
  else if (key == "rho_update") c.rho_update = parse_number<double>(key, value);
  else if (key == "beta") c.beta = parse_number<double>(key, value);
  else if (key == "gamma") c.gamma = parse_number<double>(key, value);
  else if (key == "latency") c.latency = parse_number<double>(key, value);
  else if (key == "pad_warmup") c.pad_warmup = detail::parse_bool(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "weighting_mode") {
    if (value == "overlap_aware") c.weighting_mode = WeightingMode::overlap_aware;
    else if (value == "direct") c.weighting_mode = WeightingMode::direct;
    else throw FormatError("weighting_mode must be overlap_aware or direct");
  } else {
    throw FormatError("unknown config key '" + std::string(key) + "'");
  }
}

/// Flat `key = value` text; '#' starts a comment.
inline PipelineConfig parse_config(std::istream& is, PipelineConfig base = {}) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string_view view(line);
    if (auto hash = view.find('#'); hash != std::string_view::npos)
      view = view.substr(0, hash);
    view = detail::trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos)
      throw FormatError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    set_config_value(base, detail::trim(view.substr(0, eq)),
                     detail::trim(view.substr(eq + 1)));
  }
  return base;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path.string());
  return parse_config(in);
}

inline std::string format_config(const PipelineConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "frame_step = " << c.grid.frame_step << '\n'
     << "window_duration = " << c.grid.window_duration << '\n'
     << "hop = " << c.grid.hop << '\n'
     << "k_max = " << c.k_max << '\n'
     << "tau_active = " << c.tau_active << '\n'
     << "delta_new = " << c.delta_new << '\n'
     << "rho_update = " << c.rho_update << '\n'
     << "beta = " << c.beta << '\n'
     << "gamma = " << c.gamma << '\n'
     << "latency = " << c.latency << '\n'
     << "weighting_mode = " << to_string(c.weighting_mode) << '\n'
     << "pad_warmup = " << (c.pad_warmup ? "true" : "false") << '\n'
     << "seed = " << c.seed << '\n';
  return os.str();
}

}  // namespace sdiar
