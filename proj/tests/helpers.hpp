#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "sdiar/sdiar.hpp"

namespace sdiar::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("sdiar_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Window of `grid` ending at `end_time` with zero features of width `dim`.
inline BufferWindow blank_window(const FrameGrid& grid, Seconds end_time,
                                 std::size_t index = 0, std::size_t dim = 1) {
  BufferWindow w;
  w.window_index = index;
  w.end_time = end_time;
  w.start_time = end_time - grid.window_duration;
  const FrameIndex frames = grid.frames_per_window();
  w.first_frame = time_to_frame(grid, end_time) - frames;
  w.padded_frames = std::max<FrameIndex>(0, -w.first_frame);
  w.features.start_time = w.start_time;
  w.features.frames = Matrix<float>(static_cast<std::size_t>(frames), dim, 0.0f);
  return w;
}

inline Matrix<double> random_matrix(std::mt19937_64& rng, std::size_t rows,
                                    std::size_t cols, double lo = 0.0,
                                    double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix<double> m(rows, cols);
  for (auto& v : m.data()) v = u(rng);
  return m;
}

inline std::vector<double> unit_vector(std::size_t dim, std::size_t axis) {
  std::vector<double> v(dim, 0.0);
  v[axis] = 1.0;
  return v;
}

}  // namespace sdiar::testing
