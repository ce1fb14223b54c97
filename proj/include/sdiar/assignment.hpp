#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "sdiar/matrix.hpp"

namespace sdiar {

/// Marks a local speaker left without a centroid by the assignment.
inline constexpr std::size_t kNewSpeaker = std::numeric_limits<std::size_t>::max();

/// Row -> column (or kNewSpeaker) for each row of a cost matrix.
using Mapping = std::vector<std::size_t>;

/// Two mapping costs closer than this (relative to max(1, |cost|)) are ties.
inline constexpr double kTieTolerance = 1e-9;

inline bool cost_within_tie(double candidate, double best) {
  return candidate <= best + kTieTolerance * std::max(1.0, std::abs(best));
}

/// Sum of cost(k, m(k)) over matched rows, accumulated in row order.
inline double mapping_cost(const Matrix<double>& cost, const Mapping& m) {
  double total = 0.0;
  for (std::size_t k = 0; k < m.size(); ++k)
    if (m[k] != kNewSpeaker) total += cost(k, m[k]);
  return total;
}

namespace detail {

// Shortest augmenting path Hungarian method (Kuhn-Munkres with potentials).
// `rows` and `cols` index into `cost`; requires rows.size() <= cols.size().
// Returns, for each entry of `rows`, the position in `cols` it is matched to.
inline std::vector<std::size_t> hungarian_wide(
    const Matrix<double>& cost, const std::vector<std::size_t>& rows,
    const std::vector<std::size_t>& cols) {
  const std::size_t n = rows.size();
  const std::size_t m = cols.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based; column 0 is the virtual source.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> match(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(rows[i0 - 1], cols[j - 1]) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n, 0);
  for (std::size_t j = 1; j <= m; ++j)
    if (match[j] != 0) row_to_col[match[j] - 1] = j - 1;
  return row_to_col;
}

// Minimum cost of a maximum-cardinality matching between `rows` and `cols`.
inline double min_matching_cost(const Matrix<double>& cost,
                                const std::vector<std::size_t>& rows,
                                const std::vector<std::size_t>& cols) {
  if (rows.empty() || cols.empty()) return 0.0;
  double total = 0.0;
  if (rows.size() <= cols.size()) {
    const auto pick = hungarian_wide(cost, rows, cols);
    for (std::size_t i = 0; i < rows.size(); ++i)
      total += cost(rows[i], cols[pick[i]]);
    return total;
  }
  Matrix<double> transposed(cost.cols(), cost.rows());
  for (std::size_t r = 0; r < cost.rows(); ++r)
    for (std::size_t c = 0; c < cost.cols(); ++c) transposed(c, r) = cost(r, c);
  const auto pick = hungarian_wide(transposed, cols, rows);
  for (std::size_t j = 0; j < cols.size(); ++j)
    total += cost(rows[pick[j]], cols[j]);
  return total;
}

}  // namespace detail

/// Each row to its cheapest column; ties go to the lowest column index.
/// Several rows may share a column.
inline Mapping naive_assign(const Matrix<double>& cost) {
  Mapping m(cost.rows(), kNewSpeaker);
  if (cost.cols() == 0) return m;
  for (std::size_t k = 0; k < cost.rows(); ++k) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < cost.cols(); ++j)
      if (cost(k, j) < cost(k, best)) best = j;
    m[k] = best;
  }
  return m;
}

/// Minimum-cost injective mapping of rows to columns (cannot-link: no two rows
/// share a column). When there are more rows than columns every column is
/// used and the leftover rows are kNewSpeaker. Among all minimisers (up to
/// kTieTolerance) the lexicographically smallest mapping is returned, with
/// kNewSpeaker ordered after every column.
inline Mapping constrained_assign(const Matrix<double>& cost) {
  const std::size_t n = cost.rows();
  const std::size_t m = cost.cols();
  Mapping out(n, kNewSpeaker);
  if (n == 0 || m == 0) return out;

  std::vector<std::size_t> all_rows(n), free_cols(m);
  for (std::size_t i = 0; i < n; ++i) all_rows[i] = i;
  for (std::size_t j = 0; j < m; ++j) free_cols[j] = j;
  const double optimum = detail::min_matching_cost(cost, all_rows, free_cols);

  // Fix rows one at a time to the smallest choice that keeps the optimum
  // reachable.
  double fixed = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::vector<std::size_t> rest(all_rows.begin() + k + 1, all_rows.end());
    // Row k may stay unmatched only if the later rows can still cover every
    // free column.
    const bool must_match = rest.size() < free_cols.size();
    std::size_t chosen = free_cols.size();
    std::size_t cheapest = free_cols.size();
    double cheapest_cost = std::numeric_limits<double>::infinity();
    for (std::size_t idx = 0; idx < free_cols.size(); ++idx) {
      std::vector<std::size_t> cols = free_cols;
      cols.erase(cols.begin() + static_cast<std::ptrdiff_t>(idx));
      const double candidate = fixed + cost(k, free_cols[idx]) +
                               detail::min_matching_cost(cost, rest, cols);
      if (cost_within_tie(candidate, optimum)) {
        chosen = idx;
        break;
      }
      if (candidate < cheapest_cost) {
        cheapest_cost = candidate;
        cheapest = idx;
      }
    }
    // Rounding can leave no candidate inside the tie band; fall back to the
    // cheapest one when a column is mandatory.
    if (chosen == free_cols.size() && must_match) chosen = cheapest;
    if (chosen == free_cols.size()) continue;
    out[k] = free_cols[chosen];
    fixed += cost(k, free_cols[chosen]);
    free_cols.erase(free_cols.begin() + static_cast<std::ptrdiff_t>(chosen));
  }
  return out;
}

}  // namespace sdiar
