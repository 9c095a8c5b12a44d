#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ntk/error.hpp"

namespace ntk {

enum class GazeAnnotation { none, blink, saccade };

struct GazeSample {
  double t = 0.0;  // seconds
  double x = 0.0;  // screen pixels
  double y = 0.0;
  GazeAnnotation annotation = GazeAnnotation::none;
};

enum class GazeLabel { fixation, blink, non_fixation };

/// Per-bin usability at the signal rate. flags[i] = true means every gaze
/// sample in bin i was a fixation; blink[i] marks bins whose only
/// non-fixation content was blinks (excluded from gaze-shift statistics).
struct FixationMask {
  double rate_hz = 0.0;
  std::vector<bool> flags;
  std::vector<bool> blink;
  std::string video_id;

  Eigen::Index n() const { return static_cast<Eigen::Index>(flags.size()); }
};

namespace detail {

struct PointGrid {
  double cell = 0.0, min_x = 0.0, min_y = 0.0;
  std::int64_t n_cols = 0;
  std::unordered_map<std::int64_t, std::vector<int>> cells;
  const std::vector<std::pair<double, double>>* pts = nullptr;

  std::int64_t key_of(double x, double y) const {
    const auto cx = static_cast<std::int64_t>(std::floor((x - min_x) / cell));
    const auto cy = static_cast<std::int64_t>(std::floor((y - min_y) / cell));
    return cx * n_cols + cy;
  }

  static PointGrid build(const std::vector<std::pair<double, double>>& pts, double eps) {
    PointGrid g;
    g.pts = &pts;
    // Slightly under eps/sqrt(2): same-cell pairs stay within eps even
    // after floating-point rounding, so cell-level shortcuts never
    // disagree with an exact pairwise check.
    g.cell = eps * 0.7071067;
    double max_x = -std::numeric_limits<double>::infinity();
    double max_y = max_x;
    g.min_x = g.min_y = std::numeric_limits<double>::infinity();
    for (const auto& [x, y] : pts) {
      g.min_x = std::min(g.min_x, x);
      g.min_y = std::min(g.min_y, y);
      max_x = std::max(max_x, x);
      max_y = std::max(max_y, y);
    }
    g.n_cols = static_cast<std::int64_t>(std::floor((max_y - g.min_y) / g.cell)) + 8;
    for (int i = 0; i < static_cast<int>(pts.size()); ++i)
      g.cells[g.key_of(pts[i].first, pts[i].second)].push_back(i);
    return g;
  }

  /// Visits the 5x5 cell block around p (covers every point within eps).
  template <typename Fn>
  void for_neighbor_cells(const std::pair<double, double>& p, Fn&& fn) const {
    const auto cx = static_cast<std::int64_t>(std::floor((p.first - min_x) / cell));
    const auto cy = static_cast<std::int64_t>(std::floor((p.second - min_y) / cell));
    for (std::int64_t dx = -2; dx <= 2; ++dx)
      for (std::int64_t dy = -2; dy <= 2; ++dy) {
        const std::int64_t key = (cx + dx) * n_cols + (cy + dy);
        const auto it = cells.find(key);
        if (it == cells.end()) continue;
        // Cell bounds, for whole-cell accept/reject without point checks.
        const double x0 = min_x + static_cast<double>(cx + dx) * cell;
        const double y0 = min_y + static_cast<double>(cy + dy) * cell;
        fn(key, it->second, x0, y0);
      }
  }

  static double near_sq(const std::pair<double, double>& p, double x0, double y0, double cell) {
    const double dx = std::max({0.0, x0 - p.first, p.first - (x0 + cell)});
    const double dy = std::max({0.0, y0 - p.second, p.second - (y0 + cell)});
    return dx * dx + dy * dy;
  }

  static double far_sq(const std::pair<double, double>& p, double x0, double y0, double cell) {
    const double dx = std::max(std::abs(p.first - x0), std::abs(p.first - (x0 + cell)));
    const double dy = std::max(std::abs(p.second - y0), std::abs(p.second - (y0 + cell)));
    return dx * dx + dy * dy;
  }
};

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) {
    for (int i = 0; i < n; ++i) parent[static_cast<std::size_t>(i)] = i;
  }
  int find(int a) {
    while (parent[static_cast<std::size_t>(a)] != a) {
      parent[static_cast<std::size_t>(a)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
      a = parent[static_cast<std::size_t>(a)];
    }
    return a;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
};

}  // namespace detail

/// DBSCAN with Euclidean eps-neighborhoods (inclusive; a point counts as
/// its own neighbor). Returns one label per point, -1 for noise. Cluster
/// ids are ordered by each cluster's lowest core-point index and border
/// points join the lowest-id cluster owning a core within eps, which
/// makes the output identical to the classic index-ordered seed scan.
inline std::vector<int> dbscan(const std::vector<std::pair<double, double>>& points, double eps,
                               int min_pts) {
  require(!points.empty(), errc::empty_input, "dbscan needs at least one point");
  require(eps > 0.0, errc::config_invalid, "eps must be positive");
  require(min_pts >= 1, errc::config_invalid, "min_pts must be positive");

  const int n = static_cast<int>(points.size());
  const double eps_sq = eps * eps;
  // Whole-cell accept/reject margins. Decisions inside the ambiguous band
  // fall through to per-point checks using the same expression a naive
  // pairwise scan evaluates, so shortcuts never change the result.
  const double accept_sq = eps_sq * (1.0 - 1e-12);
  const double reject_sq = eps_sq * (1.0 + 1e-12);
  const detail::PointGrid grid = detail::PointGrid::build(points, eps);

  std::vector<char> core(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    int count = 0;
    grid.for_neighbor_cells(points[static_cast<std::size_t>(i)],
                            [&](std::int64_t, const std::vector<int>& cell, double x0,
                                double y0) {
      if (count >= min_pts) return;
      const auto& p = points[static_cast<std::size_t>(i)];
      if (detail::PointGrid::near_sq(p, x0, y0, grid.cell) > reject_sq) return;
      if (detail::PointGrid::far_sq(p, x0, y0, grid.cell) <= accept_sq) {
        count += static_cast<int>(cell.size());
        return;
      }
      for (const int j : cell) {
        const double dx = p.first - points[static_cast<std::size_t>(j)].first;
        const double dy = p.second - points[static_cast<std::size_t>(j)].second;
        if (dx * dx + dy * dy <= eps_sq && ++count >= min_pts) return;
      }
    });
    core[static_cast<std::size_t>(i)] = count >= min_pts ? 1 : 0;
  }

  // Density-connect cores (clusters are determined by core-core links).
  // Cores sharing a cell are always mutual neighbors, so each cell's cores
  // are united up front; cross-cell scans can then stop at the first hit
  // because one link connects the whole cell component.
  detail::UnionFind uf(n);
  std::unordered_map<std::int64_t, int> first_core;
  for (const auto& [key, cell] : grid.cells) {
    int rep = -1;
    for (const int j : cell) {
      if (!core[static_cast<std::size_t>(j)]) continue;
      if (rep < 0)
        rep = j;
      else
        uf.unite(rep, j);
    }
    if (rep >= 0) first_core.emplace(key, rep);
  }
  for (int i = 0; i < n; ++i) {
    if (!core[static_cast<std::size_t>(i)]) continue;
    const auto& p = points[static_cast<std::size_t>(i)];
    grid.for_neighbor_cells(
        p, [&](std::int64_t key, const std::vector<int>& cell, double x0, double y0) {
          const auto fc = first_core.find(key);
          if (fc == first_core.end()) return;
          if (uf.find(fc->second) == uf.find(i)) return;
          if (detail::PointGrid::near_sq(p, x0, y0, grid.cell) > reject_sq) return;
          if (detail::PointGrid::far_sq(p, x0, y0, grid.cell) <= accept_sq) {
            uf.unite(i, fc->second);
            return;
          }
          for (const int j : cell) {
            if (!core[static_cast<std::size_t>(j)]) continue;
            const double dx = p.first - points[static_cast<std::size_t>(j)].first;
            const double dy = p.second - points[static_cast<std::size_t>(j)].second;
            if (dx * dx + dy * dy <= eps_sq) {
              uf.unite(i, j);
              return;
            }
          }
        });
  }

  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  std::vector<int> cluster_of_root(static_cast<std::size_t>(n), -1);
  int next_cluster = 0;
  for (int i = 0; i < n; ++i) {
    if (!core[static_cast<std::size_t>(i)]) continue;
    const int root = uf.find(i);
    if (cluster_of_root[static_cast<std::size_t>(root)] < 0)
      cluster_of_root[static_cast<std::size_t>(root)] = next_cluster++;
    labels[static_cast<std::size_t>(i)] = cluster_of_root[static_cast<std::size_t>(root)];
  }

  for (int i = 0; i < n; ++i) {
    if (core[static_cast<std::size_t>(i)]) continue;
    const auto& p = points[static_cast<std::size_t>(i)];
    int best = std::numeric_limits<int>::max();
    grid.for_neighbor_cells(
        p, [&](std::int64_t, const std::vector<int>& cell, double x0, double y0) {
          if (detail::PointGrid::near_sq(p, x0, y0, grid.cell) > reject_sq) return;
          const bool whole = detail::PointGrid::far_sq(p, x0, y0, grid.cell) <= accept_sq;
          for (const int j : cell) {
            if (!core[static_cast<std::size_t>(j)]) continue;
            const int cl = labels[static_cast<std::size_t>(j)];
            if (cl >= best) continue;
            if (!whole) {
              const double dx = p.first - points[static_cast<std::size_t>(j)].first;
              const double dy = p.second - points[static_cast<std::size_t>(j)].second;
              if (dx * dx + dy * dy > eps_sq) continue;
            }
            best = cl;
          }
        });
    if (best != std::numeric_limits<int>::max()) labels[static_cast<std::size_t>(i)] = best;
  }
  return labels;
}

struct FixationLabels {
  std::vector<GazeLabel> labels;
  bool no_cluster = false;  // everything came back noise
};

/// Clusters non-blink gaze positions, declares the largest cluster the
/// fixation cluster, and labels samples. Blink-annotated samples skip
/// clustering (their coordinates are sentinels) and stay blink; saccade
/// annotations force non_fixation regardless of cluster membership.
inline FixationLabels detect_fixation_mask(const std::vector<GazeSample>& gaze, double eps,
                                           int min_pts) {
  require(!gaze.empty(), errc::empty_input, "no gaze samples");
  for (std::size_t i = 0; i < gaze.size(); ++i) {
    if (i > 0)
      require(gaze[i].t > gaze[i - 1].t, errc::format_error,
              "gaze timestamps must be strictly increasing");
    if (gaze[i].annotation != GazeAnnotation::blink)
      require(std::isfinite(gaze[i].x) && std::isfinite(gaze[i].y), errc::format_error,
              "non-finite gaze coordinates on a non-blink sample");
  }

  std::vector<std::pair<double, double>> pts;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < gaze.size(); ++i) {
    if (gaze[i].annotation == GazeAnnotation::blink) continue;
    pts.emplace_back(gaze[i].x, gaze[i].y);
    idx.push_back(i);
  }

  FixationLabels out;
  out.labels.assign(gaze.size(), GazeLabel::non_fixation);
  for (std::size_t i = 0; i < gaze.size(); ++i)
    if (gaze[i].annotation == GazeAnnotation::blink) out.labels[i] = GazeLabel::blink;

  if (pts.empty()) {
    out.no_cluster = true;
    return out;
  }

  const std::vector<int> cl = dbscan(pts, eps, min_pts);
  int n_clusters = 0;
  for (const int c : cl) n_clusters = std::max(n_clusters, c + 1);
  if (n_clusters == 0) {
    out.no_cluster = true;
    return out;
  }

  std::vector<std::size_t> sizes(static_cast<std::size_t>(n_clusters), 0);
  for (const int c : cl)
    if (c >= 0) ++sizes[static_cast<std::size_t>(c)];
  const int fixation_cluster = static_cast<int>(
      std::max_element(sizes.begin(), sizes.end()) - sizes.begin());  // tie -> lowest id

  for (std::size_t k = 0; k < pts.size(); ++k) {
    const std::size_t i = idx[k];
    if (gaze[i].annotation == GazeAnnotation::saccade) continue;  // stays non_fixation
    if (cl[k] == fixation_cluster) out.labels[i] = GazeLabel::fixation;
  }
  return out;
}

/// Converts gaze-rate labels to a signal-rate mask. A bin is usable only
/// if every gaze sample inside it is a fixation; empty bins inherit the
/// previous bin's state (bin 0 falls back to unusable).
inline FixationMask mask_to_signal_rate(const std::vector<GazeLabel>& labels, double gaze_rate_hz,
                                        double target_rate_hz, Eigen::Index target_len,
                                        std::string video_id = {}) {
  require(!labels.empty(), errc::no_gaze_data, "no gaze labels to bin");
  require(gaze_rate_hz > 0.0 && target_rate_hz > 0.0, errc::config_invalid,
          "rates must be positive");
  require(target_len >= 1, errc::config_invalid, "target length must be at least 1");

  enum class Bin : char { empty, fix, blink, shift };
  std::vector<Bin> bins(static_cast<std::size_t>(target_len), Bin::empty);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto b = static_cast<Eigen::Index>(std::floor(static_cast<double>(i) * target_rate_hz /
                                                        gaze_rate_hz));
    if (b < 0 || b >= target_len) continue;
    Bin& st = bins[static_cast<std::size_t>(b)];
    switch (labels[i]) {
      case GazeLabel::fixation:
        if (st == Bin::empty) st = Bin::fix;
        break;
      case GazeLabel::blink:
        if (st != Bin::shift) st = Bin::blink;
        break;
      case GazeLabel::non_fixation:
        st = Bin::shift;
        break;
    }
  }

  FixationMask mask;
  mask.rate_hz = target_rate_hz;
  mask.video_id = std::move(video_id);
  mask.flags.resize(static_cast<std::size_t>(target_len));
  mask.blink.resize(static_cast<std::size_t>(target_len));
  Bin prev = Bin::shift;  // an empty leading bin is conservatively unusable
  for (std::size_t b = 0; b < bins.size(); ++b) {
    const Bin st = bins[b] == Bin::empty ? prev : bins[b];
    mask.flags[b] = st == Bin::fix;
    mask.blink[b] = st == Bin::blink;
    prev = st;
  }
  return mask;
}

/// Dilates every unusable run by round(margin_s * rate) bins on each side.
inline FixationMask apply_margin(const FixationMask& mask, double margin_s = 0.5) {
  require(margin_s >= 0.0, errc::config_invalid, "margin must be nonnegative");
  const auto margin = static_cast<Eigen::Index>(std::llround(margin_s * mask.rate_hz));
  FixationMask out = mask;
  if (margin == 0 || mask.flags.empty()) return out;

  const auto n = static_cast<Eigen::Index>(mask.flags.size());
  Eigen::Index dist = n;  // distance to the nearest false on the left
  for (Eigen::Index i = 0; i < n; ++i) {
    dist = mask.flags[static_cast<std::size_t>(i)] ? dist + 1 : 0;
    if (dist <= margin) out.flags[static_cast<std::size_t>(i)] = false;
  }
  dist = n;
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    dist = mask.flags[static_cast<std::size_t>(i)] ? dist + 1 : 0;
    if (dist <= margin) out.flags[static_cast<std::size_t>(i)] = false;
  }
  return out;
}

/// Mean and population standard deviation of the per-mask gaze-shift
/// percentage (unusable bins that are not blink bins).
inline std::pair<double, double> gaze_shift_stats(const std::vector<FixationMask>& masks) {
  require(!masks.empty(), errc::empty_input, "no masks");
  std::vector<double> pct;
  pct.reserve(masks.size());
  for (const FixationMask& m : masks) {
    require(!m.flags.empty(), errc::empty_input, "empty mask");
    std::size_t shifts = 0;
    for (std::size_t i = 0; i < m.flags.size(); ++i)
      if (!m.flags[i] && !m.blink[i]) ++shifts;
    pct.push_back(100.0 * static_cast<double>(shifts) / static_cast<double>(m.flags.size()));
  }
  const double mean = std::accumulate(pct.begin(), pct.end(), 0.0) / static_cast<double>(pct.size());
  double var = 0.0;
  for (const double p : pct) var += (p - mean) * (p - mean);
  var /= static_cast<double>(pct.size());
  return {mean, std::sqrt(var)};
}

}  // namespace ntk
