#pragma once

// Interpretation of a learned row-stochastic adjacency: column-mean
// centrality and an average-linkage dendrogram ordering for heatmaps.

#include <algorithm>
#include <filesystem>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "storecast/csv.hpp"
#include "storecast/error.hpp"
#include "storecast/tensor.hpp"

namespace storecast::graph {

/// Square matrix, row-major. A[i][j] is the weight receiver i gives source j.
struct Adjacency {
  std::size_t n = 0;
  std::vector<double> w;

  Adjacency() = default;
  Adjacency(std::size_t size, std::vector<double> values) : n(size), w(std::move(values)) {
    if (w.size() != n * n) fail(ErrorKind::ShapeMismatch, "adjacency is not square");
  }
  static Adjacency from_tensor(const ad::Tensor& t) {
    if (t.rank() != 2 || t.dim(0) != t.dim(1)) ad::shape_mismatch("adjacency", ad::Shape{t.dim(0), t.dim(0)}, t.shape());
    return Adjacency(t.dim(0), std::vector<double>(t.data().begin(), t.data().end()));
  }
  double operator()(std::size_t i, std::size_t j) const { return w[i * n + j]; }
};

/// centrality_j = (1/S) sum_i A[i][j]: the mean weight store j sends to receivers.
inline std::vector<double> centrality(const Adjacency& a) {
  std::vector<double> out(a.n, 0.0);
  for (std::size_t i = 0; i < a.n; ++i)
    for (std::size_t j = 0; j < a.n; ++j) out[j] += a(i, j);
  for (auto& v : out) v /= static_cast<double>(a.n);
  return out;
}

/// Store indices sorted by descending centrality (ties: lower index first).
inline std::vector<std::size_t> rank_by_centrality(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  return order;
}

/// Average-linkage agglomerative clustering on d(i,j) = 1 - M[i][j] / max
/// off-diagonal M, with M = (A + A^T) / 2. Returns the dendrogram leaf order;
/// each merge places the cluster holding the lower store index first, and
/// distance ties merge the pair with the lowest indices.
inline std::vector<std::size_t> cluster_reorder(const Adjacency& a) {
  const std::size_t n = a.n;
  if (n < 2) fail(ErrorKind::DomainError, "clustering needs at least two stores");
  double max_off = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) max_off = std::max(max_off, 0.5 * (a(i, j) + a(j, i)));

  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double m = 0.5 * (a(i, j) + a(j, i));
      dist[i * n + j] = max_off > 0.0 ? 1.0 - m / max_off : 1.0;
    }

  struct Cluster {
    std::vector<std::size_t> leaves;  // in dendrogram order
    std::size_t min_index;
  };
  std::vector<Cluster> clusters;
  for (std::size_t i = 0; i < n; ++i) clusters.push_back({{i}, i});
  // Pairwise average distance between live clusters, indexed by slot.
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d[i][j] = dist[i * n + j];
  std::vector<bool> alive(n, true);

  for (std::size_t merges = 0; merges + 1 < n; ++merges) {
    std::size_t bi = 0, bj = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (!alive[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!alive[j]) continue;
        const double dij = d[i][j];
        const auto lo = std::minmax(clusters[i].min_index, clusters[j].min_index);
        const auto best_lo = std::minmax(clusters[bi].min_index, clusters[bj].min_index);
        if (dij < best || (dij == best && lo < best_lo)) {
          best = dij;
          bi = i;
          bj = j;
        }
      }
    }
    Cluster& first = clusters[bi].min_index < clusters[bj].min_index ? clusters[bi] : clusters[bj];
    Cluster& second = &first == &clusters[bi] ? clusters[bj] : clusters[bi];
    const double ni = static_cast<double>(clusters[bi].leaves.size());
    const double nj = static_cast<double>(clusters[bj].leaves.size());
    for (std::size_t k = 0; k < n; ++k) {
      if (!alive[k] || k == bi || k == bj) continue;
      const double merged = (ni * d[bi][k] + nj * d[bj][k]) / (ni + nj);
      d[bi][k] = d[k][bi] = merged;
    }
    Cluster merged{first.leaves, std::min(first.min_index, second.min_index)};
    merged.leaves.insert(merged.leaves.end(), second.leaves.begin(), second.leaves.end());
    clusters[bi] = std::move(merged);
    alive[bj] = false;
  }
  for (std::size_t i = 0; i < n; ++i)
    if (alive[i]) return clusters[i].leaves;
  return {};
}

/// B[i][j] = A[order[i]][order[j]].
inline Adjacency reorder(const Adjacency& a, const std::vector<std::size_t>& order) {
  Adjacency out(a.n, std::vector<double>(a.n * a.n));
  for (std::size_t i = 0; i < a.n; ++i)
    for (std::size_t j = 0; j < a.n; ++j) out.w[i * a.n + j] = a(order[i], order[j]);
  return out;
}

struct AdjacencyAnalysis {
  Adjacency a;
  std::vector<int> store_ids;
  std::vector<double> centrality;
  std::vector<int> ranking;             // store ids, most central first
  std::vector<std::size_t> leaf_order;  // indices into store_ids
  Adjacency reordered;
};

inline AdjacencyAnalysis analyze(const Adjacency& a, const std::vector<int>& store_ids) {
  if (store_ids.size() != a.n) fail(ErrorKind::ShapeMismatch, "store id count differs from adjacency size");
  AdjacencyAnalysis out;
  out.a = a;
  out.store_ids = store_ids;
  out.centrality = centrality(a);
  for (auto idx : rank_by_centrality(out.centrality)) out.ranking.push_back(store_ids[idx]);
  out.leaf_order = a.n >= 2 ? cluster_reorder(a) : std::vector<std::size_t>(a.n, 0);
  out.reordered = reorder(a, out.leaf_order);
  return out;
}

/// Reordered matrix with store-id headers: first line "store,<ids>", then one
/// row per store in the same order.
inline std::string heatmap_csv(const AdjacencyAnalysis& an) {
  std::ostringstream out;
  out << "store";
  for (auto idx : an.leaf_order) out << ',' << an.store_ids[idx];
  out << '\n';
  for (std::size_t i = 0; i < an.leaf_order.size(); ++i) {
    out << an.store_ids[an.leaf_order[i]];
    for (std::size_t j = 0; j < an.leaf_order.size(); ++j) out << ',' << csv::format_double(an.reordered(i, j));
    out << '\n';
  }
  return out.str();
}

inline nlohmann::ordered_json centrality_json(const AdjacencyAnalysis& an) {
  nlohmann::ordered_json ranking = nlohmann::ordered_json::array();
  for (auto idx : rank_by_centrality(an.centrality)) {
    ranking.push_back({{"store", an.store_ids[idx]}, {"centrality", an.centrality[idx]}});
  }
  std::vector<int> leaves;
  for (auto idx : an.leaf_order) leaves.push_back(an.store_ids[idx]);
  std::vector<int> top(an.ranking.begin(), an.ranking.begin() + static_cast<long>(std::min<std::size_t>(5, an.ranking.size())));
  std::vector<int> bottom(an.ranking.end() - static_cast<long>(std::min<std::size_t>(5, an.ranking.size())), an.ranking.end());
  std::reverse(bottom.begin(), bottom.end());
  return {{"ranking", std::move(ranking)},
          {"top5", std::move(top)},
          {"bottom5", std::move(bottom)},
          {"leaf_order", std::move(leaves)}};
}

/// Writes `<stem>.csv` (heatmap) and `<stem>.json` (centrality) side by side.
inline void export_heatmap_data(const AdjacencyAnalysis& an, const std::filesystem::path& csv_path,
                                const std::filesystem::path& json_path) {
  csv::write_atomic(csv_path, heatmap_csv(an));
  csv::write_atomic(json_path, centrality_json(an).dump(2) + "\n");
}

struct HeatmapData {
  std::vector<int> store_ids;  // header order
  Adjacency matrix;
};

inline HeatmapData read_heatmap_csv(const std::filesystem::path& path) {
  const auto lines = csv::read_lines(path);
  if (lines.empty()) fail(ErrorKind::EmptyFile, path.string());
  const auto header = csv::split_line(lines[0]);
  HeatmapData out;
  for (std::size_t i = 1; i < header.size(); ++i) {
    long id = 0;
    if (!csv::parse_long(header[i], id)) fail(ErrorKind::MalformedRow, "bad heatmap header");
    out.store_ids.push_back(static_cast<int>(id));
  }
  const std::size_t n = out.store_ids.size();
  std::vector<double> values;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    if (lines[r].empty()) continue;
    const auto cells = csv::split_line(lines[r]);
    if (cells.size() != n + 1) fail(ErrorKind::MalformedRow, "heatmap row " + std::to_string(r + 1));
    for (std::size_t c = 1; c < cells.size(); ++c) values.push_back(csv::parse_double(cells[c]));
  }
  out.matrix = Adjacency(n, std::move(values));
  return out;
}

}  // namespace storecast::graph
