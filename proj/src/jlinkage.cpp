#include "vpdet/jlinkage.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <thread>

#include "vpdet/errors.hpp"

namespace vpdet {

std::size_t BitSet::count() const {
  std::size_t n = 0;
  for (std::uint64_t w : words_) n += std::popcount(w);
  return n;
}

BitSet& BitSet::operator&=(const BitSet& other) {
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= other.words_[i];
  return *this;
}

std::size_t BitSet::intersection_count(const BitSet& a, const BitSet& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.words_.size(); ++i) n += std::popcount(a.words_[i] & b.words_[i]);
  return n;
}

std::size_t BitSet::union_count(const BitSet& a, const BitSet& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.words_.size(); ++i) n += std::popcount(a.words_[i] | b.words_[i]);
  return n;
}

PreferenceMatrix::PreferenceMatrix(std::size_t n_edges, std::size_t n_hypotheses)
    : n_hypotheses_(n_hypotheses), rows_(n_edges, BitSet(n_hypotheses)) {}

std::vector<Hypothesis> sample_hypotheses(std::span<const Edge> edges, std::size_t count, std::uint64_t seed) {
  if (edges.size() < 2) throw InsufficientEdges("hypothesis sampling needs at least two edges");
  constexpr int kMaxRetries = 1000;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_first(0, edges.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_second(0, edges.size() - 2);

  std::vector<Hypothesis> hypotheses;
  hypotheses.reserve(count);
  while (hypotheses.size() < count) {
    bool found = false;
    for (int attempt = 0; attempt < kMaxRetries && !found; ++attempt) {
      const std::size_t i = pick_first(rng);
      std::size_t j = pick_second(rng);
      if (j >= i) ++j;
      try {
        hypotheses.push_back({intersect(edges[i].fitted_line(), edges[j].fitted_line()), i, j});
        found = true;
      } catch (const IdenticalLines&) {
      }
    }
    if (!found) throw DegenerateConfiguration("every sampled edge pair is collinear");
  }
  return hypotheses;
}

PreferenceMatrix build_preference_matrix(std::span<const Edge> edges, std::span<const Hypothesis> hypotheses,
                                         double phi, unsigned workers) {
  PreferenceMatrix matrix(edges.size(), hypotheses.size());
  auto fill_rows = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      for (std::size_t j = 0; j < hypotheses.size(); ++j)
        if (d_rms(edges[i], hypotheses[j].vp) <= phi) matrix.set(i, j);
  };

  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(edges.size())));
  if (workers <= 1) {
    fill_rows(0, edges.size());
    return matrix;
  }
  std::vector<std::thread> threads;
  const std::size_t chunk = (edges.size() + workers - 1) / workers;
  for (unsigned t = 0; t < workers; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(edges.size(), begin + chunk);
    if (begin < end) threads.emplace_back(fill_rows, begin, end);
  }
  for (auto& th : threads) th.join();
  return matrix;
}

double jaccard_distance(const BitSet& a, const BitSet& b) {
  const std::size_t u = BitSet::union_count(a, b);
  if (u == 0) return 1.0;
  const std::size_t i = BitSet::intersection_count(a, b);
  return double(u - i) / double(u);
}

std::vector<EdgeCluster> cluster(const PreferenceMatrix& preferences) {
  const std::size_t n = preferences.n_edges();
  // Slot s holds the cluster whose smallest member is s; merging q into p
  // (p < q) keeps that property, so slot order is member order.
  std::vector<EdgeCluster> slots(n);
  std::vector<bool> active(n, true);
  for (std::size_t i = 0; i < n; ++i) {
    slots[i].members = {i};
    slots[i].preference_set = preferences.row(i);
  }

  std::vector<std::uint32_t> inter(n * n, 0), uni(n * n, 0);
  auto refresh = [&](std::size_t p, std::size_t q) {
    const auto a = std::min(p, q), b = std::max(p, q);
    inter[a * n + b] = static_cast<std::uint32_t>(BitSet::intersection_count(slots[a].preference_set, slots[b].preference_set));
    uni[a * n + b] = static_cast<std::uint32_t>(BitSet::union_count(slots[a].preference_set, slots[b].preference_set));
  };
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = p + 1; q < n; ++q) refresh(p, q);

  int step = 0;
  for (;;) {
    std::size_t best_p = n, best_q = n;
    std::uint64_t best_num = 1, best_den = 1;  // distance as an exact fraction
    for (std::size_t p = 0; p < n; ++p) {
      if (!active[p]) continue;
      for (std::size_t q = p + 1; q < n; ++q) {
        if (!active[q]) continue;
        const std::uint64_t i = inter[p * n + q];
        if (i == 0) continue;  // distance 1
        const std::uint64_t u = uni[p * n + q];
        const std::uint64_t num = u - i;
        if (best_p == n || num * best_den < best_num * u) {
          best_p = p, best_q = q, best_num = num, best_den = u;
        }
      }
    }
    if (best_p == n) break;

    EdgeCluster& target = slots[best_p];
    EdgeCluster& absorbed = slots[best_q];
    std::vector<std::size_t> merged;
    merged.reserve(target.members.size() + absorbed.members.size());
    std::merge(target.members.begin(), target.members.end(), absorbed.members.begin(), absorbed.members.end(),
               std::back_inserter(merged));
    target.members = std::move(merged);
    target.preference_set &= absorbed.preference_set;
    target.merged_order = ++step;
    active[best_q] = false;
    absorbed = EdgeCluster{};
    for (std::size_t r = 0; r < n; ++r)
      if (active[r] && r != best_p) refresh(best_p, r);
  }

  std::vector<EdgeCluster> out;
  for (std::size_t s = 0; s < n; ++s)
    if (active[s]) out.push_back(std::move(slots[s]));
  return out;
}

double cluster_objective(std::span<const Edge> edges, std::span<const std::size_t> members, const HPointd& vp) {
  double total = 0.0;
  for (std::size_t m : members) {
    const double d = d_rms(edges[m], vp);
    total += d * d;
  }
  return total;
}

namespace {

constexpr double kPixelTolerance = 1e-6;
constexpr double kAngleTolerance = 1e-12;
constexpr int kMaxEvaluations = 200000;

HPointd refine_finite(const HPointd& start, double start_value, std::span<const Edge> edges,
                      std::span<const std::size_t> members) {
  Point2d best = start.euclidean();
  double best_value = start_value;

  Point2d centroid = Point2d::Zero();
  std::size_t n = 0;
  for (std::size_t m : members)
    for (const auto& p : edges[m].points()) {
      centroid += p;
      ++n;
    }
  centroid /= double(n);
  double step = std::max(1.0, 0.01 * (best - centroid).norm());

  const Point2d moves[4] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  int evaluations = 0;
  while (step >= kPixelTolerance && evaluations < kMaxEvaluations) {
    bool improved = false;
    for (const Point2d& m : moves) {
      const Point2d candidate = best + step * m;
      const double value = cluster_objective(edges, members, HPointd::finite(candidate));
      ++evaluations;
      if (value < best_value) {
        best = candidate;
        best_value = value;
        improved = true;
        break;
      }
    }
    if (!improved) step *= 0.5;
  }
  return HPointd::finite(best);
}

HPointd refine_ideal(const HPointd& start, double start_value, std::span<const Edge> edges,
                     std::span<const std::size_t> members) {
  const Point2d d = start.direction();
  double best = std::atan2(d.y(), d.x());
  double best_value = start_value;
  double step = 0.01;
  int evaluations = 0;
  while (step >= kAngleTolerance && evaluations < kMaxEvaluations) {
    bool improved = false;
    for (double sign : {1.0, -1.0}) {
      const double candidate = best + sign * step;
      const double value =
          cluster_objective(edges, members, HPointd::at_infinity(std::cos(candidate), std::sin(candidate)));
      ++evaluations;
      if (value < best_value) {
        best = candidate;
        best_value = value;
        improved = true;
        break;
      }
    }
    if (!improved) step *= 0.5;
  }
  return HPointd::at_infinity(std::cos(best), std::sin(best));
}

}  // namespace

HPointd estimate_cluster_vp(const EdgeCluster& cluster, std::span<const Edge> edges,
                            std::span<const Hypothesis> hypotheses) {
  if (cluster.members.size() < 2) throw TooFewMembers("a vanishing point needs at least two edges");

  std::optional<HPointd> init;
  double init_value = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < hypotheses.size(); ++j) {
    if (j >= cluster.preference_set.size() || !cluster.preference_set.test(j)) continue;
    const double value = cluster_objective(edges, cluster.members, hypotheses[j].vp);
    if (value < init_value) {
      init = hypotheses[j].vp;
      init_value = value;
    }
  }
  if (!init) {
    const auto& a = edges[cluster.members[0]];
    const auto& b = edges[cluster.members[1]];
    init = intersect(a.fitted_line(), b.fitted_line());
    init_value = cluster_objective(edges, cluster.members, *init);
  }
  return init->is_ideal() ? refine_ideal(*init, init_value, edges, cluster.members)
                          : refine_finite(*init, init_value, edges, cluster.members);
}

void write_preference_matrix(const std::filesystem::path& path, const PreferenceMatrix& preferences, double phi,
                             std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "vpdet-preference-matrix 1 " << preferences.n_edges() << ' ' << preferences.n_hypotheses() << ' '
      << std::setprecision(17) << phi << ' ' << seed << '\n';
  std::string line;
  for (std::size_t i = 0; i < preferences.n_edges(); ++i) {
    line.assign(preferences.n_hypotheses(), '0');
    for (std::size_t j = 0; j < preferences.n_hypotheses(); ++j)
      if (preferences.test(i, j)) line[j] = '1';
    out << line << '\n';
  }
}

}  // namespace vpdet
