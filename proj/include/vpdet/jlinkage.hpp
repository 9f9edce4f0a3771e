#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "vpdet/geometry.hpp"

namespace vpdet {

/// Fixed-size set of hypothesis indices packed into 64-bit words.
class BitSet {
 public:
  BitSet() = default;
  explicit BitSet(std::size_t size) : size_(size), words_((size + 63) / 64, 0) {}

  std::size_t size() const { return size_; }
  bool test(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1u; }
  void set(std::size_t i) { words_[i / 64] |= std::uint64_t{1} << (i % 64); }
  std::size_t count() const;
  bool empty() const { return count() == 0; }

  BitSet& operator&=(const BitSet& other);
  friend BitSet operator&(BitSet a, const BitSet& b) { return a &= b; }
  bool operator==(const BitSet& other) const = default;

  static std::size_t intersection_count(const BitSet& a, const BitSet& b);
  static std::size_t union_count(const BitSet& a, const BitSet& b);

  std::span<const std::uint64_t> words() const { return words_; }

 private:
  std::size_t size_ = 0;
  std::vector<std::uint64_t> words_;
};

struct Hypothesis {
  HPointd vp;
  std::size_t first = 0;  // generating edge indices
  std::size_t second = 0;
};

/// N x M consensus table: bit (i, j) is set when edge i is consistent with
/// hypothesis j.
class PreferenceMatrix {
 public:
  PreferenceMatrix(std::size_t n_edges, std::size_t n_hypotheses);

  std::size_t n_edges() const { return rows_.size(); }
  std::size_t n_hypotheses() const { return n_hypotheses_; }

  bool test(std::size_t edge, std::size_t hypothesis) const { return rows_[edge].test(hypothesis); }
  void set(std::size_t edge, std::size_t hypothesis) { rows_[edge].set(hypothesis); }
  const BitSet& row(std::size_t edge) const { return rows_[edge]; }

  bool operator==(const PreferenceMatrix& other) const = default;

 private:
  std::size_t n_hypotheses_;
  std::vector<BitSet> rows_;
};

struct EdgeCluster {
  std::vector<std::size_t> members;  // ascending edge indices
  BitSet preference_set;             // AND of member rows
  std::optional<HPointd> vp;         // set by estimate_cluster_vp
  int merged_order = 0;              // merge step that formed it; 0 for untouched singletons
};

/// Draws M uniformly random distinct edge pairs and intersects their fitted
/// lines. Collinear pairs are redrawn.
std::vector<Hypothesis> sample_hypotheses(std::span<const Edge> edges, std::size_t count, std::uint64_t seed);

/// Bit (i, j) = d_rms(edge i, hypothesis j) <= phi. Rows are filled by up
/// to `workers` threads; the result does not depend on the worker count.
PreferenceMatrix build_preference_matrix(std::span<const Edge> edges, std::span<const Hypothesis> hypotheses,
                                         double phi, unsigned workers = 1);

/// (|A u B| - |A n B|) / |A u B|, with 1 for two empty sets.
double jaccard_distance(const BitSet& a, const BitSet& b);

/// Agglomerative clustering on Jaccard distance of preference sets. Always
/// merges the closest pair (ties: smallest (min member, min member) pair)
/// until every remaining pair is at distance 1. Clusters are returned
/// ordered by their smallest member.
std::vector<EdgeCluster> cluster(const PreferenceMatrix& preferences);

/// Sum of squared d_rms of the given edges to vp.
double cluster_objective(std::span<const Edge> edges, std::span<const std::size_t> members, const HPointd& vp);

/// VP of a cluster: best supported hypothesis, refined by compass-style
/// coordinate descent on cluster_objective.
HPointd estimate_cluster_vp(const EdgeCluster& cluster, std::span<const Edge> edges,
                            std::span<const Hypothesis> hypotheses);

/// Text dump of P for reproducibility audits: a header line
/// "vpdet-preference-matrix 1 N M phi seed" followed by N rows of 0/1.
void write_preference_matrix(const std::filesystem::path& path, const PreferenceMatrix& preferences, double phi,
                             std::uint64_t seed);

}  // namespace vpdet
