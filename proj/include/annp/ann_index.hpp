#pragma once

// Random-projection forest for maximum-inner-product search.
//
// Every tree splits its points with a random unit direction at the median
// projection (left iff projection < offset) until a node holds at most
// leaf_capacity points. A query first descends every tree to its own leaf,
// then keeps expanding the unexplored branches with the smallest margin from
// one shared priority queue until `search_budget` distinct candidates have
// been collected. Candidates are rescored with the exact dot product, so
// returned scores are exact even though the candidate set is approximate.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "annp/matrix.hpp"

namespace annp {

struct IndexConfig {
  std::size_t num_trees = 32;
  std::size_t leaf_capacity = 16;
  std::uint64_t seed = 0;
  // Candidate cap per query; 0 selects num_trees * leaf_capacity * 10.
  std::size_t search_budget = 0;

  std::size_t effective_budget() const {
    return search_budget ? search_budget : num_trees * leaf_capacity * 10;
  }
};

struct ScoredNeighbor {
  std::size_t phrase_id = 0;
  double score = 0.0;

  friend bool operator==(const ScoredNeighbor &, const ScoredNeighbor &) = default;
};

// Descending score, ties by ascending id.
bool ranks_before(const ScoredNeighbor &a, const ScoredNeighbor &b);

struct EmbeddingTable {
  std::vector<std::size_t> ids;
  Matrix vectors;  // one row per id

  std::size_t size() const { return ids.size(); }
  std::size_t dim() const { return vectors.cols; }
  void add(std::size_t id, std::span<const double> v);
};

// Exact top-n by dot product. Throws InvalidArgument on an empty table or a
// dimension mismatch.
std::vector<ScoredNeighbor> brute_force_query(const EmbeddingTable &entries,
                                              std::span<const double> query,
                                              std::size_t n);

class AnnIndex {
 public:
  struct Node {
    // Internal nodes: children and hyperplane row; leaves: item range.
    bool leaf = false;
    double offset = 0.0;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    std::uint32_t plane = 0;
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
  };
  struct Tree {
    std::vector<Node> nodes;      // nodes[0] is the root
    Matrix planes;                // unit directions of internal nodes
    std::vector<std::uint32_t> items;  // entry rows, grouped by leaf
  };

  // Throws InvalidArgument on an empty table, duplicate ids or zero config.
  static AnnIndex build(EmbeddingTable entries, const IndexConfig &config);

  std::vector<ScoredNeighbor> query(std::span<const double> query,
                                    std::size_t n) const;
  bool contains(std::size_t phrase_id) const;
  // Cached vector of an indexed id; empty span when absent.
  std::span<const double> vector_of(std::size_t phrase_id) const;

  // Fresh index over `fresh`, which must cover every id indexed here.
  AnnIndex rebuild(EmbeddingTable fresh, std::uint64_t seed) const;
  // Copy with extra entries held in an exactly-searched buffer.
  AnnIndex with_appended(const EmbeddingTable &extra) const;

  const IndexConfig &config() const { return config_; }
  const EmbeddingTable &entries() const { return entries_; }
  const EmbeddingTable &buffer() const { return buffer_; }
  const std::vector<Tree> &trees() const { return trees_; }
  std::size_t size() const { return entries_.size() + buffer_.size(); }
  std::size_t dim() const { return entries_.dim(); }

  // Leaves of one tree as sorted phrase-id lists, in leaf order.
  std::vector<std::vector<std::size_t>> leaf_partitions(std::size_t tree) const;

  void save(const std::filesystem::path &path) const;
  // Throws ParseError on truncated, corrupted or inconsistent files.
  static AnnIndex load(const std::filesystem::path &path);

 private:
  void index_ids();

  IndexConfig config_;
  EmbeddingTable entries_;
  EmbeddingTable buffer_;
  std::vector<Tree> trees_;
  std::unordered_map<std::size_t, std::pair<bool, std::size_t>> rows_;
};

}  // namespace annp
