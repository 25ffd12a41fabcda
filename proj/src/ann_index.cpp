#include "annp/ann_index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <random>

#include "annp/binary_io.hpp"
#include "annp/error.hpp"
#include "annp/kernels.hpp"

namespace annp {

bool ranks_before(const ScoredNeighbor &a, const ScoredNeighbor &b) {
  if (a.score != b.score) return a.score > b.score;
  return a.phrase_id < b.phrase_id;
}

void EmbeddingTable::add(std::size_t id, std::span<const double> v) {
  if (ids.empty() && vectors.cols == 0) vectors = Matrix(0, v.size());
  if (v.size() != vectors.cols) {
    throw InvalidArgument("embedding " + std::to_string(id) + " has dimension " +
                          std::to_string(v.size()) + ", expected " +
                          std::to_string(vectors.cols));
  }
  ids.push_back(id);
  vectors.data.insert(vectors.data.end(), v.begin(), v.end());
  ++vectors.rows;
}

namespace {

void top_n(std::vector<ScoredNeighbor> &all, std::size_t n) {
  n = std::min(n, all.size());
  std::partial_sort(all.begin(), all.begin() + n, all.end(), ranks_before);
  all.resize(n);
}

std::uint64_t tree_seed(std::uint64_t seed, std::size_t tree) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tree)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

constexpr int kDirectionRetries = 4;

AnnIndex::Tree build_tree(const Matrix &vectors, std::size_t leaf_capacity,
                          std::uint64_t seed) {
  AnnIndex::Tree tree;
  tree.planes = Matrix(0, vectors.cols);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  struct Work {
    std::uint32_t node;
    std::vector<std::uint32_t> points;
  };
  std::vector<std::uint32_t> all(vectors.rows);
  std::iota(all.begin(), all.end(), 0u);
  tree.nodes.emplace_back();
  std::vector<Work> stack;
  stack.push_back({0, std::move(all)});
  std::vector<std::pair<double, std::uint32_t>> proj;
  std::vector<double> dir(vectors.cols);

  while (!stack.empty()) {
    Work w = std::move(stack.back());
    stack.pop_back();
    bool split = false;
    double offset = 0.0;
    if (w.points.size() > leaf_capacity) {
      for (int attempt = 0; attempt < kDirectionRetries && !split; ++attempt) {
        double norm = 0.0;
        for (double &x : dir) {
          x = normal(rng);
          norm += x * x;
        }
        norm = std::sqrt(norm);
        for (double &x : dir) x /= norm;
        proj.clear();
        for (std::uint32_t p : w.points) proj.emplace_back(dot(vectors.row(p), dir), p);
        std::sort(proj.begin(), proj.end());
        // Split at the gap closest to the median.
        const std::size_t mid = proj.size() / 2;
        for (std::size_t delta = 0; delta < proj.size() && !split; ++delta) {
          for (std::size_t cut : {mid + delta, mid - std::min(delta, mid)}) {
            if (cut == 0 || cut >= proj.size()) continue;
            if (proj[cut - 1].first < proj[cut].first) {
              offset = 0.5 * (proj[cut - 1].first + proj[cut].first);
              split = true;
              break;
            }
          }
        }
      }
    }
    if (!split) {
      // Leaf. Only points with identical projections on every retry can make
      // this exceed leaf_capacity.
      AnnIndex::Node &n = tree.nodes[w.node];
      n.leaf = true;
      n.begin = static_cast<std::uint32_t>(tree.items.size());
      std::sort(w.points.begin(), w.points.end());
      tree.items.insert(tree.items.end(), w.points.begin(), w.points.end());
      n.end = static_cast<std::uint32_t>(tree.items.size());
      continue;
    }
    std::vector<std::uint32_t> left, right;
    for (const auto &[p, idx] : proj) (p < offset ? left : right).push_back(idx);
    const auto l = static_cast<std::uint32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    AnnIndex::Node &n = tree.nodes[w.node];
    n.offset = offset;
    n.left = l;
    n.right = l + 1;
    n.plane = static_cast<std::uint32_t>(tree.planes.rows);
    tree.planes.data.insert(tree.planes.data.end(), dir.begin(), dir.end());
    ++tree.planes.rows;
    // Right pushed first so the left subtree is laid out first.
    stack.push_back({l + 1, std::move(right)});
    stack.push_back({l, std::move(left)});
  }
  return tree;
}

}  // namespace

std::vector<ScoredNeighbor> brute_force_query(const EmbeddingTable &entries,
                                              std::span<const double> query,
                                              std::size_t n) {
  if (entries.size() == 0) throw InvalidArgument("query on empty index");
  if (query.size() != entries.dim()) {
    throw InvalidArgument("query dimension " + std::to_string(query.size()) +
                          " != index dimension " + std::to_string(entries.dim()));
  }
  if (n == 0) throw InvalidArgument("n must be >= 1");
  std::vector<double> scores(entries.size());
  kernels::score_rows(entries.vectors, query, scores);
  std::vector<ScoredNeighbor> all(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) all[i] = {entries.ids[i], scores[i]};
  top_n(all, n);
  return all;
}

void AnnIndex::index_ids() {
  rows_.clear();
  auto put = [this](const EmbeddingTable &t, bool buffered) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (!rows_.emplace(t.ids[i], std::make_pair(buffered, i)).second) {
        throw InvalidArgument("duplicate phrase id " + std::to_string(t.ids[i]));
      }
    }
  };
  put(entries_, false);
  put(buffer_, true);
}

AnnIndex AnnIndex::build(EmbeddingTable entries, const IndexConfig &config) {
  if (entries.size() == 0) throw InvalidArgument("cannot build an empty index");
  if (config.num_trees == 0 || config.leaf_capacity == 0) {
    throw InvalidArgument("num_trees and leaf_capacity must be positive");
  }
  if (entries.vectors.rows != entries.ids.size() ||
      entries.vectors.size() != entries.ids.size() * entries.dim()) {
    throw InvalidArgument("embedding table is inconsistent");
  }
  if (!all_finite(entries.vectors)) {
    throw InvalidArgument("embeddings must be finite");
  }
  AnnIndex idx;
  idx.config_ = config;
  idx.entries_ = std::move(entries);
  idx.buffer_.vectors = Matrix(0, idx.entries_.dim());
  idx.index_ids();
  idx.trees_.resize(config.num_trees);
  const long long nt = static_cast<long long>(config.num_trees);
#pragma omp parallel for schedule(dynamic)
  for (long long t = 0; t < nt; ++t) {
    idx.trees_[t] = build_tree(idx.entries_.vectors, config.leaf_capacity,
                               tree_seed(config.seed, static_cast<std::size_t>(t)));
  }
  return idx;
}

bool AnnIndex::contains(std::size_t phrase_id) const {
  return rows_.contains(phrase_id);
}

std::span<const double> AnnIndex::vector_of(std::size_t phrase_id) const {
  auto it = rows_.find(phrase_id);
  if (it == rows_.end()) return {};
  const auto &[buffered, row] = it->second;
  return buffered ? buffer_.vectors.row(row) : entries_.vectors.row(row);
}

std::vector<ScoredNeighbor> AnnIndex::query(std::span<const double> q,
                                            std::size_t n) const {
  if (size() == 0) throw InvalidArgument("query on empty index");
  if (q.size() != dim()) {
    throw InvalidArgument("query dimension " + std::to_string(q.size()) +
                          " != index dimension " + std::to_string(dim()));
  }
  if (n == 0) throw InvalidArgument("n must be >= 1");

  const std::size_t budget = std::max(config_.effective_budget(), n);
  std::vector<char> seen(entries_.size(), 0);
  std::vector<std::uint32_t> candidates;
  auto take_leaf = [&](const Tree &tree, const Node &leaf) {
    for (std::uint32_t i = leaf.begin; i < leaf.end; ++i) {
      const std::uint32_t row = tree.items[i];
      if (!seen[row]) {
        seen[row] = 1;
        candidates.push_back(row);
      }
    }
  };
  struct Pending {
    double priority;
    std::uint32_t tree;
    std::uint32_t node;
    bool operator<(const Pending &o) const {
      if (priority != o.priority) return priority < o.priority;
      if (tree != o.tree) return tree > o.tree;
      return node > o.node;
    }
  };
  std::priority_queue<Pending> pending;
  auto descend = [&](std::uint32_t ti, std::uint32_t node, double priority) {
    const Tree &tree = trees_[ti];
    while (!tree.nodes[node].leaf) {
      const Node &nd = tree.nodes[node];
      const double margin = dot(tree.planes.row(nd.plane), q) - nd.offset;
      const bool go_right = margin >= 0.0;
      const std::uint32_t other = go_right ? nd.left : nd.right;
      pending.push({std::min(priority, -std::abs(margin)), ti, other});
      node = go_right ? nd.right : nd.left;
    }
    take_leaf(tree, tree.nodes[node]);
  };
  // Every tree contributes the leaf its hyperplane tests lead to.
  for (std::uint32_t t = 0; t < trees_.size(); ++t) descend(t, 0, 0.0);
  while (!pending.empty() && candidates.size() < budget) {
    const Pending p = pending.top();
    pending.pop();
    descend(p.tree, p.node, p.priority);
  }

  std::vector<ScoredNeighbor> scored;
  scored.reserve(candidates.size() + buffer_.size());
  for (std::uint32_t row : candidates) {
    scored.push_back({entries_.ids[row], dot(entries_.vectors.row(row), q)});
  }
  for (std::size_t i = 0; i < buffer_.size(); ++i) {
    scored.push_back({buffer_.ids[i], dot(buffer_.vectors.row(i), q)});
  }
  top_n(scored, n);
  return scored;
}

AnnIndex AnnIndex::rebuild(EmbeddingTable fresh, std::uint64_t seed) const {
  std::unordered_map<std::size_t, bool> fresh_ids;
  for (std::size_t id : fresh.ids) fresh_ids.emplace(id, true);
  for (const auto &[id, _] : rows_) {
    if (!fresh_ids.contains(id)) {
      throw InvalidArgument("rebuild: no fresh embedding for indexed id " +
                            std::to_string(id));
    }
  }
  IndexConfig cfg = config_;
  cfg.seed = seed;
  return build(std::move(fresh), cfg);
}

AnnIndex AnnIndex::with_appended(const EmbeddingTable &extra) const {
  AnnIndex out = *this;
  for (std::size_t i = 0; i < extra.size(); ++i) {
    out.buffer_.add(extra.ids[i], extra.vectors.row(i));
  }
  out.index_ids();
  return out;
}

std::vector<std::vector<std::size_t>> AnnIndex::leaf_partitions(
    std::size_t tree) const {
  const Tree &t = trees_.at(tree);
  std::vector<std::vector<std::size_t>> out;
  for (const Node &n : t.nodes) {
    if (!n.leaf) continue;
    std::vector<std::size_t> ids;
    for (std::uint32_t i = n.begin; i < n.end; ++i) ids.push_back(entries_.ids[t.items[i]]);
    std::sort(ids.begin(), ids.end());
    out.push_back(std::move(ids));
  }
  return out;
}

// File layout (little-endian):
//   "ANNPIDX1" | u32 version | u64 dim, num_trees, leaf_capacity, seed,
//   search_budget | u64 count, count x (u64 id, dim x f64) | u64 buffered,
//   buffered x (u64 id, dim x f64) | per tree: u64 nodes, u64 planes,
//   planes x dim x f64, u64 items, items x u32, nodes x node record
//   | u64 FNV-1a of everything before it.
// Node record: u8 leaf, f64 offset, u32 left, right, plane, begin, end.
namespace {
constexpr char kIndexMagic[8] = {'A', 'N', 'N', 'P', 'I', 'D', 'X', '1'};
constexpr std::uint32_t kIndexVersion = 1;

void write_table(BinaryWriter &w, const EmbeddingTable &t) {
  w.u64(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    w.u64(t.ids[i]);
    for (double v : t.vectors.row(i)) w.f64(v);
  }
}

EmbeddingTable read_table(BinaryReader &r, std::size_t dim) {
  EmbeddingTable t;
  t.vectors = Matrix(0, dim);
  const std::uint64_t count = r.count(8 + 8 * dim);
  std::vector<double> v(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t id = r.u64();
    for (double &x : v) x = r.f64();
    t.add(id, v);
  }
  return t;
}
}  // namespace

void AnnIndex::save(const std::filesystem::path &path) const {
  if (path.empty()) throw InvalidArgument("index path is empty");
  BinaryWriter w;
  w.bytes(kIndexMagic, sizeof kIndexMagic);
  w.u32(kIndexVersion);
  w.u64(dim());
  w.u64(config_.num_trees);
  w.u64(config_.leaf_capacity);
  w.u64(config_.seed);
  w.u64(config_.search_budget);
  write_table(w, entries_);
  write_table(w, buffer_);
  for (const Tree &t : trees_) {
    w.u64(t.nodes.size());
    w.u64(t.planes.rows);
    for (double v : t.planes.data) w.f64(v);
    w.u64(t.items.size());
    for (std::uint32_t i : t.items) w.u32(i);
    for (const Node &n : t.nodes) {
      w.u8(n.leaf ? 1 : 0);
      w.f64(n.offset);
      w.u32(n.left);
      w.u32(n.right);
      w.u32(n.plane);
      w.u32(n.begin);
      w.u32(n.end);
    }
  }
  w.write_with_checksum(path);
}

AnnIndex AnnIndex::load(const std::filesystem::path &path) {
  if (path.empty()) throw InvalidArgument("index path is empty");
  BinaryReader r = BinaryReader::open_with_checksum(path);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (!std::equal(magic, magic + 8, kIndexMagic)) r.fail("not an index file");
  if (r.u32() != kIndexVersion) r.fail("unsupported index version");
  const std::uint64_t dim = r.u64();
  IndexConfig cfg;
  cfg.num_trees = r.u64();
  cfg.leaf_capacity = r.u64();
  cfg.seed = r.u64();
  cfg.search_budget = r.u64();
  if (dim == 0 || cfg.num_trees == 0 || cfg.leaf_capacity == 0) {
    r.fail("invalid header");
  }
  AnnIndex idx;
  idx.config_ = cfg;
  idx.entries_ = read_table(r, dim);
  idx.buffer_ = read_table(r, dim);
  if (idx.entries_.size() == 0) r.fail("index has no entries");
  try {
    idx.index_ids();
  } catch (const InvalidArgument &e) {
    r.fail(e.what());
  }
  const std::size_t count = idx.entries_.size();
  for (std::size_t ti = 0; ti < cfg.num_trees; ++ti) {
    Tree t;
    const std::uint64_t nodes = r.count(29);
    const std::uint64_t planes = r.count(8 * dim);
    t.planes = Matrix(planes, dim);
    for (double &v : t.planes.data) v = r.f64();
    const std::uint64_t items = r.count(4);
    t.items.resize(items);
    for (auto &i : t.items) i = r.u32();
    t.nodes.resize(nodes);
    for (Node &n : t.nodes) {
      n.leaf = r.u8() != 0;
      n.offset = r.f64();
      n.left = r.u32();
      n.right = r.u32();
      n.plane = r.u32();
      n.begin = r.u32();
      n.end = r.u32();
      const bool ok = n.leaf ? (n.begin <= n.end && n.end <= items)
                             : (n.left < nodes && n.right < nodes && n.plane < planes);
      if (!ok) r.fail("tree node out of range");
    }
    // Each entry row must sit in exactly one leaf.
    std::vector<char> seen(count, 0);
    std::size_t covered = 0;
    for (const Node &n : t.nodes) {
      if (!n.leaf) continue;
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        if (t.items[i] >= count || seen[t.items[i]]) r.fail("tree leaves do not partition the entries");
        seen[t.items[i]] = 1;
        ++covered;
      }
    }
    if (covered != count || nodes == 0) r.fail("tree leaves do not partition the entries");
    idx.trees_.push_back(std::move(t));
  }
  r.expect_end();
  return idx;
}

}  // namespace annp
