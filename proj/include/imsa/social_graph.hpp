#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "imsa/rng.hpp"

namespace imsa {

// Social ties between secondary users.  An edge records per-direction tie
// strengths in [0,1].  User n draws information from contact k only when
//   strength(n,k) >= eta_n   (n only trusts close contacts) and
//   strength(k,n) >= phi_k   (k only answers close contacts),
// which yields the directed neighborhood used by the imitation engine.  The
// mutual version (both directions pass) is the symmetric structure behind
// clustering and connectivity.
class SocialGraph {
 public:
  explicit SocialGraph(int n) : eta_(n, 0.0), phi_(n, 0.0), tie_(n) {
    if (n < 1) throw std::invalid_argument("graph: need at least one user");
  }

  int size() const { return static_cast<int>(tie_.size()); }

  void add_edge(int u, int v, double strength_uv = 1.0, double strength_vu = 1.0) {
    check_user(u);
    check_user(v);
    if (u == v) throw std::invalid_argument("graph: self edges are not allowed");
    if (!in_unit(strength_uv) || !in_unit(strength_vu))
      throw std::invalid_argument("graph: tie strengths must lie in [0,1]");
    tie_[u][v] = strength_uv;
    tie_[v][u] = strength_vu;
  }

  void set_thresholds(int u, double eta, double phi) {
    check_user(u);
    if (!in_unit(eta) || !in_unit(phi))
      throw std::invalid_argument("graph: thresholds must lie in [0,1]");
    eta_[u] = eta;
    phi_[u] = phi;
  }

  bool has_edge(int u, int v) const {
    check_user(u);
    check_user(v);
    return tie_[u].count(v) > 0;
  }

  double strength(int u, int v) const {
    check_user(u);
    check_user(v);
    const auto it = tie_[u].find(v);
    return it == tie_[u].end() ? 0.0 : it->second;
  }

  double eta(int u) const { check_user(u); return eta_[u]; }
  double phi(int u) const { check_user(u); return phi_[u]; }

  bool shares_with(int k, int n) const {  // k answers n's enquiry
    if (k == n || !has_edge(n, k)) return false;
    return strength(n, k) >= eta_[n] && strength(k, n) >= phi_[k];
  }

  // Contacts user n can draw information from (sorted).
  std::vector<int> neighborhood(int n) const {
    check_user(n);
    std::vector<int> out;
    for (const auto& [k, s] : tie_[n]) {
      (void)s;
      if (shares_with(k, n)) out.push_back(k);
    }
    return out;  // std::map iteration is already sorted
  }

  // Symmetric adjacency where both directions pass the threshold tests.
  std::vector<std::vector<int>> effective_adjacency() const {
    std::vector<std::vector<int>> adj(size());
    for (int n = 0; n < size(); ++n) {
      for (const auto& [k, s] : tie_[n]) {
        (void)s;
        if (k > n && shares_with(k, n) && shares_with(n, k)) {
          adj[n].push_back(k);
          adj[k].push_back(n);
        }
      }
    }
    for (auto& row : adj) std::sort(row.begin(), row.end());
    return adj;
  }

 private:
  static bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }
  void check_user(int u) const {
    if (u < 0 || u >= size()) throw std::invalid_argument("graph: user id out of range");
  }

  std::vector<double> eta_;
  std::vector<double> phi_;
  std::vector<std::map<int, double>> tie_;
};

// Partition of the users into information-sharing groups, plus which groups
// exchange information with each other.  comm includes the diagonal: a group
// always talks to itself.
struct ClusterGraph {
  std::vector<std::vector<int>> members;       // sorted user ids per cluster
  std::vector<int> cluster_of;                 // user -> cluster index
  std::vector<std::vector<std::uint8_t>> comm; // comm[k][h] = 1 iff k and h share

  int num_clusters() const { return static_cast<int>(members.size()); }

  std::vector<int> sizes() const {
    std::vector<int> z(members.size());
    for (std::size_t k = 0; k < members.size(); ++k) z[k] = static_cast<int>(members[k].size());
    return z;
  }

  std::vector<int> comm_neighbors(int k) const {  // excluding k itself
    std::vector<int> out;
    for (int h = 0; h < num_clusters(); ++h)
      if (h != k && comm[k][h]) out.push_back(h);
    return out;
  }
};

struct ClusterOptions {
  // Re-scan a seed's candidate list until no further member joins.  The join
  // test only involves the seed and the candidate, so this cannot change the
  // result; the flag exists to make that check cheap to run.
  bool rescan_until_closure = false;
  // Repeatedly re-run the merge on the cluster graph itself until the number
  // of clusters stabilizes.
  bool remerge_fixed_point = false;
};

namespace detail {

// a \ {da} == b \ {db} for sorted vectors.
inline bool equal_minus(const std::vector<int>& a, int da, const std::vector<int>& b, int db) {
  std::size_t i = 0, j = 0;
  while (true) {
    while (i < a.size() && a[i] == da) ++i;
    while (j < b.size() && b[j] == db) ++j;
    if (i == a.size() || j == b.size()) break;
    if (a[i] != b[j]) return false;
    ++i;
    ++j;
  }
  while (i < a.size() && a[i] == da) ++i;
  while (j < b.size() && b[j] == db) ++j;
  return i == a.size() && j == b.size();
}

// Greedy merge pass over an arbitrary symmetric adjacency; returns the
// partition as member lists of node ids.
inline std::vector<std::vector<int>> greedy_partition(const std::vector<std::vector<int>>& adj,
                                                      Rng& rng, bool rescan) {
  const int n = static_cast<int>(adj.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<char> merged(n, 0);
  std::vector<std::vector<int>> groups;
  for (const int seed : order) {
    if (merged[seed]) continue;
    merged[seed] = 1;
    std::vector<int> group{seed};
    const std::vector<int> candidates = adj[seed];  // frozen at loop entry
    bool grew = true;
    while (grew) {
      grew = false;
      for (const int m : candidates) {
        if (merged[m]) continue;
        if (equal_minus(adj[seed], m, adj[m], seed)) {
          merged[m] = 1;
          group.push_back(m);
          grew = true;
        }
      }
      if (!rescan) break;
    }
    std::sort(group.begin(), group.end());
    groups.push_back(std::move(group));
  }
  return groups;
}

}  // namespace detail

// Group users that share with each other and with identical outside contact
// sets.  Seeds are visited in random order; a candidate joins the seed's
// group when deleting each other from their contact sets leaves equal sets.
// A second pass links any two groups containing a sharing pair.
inline ClusterGraph build_cluster_graph(const SocialGraph& g, Rng& rng,
                                        ClusterOptions opts = {}) {
  const auto adj = g.effective_adjacency();
  auto groups = detail::greedy_partition(adj, rng, opts.rescan_until_closure);

  auto finish = [&](std::vector<std::vector<int>> member_lists) {
    ClusterGraph cg;
    cg.members = std::move(member_lists);
    const int k = cg.num_clusters();
    cg.cluster_of.assign(adj.size(), -1);
    for (int c = 0; c < k; ++c)
      for (const int u : cg.members[c]) cg.cluster_of[u] = c;
    cg.comm.assign(k, std::vector<std::uint8_t>(k, 0));
    for (int c = 0; c < k; ++c) cg.comm[c][c] = 1;
    for (std::size_t u = 0; u < adj.size(); ++u) {
      for (const int v : adj[u]) {
        const int cu = cg.cluster_of[u], cv = cg.cluster_of[v];
        if (cu != cv) cg.comm[cu][cv] = cg.comm[cv][cu] = 1;
      }
    }
    return cg;
  };

  ClusterGraph cg = finish(std::move(groups));
  if (!opts.remerge_fixed_point) return cg;

  while (true) {
    const int before = cg.num_clusters();
    std::vector<std::vector<int>> cadj(before);
    for (int k = 0; k < before; ++k) cadj[k] = cg.comm_neighbors(k);
    const auto merged = detail::greedy_partition(cadj, rng, opts.rescan_until_closure);
    if (static_cast<int>(merged.size()) == before) return cg;
    std::vector<std::vector<int>> member_lists(merged.size());
    for (std::size_t c = 0; c < merged.size(); ++c) {
      for (const int old_cluster : merged[c]) {
        member_lists[c].insert(member_lists[c].end(), cg.members[old_cluster].begin(),
                               cg.members[old_cluster].end());
      }
      std::sort(member_lists[c].begin(), member_lists[c].end());
    }
    cg = finish(std::move(member_lists));
  }
}

// Definition check used by the tests and the cluster tool: members pairwise
// share, and every member sees the same contact set outside the group.
inline bool valid_clustering(const SocialGraph& g, const ClusterGraph& cg) {
  const auto adj = g.effective_adjacency();
  if (cg.cluster_of.size() != adj.size()) return false;
  for (const auto& group : cg.members) {
    for (const int u : group) {
      for (const int v : group) {
        if (u == v) continue;
        if (!std::binary_search(adj[u].begin(), adj[u].end(), v)) return false;
      }
    }
    std::vector<int> outside;  // contacts of the first member outside the group
    for (std::size_t i = 0; i < group.size(); ++i) {
      std::vector<int> o;
      for (const int v : adj[group[i]])
        if (!std::binary_search(group.begin(), group.end(), v)) o.push_back(v);
      if (i == 0)
        outside = std::move(o);
      else if (o != outside)
        return false;
    }
  }
  return true;
}

inline bool is_connected(const std::vector<std::vector<int>>& adj) {
  if (adj.empty()) return true;
  std::vector<char> seen(adj.size(), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (const int v : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        stack.push_back(v);
      }
  }
  return reached == adj.size();
}

inline bool is_connected(const SocialGraph& g) { return is_connected(g.effective_adjacency()); }

inline bool is_connected(const ClusterGraph& cg) {
  std::vector<std::vector<int>> adj(cg.num_clusters());
  for (int k = 0; k < cg.num_clusters(); ++k) adj[k] = cg.comm_neighbors(k);
  return is_connected(adj);
}

// ---------------------------------------------------------------------------
// File format.  Plain text, one record per line:
//   #users N            declare the user count (optional when edges cover it)
//   #user n eta phi     per-user thresholds (default 0 0)
//   u v                 edge with tie strength 1 in both directions
//   u v s               edge with strength s in both directions
//   u v s_uv s_vu       edge with per-direction strengths
// '#' starts a comment unless the line is one of the directives above.

inline SocialGraph parse_graph(std::istream& in, const std::string& name) {
  struct Edge {
    int u, v;
    double suv, svu;
  };
  std::vector<Edge> edges;
  std::vector<std::tuple<int, double, double>> thresholds;
  int declared = 0;
  int max_id = -1;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw std::runtime_error(name + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    if (first == "#users") {
      if (!(ls >> declared) || declared < 1) fail("expected a positive user count");
    } else if (first == "#user") {
      int u;
      double eta, phi;
      if (!(ls >> u >> eta >> phi)) fail("expected: #user <id> <eta> <phi>");
      if (u < 0) fail("user ids must be nonnegative");
      if (eta < 0 || eta > 1 || phi < 0 || phi > 1) fail("thresholds must lie in [0,1]");
      thresholds.emplace_back(u, eta, phi);
      max_id = std::max(max_id, u);
    } else if (first[0] == '#') {
      continue;
    } else {
      Edge e{};
      std::istringstream es(line);
      if (!(es >> e.u >> e.v)) fail("expected: <u> <v> [strength [strength]]");
      e.suv = e.svu = 1.0;
      if (es >> e.suv) {
        e.svu = e.suv;
        es >> e.svu;
      }
      if (e.u == e.v) fail("self edges are not allowed");
      if (e.u < 0 || e.v < 0) fail("user ids must be nonnegative");
      if (e.suv < 0 || e.suv > 1 || e.svu < 0 || e.svu > 1)
        fail("tie strengths must lie in [0,1]");
      edges.push_back(e);
      max_id = std::max({max_id, e.u, e.v});
    }
  }
  const int n = std::max(declared, max_id + 1);
  if (n < 1) throw std::runtime_error(name + ": no users declared");
  SocialGraph g(n);
  try {
    for (const auto& [u, eta, phi] : thresholds) g.set_thresholds(u, eta, phi);
    for (const auto& e : edges) g.add_edge(e.u, e.v, e.suv, e.svu);
  } catch (const std::invalid_argument& ex) {
    throw std::runtime_error(name + ": " + ex.what());
  }
  return g;
}

inline SocialGraph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open graph file: " + path);
  return parse_graph(in, path);
}

inline void save_graph(const SocialGraph& g, std::ostream& out) {
  out << "#users " << g.size() << "\n";
  for (int u = 0; u < g.size(); ++u)
    if (g.eta(u) != 0.0 || g.phi(u) != 0.0)
      out << "#user " << u << " " << g.eta(u) << " " << g.phi(u) << "\n";
  for (int u = 0; u < g.size(); ++u)
    for (int v = u + 1; v < g.size(); ++v)
      if (g.has_edge(u, v))
        out << u << " " << v << " " << g.strength(u, v) << " " << g.strength(v, u) << "\n";
}

// ---------------------------------------------------------------------------
// Generators.

// Full sharing inside each group; groups listed in `links` additionally share
// all-to-all across the pair.  Tie strengths 1, thresholds 0.
inline SocialGraph make_cluster_topology(const std::vector<int>& sizes,
                                         const std::vector<std::pair<int, int>>& links) {
  int n = 0;
  for (const int z : sizes) {
    if (z < 1) throw std::invalid_argument("topology: group sizes must be positive");
    n += z;
  }
  std::vector<int> offset(sizes.size() + 1, 0);
  for (std::size_t k = 0; k < sizes.size(); ++k) offset[k + 1] = offset[k] + sizes[k];
  SocialGraph g(n);
  for (std::size_t k = 0; k < sizes.size(); ++k)
    for (int u = offset[k]; u < offset[k + 1]; ++u)
      for (int v = u + 1; v < offset[k + 1]; ++v) g.add_edge(u, v);
  for (const auto& [a, b] : links) {
    if (a < 0 || b < 0 || a >= static_cast<int>(sizes.size()) ||
        b >= static_cast<int>(sizes.size()) || a == b)
      throw std::invalid_argument("topology: bad group link");
    for (int u = offset[a]; u < offset[a + 1]; ++u)
      for (int v = offset[b]; v < offset[b + 1]; ++v) g.add_edge(u, v);
  }
  return g;
}

inline SocialGraph make_complete(int n) { return make_cluster_topology({n}, {}); }

inline SocialGraph make_cluster_path(const std::vector<int>& sizes) {
  std::vector<std::pair<int, int>> links;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) links.emplace_back(k, k + 1);
  return make_cluster_topology(sizes, links);
}

inline SocialGraph make_cluster_isolated(const std::vector<int>& sizes) {
  return make_cluster_topology(sizes, {});
}

struct GeometricGraph {
  SocialGraph graph;
  std::vector<std::pair<double, double>> points;
  double radius = 0.0;  // the radius actually used
};

// Users scattered uniformly on a square of the given side length; users
// within `radius` meters of each other share.  radius <= 0 picks the
// smallest radius connecting the sampled points (the longest edge of their
// Euclidean minimum spanning tree).
inline GeometricGraph make_geometric(int n, double side, double radius, Rng& rng) {
  if (n < 1) throw std::invalid_argument("geometric: need at least one user");
  if (!(side > 0)) throw std::invalid_argument("geometric: side must be positive");
  std::uniform_real_distribution<double> u(0.0, side);
  GeometricGraph out{SocialGraph(n), {}, radius};
  out.points.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double x = u(rng);
    const double y = u(rng);
    out.points.emplace_back(x, y);
  }
  auto dist = [&](int a, int b) {
    const double dx = out.points[a].first - out.points[b].first;
    const double dy = out.points[a].second - out.points[b].second;
    return std::hypot(dx, dy);
  };
  if (radius <= 0) {
    // Prim's algorithm; the bottleneck edge of the MST is the smallest
    // radius under which the disk graph is connected.
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    std::vector<char> in_tree(n, 0);
    best[0] = 0.0;
    double bottleneck = 0.0;
    for (int it = 0; it < n; ++it) {
      int pick = -1;
      for (int i = 0; i < n; ++i)
        if (!in_tree[i] && (pick < 0 || best[i] < best[pick])) pick = i;
      in_tree[pick] = 1;
      bottleneck = std::max(bottleneck, best[pick]);
      for (int i = 0; i < n; ++i)
        if (!in_tree[i]) best[i] = std::min(best[i], dist(pick, i));
    }
    out.radius = bottleneck;
  }
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      if (dist(a, b) <= out.radius) out.graph.add_edge(a, b);
  return out;
}

}  // namespace imsa
