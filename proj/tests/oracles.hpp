#pragma once

// Brute-force reference implementations used only by tests. They share no
// code with the library paths they certify.

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "tadispatch/matrix.hpp"
#include "tadispatch/rng.hpp"
#include "tadispatch/topology.hpp"

namespace oracle {

// Explicit graph of the switch hierarchy: nodes are switches and devices,
// edges follow the nesting. Devices grouped by the number of switch nodes
// on the unique path from `device`.
struct TreeGraph {
  std::vector<std::vector<int>> adj;
  std::vector<int> device_nodes;  // graph node per device, leaf order
  std::vector<bool> is_switch;

  static TreeGraph build(const tad::TreeNode& root) {
    TreeGraph g;
    build_node(root, -1, g);
    return g;
  }

 private:
  static int add_node(TreeGraph& g, bool sw) {
    g.adj.emplace_back();
    g.is_switch.push_back(sw);
    return static_cast<int>(g.adj.size()) - 1;
  }
  static void build_node(const tad::TreeNode& node, int parent, TreeGraph& g) {
    const int me = add_node(g, true);
    if (parent >= 0) {
      g.adj[me].push_back(parent);
      g.adj[parent].push_back(me);
    }
    if (node.is_leaf_group()) {
      for (int i = 0; i < node.leaf_count; ++i) {
        const int dev = add_node(g, false);
        g.adj[me].push_back(dev);
        g.adj[dev].push_back(me);
        g.device_nodes.push_back(dev);
      }
    } else {
      for (const auto& c : node.children) build_node(c, me, g);
    }
  }
};

inline std::vector<std::vector<int>> device_groups_bfs(const tad::Topology& topo, int device) {
  const TreeGraph g = TreeGraph::build(topo.root);
  const int start = g.device_nodes[static_cast<size_t>(device)];
  std::vector<int> parent(g.adj.size(), -2);
  std::vector<int> queue{start};
  parent[static_cast<size_t>(start)] = -1;
  for (size_t head = 0; head < queue.size(); ++head) {
    const int u = queue[head];
    for (int v : g.adj[static_cast<size_t>(u)])
      if (parent[static_cast<size_t>(v)] == -2) {
        parent[static_cast<size_t>(v)] = u;
        queue.push_back(v);
      }
  }
  std::map<int, std::vector<int>> by_count;
  for (size_t dev = 0; dev < g.device_nodes.size(); ++dev) {
    if (static_cast<int>(dev) == device) continue;
    int switches = 0;
    for (int v = g.device_nodes[dev]; v != start; v = parent[static_cast<size_t>(v)])
      if (g.is_switch[static_cast<size_t>(v)]) ++switches;
    by_count[switches].push_back(static_cast<int>(dev));
  }
  std::vector<std::vector<int>> groups;
  for (auto& [count, members] : by_count) groups.push_back(std::move(members));
  if (groups.empty()) groups.emplace_back();
  groups[0].push_back(device);
  std::sort(groups[0].begin(), groups[0].end());
  return groups;
}

// All simple paths between ring devices found by DFS over the edge list,
// scored by (bottleneck beta, total alpha).
inline std::pair<double, double> ring_best_path(const tad::Topology& topo,
                                                const std::vector<double>& edge_alpha,
                                                const std::vector<double>& edge_beta, int src,
                                                int dst) {
  const int p = topo.device_count;
  std::vector<std::pair<int, int>> edges;  // device endpoints per edge id
  for (int t = 0; t < p; ++t)
    edges.emplace_back(topo.device_order[static_cast<size_t>(t)],
                       topo.device_order[static_cast<size_t>((t + 1) % p)]);

  std::pair<double, double> best{std::numeric_limits<double>::infinity(),
                                 std::numeric_limits<double>::infinity()};
  std::vector<bool> used(edges.size(), false);
  std::vector<bool> visited(static_cast<size_t>(p), false);

  struct Frame {
    int node;
    double bottleneck;
    double alpha;
  };
  std::vector<Frame> stack{{src, 0.0, 0.0}};
  visited[static_cast<size_t>(src)] = true;

  // recursive DFS in lambda form
  std::function<void(int, double, double)> dfs = [&](int node, double bn, double al) {
    if (node == dst) {
      best = std::min(best, std::make_pair(bn, al));
      return;
    }
    for (size_t e = 0; e < edges.size(); ++e) {
      if (used[e]) continue;
      int next = -1;
      if (edges[e].first == node) next = edges[e].second;
      if (edges[e].second == node) next = edges[e].first;
      if (next < 0 || visited[static_cast<size_t>(next)]) continue;
      used[e] = true;
      visited[static_cast<size_t>(next)] = true;
      dfs(next, std::max(bn, edge_beta[e]), al + edge_alpha[e]);
      used[e] = false;
      visited[static_cast<size_t>(next)] = false;
    }
  };
  dfs(src, 0.0, 0.0);
  return best;
}

// Random nested tree rendered as topology text. Wraps the root so flat
// device groups are read structurally rather than as a level vector.
inline std::string random_tree_text(tad::Rng& rng, int max_depth = 3) {
  struct Gen {
    tad::Rng& rng;
    std::string node(int depth) {
      const bool leaf = depth <= 1 || rng.uniform() < 0.45;
      if (leaf) return std::to_string(rng.uniform_int(1, 3));
      const int kids = rng.uniform_int(2, 3);
      std::string out = "[";
      for (int i = 0; i < kids; ++i) {
        if (i) out += ",";
        out += node(depth - 1);
      }
      return out + "]";
    }
  } gen{rng};
  const int kids = gen.rng.uniform_int(2, 3);
  std::string out = "[";
  bool all_int = true;
  std::vector<std::string> parts;
  for (int i = 0; i < kids; ++i) {
    parts.push_back(gen.node(max_depth - 1));
    if (parts.back().front() == '[') all_int = false;
  }
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ",";
    out += parts[i];
  }
  out += "]";
  return all_int ? "[" + out + "]" : out;
}

}  // namespace oracle
