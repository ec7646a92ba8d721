#pragma once

#include <string>
#include <vector>

namespace tad {

enum class TopologyKind { homogeneous, ring, symmetric_tree, asymmetric_tree };

std::string to_string(TopologyKind kind);
TopologyKind topology_kind_from_string(const std::string& s);

// Switch hierarchy node: either a group of `leaf_count` devices attached to
// one switch, or a switch connecting child subtrees.
struct TreeNode {
  int leaf_count = 0;
  std::vector<TreeNode> children;

  bool is_leaf_group() const { return children.empty(); }
  int leaves() const;
  int depth() const;  // switch levels, leaf group == 1
  bool operator==(const TreeNode& o) const;
};

struct Topology {
  TopologyKind kind = TopologyKind::homogeneous;
  int device_count = 0;  // P

  // Trees only.
  TreeNode root;
  std::vector<int> levels;  // symmetric trees: branching per level, root first

  // Ring / homogeneous only: device visit order; ring edge t connects
  // device_order[t] and device_order[(t+1) % P].
  std::vector<int> device_order;

  std::vector<std::string> device_names;  // optional, size P when present

  // Optional per-edge link measurements carried by ring config files,
  // indexed by edge id.
  std::vector<double> ring_edge_alpha_us;
  std::vector<double> ring_edge_beta_us_per_mb;

  bool is_tree() const {
    return kind == TopologyKind::symmetric_tree || kind == TopologyKind::asymmetric_tree;
  }

  // Nested-list structure rendering, e.g. "[2,2]" or "[[2,2],[2]]".
  std::string structure_text() const;
};

// Parses a topology config document. Accepts either a bare nested integer
// list (tree; a flat list is read as the level vector of a symmetric tree)
// or a JSON object {kind, structure, ...}. Ring and homogeneous kinds must
// be explicit.
Topology parse_topology(const std::string& text);

Topology load_topology_file(const std::string& path);

// Groups of devices around device i, ordered by the number of switches
// crossed on the path from i. Group 0 contains i itself. Tree topologies
// only.
std::vector<std::vector<int>> device_groups(const Topology& topo, int device);

// Rewrites an asymmetric tree into a symmetric one with the same device
// count and leaf order by folding shallow sibling subtrees into their
// nearest sibling, left to right. Symmetric input is returned unchanged.
Topology merge_asymmetric(const Topology& topo);

}  // namespace tad
