#include "tadispatch/topology.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <span>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tadispatch/errors.hpp"

namespace tad {

using nlohmann::json;

std::string to_string(TopologyKind kind) {
  switch (kind) {
    case TopologyKind::homogeneous: return "homogeneous";
    case TopologyKind::ring: return "ring";
    case TopologyKind::symmetric_tree: return "symmetric_tree";
    case TopologyKind::asymmetric_tree: return "asymmetric_tree";
  }
  return "unknown";
}

TopologyKind topology_kind_from_string(const std::string& s) {
  if (s == "homogeneous") return TopologyKind::homogeneous;
  if (s == "ring") return TopologyKind::ring;
  if (s == "symmetric_tree") return TopologyKind::symmetric_tree;
  if (s == "asymmetric_tree") return TopologyKind::asymmetric_tree;
  throw ValidationError("unknown topology kind: " + s);
}

int TreeNode::leaves() const {
  if (is_leaf_group()) return leaf_count;
  int n = 0;
  for (const auto& c : children) n += c.leaves();
  return n;
}

int TreeNode::depth() const {
  if (is_leaf_group()) return 1;
  int d = 0;
  for (const auto& c : children) d = std::max(d, c.depth());
  return 1 + d;
}

bool TreeNode::operator==(const TreeNode& o) const {
  return leaf_count == o.leaf_count && children == o.children;
}

namespace {

// Collapses single-child switches: [t] and t are the same topology.
TreeNode canonicalize(TreeNode node) {
  if (node.is_leaf_group()) return node;
  for (auto& c : node.children) c = canonicalize(std::move(c));
  if (node.children.size() == 1) return node.children[0];
  return node;
}

bool node_symmetric(const TreeNode& node) {
  if (node.is_leaf_group()) return true;
  for (const auto& c : node.children)
    if (!(c == node.children[0]) || !node_symmetric(c)) return false;
  return true;
}

std::vector<int> node_levels(const TreeNode& node) {
  std::vector<int> levels;
  const TreeNode* cur = &node;
  while (!cur->is_leaf_group()) {
    levels.push_back(static_cast<int>(cur->children.size()));
    cur = &cur->children[0];
  }
  levels.push_back(cur->leaf_count);
  return levels;
}

TreeNode node_from_levels(std::span<const int> levels) {
  if (levels.size() == 1) return TreeNode{levels[0], {}};
  TreeNode node;
  node.children.assign(static_cast<size_t>(levels[0]), node_from_levels(levels.subspan(1)));
  return node;
}

TreeNode tree_from_json(const json& j) {
  if (j.is_number_integer()) {
    const int n = j.get<int>();
    if (n <= 0) throw ValidationError("tree group sizes must be positive, got " + std::to_string(n));
    return TreeNode{n, {}};
  }
  if (!j.is_array()) throw ValidationError("tree structure must nest integers and arrays");
  if (j.empty()) throw ValidationError("tree structure contains an empty group");
  TreeNode node;
  for (const auto& child : j) node.children.push_back(tree_from_json(child));
  return node;
}

bool is_flat_int_array(const json& j) {
  if (!j.is_array() || j.empty()) return false;
  return std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_number_integer(); });
}

// Flat lists are read as the level vector of a symmetric tree ([2,2,2] is
// the 8-device binary-by-binary tree); anything nested is read structurally
// (an integer inside a list is a group of that many devices on one switch,
// so [[2,2,2]] is the 6-device tree with levels [3,2]).
TreeNode tree_from_structure(const json& j) {
  if (is_flat_int_array(j)) {
    std::vector<int> levels;
    for (const auto& e : j) {
      const int n = e.get<int>();
      if (n <= 0) throw ValidationError("level branching must be positive, got " + std::to_string(n));
      levels.push_back(n);
    }
    return node_from_levels(levels);
  }
  return canonicalize(tree_from_json(j));
}

std::string node_structure_text(const TreeNode& node) {
  if (node.is_leaf_group()) return std::to_string(node.leaf_count);
  std::string out = "[";
  for (size_t i = 0; i < node.children.size(); ++i) {
    if (i) out += ",";
    out += node_structure_text(node.children[i]);
  }
  out += "]";
  return out;
}

Topology tree_topology(TreeNode root, const json* declared_kind) {
  Topology t;
  t.root = canonicalize(std::move(root));
  t.device_count = t.root.leaves();
  const bool symmetric = node_symmetric(t.root);
  t.kind = symmetric ? TopologyKind::symmetric_tree : TopologyKind::asymmetric_tree;
  if (symmetric) t.levels = node_levels(t.root);
  if (declared_kind) {
    const TopologyKind k = topology_kind_from_string(declared_kind->get<std::string>());
    if (k != t.kind)
      throw ValidationError("declared kind '" + declared_kind->get<std::string>() +
                            "' does not match structure (detected " + to_string(t.kind) + ")");
  }
  return t;
}

std::vector<int> device_list_from_json(const json& j, const char* what) {
  if (!is_flat_int_array(j))
    throw ValidationError(std::string(what) + " structure must be a flat device list");
  std::vector<int> devices = j.get<std::vector<int>>();
  std::vector<int> sorted = devices;
  std::sort(sorted.begin(), sorted.end());
  for (size_t i = 0; i < sorted.size(); ++i)
    if (sorted[i] != static_cast<int>(i))
      throw ValidationError(std::string(what) + " device list must be a permutation of 0..P-1");
  return devices;
}

}  // namespace

std::string Topology::structure_text() const {
  // Symmetric trees print as their level vector, the form parse_topology
  // reads back; nested notation is kept for asymmetric trees.
  if (kind == TopologyKind::symmetric_tree) {
    std::string out = "[";
    for (size_t i = 0; i < levels.size(); ++i) {
      if (i) out += ",";
      out += std::to_string(levels[i]);
    }
    return out + "]";
  }
  if (is_tree()) return node_structure_text(root);
  std::string out = "[";
  for (size_t i = 0; i < device_order.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(device_order[i]);
  }
  return out + "]";
}

Topology parse_topology(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("topology document is not valid JSON: ") + e.what());
  }

  if (doc.is_array()) return tree_topology(tree_from_structure(doc), nullptr);
  if (!doc.is_object()) throw ValidationError("topology document must be a JSON array or object");

  if (!doc.contains("structure")) throw ValidationError("topology object requires a 'structure' field");
  const json& structure = doc["structure"];
  const json* kind_field = doc.contains("kind") ? &doc["kind"] : nullptr;

  Topology topo;
  const std::string kind_str = kind_field ? kind_field->get<std::string>() : std::string();
  if (!kind_field || kind_str == "symmetric_tree" || kind_str == "asymmetric_tree") {
    topo = tree_topology(tree_from_structure(structure), kind_field);
  } else if (kind_str == "ring") {
    topo.kind = TopologyKind::ring;
    topo.device_order = device_list_from_json(structure, "ring");
    topo.device_count = static_cast<int>(topo.device_order.size());
    if (topo.device_count < 3) throw ValidationError("ring requires at least 3 devices");
    if (doc.contains("edge_alpha_us"))
      topo.ring_edge_alpha_us = doc["edge_alpha_us"].get<std::vector<double>>();
    if (doc.contains("edge_beta_us_per_mb"))
      topo.ring_edge_beta_us_per_mb = doc["edge_beta_us_per_mb"].get<std::vector<double>>();
    for (const auto* edges : {&topo.ring_edge_alpha_us, &topo.ring_edge_beta_us_per_mb})
      if (!edges->empty() && static_cast<int>(edges->size()) != topo.device_count)
        throw ValidationError("ring edge arrays must have exactly P entries");
  } else if (kind_str == "homogeneous") {
    topo.kind = TopologyKind::homogeneous;
    topo.device_order = device_list_from_json(structure, "homogeneous");
    topo.device_count = static_cast<int>(topo.device_order.size());
    if (topo.device_count < 1) throw ValidationError("homogeneous topology needs at least one device");
  } else {
    topology_kind_from_string(kind_str);  // throws
  }

  if (doc.contains("device_names")) {
    topo.device_names = doc["device_names"].get<std::vector<std::string>>();
    if (static_cast<int>(topo.device_names.size()) != topo.device_count)
      throw ValidationError("device_names must have exactly P entries");
  }
  return topo;
}

Topology load_topology_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open topology file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_topology(buf.str());
}

namespace {

// Switch path from the root down to each leaf's parent switch, used to
// count switches crossed between leaf pairs.
void collect_paths(const TreeNode& node, std::vector<int>& prefix, int& next_switch,
                   std::vector<std::vector<int>>& out) {
  const int my_id = next_switch++;
  prefix.push_back(my_id);
  if (node.is_leaf_group()) {
    for (int i = 0; i < node.leaf_count; ++i) out.push_back(prefix);
  } else {
    for (const auto& c : node.children) collect_paths(c, prefix, next_switch, out);
  }
  prefix.pop_back();
}

}  // namespace

std::vector<std::vector<int>> device_groups(const Topology& topo, int device) {
  if (!topo.is_tree()) throw ValidationError("device_groups requires a tree topology");
  if (device < 0 || device >= topo.device_count)
    throw ValidationError("device index out of range");

  std::vector<std::vector<int>> paths;
  std::vector<int> prefix;
  int next_switch = 0;
  collect_paths(topo.root, prefix, next_switch, paths);

  // Switches crossed between leaves i,j: up from i to the lowest common
  // switch, across it, down to j.
  const auto& pi = paths[device];
  std::map<int, std::vector<int>> by_count;
  for (int j = 0; j < topo.device_count; ++j) {
    if (j == device) continue;
    const auto& pj = paths[j];
    size_t common = 0;
    while (common < pi.size() && common < pj.size() && pi[common] == pj[common]) ++common;
    const int crossed = static_cast<int>(pi.size() + pj.size() - 2 * common) + 1;
    by_count[crossed].push_back(j);
  }

  std::vector<std::vector<int>> groups;
  for (auto& [count, members] : by_count) groups.push_back(std::move(members));
  if (groups.empty()) groups.emplace_back();
  groups[0].push_back(device);
  std::sort(groups[0].begin(), groups[0].end());
  return groups;
}

namespace {

// Absorbs subtree `s` into its sibling `t`. `side_before` says whether s's
// leaves precede t's, so leaf order is preserved.
void absorb(TreeNode& t, TreeNode s, bool side_before) {
  if (s.depth() == t.depth()) {
    if (t.is_leaf_group()) {
      t.leaf_count += s.leaf_count;
      return;
    }
    auto pos = side_before ? t.children.begin() : t.children.end();
    t.children.insert(pos, std::make_move_iterator(s.children.begin()),
                      std::make_move_iterator(s.children.end()));
  } else {
    auto pos = side_before ? t.children.begin() : t.children.end();
    t.children.insert(pos, std::move(s));
  }
}

TreeNode make_symmetric(TreeNode node) {
  if (node.is_leaf_group()) return node;
  for (auto& c : node.children) c = make_symmetric(std::move(c));

  while (true) {
    if (node.children.size() == 1) return node.children[0];
    const bool uniform = std::all_of(node.children.begin(), node.children.end(),
                                     [&](const TreeNode& c) { return c == node.children[0]; });
    if (uniform) return node;

    // Shallowest subtree first, then fewest leaves, then leftmost.
    size_t s_idx = 0;
    for (size_t i = 1; i < node.children.size(); ++i) {
      const auto key = [&](const TreeNode& n) { return std::pair(n.depth(), n.leaves()); };
      if (key(node.children[i]) < key(node.children[s_idx])) s_idx = i;
    }
    const size_t t_idx = s_idx > 0 ? s_idx - 1 : s_idx + 1;

    TreeNode s = std::move(node.children[s_idx]);
    absorb(node.children[t_idx], std::move(s), /*side_before=*/s_idx < t_idx);
    node.children[t_idx] = make_symmetric(std::move(node.children[t_idx]));
    node.children.erase(node.children.begin() + static_cast<long>(s_idx));
  }
}

}  // namespace

Topology merge_asymmetric(const Topology& topo) {
  if (!topo.is_tree()) throw ValidationError("merge_asymmetric requires a tree topology");
  if (topo.kind == TopologyKind::symmetric_tree) return topo;

  Topology merged;
  merged.root = canonicalize(make_symmetric(topo.root));
  merged.kind = TopologyKind::symmetric_tree;
  merged.device_count = merged.root.leaves();
  merged.levels = node_levels(merged.root);
  merged.device_names = topo.device_names;
  return merged;
}

}  // namespace tad
