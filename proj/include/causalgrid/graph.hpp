#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "causalgrid/common.hpp"
#include "causalgrid/rng.hpp"

namespace causalgrid {

// A directed acyclic graph over named variables. Nodes are stored in
// insertion order; adjacency uses indices. Immutable after construction.
class CausalGraph {
  public:
    CausalGraph(std::vector<std::string> nodes,
                std::vector<std::pair<std::string, std::string>> edges) {
        names_ = std::move(nodes);
        for (std::size_t i = 0; i < names_.size(); ++i) {
            if (!index_.emplace(names_[i], i).second)
                throw GraphError("duplicate node: " + names_[i]);
        }
        parents_.resize(names_.size());
        children_.resize(names_.size());
        std::set<std::pair<std::size_t, std::size_t>> seen;
        for (const auto& [u, v] : edges) {
            std::size_t a = index_of(u), b = index_of(v);
            if (a == b) throw GraphError("self-loop on node: " + u);
            if (!seen.emplace(a, b).second) throw GraphError("duplicate edge: " + u + " -> " + v);
            children_[a].push_back(b);
            parents_[b].push_back(a);
        }
        for (auto& p : parents_) std::sort(p.begin(), p.end());
        for (auto& c : children_) std::sort(c.begin(), c.end());
        topo_ = topological_order_or_throw();
    }

    std::size_t size() const { return names_.size(); }
    const std::vector<std::string>& node_names() const { return names_; }
    const std::string& name(std::size_t i) const { return names_[i]; }

    bool has_node(std::string_view n) const { return index_.find(std::string(n)) != index_.end(); }

    std::size_t index_of(std::string_view n) const {
        auto it = index_.find(std::string(n));
        if (it == index_.end()) throw GraphError("unknown node: " + std::string(n));
        return it->second;
    }

    const std::vector<std::size_t>& parents(std::size_t i) const { return parents_[i]; }
    const std::vector<std::size_t>& children(std::size_t i) const { return children_[i]; }
    const std::vector<std::size_t>& topological_order() const { return topo_; }

    bool has_edge(std::size_t u, std::size_t v) const {
        return std::binary_search(children_[u].begin(), children_[u].end(), v);
    }

    std::size_t edge_count() const {
        std::size_t e = 0;
        for (const auto& c : children_) e += c.size();
        return e;
    }

    std::vector<std::pair<std::size_t, std::size_t>> edges() const {
        std::vector<std::pair<std::size_t, std::size_t>> e;
        for (std::size_t u = 0; u < size(); ++u)
            for (std::size_t v : children_[u]) e.emplace_back(u, v);
        return e;
    }

    // Strict descendants (excluding the node itself).
    std::vector<bool> descendants(std::size_t i) const {
        std::vector<bool> seen(size(), false);
        std::vector<std::size_t> stack = {i};
        while (!stack.empty()) {
            std::size_t u = stack.back();
            stack.pop_back();
            for (std::size_t v : children_[u]) {
                if (!seen[v]) {
                    seen[v] = true;
                    stack.push_back(v);
                }
            }
        }
        seen[i] = false;
        return seen;
    }

    std::vector<std::size_t> roots() const {
        std::vector<std::size_t> r;
        for (std::size_t i = 0; i < size(); ++i)
            if (parents_[i].empty()) r.push_back(i);
        return r;
    }

    std::vector<std::size_t> sinks() const {
        std::vector<std::size_t> s;
        for (std::size_t i = 0; i < size(); ++i)
            if (children_[i].empty()) s.push_back(i);
        return s;
    }

    std::string to_dsl() const {
        std::ostringstream out;
        for (std::size_t u = 0; u < size(); ++u) {
            if (parents_[u].empty() && children_[u].empty()) out << names_[u] << "\n";
            for (std::size_t v : children_[u]) out << names_[u] << " -> " << names_[v] << "\n";
        }
        return out.str();
    }

  private:
    std::vector<std::size_t> topological_order_or_throw() const {
        std::vector<std::size_t> indeg(size(), 0);
        for (std::size_t v = 0; v < size(); ++v) indeg[v] = parents_[v].size();
        std::vector<std::size_t> order;
        std::vector<std::size_t> queue;
        for (std::size_t i = 0; i < size(); ++i)
            if (indeg[i] == 0) queue.push_back(i);
        while (!queue.empty()) {
            std::size_t u = queue.back();
            queue.pop_back();
            order.push_back(u);
            for (std::size_t v : children_[u])
                if (--indeg[v] == 0) queue.push_back(v);
        }
        if (order.size() != size()) {
            // Walk parent links from an unresolved node to report one cycle.
            std::vector<bool> resolved(size(), false);
            for (std::size_t i : order) resolved[i] = true;
            std::size_t start = 0;
            while (resolved[start]) ++start;
            std::vector<std::size_t> path;
            std::vector<int> pos(size(), -1);
            std::size_t cur = start;
            while (pos[cur] < 0) {
                pos[cur] = static_cast<int>(path.size());
                path.push_back(cur);
                for (std::size_t p : parents_[cur]) {
                    if (!resolved[p]) {
                        cur = p;
                        break;
                    }
                }
            }
            std::string msg = "graph contains a cycle:";
            for (std::size_t i = path.size(); i-- > static_cast<std::size_t>(pos[cur]);)
                msg += " " + names_[path[i]];
            msg += " -> " + names_[cur];
            throw GraphError(msg);
        }
        return order;
    }

    std::vector<std::string> names_;
    std::map<std::string, std::size_t> index_;
    std::vector<std::vector<std::size_t>> parents_;
    std::vector<std::vector<std::size_t>> children_;
    std::vector<std::size_t> topo_;
};

// A simple directed path, as node indices from source to target.
using DirectedPath = std::vector<std::size_t>;

// One local Markov triple: X independent of Y given Z.
struct MarkovTriple {
    std::size_t x;               // the node whose condition is tested
    std::size_t y;               // a non-descendant, non-parent of x
    std::vector<std::size_t> z;  // parents of x
};

namespace detail {
inline bool valid_node_token(std::string_view s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_')) return false;
    return true;
}
}  // namespace detail

// Edge-list DSL: one "parent -> child" per line, '#' comments, bare node
// names allowed for isolated nodes.
inline CausalGraph parse_graph(std::string_view text) {
    std::vector<std::string> nodes;
    std::set<std::string> node_set;
    std::vector<std::pair<std::string, std::string>> edges;
    auto add_node = [&](const std::string& n) {
        if (node_set.insert(n).second) nodes.push_back(n);
    };
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        std::istringstream ls(line);
        std::string a, arrow, b, rest;
        if (!(ls >> a)) continue;  // blank line
        if (!(ls >> arrow)) {
            if (!detail::valid_node_token(a))
                throw FormatError("graph parse error at line " + std::to_string(lineno) +
                                  ": bad node name '" + a + "'");
            add_node(a);
            continue;
        }
        if (arrow != "->" || !(ls >> b) || (ls >> rest) || !detail::valid_node_token(a) ||
            !detail::valid_node_token(b))
            throw FormatError("graph parse error at line " + std::to_string(lineno) +
                              ": expected 'parent -> child', got '" + line + "'");
        add_node(a);
        add_node(b);
        edges.emplace_back(a, b);
    }
    return CausalGraph(std::move(nodes), std::move(edges));
}

inline CausalGraph load_graph(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open graph file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_graph(buf.str());
}

// All simple directed paths from src to dst, ordered lexicographically by
// the node-name sequence.
inline std::vector<DirectedPath> enumerate_paths(const CausalGraph& g, std::size_t src,
                                                 std::size_t dst) {
    if (src >= g.size() || dst >= g.size()) throw GraphError("enumerate_paths: node out of range");
    std::vector<DirectedPath> out;
    DirectedPath cur = {src};
    std::vector<bool> on_path(g.size(), false);
    on_path[src] = true;

    // Recurse over children sorted by name so output order is lexicographic.
    auto by_name = [&](std::size_t a, std::size_t b) { return g.name(a) < g.name(b); };
    auto dfs = [&](auto&& self, std::size_t u) -> void {
        if (u == dst) {
            out.push_back(cur);
            return;
        }
        std::vector<std::size_t> kids = g.children(u);
        std::sort(kids.begin(), kids.end(), by_name);
        for (std::size_t v : kids) {
            if (on_path[v]) continue;
            on_path[v] = true;
            cur.push_back(v);
            self(self, v);
            cur.pop_back();
            on_path[v] = false;
        }
    };
    dfs(dfs, src);
    return out;
}

// Local Markov condition triples: for every node X, one triple per node Y
// that is neither X, a strict descendant of X, nor a parent of X, with
// Z = parents(X).
inline std::vector<MarkovTriple> local_markov_pairs(const CausalGraph& g) {
    std::vector<MarkovTriple> out;
    for (std::size_t x = 0; x < g.size(); ++x) {
        auto desc = g.descendants(x);
        const auto& pa = g.parents(x);
        for (std::size_t y = 0; y < g.size(); ++y) {
            if (y == x || desc[y]) continue;
            if (std::binary_search(pa.begin(), pa.end(), y)) continue;
            out.push_back({x, y, pa});
        }
    }
    return out;
}

namespace detail {
inline std::set<std::pair<std::size_t, std::size_t>> skeleton(const CausalGraph& g) {
    std::set<std::pair<std::size_t, std::size_t>> s;
    for (auto [u, v] : g.edges()) s.emplace(std::min(u, v), std::max(u, v));
    return s;
}

// V-structures a -> c <- b with a, b non-adjacent, as (min(a,b), max(a,b), c).
inline std::set<std::tuple<std::size_t, std::size_t, std::size_t>> v_structures(
    const CausalGraph& g) {
    auto skel = skeleton(g);
    std::set<std::tuple<std::size_t, std::size_t, std::size_t>> vs;
    for (std::size_t c = 0; c < g.size(); ++c) {
        const auto& pa = g.parents(c);
        for (std::size_t i = 0; i < pa.size(); ++i) {
            for (std::size_t j = i + 1; j < pa.size(); ++j) {
                std::size_t a = std::min(pa[i], pa[j]), b = std::max(pa[i], pa[j]);
                if (!skel.count({a, b})) vs.emplace(a, b, c);
            }
        }
    }
    return vs;
}
}  // namespace detail

// Verma-Pearl characterization: same skeleton and same v-structures.
// Node identity is matched by name, so the two graphs may index nodes
// differently.
inline bool markov_equivalent(const CausalGraph& g1, const CausalGraph& g2) {
    if (g1.size() != g2.size()) throw GraphError("markov_equivalent: differing node sets");
    std::vector<std::size_t> map12(g1.size());
    for (std::size_t i = 0; i < g1.size(); ++i) {
        if (!g2.has_node(g1.name(i))) throw GraphError("markov_equivalent: differing node sets");
        map12[i] = g2.index_of(g1.name(i));
    }
    auto remap_pair = [&](std::pair<std::size_t, std::size_t> p) {
        std::size_t a = map12[p.first], b = map12[p.second];
        return std::make_pair(std::min(a, b), std::max(a, b));
    };
    std::set<std::pair<std::size_t, std::size_t>> s1;
    for (const auto& p : detail::skeleton(g1)) s1.insert(remap_pair(p));
    if (s1 != detail::skeleton(g2)) return false;
    std::set<std::tuple<std::size_t, std::size_t, std::size_t>> v1;
    for (const auto& [a, b, c] : detail::v_structures(g1)) {
        std::size_t ma = map12[a], mb = map12[b];
        v1.emplace(std::min(ma, mb), std::max(ma, mb), map12[c]);
    }
    return v1 == detail::v_structures(g2);
}

// Uniformly random relabeling of the nodes: edge (u, v) becomes
// (perm(u), perm(v)). The node set and edge count are preserved.
inline CausalGraph permute_nodes(const CausalGraph& g, std::uint64_t seed,
                                 std::vector<std::size_t>* perm_out = nullptr) {
    Rng rng(seed, hash_label("graph/permute"));
    std::vector<std::size_t> perm(g.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(perm);
    std::vector<std::pair<std::string, std::string>> edges;
    for (auto [u, v] : g.edges()) edges.emplace_back(g.name(perm[u]), g.name(perm[v]));
    if (perm_out) *perm_out = perm;
    return CausalGraph(g.node_names(), std::move(edges));
}

}  // namespace causalgrid
