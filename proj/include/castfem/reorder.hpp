#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <ostream>
#include <vector>

#include "castfem/errors.hpp"
#include "castfem/graph.hpp"
#include "castfem/mesh.hpp"

namespace castfem {

/// Node adjacency: edge iff two nodes share an element edge. For tets that
/// is any pair of nodes appearing in the same element.
inline AdjacencyGraph build_node_graph(const Mesh& m) {
    std::vector<std::pair<idx, idx>> edges;
    edges.reserve(m.tets.size() * 6);
    for (const auto& t : m.tets)
        for (int a = 0; a < 4; ++a)
            for (int b = a + 1; b < 4; ++b) edges.emplace_back(t.n[a], t.n[b]);
    return AdjacencyGraph::from_edge_list(m.node_count(), std::move(edges));
}

/// new_of_old[old index] = new index; bijective on [0, N).
using Permutation = std::vector<idx>;

inline Permutation identity_permutation(idx n) {
    Permutation p(n);
    std::iota(p.begin(), p.end(), 0);
    return p;
}

inline Permutation invert_permutation(const Permutation& p) {
    Permutation inv(p.size());
    for (idx i = 0; i < static_cast<idx>(p.size()); ++i) inv[p[i]] = i;
    return inv;
}

inline long bandwidth(const AdjacencyGraph& g, const Permutation& new_of_old) {
    long bw = 0;
    for (idx u = 0; u < g.vertex_count; ++u)
        for (idx v : g.neighbors(u))
            bw = std::max(bw, static_cast<long>(std::abs(static_cast<long>(new_of_old[u]) -
                                                         static_cast<long>(new_of_old[v]))));
    return bw;
}

namespace detail {

// BFS level structure from a root, visiting neighbors by ascending
// (degree, index). Appends the visit order to `order`.
inline std::vector<idx> bfs_levels(const AdjacencyGraph& g, idx root, std::vector<char>& seen,
                                   std::vector<idx>* order) {
    std::vector<idx> level_start{0};
    std::vector<idx> frontier{root};
    seen[root] = 1;
    std::vector<idx> all{root};
    if (order) order->push_back(root);
    while (!frontier.empty()) {
        std::vector<idx> next;
        for (idx v : frontier) {
            std::vector<idx> fresh;
            for (idx u : g.neighbors(v))
                if (!seen[u]) {
                    seen[u] = 1;
                    fresh.push_back(u);
                }
            std::sort(fresh.begin(), fresh.end(), [&](idx a, idx b) {
                return std::make_pair(g.degree(a), a) < std::make_pair(g.degree(b), b);
            });
            for (idx u : fresh) {
                next.push_back(u);
                if (order) order->push_back(u);
            }
        }
        if (next.empty()) break;
        level_start.push_back(static_cast<idx>(all.size()));
        all.insert(all.end(), next.begin(), next.end());
        frontier = std::move(next);
    }
    level_start.push_back(static_cast<idx>(all.size()));
    // last level slice is [level_start[k-2], level_start[k-1])
    std::vector<idx> last(all.begin() + level_start[level_start.size() - 2],
                          all.begin() + level_start.back());
    return last;
}

// George-Liu pseudo-peripheral node heuristic.
inline idx pseudo_peripheral(const AdjacencyGraph& g, idx start) {
    idx node = start;
    long ecc = -1;
    for (;;) {
        std::vector<char> seen(g.vertex_count, 0);
        std::vector<idx> frontier{node};
        seen[node] = 1;
        long depth = 0;
        std::vector<idx> last = frontier;
        while (true) {
            std::vector<idx> next;
            for (idx v : frontier)
                for (idx u : g.neighbors(v))
                    if (!seen[u]) {
                        seen[u] = 1;
                        next.push_back(u);
                    }
            if (next.empty()) break;
            ++depth;
            last = next;
            frontier = std::move(next);
        }
        if (depth <= ecc) return node;
        ecc = depth;
        idx best = last.front();
        for (idx v : last)
            if (std::make_pair(g.degree(v), v) < std::make_pair(g.degree(best), best)) best = v;
        node = best;
    }
}

} // namespace detail

/// Reverse Cuthill-McKee ordering. Components are processed by ascending
/// smallest old index; the start node per component is pseudo-peripheral
/// unless an explicit seed is given for its component.
inline Permutation rcm_permutation(const AdjacencyGraph& g, std::optional<idx> seed = {}) {
    const idx n = g.vertex_count;
    std::vector<char> seen(n, 0);
    std::vector<idx> order;
    order.reserve(n);
    for (idx v = 0; v < n; ++v) {
        if (seen[v]) continue;
        idx root;
        if (seed && !seen[*seed] && *seed >= 0 && *seed < n) {
            // use the seed if it lives in this (yet unvisited) component
            std::vector<char> probe(n, 0);
            detail::bfs_levels(g, v, probe, nullptr);
            root = probe[*seed] ? *seed : detail::pseudo_peripheral(g, v);
        } else {
            root = detail::pseudo_peripheral(g, v);
        }
        detail::bfs_levels(g, root, seen, &order);
    }
    Permutation new_of_old(n);
    for (idx i = 0; i < n; ++i) new_of_old[order[i]] = n - 1 - i;
    return new_of_old;
}

/// Renumbers mesh nodes; element/facet connectivity is rewritten so the
/// permuted mesh describes the same geometry.
inline Mesh permute_mesh(const Mesh& m, const Permutation& new_of_old) {
    if (new_of_old.size() != m.nodes.size())
        throw validation_error("permutation size " + std::to_string(new_of_old.size()) +
                               " does not match node count " + std::to_string(m.nodes.size()));
    Mesh out = m;
    for (idx i = 0; i < m.node_count(); ++i) out.nodes[new_of_old[i]] = m.nodes[i];
    for (auto& t : out.tets)
        for (auto& n : t.n) n = new_of_old[n];
    for (auto& f : out.facets)
        for (auto& n : f.n) n = new_of_old[n];
    return out;
}

/// Nonzero coordinates of the node-coupling matrix under a permutation,
/// one "row col" pair per line (both triangles plus the diagonal).
inline void write_sparsity_pattern(const AdjacencyGraph& g, const Permutation& new_of_old,
                                   std::ostream& out) {
    std::vector<std::pair<idx, idx>> coords;
    coords.reserve(g.edges.size() + g.vertex_count);
    for (idx u = 0; u < g.vertex_count; ++u) {
        coords.emplace_back(new_of_old[u], new_of_old[u]);
        for (idx v : g.neighbors(u)) coords.emplace_back(new_of_old[u], new_of_old[v]);
    }
    std::sort(coords.begin(), coords.end());
    for (const auto& [r, c] : coords) out << r << " " << c << "\n";
}

} // namespace castfem
