#pragma once

#include <algorithm>
#include <cstdint>
#include <queue>
#include <span>
#include <utility>
#include <vector>

namespace castfem {

using idx = std::int32_t;

/// Undirected graph in CSR form. Neighbor lists are sorted ascending,
/// self loops and duplicate edges are removed on construction.
struct AdjacencyGraph {
    idx vertex_count = 0;
    std::vector<idx> offsets; // size vertex_count + 1
    std::vector<idx> edges;   // concatenated neighbor lists

    std::span<const idx> neighbors(idx v) const {
        return {edges.data() + offsets[v], edges.data() + offsets[v + 1]};
    }
    idx degree(idx v) const { return offsets[v + 1] - offsets[v]; }
    std::int64_t edge_count() const { return static_cast<std::int64_t>(edges.size()) / 2; }
    idx max_degree() const {
        idx d = 0;
        for (idx v = 0; v < vertex_count; ++v) d = std::max(d, degree(v));
        return d;
    }
    bool has_edge(idx u, idx v) const {
        const auto nb = neighbors(u);
        return std::binary_search(nb.begin(), nb.end(), v);
    }

    static AdjacencyGraph from_edge_list(idx n, std::vector<std::pair<idx, idx>> list) {
        std::vector<std::pair<idx, idx>> dir;
        dir.reserve(list.size() * 2);
        for (auto [a, b] : list) {
            if (a == b) continue;
            dir.emplace_back(a, b);
            dir.emplace_back(b, a);
        }
        std::sort(dir.begin(), dir.end());
        dir.erase(std::unique(dir.begin(), dir.end()), dir.end());

        AdjacencyGraph g;
        g.vertex_count = n;
        g.offsets.assign(static_cast<std::size_t>(n) + 1, 0);
        for (auto& [a, b] : dir) ++g.offsets[a + 1];
        for (idx v = 0; v < n; ++v) g.offsets[v + 1] += g.offsets[v];
        g.edges.reserve(dir.size());
        for (auto& [a, b] : dir) g.edges.push_back(b);
        return g;
    }
};

inline bool is_connected(const AdjacencyGraph& g) {
    if (g.vertex_count <= 1) return true;
    std::vector<char> seen(g.vertex_count, 0);
    std::vector<idx> stack{0};
    seen[0] = 1;
    idx reached = 1;
    while (!stack.empty()) {
        const idx v = stack.back();
        stack.pop_back();
        for (idx u : g.neighbors(v))
            if (!seen[u]) {
                seen[u] = 1;
                ++reached;
                stack.push_back(u);
            }
    }
    return reached == g.vertex_count;
}

} // namespace castfem
