#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <span>
#include <vector>

#include "castfem/errors.hpp"
#include "castfem/graph.hpp"
#include "castfem/mesh.hpp"

namespace castfem {

struct PartMap {
    std::vector<idx> part_of_element;
    idx part_count = 0;
};

/// A fictitious tetrahedron spanning one interface facet. Lives only in the
/// partitioning graph, never in solver data.
struct VirtualElement {
    idx facet = -1;
    idx owner = -1;
    idx sister = -1;
    std::array<idx, 4> nodes{};
};

struct AugmentedDualGraph {
    AdjacencyGraph graph; // vertices [0, physical_count) are mesh elements
    idx physical_count = 0;
    std::vector<VirtualElement> virtual_elements;
    std::vector<idx> vertex_weights; // 1 per physical element, 0 per virtual

    idx virtual_count() const { return static_cast<idx>(virtual_elements.size()); }
};

/// Glues decoupled regions together for partitioning: one zero-weight
/// virtual tetrahedron per interface facet (cast side only when one_side),
/// built from the facet's three nodes plus the sister node nearest the
/// facet centroid.
inline AugmentedDualGraph augment_virtual_elements(const Mesh& m,
                                                   const std::vector<InterfacePair>& pairs,
                                                   bool one_side = true) {
    AugmentedDualGraph aug;
    aug.physical_count = m.element_count();

    const AdjacencyGraph dual = build_dual_graph(m);
    std::vector<std::pair<idx, idx>> edges;
    edges.reserve(dual.edges.size() / 2 + pairs.size() * 2);
    for (idx u = 0; u < dual.vertex_count; ++u)
        for (idx v : dual.neighbors(u))
            if (u < v) edges.emplace_back(u, v);

    for (const auto& pr : pairs) {
        if (pr.contact < 0 || pr.contact >= static_cast<idx>(m.contacts.size()))
            throw validation_error("interface pair references unknown contact");
        if (one_side && m.facets[pr.facet].tag != m.contacts[pr.contact].tag_a) continue;

        const Vec3 c = m.facet_centroid(pr.facet);
        const auto& sister_nodes = m.tets[pr.sister].n;
        idx pick = sister_nodes[0];
        double best = std::numeric_limits<double>::infinity();
        for (idx n : sister_nodes) {
            const Vec3 d = m.nodes[n] - c;
            const double d2 = dot(d, d);
            if (d2 < best || (d2 == best && n < pick)) {
                best = d2;
                pick = n;
            }
        }

        VirtualElement ve;
        ve.facet = pr.facet;
        ve.owner = m.facets[pr.facet].owner;
        ve.sister = pr.sister;
        ve.nodes = {m.facets[pr.facet].n[0], m.facets[pr.facet].n[1], m.facets[pr.facet].n[2],
                    pick};
        const idx vtx = aug.physical_count + aug.virtual_count();
        edges.emplace_back(vtx, ve.owner);
        edges.emplace_back(vtx, ve.sister);
        aug.virtual_elements.push_back(ve);
    }

    const idx total = aug.physical_count + aug.virtual_count();
    aug.graph = AdjacencyGraph::from_edge_list(total, std::move(edges));
    aug.vertex_weights.assign(total, 1);
    std::fill(aug.vertex_weights.begin() + aug.physical_count, aug.vertex_weights.end(), 0);
    return aug;
}

namespace detail {

// Unassigned vertex with the largest BFS distance from the assigned set;
// unreachable vertices count as farthest. Ties go to the lowest index.
inline idx farthest_unassigned(const AdjacencyGraph& g, const std::vector<idx>& assign) {
    constexpr idx unreached = std::numeric_limits<idx>::max();
    std::vector<idx> dist(g.vertex_count, unreached);
    std::deque<idx> queue;
    for (idx v = 0; v < g.vertex_count; ++v)
        if (assign[v] >= 0) {
            dist[v] = 0;
            queue.push_back(v);
        }
    while (!queue.empty()) {
        const idx v = queue.front();
        queue.pop_front();
        for (idx u : g.neighbors(v))
            if (assign[u] < 0 && dist[u] == unreached) {
                dist[u] = dist[v] + 1;
                queue.push_back(u);
            }
    }
    idx best = -1;
    idx best_dist = -1;
    for (idx v = 0; v < g.vertex_count; ++v) {
        if (assign[v] >= 0) continue;
        const idx d = dist[v] == unreached ? std::numeric_limits<idx>::max() : dist[v];
        if (d > best_dist) {
            best_dist = d;
            best = v;
        }
    }
    return best;
}

} // namespace detail

/// Greedy graph-growing partitioner with a boundary refinement pass.
/// Weights are per-vertex work units (zero for virtual elements); every
/// positive-weight class of vertices is balanced to within balance_tol of
/// the mean, up to integer granularity.
inline PartMap partition_graph(const AdjacencyGraph& g, std::span<const idx> weights, idx k,
                               double balance_tol = 0.05) {
    const idx n = g.vertex_count;
    if (k < 1) throw validation_error("part count must be >= 1");

    std::vector<idx> w(n, 1);
    if (!weights.empty()) {
        if (static_cast<idx>(weights.size()) != n)
            throw validation_error("weight array size mismatch");
        std::copy(weights.begin(), weights.end(), w.begin());
    }
    const long total_weight = std::accumulate(w.begin(), w.end(), 0L);
    if (k > total_weight)
        throw validation_error("requested " + std::to_string(k) + " parts for " +
                               std::to_string(total_weight) + " weighted elements");

    PartMap pm;
    pm.part_count = k;
    pm.part_of_element.assign(n, -1);
    auto& assign = pm.part_of_element;
    if (k == 1) {
        std::fill(assign.begin(), assign.end(), 0);
        return pm;
    }

    std::vector<long> part_weight(k, 0);
    std::vector<idx> grow_stamp(n, -1);
    long assigned_weight = 0;

    for (idx p = 0; p < k; ++p) {
        const long remaining = total_weight - assigned_weight;
        const long target = (remaining + (k - p) - 1) / (k - p);
        idx seed = (p == 0) ? 0 : detail::farthest_unassigned(g, assign);
        while (part_weight[p] < target && seed >= 0) {
            std::deque<idx> queue{seed};
            grow_stamp[seed] = p;
            while (!queue.empty() && part_weight[p] < target) {
                const idx v = queue.front();
                queue.pop_front();
                if (assign[v] >= 0) continue;
                assign[v] = p;
                part_weight[p] += w[v];
                assigned_weight += w[v];
                for (idx u : g.neighbors(v))
                    if (assign[u] < 0 && grow_stamp[u] != p) {
                        grow_stamp[u] = p;
                        queue.push_back(u);
                    }
            }
            if (part_weight[p] < target) seed = detail::farthest_unassigned(g, assign);
        }
    }

    // leftover zero-weight vertices: follow the lowest-id assigned neighbor
    for (idx v = 0; v < n; ++v) {
        if (assign[v] >= 0) continue;
        idx p = k - 1;
        for (idx u : g.neighbors(v))
            if (assign[u] >= 0) {
                p = assign[u];
                break;
            }
        assign[v] = p;
        part_weight[p] += w[v];
    }

    // boundary refinement: move a vertex to the neighboring part with the
    // most adjacency when that strictly reduces the cut and keeps balance
    const double mean = static_cast<double>(total_weight) / k;
    const long cap =
        std::max((total_weight + k - 1) / k, static_cast<long>(mean * (1.0 + balance_tol)));
    std::vector<idx> adj_count(k, 0);
    for (int pass = 0; pass < 8; ++pass) {
        bool moved = false;
        for (idx v = 0; v < n; ++v) {
            const idx p = assign[v];
            bool boundary = false;
            for (idx u : g.neighbors(v))
                if (assign[u] != p) boundary = true;
            if (!boundary) continue;

            for (idx u : g.neighbors(v)) ++adj_count[assign[u]];
            idx q = -1;
            for (idx c = 0; c < k; ++c)
                if (c != p && adj_count[c] > 0 && (q < 0 || adj_count[c] > adj_count[q])) q = c;
            const idx gain = (q >= 0) ? adj_count[q] - adj_count[p] : 0;
            for (idx u : g.neighbors(v)) adj_count[assign[u]] = 0;

            if (q < 0 || gain <= 0) continue;
            if (part_weight[p] - w[v] < 1 || part_weight[q] + w[v] > cap) continue;
            assign[v] = q;
            part_weight[p] -= w[v];
            part_weight[q] += w[v];
            moved = true;
        }
        if (!moved) break;
    }
    return pm;
}

/// Partitions the augmented graph and drops the virtual tail, so the result
/// covers physical elements only.
inline PartMap partition_elements(const AugmentedDualGraph& aug, idx k,
                                  double balance_tol = 0.05) {
    PartMap pm = partition_graph(aug.graph, aug.vertex_weights, k, balance_tol);
    pm.part_of_element.resize(aug.physical_count);
    return pm;
}

struct PartitionQuality {
    long edge_cut = 0;
    double imbalance = 1.0;
    std::vector<idx> neighbor_counts; // degree of adjacency per part
};

/// Cut and balance metrics over the physical dual graph only.
inline PartitionQuality partition_metrics(const AdjacencyGraph& dual, const PartMap& pm) {
    PartitionQuality q;
    std::vector<std::vector<char>> adj(pm.part_count, std::vector<char>(pm.part_count, 0));
    for (idx u = 0; u < dual.vertex_count; ++u)
        for (idx v : dual.neighbors(u)) {
            if (u >= v) continue;
            const idx pu = pm.part_of_element[u], pv = pm.part_of_element[v];
            if (pu != pv) {
                ++q.edge_cut;
                adj[pu][pv] = adj[pv][pu] = 1;
            }
        }
    q.neighbor_counts.resize(pm.part_count);
    for (idx p = 0; p < pm.part_count; ++p)
        q.neighbor_counts[p] =
            static_cast<idx>(std::count(adj[p].begin(), adj[p].end(), char(1)));

    std::vector<long> count(pm.part_count, 0);
    for (idx e = 0; e < dual.vertex_count; ++e) ++count[pm.part_of_element[e]];
    const long max_count = *std::max_element(count.begin(), count.end());
    q.imbalance = max_count * static_cast<double>(pm.part_count) / dual.vertex_count;
    return q;
}

/// Interface pairs whose facet owner and sister element land on different
/// parts; the quantity virtual-element augmentation is meant to reduce.
inline long count_split_interface_pairs(const Mesh& m, const std::vector<InterfacePair>& pairs,
                                        const PartMap& pm) {
    long split = 0;
    for (const auto& pr : pairs)
        if (pm.part_of_element[m.facets[pr.facet].owner] != pm.part_of_element[pr.sister])
            ++split;
    return split;
}

struct NodeClassification {
    idx part_count = 0;
    // parts touching each node, CSR, ascending per node
    std::vector<idx> node_part_offsets;
    std::vector<idx> node_parts;
    std::vector<std::vector<idx>> private_nodes;  // per part, ascending node ids
    std::vector<std::vector<idx>> shared_nodes;   // per part, ascending node ids
    std::vector<std::vector<idx>> external_nodes; // per part, ascending node ids
    // per part: neighbor part -> sorted node list
    std::vector<std::map<idx, std::vector<idx>>> shared_with;
    std::vector<std::map<idx, std::vector<idx>>> external_from;

    std::span<const idx> parts_of_node(idx n) const {
        return {node_parts.data() + node_part_offsets[n],
                node_parts.data() + node_part_offsets[n + 1]};
    }
};

/// Splits each part's nodes into private/shared and collects the external
/// nodes it needs from sister elements owned by other parts.
inline NodeClassification classify_nodes(const Mesh& m, const PartMap& pm,
                                         const std::vector<InterfacePair>& pairs = {}) {
    NodeClassification c;
    c.part_count = pm.part_count;
    const idx nn = m.node_count();

    std::vector<std::vector<idx>> parts_of(nn);
    for (idx e = 0; e < m.element_count(); ++e) {
        const idx p = pm.part_of_element[e];
        for (idx n : m.tets[e].n) {
            auto& v = parts_of[n];
            if (std::find(v.begin(), v.end(), p) == v.end()) v.push_back(p);
        }
    }
    c.node_part_offsets.assign(nn + 1, 0);
    for (idx n = 0; n < nn; ++n) {
        std::sort(parts_of[n].begin(), parts_of[n].end());
        c.node_part_offsets[n + 1] = c.node_part_offsets[n] + static_cast<idx>(parts_of[n].size());
    }
    c.node_parts.reserve(c.node_part_offsets[nn]);
    for (idx n = 0; n < nn; ++n)
        c.node_parts.insert(c.node_parts.end(), parts_of[n].begin(), parts_of[n].end());

    c.private_nodes.resize(pm.part_count);
    c.shared_nodes.resize(pm.part_count);
    c.external_nodes.resize(pm.part_count);
    c.shared_with.resize(pm.part_count);
    c.external_from.resize(pm.part_count);
    for (idx n = 0; n < nn; ++n) {
        const auto& ps = parts_of[n];
        if (ps.size() == 1) {
            c.private_nodes[ps[0]].push_back(n);
        } else {
            for (idx p : ps) {
                c.shared_nodes[p].push_back(n);
                for (idx q : ps)
                    if (q != p) c.shared_with[p][q].push_back(n);
            }
        }
    }

    for (const auto& pr : pairs) {
        const idx p = pm.part_of_element[m.facets[pr.facet].owner];
        const idx q = pm.part_of_element[pr.sister];
        for (idx n : m.tets[pr.sister].n) {
            const auto& ps = parts_of[n];
            if (std::find(ps.begin(), ps.end(), p) == ps.end())
                c.external_from[p][q].push_back(n);
        }
    }
    for (idx p = 0; p < pm.part_count; ++p) {
        std::vector<idx> all;
        for (auto& [q, nodes] : c.external_from[p]) {
            std::sort(nodes.begin(), nodes.end());
            nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
            all.insert(all.end(), nodes.begin(), nodes.end());
        }
        std::sort(all.begin(), all.end());
        all.erase(std::unique(all.begin(), all.end()), all.end());
        c.external_nodes[p] = std::move(all);
    }
    return c;
}

struct TwoLevelDecomposition {
    PartMap workers;
    std::vector<std::vector<idx>> worker_elements; // per worker, ascending element ids
    std::vector<PartMap> blocks;                   // per worker, over worker_elements order
};

/// First level balances load across workers over the augmented graph;
/// second level splits each worker's subgraph into cache blocks.
inline TwoLevelDecomposition two_level_decompose(const Mesh& m,
                                                 const std::vector<InterfacePair>& pairs,
                                                 idx workers, idx blocks_per_worker,
                                                 double balance_tol = 0.05, bool augment = true) {
    const AugmentedDualGraph aug =
        augment ? augment_virtual_elements(m, pairs)
                : AugmentedDualGraph{build_dual_graph(m), m.element_count(), {},
                                     std::vector<idx>(m.element_count(), 1)};

    TwoLevelDecomposition d;
    d.workers = partition_elements(aug, workers, balance_tol);
    d.worker_elements.resize(workers);
    for (idx e = 0; e < m.element_count(); ++e)
        d.worker_elements[d.workers.part_of_element[e]].push_back(e);

    d.blocks.resize(workers);
    for (idx wkr = 0; wkr < workers; ++wkr) {
        const auto& elems = d.worker_elements[wkr];
        const idx local_n = static_cast<idx>(elems.size());
        std::vector<idx> local_of_global(m.element_count(), -1);
        for (idx i = 0; i < local_n; ++i) local_of_global[elems[i]] = i;

        std::vector<std::pair<idx, idx>> edges;
        std::vector<idx> weights(local_n, 1);
        for (idx i = 0; i < local_n; ++i)
            for (idx u : aug.graph.neighbors(elems[i]))
                if (u < aug.physical_count && u > elems[i] && local_of_global[u] >= 0)
                    edges.emplace_back(i, local_of_global[u]);
        idx vcount = local_n;
        for (idx v = 0; v < aug.virtual_count(); ++v) {
            const auto& ve = aug.virtual_elements[v];
            if (d.workers.part_of_element[ve.owner] != wkr ||
                d.workers.part_of_element[ve.sister] != wkr)
                continue;
            edges.emplace_back(vcount, local_of_global[ve.owner]);
            edges.emplace_back(vcount, local_of_global[ve.sister]);
            weights.push_back(0);
            ++vcount;
        }
        PartMap bm = partition_graph(AdjacencyGraph::from_edge_list(vcount, std::move(edges)),
                                     weights, blocks_per_worker, balance_tol);
        bm.part_of_element.resize(local_n);
        d.blocks[wkr] = std::move(bm);
    }
    return d;
}

inline PartMap load_partmap(std::istream& in, idx element_count) {
    PartMap pm;
    pm.part_of_element.reserve(element_count);
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view v(line);
        while (!v.empty() && std::isspace(static_cast<unsigned char>(v.back()))) v.remove_suffix(1);
        while (!v.empty() && std::isspace(static_cast<unsigned char>(v.front()))) v.remove_prefix(1);
        if (v.empty() || v[0] == '#') continue;
        pm.part_of_element.push_back(static_cast<idx>(detail::parse_int(v, line_no)));
    }
    if (static_cast<idx>(pm.part_of_element.size()) != element_count)
        throw validation_error("partmap has " + std::to_string(pm.part_of_element.size()) +
                               " entries for " + std::to_string(element_count) + " elements");
    for (idx p : pm.part_of_element) {
        if (p < 0) throw validation_error("negative part id in partmap");
        pm.part_count = std::max(pm.part_count, p + 1);
    }
    return pm;
}

inline void write_partmap(const PartMap& pm, std::ostream& out) {
    for (idx p : pm.part_of_element) out << p << "\n";
}

} // namespace castfem
