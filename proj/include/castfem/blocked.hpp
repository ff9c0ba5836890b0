#pragma once

#include <chrono>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "castfem/errors.hpp"
#include "castfem/fem.hpp"
#include "castfem/material.hpp"
#include "castfem/mesh.hpp"
#include "castfem/partition.hpp"

namespace castfem {

/// A worker's slice of the mesh (the whole mesh for the serial solver).
/// Node state vectors are indexed by position in `nodes`.
struct SubDomain {
    const Mesh* mesh = nullptr;
    std::vector<idx> elements;      // global element ids, ascending
    std::vector<idx> nodes;         // global node ids, ascending
    std::vector<idx> local_of_node; // global node id -> local index or -1

    static SubDomain from_elements(const Mesh& m, std::vector<idx> elems) {
        SubDomain sd;
        sd.mesh = &m;
        sd.elements = std::move(elems);
        std::sort(sd.elements.begin(), sd.elements.end());
        sd.local_of_node.assign(m.node_count(), -1);
        for (idx e : sd.elements)
            for (idx n : m.tets[e].n) sd.local_of_node[n] = 0;
        for (idx n = 0; n < m.node_count(); ++n)
            if (sd.local_of_node[n] == 0) {
                sd.local_of_node[n] = static_cast<idx>(sd.nodes.size());
                sd.nodes.push_back(n);
            }
        return sd;
    }

    static SubDomain whole(const Mesh& m) {
        std::vector<idx> all(m.element_count());
        std::iota(all.begin(), all.end(), 0);
        return from_elements(m, std::move(all));
    }
};

struct BlockElement {
    std::array<idx, 4> slots; // block-local node slots
    idx region = 0;
    TetGeometry geom;
};

struct FacetBinding {
    std::array<idx, 3> slots; // block-local node slots
    double area = 0;
    bool interface = false;
    // flux parameters (interface facets take h from the coefficient table)
    double q = 0, h = 0, t_inf = 0;
    // interface bindings
    idx ambient_slot = -1;
    const InterfaceCoeff* coeff = nullptr;
};

struct Block {
    std::vector<idx> node_ids; // subdomain-local node indices, ascending
    std::vector<BlockElement> elements;
    std::vector<FacetBinding> facets;

    std::size_t resident_bytes() const {
        return node_ids.size() * 4 * sizeof(double) + elements.size() * sizeof(BlockElement) +
               facets.size() * sizeof(FacetBinding);
    }
};

/// Cache-block decomposition of one subdomain: per-block element data with
/// block-local node indexing plus the merge lists that sum shared-node
/// contributions back into subdomain order.
struct BlockPlan {
    std::vector<Block> blocks;
    PartMap block_map; // over subdomain element positions
    // per subdomain-local node: (block, slot) entries, ascending block
    std::vector<idx> merge_offsets;
    std::vector<std::pair<idx, idx>> merge_entries;
    std::size_t total_local_nodes = 0;

    double mean_block_bytes() const {
        if (blocks.empty()) return 0;
        std::size_t sum = 0;
        for (const auto& b : blocks) sum += b.resident_bytes();
        return static_cast<double>(sum) / blocks.size();
    }
};

struct DirichletNode {
    idx local = -1;
    Vec3 position;
    const BoundaryCondition* bc = nullptr;
};

// Sources for one interface ambient value: the sister element's 4 nodes,
// each either a subdomain-local node (>= 0) or an external slot (-1 - s).
struct AmbientBinding {
    std::array<idx, 4> src{};
};

/// Everything one worker needs to step its subdomain: the block plan,
/// resolved boundary conditions, ambient bindings and the list of external
/// nodes whose temperatures come from other workers.
struct WorkerModel {
    SubDomain domain;
    BlockPlan plan;
    std::vector<DirichletNode> dirichlet;      // ascending by local node
    std::vector<AmbientBinding> ambient_bindings;
    std::vector<idx> ambient_pair;             // ambient slot -> global pair index
    std::vector<idx> external_nodes;           // global node ids, ascending
    std::vector<idx> node_region;              // per subdomain-local node
    double local_static_dt = 0;                // min stability bound * safety, constant props
    bool dynamic_dt = false;
    // per-region covered range for clamp accounting
    std::vector<double> range_lo, range_hi;
    bool finite_range = false;
};

namespace detail {

inline void resolve_facet_tag(const Mesh& m, const SimulationSetup& setup, idx tag,
                              const BoundaryCondition** bc, const InterfaceCoeff** coeff) {
    *bc = nullptr;
    *coeff = nullptr;
    const std::string& name = m.tags[tag];
    if (const auto it = setup.boundary_conditions.find(name);
        it != setup.boundary_conditions.end())
        *bc = &it->second;
    for (const auto& contact : m.contacts)
        if (contact.tag_a == tag || contact.tag_b == tag) {
            const InterfaceCoeff* ic =
                setup.find_interface(m.tags[contact.tag_a], m.tags[contact.tag_b]);
            if (!ic)
                throw config_error("no interface coefficient for contact " +
                                   m.tags[contact.tag_a] + "/" + m.tags[contact.tag_b]);
            *coeff = ic;
        }
    if (*bc && *coeff)
        throw config_error("facet tag '" + name + "' resolves to both a boundary condition "
                                                  "and a contact interface");
    if (!*bc && !*coeff)
        throw config_error("facet tag '" + name + "' resolves to no declared condition");
}

} // namespace detail

/// Builds the block plan and boundary resolution for one subdomain.
/// block_count > 1 splits the subdomain's dual graph (glued across
/// worker-internal interfaces by virtual elements) into cache blocks.
inline WorkerModel build_worker_model(const Mesh& m, const SimulationSetup& setup,
                                      const std::vector<InterfacePair>& pairs, SubDomain domain,
                                      idx block_count) {
    WorkerModel model;
    model.domain = std::move(domain);
    const SubDomain& sd = model.domain;
    const idx n_elems = static_cast<idx>(sd.elements.size());
    const idx n_nodes = static_cast<idx>(sd.nodes.size());

    std::vector<idx> local_of_element(m.element_count(), -1);
    for (idx i = 0; i < n_elems; ++i) local_of_element[sd.elements[i]] = i;

    // second-level partitioning over the subdomain's dual graph
    PartMap bm;
    if (block_count <= 1) {
        bm.part_count = 1;
        bm.part_of_element.assign(n_elems, 0);
    } else {
        const AdjacencyGraph dual = build_dual_graph(m);
        std::vector<std::pair<idx, idx>> edges;
        std::vector<idx> weights(n_elems, 1);
        for (idx i = 0; i < n_elems; ++i)
            for (idx u : dual.neighbors(sd.elements[i]))
                if (u > sd.elements[i] && local_of_element[u] >= 0)
                    edges.emplace_back(i, local_of_element[u]);
        idx vcount = n_elems;
        for (const auto& pr : pairs) {
            const idx owner = m.facets[pr.facet].owner;
            if (local_of_element[owner] < 0 || local_of_element[pr.sister] < 0) continue;
            if (m.facets[pr.facet].tag != m.contacts[pr.contact].tag_a) continue; // one side
            edges.emplace_back(vcount, local_of_element[owner]);
            edges.emplace_back(vcount, local_of_element[pr.sister]);
            weights.push_back(0);
            ++vcount;
        }
        bm = partition_graph(AdjacencyGraph::from_edge_list(vcount, std::move(edges)), weights,
                             block_count);
        bm.part_of_element.resize(n_elems);
    }

    auto& plan = model.plan;
    plan.block_map = bm;
    plan.blocks.resize(bm.part_count);

    // facets grouped by owner element, interface pair lookup by facet
    std::vector<idx> pair_of_facet(m.facets.size(), -1);
    for (idx p = 0; p < static_cast<idx>(pairs.size()); ++p)
        pair_of_facet[pairs[p].facet] = p;

    std::vector<std::vector<idx>> facets_of_element(n_elems);
    for (idx f = 0; f < static_cast<idx>(m.facets.size()); ++f) {
        const idx le = local_of_element[m.facets[f].owner];
        if (le >= 0) facets_of_element[le].push_back(f);
    }

    model.node_region.assign(n_nodes, 0);
    std::vector<idx> slot_of_local(n_nodes, -1); // scratch per block
    std::vector<idx> ambient_slot_of_pair(pairs.size(), -1);
    std::vector<char> is_dirichlet(n_nodes, 0);
    std::vector<const BoundaryCondition*> dirichlet_bc(n_nodes, nullptr);

    for (idx b = 0; b < bm.part_count; ++b) {
        Block& blk = plan.blocks[b];
        for (idx i = 0; i < n_elems; ++i) {
            if (bm.part_of_element[i] != b) continue;
            const idx e = sd.elements[i];
            for (idx n : m.tets[e].n) {
                const idx ln = sd.local_of_node[n];
                if (slot_of_local[ln] < 0) slot_of_local[ln] = 0; // mark
            }
        }
        for (idx ln = 0; ln < n_nodes; ++ln)
            if (slot_of_local[ln] == 0) {
                slot_of_local[ln] = static_cast<idx>(blk.node_ids.size());
                blk.node_ids.push_back(ln);
            }

        for (idx i = 0; i < n_elems; ++i) {
            if (bm.part_of_element[i] != b) continue;
            const idx e = sd.elements[i];
            BlockElement be;
            be.region = m.tets[e].region;
            be.geom = m.element_geometry(e);
            for (int a = 0; a < 4; ++a)
                be.slots[a] = slot_of_local[sd.local_of_node[m.tets[e].n[a]]];
            for (idx n : m.tets[e].n) model.node_region[sd.local_of_node[n]] = m.tets[e].region;
            blk.elements.push_back(be);

            for (idx f : facets_of_element[i]) {
                const Facet& facet = m.facets[f];
                const BoundaryCondition* bc = nullptr;
                const InterfaceCoeff* coeff = nullptr;
                detail::resolve_facet_tag(m, setup, facet.tag, &bc, &coeff);

                if (bc && bc->kind == BoundaryCondition::Kind::fixed) {
                    for (idx n : facet.n) {
                        const idx ln = sd.local_of_node[n];
                        // lowest tag id wins when a corner node carries two tags
                        if (!is_dirichlet[ln] || facet.tag < [&] {
                                for (const auto& [name, cond] : setup.boundary_conditions)
                                    if (&cond == dirichlet_bc[ln]) return m.tag_id(name);
                                return std::numeric_limits<idx>::max();
                            }()) {
                            is_dirichlet[ln] = 1;
                            dirichlet_bc[ln] = bc;
                        }
                    }
                    continue;
                }

                FacetBinding fb;
                fb.area = m.facet_area(f);
                for (int a = 0; a < 3; ++a)
                    fb.slots[a] = slot_of_local[sd.local_of_node[facet.n[a]]];
                if (coeff) {
                    const idx p = pair_of_facet[f];
                    if (p < 0)
                        throw config_error("interface facet " + std::to_string(f) +
                                           " has no sister pairing; call pair_sister_facets");
                    if (ambient_slot_of_pair[p] < 0) {
                        ambient_slot_of_pair[p] = static_cast<idx>(model.ambient_pair.size());
                        model.ambient_pair.push_back(p);
                    }
                    fb.interface = true;
                    fb.ambient_slot = ambient_slot_of_pair[p];
                    fb.coeff = coeff;
                } else {
                    fb.q = bc->q;
                    fb.h = bc->h;
                    fb.t_inf = bc->t_inf;
                }
                blk.facets.push_back(fb);
            }
        }
        for (idx ln : blk.node_ids) slot_of_local[ln] = -1;
        plan.total_local_nodes += blk.node_ids.size();
    }

    // merge lists: ascending block within each node by construction order
    plan.merge_offsets.assign(n_nodes + 1, 0);
    for (const auto& blk : plan.blocks)
        for (idx ln : blk.node_ids) ++plan.merge_offsets[ln + 1];
    for (idx ln = 0; ln < n_nodes; ++ln) plan.merge_offsets[ln + 1] += plan.merge_offsets[ln];
    plan.merge_entries.resize(plan.total_local_nodes);
    {
        std::vector<idx> cursor(plan.merge_offsets.begin(), plan.merge_offsets.end() - 1);
        for (idx b = 0; b < static_cast<idx>(plan.blocks.size()); ++b) {
            const auto& ids = plan.blocks[b].node_ids;
            for (idx s = 0; s < static_cast<idx>(ids.size()); ++s)
                plan.merge_entries[cursor[ids[s]]++] = {b, s};
        }
    }

    // ambient bindings: sister nodes resolved locally or through externals
    model.ambient_bindings.resize(model.ambient_pair.size());
    std::vector<idx> ext_scratch;
    for (std::size_t s = 0; s < model.ambient_pair.size(); ++s)
        for (idx n : m.tets[pairs[model.ambient_pair[s]].sister].n)
            if (sd.local_of_node[n] < 0) ext_scratch.push_back(n);
    std::sort(ext_scratch.begin(), ext_scratch.end());
    ext_scratch.erase(std::unique(ext_scratch.begin(), ext_scratch.end()), ext_scratch.end());
    model.external_nodes = std::move(ext_scratch);
    for (std::size_t s = 0; s < model.ambient_pair.size(); ++s) {
        const auto& sister = m.tets[pairs[model.ambient_pair[s]].sister].n;
        for (int a = 0; a < 4; ++a) {
            const idx ln = sd.local_of_node[sister[a]];
            if (ln >= 0) {
                model.ambient_bindings[s].src[a] = ln;
            } else {
                const auto it = std::lower_bound(model.external_nodes.begin(),
                                                 model.external_nodes.end(), sister[a]);
                model.ambient_bindings[s].src[a] =
                    -1 - static_cast<idx>(it - model.external_nodes.begin());
            }
        }
    }

    for (idx ln = 0; ln < n_nodes; ++ln)
        if (is_dirichlet[ln])
            model.dirichlet.push_back({ln, m.nodes[sd.nodes[ln]], dirichlet_bc[ln]});
    for (const auto& d : model.dirichlet)
        if (d.bc->fixed_T.ys.empty() && !d.bc->fixed_fn)
            throw config_error("fixed boundary condition without a temperature value");

    // stability bound for constant-property materials
    model.dynamic_dt = setup.temperature_dependent();
    if (!model.dynamic_dt) {
        double dt = std::numeric_limits<double>::infinity();
        for (const auto& blk : plan.blocks)
            for (const auto& be : blk.elements)
                dt = std::min(dt, element_stable_dt(be.geom, setup.material(be.region), 0));
        model.local_static_dt = dt * setup.solver.dt_safety;
        if (!(model.local_static_dt > 0))
            throw validation_error("non-positive stable time step");
    }

    model.range_lo.assign(setup.materials.size(), -std::numeric_limits<double>::infinity());
    model.range_hi.assign(setup.materials.size(), std::numeric_limits<double>::infinity());
    for (std::size_t rg = 0; rg < setup.materials.size(); ++rg) {
        model.range_lo[rg] = setup.materials[rg].range_min();
        model.range_hi[rg] = setup.materials[rg].range_max();
        if (std::isfinite(model.range_lo[rg]) || std::isfinite(model.range_hi[rg]))
            model.finite_range = true;
    }
    return model;
}

struct BlockScratch {
    std::vector<double> t, h;         // gathered nodal values
    std::vector<double> c_diag, r;    // phase-1 accumulators
};

struct Workspace {
    std::vector<BlockScratch> blocks;

    explicit Workspace(const BlockPlan& plan) {
        blocks.resize(plan.blocks.size());
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            const std::size_t n = plan.blocks[b].node_ids.size();
            blocks[b].t.resize(n);
            blocks[b].h.resize(n);
            blocks[b].c_diag.resize(n);
            blocks[b].r.resize(n);
        }
    }
};

/// Per-worker solver state plus merged accumulators and communication
/// caches. T/H are indexed subdomain-locally.
struct WorkerFields {
    SolverState state;
    std::vector<double> c_diag, r; // merged, subdomain-local
    std::vector<double> t_ext;     // aligned with WorkerModel::external_nodes
    std::vector<double> ambient;   // aligned with WorkerModel::ambient_pair
    long clamp_steps = 0;
};

/// Initial nodal temperatures for the whole mesh: per-region pouring
/// temperature (or the test override), then fixed-temperature nodes at
/// their t = 0 values.
inline std::vector<double> initial_temperatures(const Mesh& m, const SimulationSetup& setup) {
    const auto regions = node_regions(m);
    std::vector<double> T(m.node_count());
    for (idx n = 0; n < m.node_count(); ++n)
        T[n] = setup.initial_override
                   ? setup.initial_override(m.nodes[n], regions[n])
                   : setup.material(regions[n]).initial_temperature;

    std::vector<idx> best_tag(m.node_count(), std::numeric_limits<idx>::max());
    for (const auto& facet : m.facets) {
        const auto it = setup.boundary_conditions.find(m.tags[facet.tag]);
        if (it == setup.boundary_conditions.end() ||
            it->second.kind != BoundaryCondition::Kind::fixed)
            continue;
        for (idx n : facet.n)
            if (facet.tag < best_tag[n]) {
                best_tag[n] = facet.tag;
                T[n] = it->second.fixed_value(m.nodes[n], 0.0);
            }
    }
    return T;
}

inline void init_worker_fields(const WorkerModel& model, const SimulationSetup& setup,
                               std::span<const double> global_T, WorkerFields& f) {
    const auto& sd = model.domain;
    const idx n = static_cast<idx>(sd.nodes.size());
    f.state.T.resize(n);
    f.state.H.resize(n);
    for (idx i = 0; i < n; ++i) f.state.T[i] = global_T[sd.nodes[i]];
    for (idx i = 0; i < n; ++i)
        f.state.H[i] = setup.material(model.node_region[i]).enthalpy(f.state.T[i]);
    f.c_diag.assign(n, 0);
    f.r.assign(n, 0);
    f.t_ext.resize(model.external_nodes.size());
    for (std::size_t i = 0; i < model.external_nodes.size(); ++i)
        f.t_ext[i] = global_T[model.external_nodes[i]];
    f.ambient.assign(model.ambient_pair.size(), 0);
    f.state.time = 0;
    f.state.step_index = 0;
}

/// Mean sister temperature per interface pair, from local and external
/// nodal values. Runs after merge and before the update, so assembly in
/// the following step sees this step's temperatures.
inline void refresh_ambient(const WorkerModel& model, WorkerFields& f) {
    for (std::size_t s = 0; s < model.ambient_bindings.size(); ++s) {
        const auto& src = model.ambient_bindings[s].src;
        double sum = 0;
        for (int a = 0; a < 4; ++a)
            sum += src[a] >= 0 ? f.state.T[src[a]] : f.t_ext[-1 - src[a]];
        f.ambient[s] = 0.25 * sum;
    }
}

/// Phase 1: per-block gather and element/facet accumulation into the block
/// scratch arrays. Returns the minimum element stability bound seen (before
/// the safety factor) when properties are temperature dependent.
inline double assemble_blocks(const WorkerModel& model, const SimulationSetup& setup,
                              const WorkerFields& f, Workspace& ws) {
    double min_dt = std::numeric_limits<double>::infinity();
    const auto& plan = model.plan;
    for (std::size_t b = 0; b < plan.blocks.size(); ++b) {
        const Block& blk = plan.blocks[b];
        BlockScratch& scratch = ws.blocks[b];
        const idx nb = static_cast<idx>(blk.node_ids.size());
        for (idx j = 0; j < nb; ++j) {
            scratch.t[j] = f.state.T[blk.node_ids[j]];
            scratch.h[j] = f.state.H[blk.node_ids[j]];
            scratch.c_diag[j] = 0;
            scratch.r[j] = 0;
        }
        for (const auto& be : blk.elements) {
            const MaterialTable& mat = setup.materials[be.region];
            double tn[4], hn[4];
            for (int a = 0; a < 4; ++a) {
                tn[a] = scratch.t[be.slots[a]];
                hn[a] = scratch.h[be.slots[a]];
            }
            element_accumulate(be.geom, mat, tn, hn, be.slots.data(), scratch.c_diag.data(),
                               scratch.r.data());
            if (model.dynamic_dt) {
                const double t_bar = 0.25 * (tn[0] + tn[1] + tn[2] + tn[3]);
                min_dt = std::min(min_dt, element_stable_dt(be.geom, mat, t_bar));
            }
        }
        for (const auto& fb : blk.facets) {
            double ts[3];
            for (int a = 0; a < 3; ++a) ts[a] = scratch.t[fb.slots[a]];
            if (fb.interface) {
                const double var = fb.coeff->var == InterfaceCoeff::Var::time
                                       ? f.state.time
                                       : (ts[0] + ts[1] + ts[2]) / 3.0;
                facet_flux_accumulate(fb.area, 0.0, fb.coeff->h(var), f.ambient[fb.ambient_slot],
                                      ts, fb.slots.data(), scratch.r.data());
            } else {
                facet_flux_accumulate(fb.area, fb.q, fb.h, fb.t_inf, ts, fb.slots.data(),
                                      scratch.r.data());
            }
        }
    }
    return min_dt;
}

/// Phase 2 (within one worker): sum block contributions per subdomain node
/// in ascending block order.
inline void merge_blocks(const WorkerModel& model, const Workspace& ws, WorkerFields& f) {
    const auto& plan = model.plan;
    const idx n = static_cast<idx>(model.domain.nodes.size());
    for (idx i = 0; i < n; ++i) {
        double c = 0, r = 0;
        for (idx e = plan.merge_offsets[i]; e < plan.merge_offsets[i + 1]; ++e) {
            const auto [b, slot] = plan.merge_entries[e];
            c += ws.blocks[b].c_diag[slot];
            r += ws.blocks[b].r[slot];
        }
        f.c_diag[i] = c;
        f.r[i] = r;
    }
}

/// Phase 3: explicit update of all subdomain nodes, then the fixed
/// temperature overwrite at t + dt, then the enthalpy refresh.
inline void update_fields(const WorkerModel& model, const SimulationSetup& setup, WorkerFields& f,
                          double dt) {
    explicit_update(f.state.T, f.c_diag, f.r, dt);
    const double t_next = f.state.time + dt;
    for (const auto& d : model.dirichlet)
        f.state.T[d.local] = d.bc->fixed_value(d.position, t_next);

    bool clamped = false;
    for (std::size_t i = 0; i < f.state.T.size(); ++i) {
        const double T = f.state.T[i];
        f.state.H[i] = setup.materials[model.node_region[i]].enthalpy(T);
        if (model.finite_range &&
            (T < model.range_lo[model.node_region[i]] || T > model.range_hi[model.node_region[i]]))
            clamped = true;
    }
    if (clamped) ++f.clamp_steps;
    f.state.time = t_next;
    f.state.dt = dt;
    ++f.state.step_index;
}

/// One full serial step: assemble, merge, ambient refresh, update.
/// Results are independent of the block count.
inline void blocked_step(const WorkerModel& model, const SimulationSetup& setup, WorkerFields& f,
                         Workspace& ws, double t_remaining) {
    const double min_bound = assemble_blocks(model, setup, f, ws);
    merge_blocks(model, ws, f);
    refresh_ambient(model, f);
    double dt = model.dynamic_dt ? min_bound * setup.solver.dt_safety : model.local_static_dt;
    if (t_remaining > 0) dt = std::min(dt, t_remaining);
    update_fields(model, setup, f, dt);
}

inline double improvement_factor(double t_reference, double t_blocked) {
    if (!(t_reference > 0) || !(t_blocked > 0))
        throw validation_error("improvement factor requires positive times");
    return t_reference / t_blocked;
}

struct TuneReport {
    std::vector<idx> candidates;
    std::vector<double> seconds;  // best-of-2 stepping time per candidate
    idx chosen = 1;
    double overhead_fraction = 0; // tune wall time / projected total run
};

/// Argmin of measured seconds; first (smallest) candidate wins ties.
inline idx choose_block_count(const std::vector<idx>& candidates,
                              const std::vector<double>& seconds) {
    if (candidates.empty() || candidates.size() != seconds.size())
        throw validation_error("autotune needs one timing per candidate");
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i)
        if (seconds[i] < seconds[best]) best = i;
    return candidates[best];
}

/// Geometric candidate list 1, 2, 4, ... capped so blocks keep at least 64
/// elements on average.
inline std::vector<idx> default_block_candidates(idx element_count, idx hard_cap = 1024) {
    std::vector<idx> c;
    for (idx b = 1; b <= std::max<idx>(1, element_count / 64) && b <= hard_cap; b *= 2)
        c.push_back(b);
    return c;
}

/// Times trial steps per candidate block count on a copy of the state,
/// without any inter-worker exchange, and picks the fastest.
inline TuneReport autotune_block_count(const Mesh& m, const SimulationSetup& setup,
                                       const std::vector<InterfacePair>& pairs,
                                       const SubDomain& domain, std::span<const double> global_T,
                                       std::vector<idx> candidates, int trial_steps = 10,
                                       double projected_total_steps = 0) {
    using clock = std::chrono::steady_clock;
    const auto tune_begin = clock::now();
    if (candidates.empty())
        candidates = default_block_candidates(static_cast<idx>(domain.elements.size()));

    TuneReport report;
    report.candidates = candidates;
    for (idx b : candidates) {
        const WorkerModel model = build_worker_model(m, setup, pairs, domain, b);
        double best = std::numeric_limits<double>::infinity();
        for (int rep = 0; rep < 2; ++rep) {
            WorkerFields f;
            init_worker_fields(model, setup, global_T, f);
            Workspace ws(model.plan);
            refresh_ambient(model, f);
            const auto begin = clock::now();
            for (int s = 0; s < trial_steps; ++s) blocked_step(model, setup, f, ws, 0);
            best = std::min(best, std::chrono::duration<double>(clock::now() - begin).count());
        }
        report.seconds.push_back(best);
    }
    report.chosen = choose_block_count(report.candidates, report.seconds);
    const double tune_wall = std::chrono::duration<double>(clock::now() - tune_begin).count();
    if (projected_total_steps > 0 && trial_steps > 0) {
        const double chosen_s = report.seconds[static_cast<std::size_t>(
            std::find(report.candidates.begin(), report.candidates.end(), report.chosen) -
            report.candidates.begin())];
        const double projected = chosen_s / trial_steps * projected_total_steps;
        report.overhead_fraction = tune_wall / (tune_wall + projected);
    }
    return report;
}

struct SeriesSample {
    double time = 0;
    double t_min = 0, t_max = 0;
};

struct SolveOptions {
    idx blocks = 1;
    bool autotune = false;
    std::vector<idx> tune_candidates; // empty = defaults
    int tune_steps = 10;
    long max_steps = 0; // 0 = run to t_end
};

struct SolveResult {
    std::vector<double> T, H; // global nodal fields
    double end_time = 0;
    long steps = 0;
    double loop_seconds = 0; // assembly + merge + update, excludes setup
    std::vector<SeriesSample> series;
    TuneReport tune;
    long clamp_steps = 0;
    idx blocks_used = 1;
};

/// Serial cache-blocked driver over the whole mesh.
inline SolveResult solve_serial(const Mesh& m, const SimulationSetup& setup, SolveOptions opts) {
    const std::vector<InterfacePair> pairs = pair_sister_facets(m);
    SubDomain domain = SubDomain::whole(m);
    const std::vector<double> T0 = initial_temperatures(m, setup);

    SolveResult result;
    if (opts.autotune) {
        const double projected =
            opts.max_steps > 0 ? static_cast<double>(opts.max_steps) : 1000.0;
        result.tune = autotune_block_count(m, setup, pairs, domain, T0, opts.tune_candidates,
                                           opts.tune_steps, projected);
        opts.blocks = result.tune.chosen;
    }
    result.blocks_used = opts.blocks;

    const WorkerModel model = build_worker_model(m, setup, pairs, std::move(domain), opts.blocks);
    WorkerFields f;
    init_worker_fields(model, setup, T0, f);
    Workspace ws(model.plan);
    refresh_ambient(model, f);

    const double t_end = setup.solver.t_end;
    const long max_steps = opts.max_steps;
    const auto begin = std::chrono::steady_clock::now();
    while ((max_steps > 0 && f.state.step_index < max_steps) ||
           (max_steps <= 0 && f.state.time < t_end)) {
        const double remaining = max_steps > 0 ? 0 : t_end - f.state.time;
        blocked_step(model, setup, f, ws, remaining);
        if (setup.solver.output_every > 0 && f.state.step_index % setup.solver.output_every == 0) {
            const auto [lo, hi] = std::minmax_element(f.state.T.begin(), f.state.T.end());
            result.series.push_back({f.state.time, *lo, *hi});
        }
    }
    result.loop_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();

    result.T.assign(m.node_count(), 0);
    result.H.assign(m.node_count(), 0);
    for (idx i = 0; i < static_cast<idx>(model.domain.nodes.size()); ++i) {
        result.T[model.domain.nodes[i]] = f.state.T[i];
        result.H[model.domain.nodes[i]] = f.state.H[i];
    }
    result.end_time = f.state.time;
    result.steps = f.state.step_index;
    result.clamp_steps = f.clamp_steps;
    return result;
}

} // namespace castfem
