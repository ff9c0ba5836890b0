#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "castfem/errors.hpp"
#include "castfem/geometry.hpp"
#include "castfem/graph.hpp"

namespace castfem {

struct Tetra {
    std::array<idx, 4> n{};
    idx region = 0;
};

struct Facet {
    std::array<idx, 3> n{};
    idx owner = -1; // element that has this face; derived during validation
    idx tag = -1;   // index into Mesh::tags
};

struct Contact {
    idx tag_a = -1; // cast-side tag
    idx tag_b = -1;
};

/// One interface facet paired with its sister element in the other region.
/// Pairing is computed once per mesh, see pair_sister_facets().
struct InterfacePair {
    idx facet = -1;
    idx sister = -1;  // element index in the other region
    idx contact = -1; // which contact declaration this facet belongs to
};

struct Mesh {
    std::vector<Vec3> nodes;
    std::vector<Tetra> tets;
    std::vector<Facet> facets;
    std::vector<std::string> tags;
    std::vector<Contact> contacts;
    idx region_count = 0;

    idx node_count() const { return static_cast<idx>(nodes.size()); }
    idx element_count() const { return static_cast<idx>(tets.size()); }

    idx tag_id(std::string_view name) const {
        for (std::size_t i = 0; i < tags.size(); ++i)
            if (tags[i] == name) return static_cast<idx>(i);
        return -1;
    }
    idx add_tag(std::string_view name) {
        const idx existing = tag_id(name);
        if (existing >= 0) return existing;
        tags.emplace_back(name);
        return static_cast<idx>(tags.size()) - 1;
    }

    TetGeometry element_geometry(idx e) const {
        const auto& t = tets[e].n;
        return tet_geometry(nodes[t[0]], nodes[t[1]], nodes[t[2]], nodes[t[3]]);
    }
    Vec3 facet_centroid(idx f) const {
        const auto& n = facets[f].n;
        return triangle_centroid(nodes[n[0]], nodes[n[1]], nodes[n[2]]);
    }
    double facet_area(idx f) const {
        const auto& n = facets[f].n;
        return triangle_area(nodes[n[0]], nodes[n[1]], nodes[n[2]]);
    }
};

namespace detail {

using FaceKey = std::array<idx, 3>;

inline FaceKey face_key(idx a, idx b, idx c) {
    FaceKey k{a, b, c};
    std::sort(k.begin(), k.end());
    return k;
}

// Faces of a tet as index triples into Tetra::n.
inline constexpr std::array<std::array<int, 3>, 4> tet_faces{
    {{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}}};

struct FaceEntry {
    FaceKey key;
    idx element;
    bool operator<(const FaceEntry& o) const {
        return std::tie(key, element) < std::tie(o.key, o.element);
    }
};

inline std::vector<FaceEntry> all_faces(const Mesh& m) {
    std::vector<FaceEntry> faces;
    faces.reserve(m.tets.size() * 4);
    for (idx e = 0; e < m.element_count(); ++e) {
        const auto& t = m.tets[e].n;
        for (const auto& f : tet_faces)
            faces.push_back({face_key(t[f[0]], t[f[1]], t[f[2]]), e});
    }
    std::sort(faces.begin(), faces.end());
    return faces;
}

} // namespace detail

/// Element adjacency: edge iff two tets share a triangular face.
inline AdjacencyGraph build_dual_graph(const Mesh& m) {
    const auto faces = detail::all_faces(m);
    std::vector<std::pair<idx, idx>> edges;
    for (std::size_t i = 0; i + 1 < faces.size(); ++i)
        if (faces[i].key == faces[i + 1].key)
            edges.emplace_back(faces[i].element, faces[i + 1].element);
    return AdjacencyGraph::from_edge_list(m.element_count(), std::move(edges));
}

/// Region of every node; throws if regions share a node.
inline std::vector<idx> node_regions(const Mesh& m) {
    std::vector<idx> region(m.nodes.size(), -1);
    for (const auto& t : m.tets)
        for (idx n : t.n) {
            if (region[n] >= 0 && region[n] != t.region)
                throw validation_error("node " + std::to_string(n) +
                                       " belongs to elements of regions " +
                                       std::to_string(region[n]) + " and " +
                                       std::to_string(t.region));
            region[n] = t.region;
        }
    for (std::size_t n = 0; n < region.size(); ++n)
        if (region[n] < 0)
            throw validation_error("node " + std::to_string(n) + " not referenced by any element");
    return region;
}

/// Fixes element orientation, derives facet owners and checks all mesh
/// invariants. Called by parse_mesh; call directly for meshes built in code.
inline void finalize_mesh(Mesh& m) {
    const idx nn = m.node_count();
    for (const auto& p : m.nodes)
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
            throw validation_error("non-finite node coordinate");

    m.region_count = 0;
    for (idx e = 0; e < m.element_count(); ++e) {
        auto& t = m.tets[e];
        for (idx n : t.n)
            if (n < 0 || n >= nn)
                throw validation_error("element " + std::to_string(e) +
                                       " references node " + std::to_string(n) +
                                       " outside [0, " + std::to_string(nn) + ")");
        for (int a = 0; a < 4; ++a)
            for (int b = a + 1; b < 4; ++b)
                if (t.n[a] == t.n[b])
                    throw validation_error("element " + std::to_string(e) +
                                           " has repeated node " + std::to_string(t.n[a]));
        if (t.region < 0) throw validation_error("negative region id");
        m.region_count = std::max(m.region_count, t.region + 1);

        if (tet_signed_volume(m.nodes[t.n[0]], m.nodes[t.n[1]], m.nodes[t.n[2]],
                              m.nodes[t.n[3]]) < 0)
            std::swap(t.n[2], t.n[3]);
        try {
            m.element_geometry(e);
        } catch (const degenerate_element_error& err) {
            throw degenerate_element_error("element " + std::to_string(e) + ": " + err.what());
        }
    }

    node_regions(m); // checks coverage and region disjointness

    const auto faces = detail::all_faces(m);
    for (idx f = 0; f < static_cast<idx>(m.facets.size()); ++f) {
        auto& facet = m.facets[f];
        for (idx n : facet.n)
            if (n < 0 || n >= nn)
                throw validation_error("facet " + std::to_string(f) + " references node " +
                                       std::to_string(n) + " outside [0, " +
                                       std::to_string(nn) + ")");
        const auto key = detail::face_key(facet.n[0], facet.n[1], facet.n[2]);
        auto it = std::lower_bound(faces.begin(), faces.end(),
                                   detail::FaceEntry{key, std::numeric_limits<idx>::min()});
        if (it == faces.end() || it->key != key)
            throw validation_error("facet " + std::to_string(f) +
                                   " is not a face of any element");
        const auto next = it + 1;
        if (next != faces.end() && next->key == key)
            throw validation_error("facet " + std::to_string(f) +
                                   " is an interior face (two owner elements)");
        facet.owner = it->element;
    }

    for (const auto& c : m.contacts)
        if (c.tag_a < 0 || c.tag_a >= static_cast<idx>(m.tags.size()) || c.tag_b < 0 ||
            c.tag_b >= static_cast<idx>(m.tags.size()))
            throw validation_error("contact declaration references unknown tag");
}

namespace detail {

struct LineReader {
    std::istream& in;
    long line_no = 0;
    std::string line;

    // Next non-empty line with comments stripped; false on EOF.
    bool next(std::vector<std::string_view>& tokens) {
        while (std::getline(in, line)) {
            ++line_no;
            std::string_view v(line);
            if (const auto hash = v.find('#'); hash != std::string_view::npos)
                v = v.substr(0, hash);
            tokens.clear();
            std::size_t i = 0;
            while (i < v.size()) {
                while (i < v.size() && std::isspace(static_cast<unsigned char>(v[i]))) ++i;
                std::size_t j = i;
                while (j < v.size() && !std::isspace(static_cast<unsigned char>(v[j]))) ++j;
                if (j > i) tokens.push_back(v.substr(i, j - i));
                i = j;
            }
            if (!tokens.empty()) return true;
        }
        return false;
    }
};

inline double parse_double(std::string_view tok, long line) {
    double value = 0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
        throw parse_error("expected a number, got '" + std::string(tok) + "'", line);
    return value;
}

inline long parse_int(std::string_view tok, long line) {
    long value = 0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
        throw parse_error("expected an integer, got '" + std::string(tok) + "'", line);
    return value;
}

} // namespace detail

/// Reads the line-oriented mesh format:
///   femesh 1
///   nodes N      followed by N lines "x y z"
///   tets M       followed by M lines "n0 n1 n2 n3 region"
///   facets B     followed by B lines "n0 n1 n2 tag"
///   contact tagA tagB
/// Indices are 0-based; '#' starts a comment.
inline Mesh parse_mesh(std::istream& in) {
    detail::LineReader rd{in};
    std::vector<std::string_view> tok;

    if (!rd.next(tok) || tok.size() != 2 || tok[0] != "femesh" || tok[1] != "1")
        throw parse_error("expected header 'femesh 1'", rd.line_no);

    Mesh m;
    while (rd.next(tok)) {
        if (tok[0] == "nodes") {
            if (tok.size() != 2) throw parse_error("usage: nodes N", rd.line_no);
            const long n = detail::parse_int(tok[1], rd.line_no);
            m.nodes.reserve(n);
            for (long i = 0; i < n; ++i) {
                if (!rd.next(tok)) throw parse_error("unexpected end of node list", rd.line_no);
                if (tok.size() != 3) throw parse_error("node line needs 'x y z'", rd.line_no);
                m.nodes.push_back({detail::parse_double(tok[0], rd.line_no),
                                   detail::parse_double(tok[1], rd.line_no),
                                   detail::parse_double(tok[2], rd.line_no)});
            }
        } else if (tok[0] == "tets") {
            if (tok.size() != 2) throw parse_error("usage: tets M", rd.line_no);
            const long n = detail::parse_int(tok[1], rd.line_no);
            m.tets.reserve(n);
            for (long i = 0; i < n; ++i) {
                if (!rd.next(tok)) throw parse_error("unexpected end of element list", rd.line_no);
                if (tok.size() != 5)
                    throw parse_error("element line needs 'n0 n1 n2 n3 region'", rd.line_no);
                Tetra t;
                for (int k = 0; k < 4; ++k)
                    t.n[k] = static_cast<idx>(detail::parse_int(tok[k], rd.line_no));
                t.region = static_cast<idx>(detail::parse_int(tok[4], rd.line_no));
                m.tets.push_back(t);
            }
        } else if (tok[0] == "facets") {
            if (tok.size() != 2) throw parse_error("usage: facets B", rd.line_no);
            const long n = detail::parse_int(tok[1], rd.line_no);
            m.facets.reserve(n);
            for (long i = 0; i < n; ++i) {
                if (!rd.next(tok)) throw parse_error("unexpected end of facet list", rd.line_no);
                if (tok.size() != 4)
                    throw parse_error("facet line needs 'n0 n1 n2 tag'", rd.line_no);
                Facet f;
                for (int k = 0; k < 3; ++k)
                    f.n[k] = static_cast<idx>(detail::parse_int(tok[k], rd.line_no));
                f.tag = m.add_tag(tok[3]);
                m.facets.push_back(f);
            }
        } else if (tok[0] == "contact") {
            if (tok.size() != 3) throw parse_error("usage: contact tagA tagB", rd.line_no);
            m.contacts.push_back({m.add_tag(tok[1]), m.add_tag(tok[2])});
        } else {
            throw parse_error("unknown section '" + std::string(tok[0]) + "'", rd.line_no);
        }
    }

    try {
        finalize_mesh(m);
    } catch (const std::exception& err) {
        throw validation_error(std::string("mesh validation failed: ") + err.what());
    }
    return m;
}

inline void write_mesh(const Mesh& m, std::ostream& out) {
    out << "femesh 1\n";
    out << "nodes " << m.nodes.size() << "\n";
    out.precision(17);
    for (const auto& p : m.nodes) out << p.x << " " << p.y << " " << p.z << "\n";
    out << "tets " << m.tets.size() << "\n";
    for (const auto& t : m.tets)
        out << t.n[0] << " " << t.n[1] << " " << t.n[2] << " " << t.n[3] << " " << t.region
            << "\n";
    if (!m.facets.empty()) {
        out << "facets " << m.facets.size() << "\n";
        for (const auto& f : m.facets)
            out << f.n[0] << " " << f.n[1] << " " << f.n[2] << " " << m.tags[f.tag] << "\n";
    }
    for (const auto& c : m.contacts)
        out << "contact " << m.tags[c.tag_a] << " " << m.tags[c.tag_b] << "\n";
}

namespace detail {

// Exact nearest-centroid queries over one contact side. Grid cells are only
// an accelerator; results match the brute-force scan including tie breaks.
class CentroidIndex {
  public:
    CentroidIndex(const Mesh& m, const std::vector<idx>& facet_ids) : mesh_(m), ids_(facet_ids) {
        centroids_.reserve(ids_.size());
        for (idx f : ids_) centroids_.push_back(m.facet_centroid(f));
        if (ids_.size() > grid_threshold) build_grid();
    }

    // Returns facet id of the nearest centroid; ties broken by
    // (owner element, facet id), both ascending.
    idx nearest(const Vec3& q) const {
        if (cell_size_ <= 0) return scan(q, 0, static_cast<long>(ids_.size()));
        return grid_nearest(q);
    }

    static constexpr std::size_t grid_threshold = 10000;

  private:
    struct Best {
        double d2 = std::numeric_limits<double>::infinity();
        idx owner = std::numeric_limits<idx>::max();
        idx facet = std::numeric_limits<idx>::max();
    };

    void consider(Best& b, const Vec3& q, long slot) const {
        const Vec3 d = centroids_[slot] - q;
        const double d2 = dot(d, d);
        const idx f = ids_[slot];
        const idx owner = mesh_.facets[f].owner;
        if (std::tie(d2, owner, f) < std::tie(b.d2, b.owner, b.facet)) b = {d2, owner, f};
    }

    idx scan(const Vec3& q, long lo, long hi) const {
        Best b;
        for (long i = lo; i < hi; ++i) consider(b, q, i);
        return b.facet;
    }

    void build_grid() {
        lo_ = hi_ = centroids_[0];
        for (const auto& c : centroids_) {
            lo_ = {std::min(lo_.x, c.x), std::min(lo_.y, c.y), std::min(lo_.z, c.z)};
            hi_ = {std::max(hi_.x, c.x), std::max(hi_.y, c.y), std::max(hi_.z, c.z)};
        }
        const Vec3 span = hi_ - lo_;
        const double diag = std::max({span.x, span.y, span.z});
        const double target = diag / std::cbrt(static_cast<double>(centroids_.size()));
        cell_size_ = std::max(target, diag * 1e-9);
        if (cell_size_ <= 0) return; // all centroids coincide; linear scan
        for (int d = 0; d < 3; ++d)
            dims_[d] = std::max<long>(1, static_cast<long>(component(span, d) / cell_size_) + 1);
        cells_.resize(dims_[0] * dims_[1] * dims_[2]);
        for (std::size_t i = 0; i < centroids_.size(); ++i)
            cells_[cell_of(centroids_[i])].push_back(static_cast<long>(i));
    }

    std::array<long, 3> coords(const Vec3& p) const {
        std::array<long, 3> c;
        const Vec3 rel = p - lo_;
        for (int d = 0; d < 3; ++d)
            c[d] = std::clamp(static_cast<long>(component(rel, d) / cell_size_), 0L, dims_[d] - 1);
        return c;
    }
    long cell_of(const Vec3& p) const {
        const auto c = coords(p);
        return (c[2] * dims_[1] + c[1]) * dims_[0] + c[0];
    }

    idx grid_nearest(const Vec3& q) const {
        const auto qc = coords(q);
        Best b;
        const long max_ring = std::max({dims_[0], dims_[1], dims_[2]});
        for (long r = 0;; ++r) {
            const double ring_min = (r > 0) ? (r - 1) * cell_size_ : 0.0;
            if (b.facet != std::numeric_limits<idx>::max() && ring_min * ring_min > b.d2) break;
            bool any_cell = false;
            for (long dz = -r; dz <= r; ++dz)
                for (long dy = -r; dy <= r; ++dy)
                    for (long dx = -r; dx <= r; ++dx) {
                        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
                        const long cx = qc[0] + dx, cy = qc[1] + dy, cz = qc[2] + dz;
                        if (cx < 0 || cy < 0 || cz < 0 || cx >= dims_[0] || cy >= dims_[1] ||
                            cz >= dims_[2])
                            continue;
                        any_cell = true;
                        for (long slot : cells_[(cz * dims_[1] + cy) * dims_[0] + cx])
                            consider(b, q, slot);
                    }
            if (!any_cell && r > max_ring) break;
        }
        return b.facet;
    }

    const Mesh& mesh_;
    std::vector<idx> ids_;
    std::vector<Vec3> centroids_;
    Vec3 lo_{}, hi_{};
    double cell_size_ = 0;
    std::array<long, 3> dims_{1, 1, 1};
    std::vector<std::vector<long>> cells_;
};

} // namespace detail

/// Pairs every tagged interface facet with the owner element of the nearest
/// facet on the opposite side of its contact. Computed once at setup and
/// reused for the whole simulation.
inline std::vector<InterfacePair> pair_sister_facets(const Mesh& m) {
    std::vector<InterfacePair> pairs;
    for (idx c = 0; c < static_cast<idx>(m.contacts.size()); ++c) {
        const auto& contact = m.contacts[c];
        std::vector<idx> side_a, side_b;
        for (idx f = 0; f < static_cast<idx>(m.facets.size()); ++f) {
            if (m.facets[f].tag == contact.tag_a) side_a.push_back(f);
            if (m.facets[f].tag == contact.tag_b) side_b.push_back(f);
        }
        if (side_a.empty() || side_b.empty())
            throw config_error("contact " + m.tags[contact.tag_a] + "/" + m.tags[contact.tag_b] +
                               ": side '" +
                               m.tags[side_a.empty() ? contact.tag_a : contact.tag_b] +
                               "' has no tagged facets");

        const detail::CentroidIndex index_a(m, side_a), index_b(m, side_b);
        for (idx f : side_a)
            pairs.push_back({f, m.facets[index_b.nearest(m.facet_centroid(f))].owner, c});
        for (idx f : side_b)
            pairs.push_back({f, m.facets[index_a.nearest(m.facet_centroid(f))].owner, c});
    }
    return pairs;
}

} // namespace castfem
