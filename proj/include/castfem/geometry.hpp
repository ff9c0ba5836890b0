#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

namespace castfem {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3& operator+=(const Vec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
};

inline double component(const Vec3& v, int axis) { return axis == 0 ? v.x : axis == 1 ? v.y : v.z; }

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

/// Volume and constant shape-function gradients of a linear tetrahedron.
/// grad[0] is derived as -(grad[1]+grad[2]+grad[3]) so the partition of
/// unity sum is exactly zero in floating point.
struct TetGeometry {
    double volume = 0;
    std::array<Vec3, 4> grad{};
    double min_edge = 0;
    double max_edge = 0;
};

class degenerate_element_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline TetGeometry tet_geometry(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3) {
    const Vec3 e1 = p1 - p0;
    const Vec3 e2 = p2 - p0;
    const Vec3 e3 = p3 - p0;
    const double det = dot(e1, cross(e2, e3));

    TetGeometry g;
    g.volume = det / 6.0;

    const std::array<Vec3, 4> p{p0, p1, p2, p3};
    g.min_edge = g.max_edge = norm(p1 - p0);
    for (int a = 0; a < 4; ++a)
        for (int b = a + 1; b < 4; ++b) {
            const double len = norm(p[b] - p[a]);
            g.min_edge = std::min(g.min_edge, len);
            g.max_edge = std::max(g.max_edge, len);
        }

    const double eps_vol = 1e-12 * g.max_edge * g.max_edge * g.max_edge;
    if (!(g.volume > eps_vol))
        throw degenerate_element_error("degenerate tetrahedron: volume " +
                                       std::to_string(g.volume) + " below threshold " +
                                       std::to_string(eps_vol));

    g.grad[1] = cross(e2, e3) * (1.0 / det);
    g.grad[2] = cross(e3, e1) * (1.0 / det);
    g.grad[3] = cross(e1, e2) * (1.0 / det);
    g.grad[0] = (g.grad[1] + g.grad[2] + g.grad[3]) * -1.0;
    return g;
}

inline double tet_signed_volume(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3) {
    return dot(p1 - p0, cross(p2 - p0, p3 - p0)) / 6.0;
}

inline double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
    return 0.5 * norm(cross(b - a, c - a));
}

inline Vec3 triangle_centroid(const Vec3& a, const Vec3& b, const Vec3& c) {
    return (a + b + c) * (1.0 / 3.0);
}

} // namespace castfem
