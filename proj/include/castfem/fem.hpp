#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "castfem/errors.hpp"
#include "castfem/geometry.hpp"
#include "castfem/material.hpp"
#include "castfem/mesh.hpp"

namespace castfem {

struct SolverState {
    std::vector<double> T; // nodal temperature (K)
    std::vector<double> H; // nodal enthalpy (J/kg), kept consistent with T
    double time = 0;
    double dt = 0;
    long step_index = 0;
};

/// Lemmon apparent heat capacity sqrt(|grad H|^2 / |grad T|^2) from constant
/// element gradients. Falls back to the nodal secant dH/dT when the
/// temperature gradient is degenerate, and to c(mean T) when the nodal
/// temperature range is degenerate too.
inline double apparent_heat_capacity(const TetGeometry& geom, const double* Tn, const double* Hn,
                                     const MaterialTable& mat) {
    int lo = 0, hi = 0;
    for (int a = 1; a < 4; ++a) {
        if (Tn[a] < Tn[lo]) lo = a;
        if (Tn[a] > Tn[hi]) hi = a;
    }
    const double range = Tn[hi] - Tn[lo];
    if (range <= 0) return mat.c(0.25 * (Tn[0] + Tn[1] + Tn[2] + Tn[3]));

    Vec3 grad_t{}, grad_h{};
    for (int a = 0; a < 4; ++a) {
        grad_t += geom.grad[a] * Tn[a];
        grad_h += geom.grad[a] * Hn[a];
    }
    const double gt2 = dot(grad_t, grad_t);
    const double scale = range / geom.max_edge;
    if (gt2 < 1e-14 * scale * scale) return (Hn[hi] - Hn[lo]) / range;
    return std::sqrt(dot(grad_h, grad_h) / gt2);
}

/// Mean of the sister element's four nodal temperatures (the interface
/// ambient value).
inline double interface_ambient(const Mesh& m, idx sister_element,
                                std::span<const double> T) {
    const auto& n = m.tets[sister_element].n;
    return 0.25 * (T[n[0]] + T[n[1]] + T[n[2]] + T[n[3]]);
}

/// One element's contribution to the lumped capacitance diagonal and the
/// residual r = F - K T, scattered through `slots` (4 destination indices).
inline void element_accumulate(const TetGeometry& geom, const MaterialTable& mat,
                               const double* Tn, const double* Hn, const idx* slots, double* c_diag,
                               double* r) {
    const double t_bar = 0.25 * (Tn[0] + Tn[1] + Tn[2] + Tn[3]);
    const double lump = mat.rho * apparent_heat_capacity(geom, Tn, Hn, mat) * geom.volume * 0.25;
    const double kv = mat.k(t_bar) * geom.volume;

    Vec3 grad_t{};
    for (int b = 0; b < 4; ++b) grad_t += geom.grad[b] * Tn[b];
    for (int a = 0; a < 4; ++a) {
        c_diag[slots[a]] += lump;
        r[slots[a]] -= kv * dot(geom.grad[a], grad_t);
    }
}

/// Lumped surface flux q + h (T - T_inf) over one triangular facet, one
/// third of the area per node.
inline void facet_flux_accumulate(double area, double q, double h, double t_inf,
                                  const double* t_surface, const idx* slots, double* r) {
    const double third = area / 3.0;
    for (int a = 0; a < 3; ++a)
        r[slots[a]] += third * (-q + h * (t_inf - t_surface[a]));
}

/// Explicit stability bound rho c l^2 / k of one element at mean
/// temperature t_bar, with l the minimum edge length.
inline double element_stable_dt(const TetGeometry& geom, const MaterialTable& mat, double t_bar) {
    return mat.rho * mat.c(t_bar) * geom.min_edge * geom.min_edge / mat.k(t_bar);
}

/// Smallest stability bound over the whole mesh at the given nodal
/// temperatures, scaled by the safety factor.
inline double stable_timestep(const Mesh& m, const SimulationSetup& setup,
                              std::span<const double> T, double safety) {
    double dt = std::numeric_limits<double>::infinity();
    for (idx e = 0; e < m.element_count(); ++e) {
        const auto& n = m.tets[e].n;
        const double t_bar = 0.25 * (T[n[0]] + T[n[1]] + T[n[2]] + T[n[3]]);
        dt = std::min(dt,
                      element_stable_dt(m.element_geometry(e), setup.material(m.tets[e].region),
                                        t_bar));
    }
    dt *= safety;
    if (!(dt > 0) || !std::isfinite(dt))
        throw validation_error("non-positive stable time step (degenerate mesh or material)");
    return dt;
}

/// Forward Euler update T += dt r / C on every node. Fixed-temperature
/// nodes are overwritten by the caller afterwards.
inline void explicit_update(std::span<double> T, std::span<const double> c_diag,
                            std::span<const double> r, double dt) {
    for (std::size_t i = 0; i < T.size(); ++i) {
        if (!(c_diag[i] > 0))
            throw validation_error("zero lumped capacitance at active node " + std::to_string(i));
        T[i] += dt * r[i] / c_diag[i];
    }
}

} // namespace castfem
