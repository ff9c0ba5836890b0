#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "castfem/errors.hpp"
#include "castfem/geometry.hpp"
#include "castfem/graph.hpp"
#include "castfem/mesh.hpp"

namespace castfem {

/// Piecewise-linear table y(x). Single-entry tables are constants and never
/// clamp; otherwise evaluation clamps x into the covered range.
struct PiecewiseLinear {
    std::vector<double> xs, ys;

    static PiecewiseLinear constant(double v) { return {{0.0}, {v}}; }

    bool is_constant() const { return xs.size() <= 1; }
    bool covers(double x) const { return is_constant() || (x >= xs.front() && x <= xs.back()); }
    double min_value() const { return *std::min_element(ys.begin(), ys.end()); }

    double operator()(double x) const {
        if (is_constant()) return ys.front();
        if (x <= xs.front()) return ys.front();
        if (x >= xs.back()) return ys.back();
        const auto it = std::upper_bound(xs.begin(), xs.end(), x);
        const std::size_t i = static_cast<std::size_t>(it - xs.begin()) - 1;
        const double f = (x - xs[i]) / (xs[i + 1] - xs[i]);
        return ys[i] + f * (ys[i + 1] - ys[i]);
    }

    void validate(const std::string& name) const {
        if (xs.empty() || xs.size() != ys.size())
            throw config_error(name + ": empty or inconsistent table");
        for (std::size_t i = 1; i < xs.size(); ++i)
            if (!(xs[i] > xs[i - 1]))
                throw config_error(name + ": table abscissae must be strictly increasing");
    }
};

/// Temperature-dependent properties of one region. Density is constant;
/// the enthalpy curve is the exact integral of c(T) plus a linear latent
/// heat ramp between solidus and liquidus, referenced to zero at the lowest
/// table temperature.
struct MaterialTable {
    double rho = 0;
    PiecewiseLinear c_of_T;
    PiecewiseLinear k_of_T;
    double latent_heat = 0;
    double solidus = 0;
    double liquidus = 0;
    double initial_temperature = 0;

    double c(double T) const { return c_of_T(T); }
    double k(double T) const { return k_of_T(T); }
    bool has_phase_change() const { return latent_heat > 0; }
    bool temperature_dependent() const {
        return !c_of_T.is_constant() || !k_of_T.is_constant();
    }

    double melt_fraction(double T) const {
        if (!has_phase_change()) return 0;
        return std::clamp((T - solidus) / (liquidus - solidus), 0.0, 1.0);
    }

    // Covered temperature range; constants cover everything.
    double range_min() const {
        double lo = -std::numeric_limits<double>::infinity();
        if (!c_of_T.is_constant()) lo = std::max(lo, c_of_T.xs.front());
        if (!k_of_T.is_constant()) lo = std::max(lo, k_of_T.xs.front());
        return lo;
    }
    double range_max() const {
        double hi = std::numeric_limits<double>::infinity();
        if (!c_of_T.is_constant()) hi = std::min(hi, c_of_T.xs.back());
        if (!k_of_T.is_constant()) hi = std::min(hi, k_of_T.xs.back());
        return hi;
    }
    bool covers(double T) const { return T >= range_min() && T <= range_max(); }

    double enthalpy(double T) const {
        double sensible;
        if (c_of_T.is_constant()) {
            sensible = c_of_T.ys.front() * (T - enthalpy_ref_);
        } else {
            const auto& xs = c_of_T.xs;
            const double Tc = std::clamp(T, xs.front(), xs.back());
            const auto it = std::upper_bound(xs.begin(), xs.end(), Tc);
            const std::size_t i = std::min(static_cast<std::size_t>(it - xs.begin()),
                                           xs.size() - 1) - 1;
            sensible = cumulative_[i] + 0.5 * (c_of_T.ys[i] + c_of_T(Tc)) * (Tc - xs[i]);
        }
        return sensible + latent_heat * melt_fraction(T);
    }

    void finalize() {
        c_of_T.validate("c");
        k_of_T.validate("k");
        if (!(rho > 0)) throw config_error("rho must be positive");
        if (c_of_T.min_value() <= 0) throw config_error("c(T) must be positive");
        if (k_of_T.min_value() <= 0) throw config_error("k(T) must be positive");
        if (latent_heat < 0) throw config_error("latent_heat must be non-negative");
        if (has_phase_change() && !(solidus < liquidus))
            throw config_error("phase change requires solidus < liquidus");

        enthalpy_ref_ = c_of_T.is_constant() ? 0.0 : c_of_T.xs.front();
        cumulative_.assign(std::max<std::size_t>(c_of_T.xs.size(), 1), 0.0);
        for (std::size_t i = 1; i < c_of_T.xs.size(); ++i)
            cumulative_[i] = cumulative_[i - 1] + 0.5 * (c_of_T.ys[i] + c_of_T.ys[i - 1]) *
                                                      (c_of_T.xs[i] - c_of_T.xs[i - 1]);
    }

  private:
    double enthalpy_ref_ = 0;          // temperature where H = 0
    std::vector<double> cumulative_;   // ∫c at table breakpoints
};

struct BoundaryCondition {
    enum class Kind { fixed, flux };
    Kind kind = Kind::flux;

    PiecewiseLinear fixed_T; // of time, for kind fixed
    // optional spatial override f(x, t); takes precedence over fixed_T
    std::function<double(const Vec3&, double)> fixed_fn;

    double q = 0;     // imposed flux (W/m^2), positive = heat leaving
    double h = 0;     // convective coefficient (W/m^2 K)
    double t_inf = 0; // ambient temperature (K)

    double fixed_value(const Vec3& x, double t) const {
        return fixed_fn ? fixed_fn(x, t) : fixed_T(t);
    }
};

/// Interface heat transfer coefficient for one contact tag pair; constant,
/// a function of time, or a function of the facet surface temperature.
struct InterfaceCoeff {
    std::string tag_a, tag_b;
    enum class Var { time, temperature } var = Var::time;
    PiecewiseLinear h = PiecewiseLinear::constant(0);

    bool matches(const std::string& a, const std::string& b) const {
        return (tag_a == a && tag_b == b) || (tag_a == b && tag_b == a);
    }
};

struct SolverConfig {
    static constexpr double theta = 0.0; // explicit path only
    double dt_safety = 0.5;
    double t_end = 0;
    long output_every = 0; // 0 disables the time series
};

struct SimulationSetup {
    std::vector<MaterialTable> materials; // indexed by region id
    std::map<std::string, BoundaryCondition> boundary_conditions;
    std::vector<InterfaceCoeff> interface_coeffs;
    SolverConfig solver;
    // test hook: initial field overriding the per-region T0
    std::function<double(const Vec3&, idx)> initial_override;

    const MaterialTable& material(idx region) const {
        if (region < 0 || region >= static_cast<idx>(materials.size()))
            throw config_error("no material for region " + std::to_string(region));
        return materials[region];
    }
    const InterfaceCoeff* find_interface(const std::string& a, const std::string& b) const {
        for (const auto& ic : interface_coeffs)
            if (ic.matches(a, b)) return &ic;
        return nullptr;
    }
    bool temperature_dependent() const {
        return std::any_of(materials.begin(), materials.end(),
                           [](const MaterialTable& m) { return m.temperature_dependent(); });
    }
};

namespace detail {

inline PiecewiseLinear parse_table(const std::vector<std::string_view>& tok, std::size_t first,
                                   long line) {
    PiecewiseLinear t;
    if (tok.size() == first + 1 && tok[first].find(':') == std::string_view::npos)
        return PiecewiseLinear::constant(parse_double(tok[first], line));
    for (std::size_t i = first; i < tok.size(); ++i) {
        const auto colon = tok[i].find(':');
        if (colon == std::string_view::npos)
            throw parse_error("expected x:y pair, got '" + std::string(tok[i]) + "'", line);
        t.xs.push_back(parse_double(tok[i].substr(0, colon), line));
        t.ys.push_back(parse_double(tok[i].substr(colon + 1), line));
    }
    return t;
}

} // namespace detail

/// Reads the material / boundary / solver configuration:
///   [material <region>]   rho, c, k, latent_heat, solidus, liquidus, T0
///   [bc <tag>]            kind fixed|flux, T, q, h, T_inf
///   [interface <tagA> <tagB>]  h, h_time, h_temp
///   [solver]              safety, t_end, output_every
/// Tables are space-separated x:y pairs; a bare number is a constant.
inline SimulationSetup parse_config(std::istream& in) {
    SimulationSetup setup;
    detail::LineReader rd{in};
    std::vector<std::string_view> tok;

    enum class Section { none, material, bc, interface_, solver };
    Section section = Section::none;
    idx region = -1;
    std::string bc_tag;
    InterfaceCoeff* coeff = nullptr;

    auto material_at = [&](idx r) -> MaterialTable& {
        if (static_cast<idx>(setup.materials.size()) <= r) setup.materials.resize(r + 1);
        return setup.materials[r];
    };

    while (rd.next(tok)) {
        if (tok.front().front() == '[') {
            // section header: strip brackets, tokens may carry them
            std::string joined;
            for (const auto& t : tok) {
                joined.append(t);
                joined.push_back(' ');
            }
            joined.erase(std::remove(joined.begin(), joined.end(), '['), joined.end());
            joined.erase(std::remove(joined.begin(), joined.end(), ']'), joined.end());
            std::vector<std::string> head;
            std::size_t i = 0;
            while (i < joined.size()) {
                while (i < joined.size() && joined[i] == ' ') ++i;
                std::size_t j = i;
                while (j < joined.size() && joined[j] != ' ') ++j;
                if (j > i) head.push_back(joined.substr(i, j - i));
                i = j;
            }
            if (head.empty()) throw parse_error("empty section header", rd.line_no);
            if (head[0] == "material" && head.size() == 2) {
                section = Section::material;
                region = static_cast<idx>(detail::parse_int(head[1], rd.line_no));
                material_at(region);
            } else if (head[0] == "bc" && head.size() == 2) {
                section = Section::bc;
                bc_tag = head[1];
                setup.boundary_conditions[bc_tag]; // default flux bc
            } else if (head[0] == "interface" && head.size() == 3) {
                section = Section::interface_;
                setup.interface_coeffs.push_back({head[1], head[2]});
                coeff = &setup.interface_coeffs.back();
            } else if (head[0] == "solver" && head.size() == 1) {
                section = Section::solver;
            } else {
                throw parse_error("unknown section '" + head[0] + "'", rd.line_no);
            }
            continue;
        }

        const std::string key(tok[0]);
        switch (section) {
            case Section::material: {
                auto& mat = material_at(region);
                if (key == "rho")
                    mat.rho = detail::parse_double(tok.at(1), rd.line_no);
                else if (key == "c")
                    mat.c_of_T = detail::parse_table(tok, 1, rd.line_no);
                else if (key == "k")
                    mat.k_of_T = detail::parse_table(tok, 1, rd.line_no);
                else if (key == "latent_heat")
                    mat.latent_heat = detail::parse_double(tok.at(1), rd.line_no);
                else if (key == "solidus")
                    mat.solidus = detail::parse_double(tok.at(1), rd.line_no);
                else if (key == "liquidus")
                    mat.liquidus = detail::parse_double(tok.at(1), rd.line_no);
                else if (key == "T0")
                    mat.initial_temperature = detail::parse_double(tok.at(1), rd.line_no);
                else
                    throw parse_error("unknown material key '" + key + "'", rd.line_no);
                break;
            }
            case Section::bc: {
                auto& bc = setup.boundary_conditions[bc_tag];
                if (key == "kind") {
                    if (tok.at(1) == "fixed")
                        bc.kind = BoundaryCondition::Kind::fixed;
                    else if (tok.at(1) == "flux")
                        bc.kind = BoundaryCondition::Kind::flux;
                    else
                        throw parse_error("bc kind must be fixed or flux", rd.line_no);
                } else if (key == "T")
                    bc.fixed_T = detail::parse_table(tok, 1, rd.line_no);
                else if (key == "q")
                    bc.q = detail::parse_double(tok.at(1), rd.line_no);
                else if (key == "h")
                    bc.h = detail::parse_double(tok.at(1), rd.line_no);
                else if (key == "T_inf")
                    bc.t_inf = detail::parse_double(tok.at(1), rd.line_no);
                else
                    throw parse_error("unknown bc key '" + key + "'", rd.line_no);
                break;
            }
            case Section::interface_: {
                if (key == "h")
                    coeff->h = detail::parse_table(tok, 1, rd.line_no);
                else if (key == "h_time") {
                    coeff->var = InterfaceCoeff::Var::time;
                    coeff->h = detail::parse_table(tok, 1, rd.line_no);
                } else if (key == "h_temp") {
                    coeff->var = InterfaceCoeff::Var::temperature;
                    coeff->h = detail::parse_table(tok, 1, rd.line_no);
                } else
                    throw parse_error("unknown interface key '" + key + "'", rd.line_no);
                break;
            }
            case Section::solver: {
                if (key == "safety")
                    setup.solver.dt_safety = detail::parse_double(tok.at(1), rd.line_no);
                else if (key == "t_end")
                    setup.solver.t_end = detail::parse_double(tok.at(1), rd.line_no);
                else if (key == "output_every")
                    setup.solver.output_every = detail::parse_int(tok.at(1), rd.line_no);
                else
                    throw parse_error("unknown solver key '" + key + "'", rd.line_no);
                break;
            }
            case Section::none:
                throw parse_error("key '" + key + "' outside any section", rd.line_no);
        }
    }

    for (auto& mat : setup.materials)
        if (mat.rho > 0) mat.finalize(); // untouched slots are caught at bind time
    if (!(setup.solver.dt_safety > 0 && setup.solver.dt_safety <= 1))
        throw config_error("safety must be in (0, 1]");
    for (auto& ic : setup.interface_coeffs) ic.h.validate("interface h");
    return setup;
}

} // namespace castfem
