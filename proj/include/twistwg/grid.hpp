#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "twistwg/model.hpp"

namespace twg {

class GeometryError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class OffsetPolicy { MidcellAtEll, NodeAtEll };

/// Truncated strip (-L, L) x (0, d) discretized with nx x ny cells.
///
/// Columns are piecewise uniform: one spacing inside the window, one
/// outside, sized so that the window edges sit at a fixed place in the
/// column layout (mid-cell or on a node). The number of window cells is
/// taken from `anchor_ell` when set, so that a family of nearby ell values
/// shares one layout and the node positions move smoothly with ell.
struct GridSpec {
    double L = 0.0;
    int nx = 0;
    int ny = 0;
    OffsetPolicy offset = OffsetPolicy::MidcellAtEll;
    std::optional<double> anchor_ell;
};

struct Grid {
    WaveguideSpec spec;
    GridSpec gs;
    std::vector<double> x1;   // nx + 1 column abscissae, ascending
    std::vector<double> x2;   // ny + 1 row ordinates
    std::vector<double> wx;   // column quadrature weights (half at the ends)
    std::vector<double> wy;   // row quadrature weights (half on top and bottom)
    std::vector<std::uint8_t> dirichlet;  // per node, boundary Dirichlet flag
    double hy = 0.0;
    double h_in = 0.0;        // column spacing inside the window
    double h_out = 0.0;       // column spacing outside the window
    int window_cells = 0;     // k: inner columns are -k..k around x1 = 0

    int cols() const { return static_cast<int>(x1.size()); }
    int rows() const { return static_cast<int>(x2.size()); }
    int node(int i, int j) const { return i * rows() + j; }
    int node_count() const { return cols() * rows(); }
    Point coord(int i, int j) const { return {x1[i], x2[j]}; }

    /// Nominal spacing 2L / nx.
    double hx_nominal() const { return 2.0 * gs.L / gs.nx; }
    double aspect_ratio() const { return hx_nominal() / hy; }

    /// Index of the column whose abscissa is closest to x.
    int nearest_column(double x) const;
};

Grid build_grid(const WaveguideSpec& spec, const GridSpec& gs);

}  // namespace twg
