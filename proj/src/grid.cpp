#include "twistwg/grid.hpp"

#include <algorithm>
#include <cmath>

namespace twg {

int Grid::nearest_column(double x) const
{
    auto it = std::lower_bound(x1.begin(), x1.end(), x);
    if (it == x1.end()) return cols() - 1;
    if (it == x1.begin()) return 0;
    const auto hi = static_cast<int>(it - x1.begin());
    return (x - x1[hi - 1] <= x1[hi] - x) ? hi - 1 : hi;
}

namespace {

// Right half of the column layout, x1 >= 0 (the left half mirrors it).
std::vector<double> right_half_columns(double ell, double L, int half, OffsetPolicy policy,
                                       double anchor, Grid& g)
{
    const double h = L / half;
    std::vector<double> xs;
    if (policy == OffsetPolicy::MidcellAtEll && ell == 0.0) {
        // the centre column is unavoidable; it is the transition node
        g.window_cells = 0;
        g.h_in = 0.0;
        g.h_out = h;
        for (int i = 0; i <= half; ++i) xs.push_back(i * h);
        xs.back() = L;
    } else if (policy == OffsetPolicy::MidcellAtEll) {
        // inner nodes 0, h_in, ..., k h_in with ell = (k + 1/2) h_in;
        // outer nodes ell + (i + 1/2) h_out, i = 0..j, with L = ell + (j + 1/2) h_out.
        int k = static_cast<int>(std::lround(anchor / h - 0.5));
        k = std::clamp(k, 0, half - 2);
        const int j = half - 1 - k;
        g.window_cells = k;
        g.h_in = ell / (k + 0.5);
        g.h_out = (L - ell) / (j + 0.5);
        for (int i = 0; i <= k; ++i) xs.push_back(i * g.h_in);
        for (int i = 0; i <= j; ++i) xs.push_back(ell + (i + 0.5) * g.h_out);
        xs.back() = L;
    } else {
        // inner nodes i ell / k (the edge is a node), outer ell + i h_out.
        int k = static_cast<int>(std::lround(anchor / h));
        k = std::clamp(k, ell > 0.0 ? 1 : 0, half - 1);
        const int j = half - k;
        g.window_cells = k;
        g.h_in = k > 0 ? ell / k : 0.0;
        g.h_out = (L - ell) / j;
        for (int i = 0; i <= k; ++i) xs.push_back(k > 0 ? i * g.h_in : 0.0);
        for (int i = 1; i <= j; ++i) xs.push_back(ell + i * g.h_out);
        xs.back() = L;
    }
    return xs;
}

}  // namespace

Grid build_grid(const WaveguideSpec& spec, const GridSpec& gs)
{
    spec.validate();
    if (!(gs.L > spec.ell)) throw GeometryError("truncation L must exceed ell");
    if (gs.nx < 4 || gs.ny < 4) throw GeometryError("nx and ny must be >= 4");
    if (gs.nx % 2 != 0) throw GeometryError("nx must be even");
    if (gs.offset == OffsetPolicy::NodeAtEll && spec.ell > 0.0 && gs.nx < 6)
        throw GeometryError("nx too small for NodeAtEll");

    Grid g;
    g.spec = spec;
    g.gs = gs;

    const int half = gs.nx / 2;
    const double anchor = gs.anchor_ell.value_or(spec.ell);
    const auto right = right_half_columns(spec.ell, gs.L, half, gs.offset, anchor, g);

    g.x1.reserve(gs.nx + 1);
    for (auto it = right.rbegin(); it != right.rend() - 1; ++it) g.x1.push_back(-*it);
    g.x1.insert(g.x1.end(), right.begin(), right.end());
    // the mirrored construction must reproduce nx + 1 columns
    if (g.cols() != gs.nx + 1) throw GeometryError("internal: column count mismatch");
    for (int i = 1; i < g.cols(); ++i)
        if (!(g.x1[i] > g.x1[i - 1])) throw GeometryError("degenerate column layout");

    g.hy = spec.d / gs.ny;
    g.x2.resize(gs.ny + 1);
    for (int j = 0; j <= gs.ny; ++j) g.x2[j] = j * g.hy;
    g.x2.back() = spec.d;

    g.wx.assign(g.cols(), 0.0);
    for (int i = 0; i + 1 < g.cols(); ++i) {
        const double gap = g.x1[i + 1] - g.x1[i];
        g.wx[i] += 0.5 * gap;
        g.wx[i + 1] += 0.5 * gap;
    }
    g.wy.assign(g.rows(), g.hy);
    g.wy.front() *= 0.5;
    g.wy.back() *= 0.5;

    g.dirichlet.assign(g.node_count(), 0);
    for (int i = 0; i < g.cols(); ++i) {
        for (int j : {0, gs.ny}) {
            // transition nodes (NodeAtEll) fall back to Neumann
            if (classify_boundary(spec, g.coord(i, j)) == BoundaryKind::Dirichlet)
                g.dirichlet[g.node(i, j)] = 1;
        }
    }
    return g;
}

}  // namespace twg
