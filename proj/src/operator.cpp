#include "twistwg/operator.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include <Eigen/Eigenvalues>

namespace twg {

using Triplet = Eigen::Triplet<double>;

Point OperatorBundle::coord(int u) const
{
    return grid.coord(column_of(u), row_of(u));
}

double dtn_rate(double tau, double lambda, double h)
{
    const double am1 = 0.5 * h * h * (tau - lambda);
    if (am1 < 0.0) throw DomainError("transparent closure evaluated above a transverse threshold");
    return std::sqrt(am1 * (am1 + 2.0)) / h;
}

EndModes transverse_modes(const Grid& g, bool bottom_dirichlet, bool top_dirichlet)
{
    const int ny = g.rows() - 1;
    const int j0 = bottom_dirichlet ? 1 : 0;
    const int j1 = top_dirichlet ? ny - 1 : ny;
    const int n = j1 - j0 + 1;
    const double w = 1.0 / g.hy;

    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    Vec s(n);
    for (int r = 0; r < n; ++r) s(r) = std::sqrt(g.wy[j0 + r]);
    for (int r = 0; r < n; ++r) {
        const int j = j0 + r;
        double diag = 0.0;
        if (j > 0) diag += w;
        if (j < ny) diag += w;
        M(r, r) = diag / (s(r) * s(r));
        if (r + 1 < n) {
            M(r, r + 1) = -w / (s(r) * s(r + 1));
            M(r + 1, r) = M(r, r + 1);
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    EndModes em;
    em.tau = es.eigenvalues();
    em.q = s.cwiseInverse().asDiagonal() * es.eigenvectors();
    for (int m = 0; m < n; ++m) {
        // sign convention: positive next to the Dirichlet side
        const int ref = top_dirichlet && !bottom_dirichlet ? n - 1 : 0;
        if (em.q(ref, m) < 0.0) em.q.col(m) *= -1.0;
    }
    em.rows.resize(n);
    for (int r = 0; r < n; ++r) em.rows[r] = j0 + r;  // grid rows for now
    return em;
}

namespace {

bool end_is_dirichlet(const Grid& g, int i, int j)
{
    return g.dirichlet[g.node(i, j)] != 0;
}

EndModes end_modes(const OperatorBundle& b, int column)
{
    const Grid& g = b.grid;
    const int ny = g.rows() - 1;
    const bool bot = end_is_dirichlet(g, column, 0);
    const bool top = end_is_dirichlet(g, column, ny);
    EndModes em;
    if (column == 0 && g.spec.variant == Variant::Twisted) {
        // mirror image of the right end, so that both ends carry identical numbers
        EndModes r = transverse_modes(g, end_is_dirichlet(g, g.cols() - 1, 0),
                                      end_is_dirichlet(g, g.cols() - 1, ny));
        em.tau = r.tau;
        em.q = r.q.colwise().reverse();
        em.rows.resize(r.rows.size());
        for (std::size_t k = 0; k < r.rows.size(); ++k) em.rows[k] = ny - r.rows[r.rows.size() - 1 - k];
    } else {
        em = transverse_modes(g, bot, top);
    }
    const int nm = static_cast<int>(em.tau.size());
    const double wx_end = g.wx[column];
    em.t.resize(nm, nm);
    for (int r = 0; r < nm; ++r) {
        const int j = em.rows[r];
        const double f = std::sqrt(g.wy[j]) / std::sqrt(wx_end);
        for (int m = 0; m < nm; ++m) em.t(r, m) = f * em.q(r, m);
    }
    em.h = column == 0 ? g.x1[1] - g.x1[0] : g.x1[column] - g.x1[column - 1];
    for (auto& j : em.rows) j = b.unknown_of_node[g.node(column, j)];
    return em;
}

void add_end_block(std::vector<Triplet>& trip, const EndModes& em, double lambda, int n_modes,
                   double tau1)
{
    const int nm = static_cast<int>(em.tau.size());
    const int exact = (n_modes <= 0 || n_modes > nm) ? nm : n_modes;
    Vec beta(nm);
    for (int m = 0; m < nm; ++m)
        beta(m) = dtn_rate(em.tau(m), m < exact ? lambda : tau1, em.h);
    for (int r = 0; r < nm; ++r) {
        for (int c = 0; c < nm; ++c) {
            double v = 0.0;
            for (int m = 0; m < nm; ++m) v += beta(m) * (em.t(r, m) * em.t(c, m));
            trip.emplace_back(em.rows[r], em.rows[c], v);
        }
    }
}

}  // namespace

OperatorBundle assemble(const Grid& grid, const EndCondition& end)
{
    if (end.kind == EndKind::Transparent) {
        if (!end.mu) throw ConfigError("transparent end requires mu");
        if (!(*end.mu >= 0.0)) throw ConfigError("transparent end requires mu >= 0");
        if (end.n_modes < 0 || end.n_modes > grid.rows() - 1)
            throw ConfigError("n_modes must lie in [1, ny] (0 selects all)");
    }

    OperatorBundle b;
    b.grid = grid;
    b.end = end;
    const int nx = grid.cols() - 1;
    const int ny = grid.rows() - 1;
    const bool cut_ends = end.kind == EndKind::Dirichlet;

    b.unknown_of_node.assign(grid.node_count(), -1);
    for (int i = 0; i <= nx; ++i) {
        for (int j = 0; j <= ny; ++j) {
            const int p = grid.node(i, j);
            if (grid.dirichlet[p] || (cut_ends && (i == 0 || i == nx))) {
                b.dirichlet_mask.push_back(p);
                continue;
            }
            b.unknown_of_node[p] = static_cast<int>(b.node_of_unknown.size());
            b.node_of_unknown.push_back(p);
        }
    }
    const int n = static_cast<int>(b.node_of_unknown.size());
    b.sqrt_mass.resize(n);

    std::vector<Triplet> trip;
    trip.reserve(5 * static_cast<std::size_t>(n));
    const double wy_edge = 1.0 / grid.hy;
    for (int u = 0; u < n; ++u) {
        const int p = b.node_of_unknown[u];
        const int i = p / grid.rows();
        const int j = p % grid.rows();
        b.sqrt_mass(u) = std::sqrt(grid.wx[i] * grid.wy[j]);
    }
    for (int u = 0; u < n; ++u) {
        const int p = b.node_of_unknown[u];
        const int i = p / grid.rows();
        const int j = p % grid.rows();
        const double left = i > 0 ? grid.wy[j] / (grid.x1[i] - grid.x1[i - 1]) : 0.0;
        const double right = i < nx ? grid.wy[j] / (grid.x1[i + 1] - grid.x1[i]) : 0.0;
        const double down = j > 0 ? grid.wx[i] * wy_edge : 0.0;
        const double up = j < ny ? grid.wx[i] * wy_edge : 0.0;
        const double su = b.sqrt_mass(u);
        trip.emplace_back(u, u, ((left + right) + (down + up)) / (su * su));

        auto couple = [&](int q, double w) {
            const int v = b.unknown_of_node[q];
            if (v >= 0) trip.emplace_back(u, v, -w / (su * b.sqrt_mass(v)));
        };
        if (i > 0) couple(grid.node(i - 1, j), left);
        if (i < nx) couple(grid.node(i + 1, j), right);
        if (j > 0) couple(grid.node(i, j - 1), down);
        if (j < ny) couple(grid.node(i, j + 1), up);
    }
    b.A_free.resize(n, n);
    b.A_free.setFromTriplets(trip.begin(), trip.end());

    // symmetry permutation in unknown numbering
    b.parity_perm.resize(n);
    for (int u = 0; u < n; ++u) {
        const int p = b.node_of_unknown[u];
        const int i = p / grid.rows();
        const int j = p % grid.rows();
        const int jm = grid.spec.variant == Variant::Twisted ? ny - j : j;
        const int v = b.unknown_of_node[grid.node(nx - i, jm)];
        if (v < 0 || grid.x1[nx - i] != -grid.x1[i])
            throw SymmetryError("grid or boundary tags are not symmetric");
        b.parity_perm[u] = v;
    }

    const int last = nx;
    if (!cut_ends) {
        b.ends[0] = end_modes(b, last);
        b.ends[1] = end_modes(b, 0);
        b.tau1 = b.ends[0].tau(0);
    } else {
        b.tau1 = transverse_modes(grid, end_is_dirichlet(grid, last, 0), end_is_dirichlet(grid, last, ny)).tau(0);
    }

    if (end.kind == EndKind::Transparent)
        b.A = transparent_operator(b, transparent_energy(b, *end.mu), end.n_modes);
    else
        b.A = b.A_free;
    return b;
}

double transparent_energy(const OperatorBundle& b, double mu)
{
    return b.tau1 - mu * mu;
}

SpMat transparent_operator(const OperatorBundle& b, double lambda, int n_modes)
{
    if (b.end.kind == EndKind::Dirichlet) throw ConfigError("transparent closure needs free end columns");
    std::vector<Triplet> trip;
    for (const auto& em : b.ends) add_end_block(trip, em, lambda, n_modes, b.tau1);
    SpMat D(b.size(), b.size());
    D.setFromTriplets(trip.begin(), trip.end());
    SpMat A = b.A_free + D;
    A.makeCompressed();
    return A;
}

SpMat sector_basis(const OperatorBundle& b, int sign)
{
    const int n = b.size();
    std::vector<Triplet> trip;
    const double r = 1.0 / std::sqrt(2.0);
    int col = 0;
    for (int u = 0; u < n; ++u) {
        const int v = b.parity_perm[u];
        if (v == u) {
            if (sign > 0) trip.emplace_back(u, col++, 1.0);
        } else if (u < v) {
            trip.emplace_back(u, col, r);
            trip.emplace_back(v, col, sign > 0 ? r : -r);
            ++col;
        }
    }
    SpMat Q(n, col);
    Q.setFromTriplets(trip.begin(), trip.end());
    return Q;
}

ParityProjectors parity_projectors(const OperatorBundle& b)
{
    const int n = b.size();
    std::vector<Triplet> te, to;
    for (int u = 0; u < n; ++u) {
        const int v = b.parity_perm[u];
        if (b.parity_perm[v] != u) throw SymmetryError("symmetry permutation is not an involution");
        if (v == u) {
            te.emplace_back(u, u, 1.0);
        } else {
            te.emplace_back(u, u, 0.5);
            te.emplace_back(u, v, 0.5);
            to.emplace_back(u, u, 0.5);
            to.emplace_back(u, v, -0.5);
        }
    }
    ParityProjectors pp{SpMat(n, n), SpMat(n, n)};
    pp.even.setFromTriplets(te.begin(), te.end());
    pp.odd.setFromTriplets(to.begin(), to.end());
    return pp;
}

int fixed_point_count(const OperatorBundle& b)
{
    int c = 0;
    for (int u = 0; u < b.size(); ++u) c += b.parity_perm[u] == u;
    return c;
}

Vec apply_parity(const OperatorBundle& b, const Vec& y)
{
    Vec out(y.size());
    for (int u = 0; u < b.size(); ++u) out(b.parity_perm[u]) = y(u);
    return out;
}

void dump_matrix(std::ostream& os, const SpMat& A)
{
    char buf[96];
    os << "% coordinate real general\n";
    os << A.rows() << ' ' << A.cols() << ' ' << A.nonZeros() << '\n';
    for (int k = 0; k < A.outerSize(); ++k) {
        for (SpMat::InnerIterator it(A, k); it; ++it) {
            std::snprintf(buf, sizeof buf, "%lld %lld %.17g\n", static_cast<long long>(it.row()),
                          static_cast<long long>(it.col()), it.value());
            os << buf;
        }
    }
}

}  // namespace twg
