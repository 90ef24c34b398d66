#include "doctest.h"

#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "twistwg/eigensolve.hpp"
#include "twistwg/grid.hpp"
#include "twistwg/operator.hpp"

using namespace twg;
constexpr double pi = std::numbers::pi;

namespace {

// Tags every top and bottom node Dirichlet (or only the bottom row).
Grid rectangle(double L, double d, int nx, int ny, bool top_dirichlet)
{
    Grid g = build_grid({d, 0.0, Variant::Auxiliary}, {L, nx, ny});
    for (int i = 0; i < g.cols(); ++i) {
        g.dirichlet[g.node(i, 0)] = 1;
        g.dirichlet[g.node(i, ny)] = top_dirichlet ? 1 : 0;
    }
    return g;
}

double lowest(const SpMat& A)
{
    EigenRequest req;
    req.k = 1;
    req.sigma = 0.0;
    return smallest_eigs(A, req).values.at(0);
}

}  // namespace

TEST_CASE("grid tags follow the boundary partition")
{
    const Grid g = build_grid({1.0, 1.0, Variant::Twisted}, {8.0, 320, 20});
    CHECK(g.cols() == 321);
    CHECK(g.rows() == 21);
    const int ny = 20;
    for (int i = 0; i < g.cols(); ++i) {
        CHECK(g.x1[i] != doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(g.x1[i]) != 1.0);
        CHECK(bool(g.dirichlet[g.node(i, 0)]) == (g.x1[i] > 1.0));
        CHECK(bool(g.dirichlet[g.node(i, ny)]) == (g.x1[i] < -1.0));
        CHECK(g.x1[i] == -g.x1[g.cols() - 1 - i]);
    }
    CHECK(g.x1.front() == -8.0);
    CHECK(g.x1.back() == 8.0);

    const Grid a = build_grid({1.0, 1.0, Variant::Auxiliary}, {8.0, 320, 20});
    for (int i = 0; i < a.cols(); ++i) {
        CHECK(bool(a.dirichlet[a.node(i, 0)]) == (std::abs(a.x1[i]) > 1.0));
        CHECK(a.dirichlet[a.node(i, ny)] == 0);
    }

    const Grid z = build_grid({1.0, 0.0, Variant::Twisted}, {4.0, 40, 10});
    for (int i = 0; i < z.cols(); ++i) {
        CHECK(bool(z.dirichlet[z.node(i, 0)]) == (z.x1[i] > 0.0));
        CHECK(bool(z.dirichlet[z.node(i, 10)]) == (z.x1[i] < 0.0));
    }
}

TEST_CASE("node-at-ell layout puts Neumann nodes on the window edges")
{
    const Grid g = build_grid({1.0, 1.0, Variant::Twisted}, {8.0, 320, 20, OffsetPolicy::NodeAtEll});
    const int i = g.nearest_column(1.0);
    CHECK(g.x1[i] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(g.dirichlet[g.node(i, 0)] == 0);
    CHECK(g.dirichlet[g.node(i + 1, 0)] == 1);
}

TEST_CASE("moving layout tracks ell continuously at a fixed anchor")
{
    GridSpec gs{6.0, 120, 10};
    gs.anchor_ell = 1.0;
    const Grid g1 = build_grid({1.0, 1.0, Variant::Twisted}, gs);
    const Grid g2 = build_grid({1.0, 1.001, Variant::Twisted}, gs);
    CHECK(g1.window_cells == g2.window_cells);
    for (int i = 0; i < g1.cols(); ++i) CHECK(std::abs(g1.x1[i] - g2.x1[i]) < 2e-3);
}

TEST_CASE("grid preconditions")
{
    CHECK_THROWS_AS(build_grid({1.0, 2.0, Variant::Twisted}, {2.0, 40, 10}), GeometryError);
    CHECK_THROWS_AS(build_grid({1.0, 0.5, Variant::Twisted}, {2.0, 41, 10}), GeometryError);
    CHECK_THROWS_AS(build_grid({1.0, 0.5, Variant::Twisted}, {2.0, 40, 3}), GeometryError);
    CHECK_THROWS_AS(build_grid({1.0, -0.5, Variant::Twisted}, {2.0, 40, 10}), DomainError);
}

TEST_CASE("interior stencil and exact symmetry")
{
    // ell = 20.5 h makes both spacings equal to h = 0.05
    const Grid g = build_grid({1.0, 1.025, Variant::Twisted}, {8.0, 320, 20});
    CHECK(g.h_in == doctest::Approx(0.05).epsilon(1e-13));
    CHECK(g.h_out == doctest::Approx(0.05).epsilon(1e-13));
    const OperatorBundle b = assemble(g, EndCondition::neumann());
    const double hx = 0.05, hy = 0.05;
    const int u = b.unknown_of_node[g.node(100, 7)];
    CHECK(b.A.coeff(u, u) == doctest::Approx(2 / (hx * hx) + 2 / (hy * hy)).epsilon(1e-12));
    CHECK(b.A.coeff(u, b.unknown_of_node[g.node(101, 7)]) == doctest::Approx(-1 / (hx * hx)).epsilon(1e-12));
    CHECK(b.A.coeff(u, b.unknown_of_node[g.node(100, 8)]) == doctest::Approx(-1 / (hy * hy)).epsilon(1e-12));
    double rowsum = 0.0;
    for (SpMat::InnerIterator it(b.A, u); it; ++it) rowsum += it.value();
    CHECK(std::abs(rowsum) < 1e-9);

    for (auto end : {EndCondition::dirichlet(), EndCondition::neumann(), EndCondition::transparent(0.3)}) {
        const OperatorBundle ob = assemble(build_grid({1.0, 0.8, Variant::Twisted}, {4.0, 64, 12}), end);
        const SpMat At = ob.A.transpose();
        CHECK((ob.A - At).norm() == 0.0);
        const int n = ob.size();
        SpMat P(n, n);
        std::vector<Eigen::Triplet<double>> t;
        for (int k = 0; k < n; ++k) t.emplace_back(ob.parity_perm[k], k, 1.0);
        P.setFromTriplets(t.begin(), t.end());
        const SpMat PAP = P * ob.A * P.transpose();
        CHECK((PAP - ob.A).norm() == 0.0);
    }
}

TEST_CASE("Dirichlet and Neumann end assemblies differ only at the ends")
{
    const Grid g = build_grid({1.0, 0.8, Variant::Twisted}, {4.0, 64, 12});
    const OperatorBundle dn = assemble(g, EndCondition::dirichlet());
    const OperatorBundle nn = assemble(g, EndCondition::neumann());
    for (int u = 0; u < dn.size(); ++u) {
        const int p = dn.node_of_unknown[u];
        const int i = p / g.rows();
        if (i <= 1 || i >= g.cols() - 2) continue;
        const int v = nn.unknown_of_node[p];
        for (SpMat::InnerIterator it(dn.A, u); it; ++it) {
            const int w = nn.unknown_of_node[dn.node_of_unknown[it.row()]];
            CHECK(nn.A.coeff(w, v) == it.value());
        }
    }
}

TEST_CASE("rectangle oracles")
{
    // (-1/2, 1/2) x (0, 1), h = 1/64, all Dirichlet
    const OperatorBundle dd = assemble(rectangle(0.5, 1.0, 64, 64, true), EndCondition::dirichlet());
    CHECK(lowest(dd.A) == doctest::Approx(2 * pi * pi).epsilon(5e-3));

    // bottom Dirichlet, top Neumann, Dirichlet ends: pi^2/4 + pi^2
    const OperatorBundle dm = assemble(rectangle(0.5, 1.0, 64, 64, false), EndCondition::dirichlet());
    CHECK(lowest(dm.A) == doctest::Approx(pi * pi / 4 + pi * pi).epsilon(5e-3));

    // strip with free ends: the x1-constant mode sits exactly on the discrete threshold
    const OperatorBundle st = assemble(rectangle(3.0, 1.0, 96, 16, false), EndCondition::neumann());
    CHECK(lowest(st.A) == doctest::Approx(st.tau1).epsilon(1e-10));
    CHECK(st.tau1 == doctest::Approx(4 * 256 * std::pow(std::sin(pi / 64), 2)).epsilon(1e-12));
    CHECK(std::abs(st.tau1 - pi * pi / 4) / (pi * pi / 4) < 2e-3);

    // refinement: error decreases roughly fourfold
    double prev = 1.0;
    for (int n : {16, 32, 64}) {
        const OperatorBundle r = assemble(rectangle(0.5, 1.0, n, n, true), EndCondition::dirichlet());
        const double err = std::abs(lowest(r.A) - 2 * pi * pi);
        CHECK(err < prev / 3.5);
        prev = err;
    }
}

TEST_CASE("parity projectors")
{
    for (int ny : {12, 13}) {
        const Grid g = build_grid({1.0, 0.8, Variant::Twisted}, {4.0, 64, ny});
        const OperatorBundle b = assemble(g, EndCondition::neumann());
        const auto pp = parity_projectors(b);
        SpMat I(b.size(), b.size());
        I.setIdentity();
        CHECK((SpMat(pp.even + pp.odd) - I).norm() == 0.0);
        CHECK(SpMat(pp.even * b.A * pp.odd).norm() == 0.0);
        const int de = sector_basis(b, +1).cols();
        const int dodd = sector_basis(b, -1).cols();
        CHECK(de + dodd == b.size());
        CHECK(de - dodd == fixed_point_count(b));
        CHECK(fixed_point_count(b) == (ny % 2 == 0 ? 1 : 0));
    }
    // the x1 reflection fixes the whole centre column
    const OperatorBundle a = assemble(build_grid({1.0, 0.8, Variant::Auxiliary}, {4.0, 64, 12}),
                                      EndCondition::neumann());
    CHECK(fixed_point_count(a) == 13);
}

TEST_CASE("transparent closure")
{
    CHECK(dtn_rate(2.0, 2.0, 0.1) == 0.0);
    // continuous limit sqrt(tau - lambda)
    CHECK(dtn_rate(3.0, 2.0, 1e-4) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK_THROWS_AS(dtn_rate(1.0, 2.0, 0.1), DomainError);
    CHECK_THROWS_AS(assemble(build_grid({1.0, 0.5, Variant::Twisted}, {4.0, 64, 12}),
                             EndCondition{EndKind::Transparent, std::nullopt, 0}),
                    ConfigError);

    // bare strip: the transparent truncation has nothing below the threshold
    const Grid g = rectangle(2.0, 1.0, 40, 10, false);
    const OperatorBundle b = assemble(g, EndCondition::neumann());
    const SpMat At = transparent_operator(b, b.tau1 - 1e-6);
    CHECK(count_below(At, b.tau1 - 1e-6) == 0);
    CHECK(count_below(b.A, b.tau1 - 1e-6) == 0);

    // mode-1 trace functional of the discrete threshold mode is 1
    const auto& em = b.ends[0];
    CHECK(em.t.col(0).dot(em.t.col(0)) * g.wx.back() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("matrix dump")
{
    const OperatorBundle b = assemble(build_grid({1.0, 0.5, Variant::Twisted}, {2.0, 8, 4}),
                                      EndCondition::dirichlet());
    std::ostringstream os;
    dump_matrix(os, b.A);
    std::istringstream is(os.str());
    std::string header;
    std::getline(is, header);
    long r, c, nnz;
    is >> r >> c >> nnz;
    CHECK(r == b.size());
    CHECK(nnz == b.A.nonZeros());
    long i, j;
    double v;
    is >> i >> j >> v;
    CHECK(v == b.A.coeff(i, j));
}
