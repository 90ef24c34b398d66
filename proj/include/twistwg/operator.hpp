#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "twistwg/grid.hpp"

namespace twg {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class SymmetryError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

enum class EndKind { Dirichlet, Neumann, Transparent };

/// Closure applied at both ends x1 = -L and x1 = L.
///
/// Transparent ends glue the exact discrete exterior (a semi-infinite
/// continuation of the end spacing) mode by mode. The energy is
/// tau1 - mu^2, where tau1 is the discrete first transverse threshold.
/// Modes beyond n_modes use their rate frozen at the threshold.
struct EndCondition {
    EndKind kind = EndKind::Neumann;
    std::optional<double> mu;
    int n_modes = 0;  // 0: every discrete transverse mode

    static EndCondition dirichlet() { return {EndKind::Dirichlet, std::nullopt, 0}; }
    static EndCondition neumann() { return {EndKind::Neumann, std::nullopt, 0}; }
    static EndCondition transparent(double mu, int n_modes = 0) { return {EndKind::Transparent, mu, n_modes}; }
};

/// Discrete transverse modes of one end column.
struct EndModes {
    std::vector<int> rows;  // unknown index per retained row, ascending x2
    Vec tau;                // ascending eigenvalues
    Eigen::MatrixXd t;      // column m: trace functional of mode m (symmetric scaling)
    Eigen::MatrixXd q;      // column m: mode values q_m(x2_j), sum_j wy_j q_m q_n = delta
    double h = 0.0;         // spacing of the exterior continuation
};

/// Discrete -Laplacian in symmetric form A = W^{-1/2} K W^{-1/2}.
///
/// Unknowns are the nodes not eliminated by Dirichlet conditions (boundary
/// Dirichlet rows and, for Dirichlet ends, the end columns). W is the lumped
/// mass (tensor trapezoid weights). Vectors in this basis are y = W^{1/2} u.
struct OperatorBundle {
    Grid grid;
    EndCondition end;
    SpMat A;
    SpMat A_free;                      // same unknowns, ends left free (Neumann)
    std::vector<int> unknown_of_node;  // -1 when eliminated
    std::vector<int> node_of_unknown;
    std::vector<int> dirichlet_mask;   // eliminated node indices
    Vec sqrt_mass;
    std::vector<int> parity_perm;      // unknown -> unknown under the variant symmetry
    std::array<EndModes, 2> ends;      // [Right, Left]; empty for Dirichlet ends
    double tau1 = 0.0;                 // discrete threshold of the end columns

    int size() const { return static_cast<int>(node_of_unknown.size()); }
    Point coord(int u) const;
    int column_of(int u) const { return node_of_unknown[u] / grid.rows(); }
    int row_of(int u) const { return node_of_unknown[u] % grid.rows(); }

    Vec to_nodal(const Vec& y) const { return y.cwiseQuotient(sqrt_mass); }
    Vec from_nodal(const Vec& u) const { return u.cwiseProduct(sqrt_mass); }
};

OperatorBundle assemble(const Grid& grid, const EndCondition& end);

/// Exterior rate of the semi-infinite discrete strip for transverse
/// eigenvalue tau at energy lambda (lambda <= tau).
double dtn_rate(double tau, double lambda, double h);

/// Energy tau1 - mu^2 of a transparent end.
double transparent_energy(const OperatorBundle& b, double mu);

/// A with both ends closed transparently at energy lambda <= tau1.
/// The bundle must have Neumann or Transparent ends (same unknowns).
SpMat transparent_operator(const OperatorBundle& b, double lambda, int n_modes = 0);

/// Transverse-mode analysis of a single column with the given Dirichlet
/// rows, used for the ends and for the threshold reference.
EndModes transverse_modes(const Grid& g, bool bottom_dirichlet, bool top_dirichlet);

/// Orthonormal basis of the symmetry sector (+1 even, -1 odd), as a sparse
/// n x k matrix Q. The sector operator is Q^T A Q.
SpMat sector_basis(const OperatorBundle& b, int sign);

struct ParityProjectors {
    SpMat even;
    SpMat odd;
};

/// (I + P)/2 and (I - P)/2 for the symmetry of the variant.
ParityProjectors parity_projectors(const OperatorBundle& b);

/// Number of unknowns fixed by the symmetry permutation.
int fixed_point_count(const OperatorBundle& b);

Vec apply_parity(const OperatorBundle& b, const Vec& y);

/// Coordinate-list dump: header comment, then "row col value" per entry.
void dump_matrix(std::ostream& os, const SpMat& A);

}  // namespace twg
