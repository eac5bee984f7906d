#pragma once

#include "oed/linalg.hpp"

#include <array>
#include <vector>

namespace oed {

/// Barycentric location of a point: three node indices and their weights.
struct PointLocation {
    std::array<Index, 3> nodes{};
    std::array<double, 3> weights{};
    Index element = -1;
};

/// Uniform triangulation of the unit square. Each of the n x n cells is split
/// along its lower-left to upper-right diagonal into two right triangles.
/// Node (i, j) sits at (i/n, j/n) and has index j*(n+1) + i.
class Mesh2D {
  public:
    explicit Mesh2D(int cells_per_side);

    int cells_per_side() const noexcept { return n_; }
    Index node_count() const noexcept { return static_cast<Index>(nodes_.size()); }
    Index element_count() const noexcept { return static_cast<Index>(elements_.size()); }
    double h() const noexcept { return 1.0 / n_; }

    const std::array<double, 2>& node(Index k) const { return nodes_[static_cast<std::size_t>(k)]; }
    const std::array<Index, 3>& element(Index e) const { return elements_[static_cast<std::size_t>(e)]; }
    Index node_index(int i, int j) const noexcept { return static_cast<Index>(j) * (n_ + 1) + i; }

    double element_area(Index e) const;

    bool on_bottom(Index k) const { return node(k)[1] == 0.0; }
    bool on_top(Index k) const { return node(k)[1] == 1.0; }
    bool on_boundary(Index k) const;

    /// Locate (x, y) in [0,1]^2. Throws DomainError outside the square.
    PointLocation locate(double x, double y) const;

  private:
    int n_;
    std::vector<std::array<double, 2>> nodes_;
    std::vector<std::array<Index, 3>> elements_;
};

/// P1 element matrices on a triangle given by its vertex coordinates.
struct ElementMatrices {
    Eigen::Matrix3d mass;
    Eigen::Matrix3d stiffness;  // integral of grad(phi_i) . grad(phi_j)
};
ElementMatrices p1_element(const std::array<double, 2>& a, const std::array<double, 2>& b,
                           const std::array<double, 2>& c);

/// Global mass matrix M and Laplacian stiffness matrix K.
SparseMatrix assemble_mass(const Mesh2D& mesh);
SparseMatrix assemble_laplacian(const Mesh2D& mesh);

}  // namespace oed
