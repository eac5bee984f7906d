#include "oed/mesh.hpp"

#include <algorithm>
#include <cmath>

namespace oed {

Mesh2D::Mesh2D(int cells_per_side) : n_(cells_per_side) {
    require(n_ >= 1, "Mesh2D: cells_per_side must be positive");
    nodes_.reserve(static_cast<std::size_t>((n_ + 1) * (n_ + 1)));
    for (int j = 0; j <= n_; ++j)
        for (int i = 0; i <= n_; ++i)
            nodes_.push_back({static_cast<double>(i) / n_, static_cast<double>(j) / n_});
    elements_.reserve(static_cast<std::size_t>(2 * n_ * n_));
    for (int j = 0; j < n_; ++j) {
        for (int i = 0; i < n_; ++i) {
            const Index n00 = node_index(i, j), n10 = node_index(i + 1, j);
            const Index n01 = node_index(i, j + 1), n11 = node_index(i + 1, j + 1);
            elements_.push_back({n00, n10, n11});
            elements_.push_back({n00, n11, n01});
        }
    }
}

double Mesh2D::element_area(Index e) const {
    const auto& el = element(e);
    const auto& a = node(el[0]);
    const auto& b = node(el[1]);
    const auto& c = node(el[2]);
    return 0.5 * std::abs((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
}

bool Mesh2D::on_boundary(Index k) const {
    const auto& p = node(k);
    return p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0;
}

PointLocation Mesh2D::locate(double x, double y) const {
    require(x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0, "Mesh2D::locate: point outside unit square");
    int i = std::min(static_cast<int>(std::floor(x * n_)), n_ - 1);
    int j = std::min(static_cast<int>(std::floor(y * n_)), n_ - 1);
    const double s = x * n_ - i;
    const double t = y * n_ - j;
    PointLocation loc;
    const Index cell = 2 * (static_cast<Index>(j) * n_ + i);
    if (t <= s) {
        loc.element = cell;
        loc.nodes = {node_index(i, j), node_index(i + 1, j), node_index(i + 1, j + 1)};
        loc.weights = {1.0 - s, s - t, t};
    } else {
        loc.element = cell + 1;
        loc.nodes = {node_index(i, j), node_index(i + 1, j + 1), node_index(i, j + 1)};
        loc.weights = {1.0 - t, s, t - s};
    }
    return loc;
}

ElementMatrices p1_element(const std::array<double, 2>& a, const std::array<double, 2>& b,
                           const std::array<double, 2>& c) {
    const double det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    const double area = 0.5 * std::abs(det);
    // Gradients of the barycentric coordinates.
    Eigen::Matrix<double, 3, 2> grad;
    grad << (b[1] - c[1]), (c[0] - b[0]),
            (c[1] - a[1]), (a[0] - c[0]),
            (a[1] - b[1]), (b[0] - a[0]);
    grad /= det;
    ElementMatrices em;
    em.stiffness = area * grad * grad.transpose();
    em.mass << 2, 1, 1, 1, 2, 1, 1, 1, 2;
    em.mass *= area / 12.0;
    return em;
}

namespace {
template <class Pick>
SparseMatrix assemble(const Mesh2D& mesh, Pick pick) {
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(9 * mesh.element_count()));
    for (Index e = 0; e < mesh.element_count(); ++e) {
        const auto& el = mesh.element(e);
        const ElementMatrices em = p1_element(mesh.node(el[0]), mesh.node(el[1]), mesh.node(el[2]));
        const Eigen::Matrix3d& local = pick(em);
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) trips.emplace_back(el[a], el[b], local(a, b));
    }
    SparseMatrix out(mesh.node_count(), mesh.node_count());
    out.setFromTriplets(trips.begin(), trips.end());
    return out;
}
}  // namespace

SparseMatrix assemble_mass(const Mesh2D& mesh) {
    return assemble(mesh, [](const ElementMatrices& em) -> const Eigen::Matrix3d& { return em.mass; });
}

SparseMatrix assemble_laplacian(const Mesh2D& mesh) {
    return assemble(mesh, [](const ElementMatrices& em) -> const Eigen::Matrix3d& { return em.stiffness; });
}

}  // namespace oed
