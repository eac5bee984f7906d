#include "oed/forward.hpp"

#include <algorithm>
#include <cmath>

namespace oed {

SensorGrid::SensorGrid(const Mesh2D& mesh, std::vector<std::array<double, 2>> points)
    : points_(std::move(points)) {
    std::vector<Triplet> trips;
    trips.reserve(3 * points_.size());
    for (std::size_t s = 0; s < points_.size(); ++s) {
        const auto loc = mesh.locate(points_[s][0], points_[s][1]);
        for (int k = 0; k < 3; ++k)
            if (loc.weights[k] != 0.0) trips.emplace_back(static_cast<Index>(s), loc.nodes[k], loc.weights[k]);
    }
    rows_.resize(count(), mesh.node_count());
    rows_.setFromTriplets(trips.begin(), trips.end());
}

SensorGrid SensorGrid::lower(const Mesh2D& mesh, Index count) {
    require(count >= 1, "sensors: count must be positive");
    const Index nx = static_cast<Index>(std::ceil(std::sqrt(2.0 * static_cast<double>(count))));
    const Index ny = (count + nx - 1) / nx;
    require(ny <= 5, "sensors: too many sensors for the lower layout");
    std::vector<std::array<double, 2>> pts;
    for (Index j = 0; j < ny; ++j)
        for (Index i = 0; i < nx && static_cast<Index>(pts.size()) < count; ++i)
            pts.push_back({(i + 0.5) / static_cast<double>(nx), (j + 0.5) / 10.0});
    return SensorGrid(mesh, std::move(pts));
}

SensorGrid SensorGrid::full(const Mesh2D& mesh, Index count) {
    require(count >= 1, "sensors: count must be positive");
    const Index k = static_cast<Index>(std::ceil(std::sqrt(static_cast<double>(count))));
    std::vector<std::array<double, 2>> pts;
    for (Index j = 0; j < k; ++j)
        for (Index i = 0; i < k && static_cast<Index>(pts.size()) < count; ++i)
            pts.push_back({(i + 0.5) / static_cast<double>(k), (j + 0.5) / static_cast<double>(k)});
    return SensorGrid(mesh, std::move(pts));
}

void Design::validate(Index candidates) const {
    std::vector<char> seen(static_cast<std::size_t>(std::max<Index>(candidates, 0)), 0);
    for (Index s : selected) {
        require(s >= 0 && s < candidates, "design: sensor index " + std::to_string(s) + " out of range");
        require(!seen[static_cast<std::size_t>(s)], "design: duplicate sensor index " + std::to_string(s));
        seen[static_cast<std::size_t>(s)] = 1;
    }
}

Design Design::all(Index candidates) {
    Design d;
    for (Index s = 0; s < candidates; ++s) d.selected.push_back(s);
    return d;
}

Vector restrict(const Vector& values, const Design& design) {
    design.validate(values.size());
    Vector out(design.size());
    for (Index k = 0; k < design.size(); ++k) out[k] = values[design.selected[static_cast<std::size_t>(k)]];
    return out;
}

Matrix restrict_rows(const Matrix& rows, const Design& design) {
    design.validate(rows.rows());
    Matrix out(design.size(), rows.cols());
    for (Index k = 0; k < design.size(); ++k) out.row(k) = rows.row(design.selected[static_cast<std::size_t>(k)]);
    return out;
}

Matrix scatter_rows(const Matrix& rows, const Design& design, Index candidates) {
    design.validate(candidates);
    require(rows.rows() == design.size(), "scatter_rows: row count must match the design");
    Matrix out = Matrix::Zero(candidates, rows.cols());
    for (Index k = 0; k < design.size(); ++k) out.row(design.selected[static_cast<std::size_t>(k)]) = rows.row(k);
    return out;
}

NoiseModel NoiseModel::isotropic(Index candidates, double sigma) {
    require(sigma > 0.0, "noise: sigma must be positive");
    return dense(sigma * sigma * Matrix::Identity(candidates, candidates));
}

NoiseModel NoiseModel::dense(Matrix covariance) {
    require(covariance.rows() == covariance.cols(), "noise: covariance must be square");
    require((covariance - covariance.transpose()).norm() <= 1e-12 * std::max(1.0, covariance.norm()),
            "noise: covariance must be symmetric");
    Eigen::LLT<Matrix> llt(covariance);
    require(llt.info() == Eigen::Success, "noise: covariance must be positive definite");
    NoiseModel n;
    n.chol_ = llt.matrixL();
    n.cov_ = std::move(covariance);
    return n;
}

Vector NoiseModel::draw(std::uint64_t key) const { return chol_ * standard_normal(cov_.rows(), key); }

DesignNoise::DesignNoise(const NoiseModel& noise, const Design& design) {
    design.validate(noise.candidates());
    const Index r = design.size();
    cov_.resize(r, r);
    for (Index a = 0; a < r; ++a)
        for (Index b = 0; b < r; ++b)
            cov_(a, b) = noise.covariance()(design.selected[static_cast<std::size_t>(a)],
                                            design.selected[static_cast<std::size_t>(b)]);
    if (r > 0) {
        llt_.compute(cov_);
        if (llt_.info() != Eigen::Success) throw NumericalError("noise: restricted covariance not SPD");
    }
}

Matrix DesignNoise::whiten(const Matrix& x) const {
    if (size() == 0) return x;
    return llt_.matrixL().solve(x);
}
Vector DesignNoise::whiten(const Vector& x) const {
    if (size() == 0) return x;
    return llt_.matrixL().solve(x);
}
Matrix DesignNoise::whiten_transpose(const Matrix& x) const {
    if (size() == 0) return x;
    return llt_.matrixU().solve(x);
}
Vector DesignNoise::whiten_transpose(const Vector& x) const {
    if (size() == 0) return x;
    return llt_.matrixU().solve(x);
}

Matrix jacobian_full(const Linearization& lin) {
    const Index ds = lin.observation_dim();
    return lin.apply_transpose(Matrix::Identity(ds, ds)).transpose();
}

Matrix reduced_jacobian(const Linearization& lin, const Matrix& psi_m, const Matrix& psi_f) {
    require(psi_m.rows() == lin.parameter_dim(), "reduced_jacobian: input basis has wrong row count");
    require(psi_f.rows() == lin.observation_dim(), "reduced_jacobian: output basis has wrong row count");
    if (psi_f.cols() == 0 || psi_m.cols() == 0) return Matrix::Zero(psi_f.cols(), psi_m.cols());
    if (psi_f.cols() <= psi_m.cols()) {
        const Matrix jt_psi = lin.apply_transpose(psi_f);  // d_m x r_F
        return jt_psi.transpose() * psi_m;
    }
    return psi_f.transpose() * lin.apply(psi_m);
}

}  // namespace oed
