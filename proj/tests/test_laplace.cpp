#include "oed/laplace.hpp"
#include "oed/oracle.hpp"
#include "oed/pde.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace oed;

namespace {

struct LinearCase {
    PriorModel prior;
    std::shared_ptr<const LinearMap> map;
    NoiseModel noise;
    Matrix cov, prec;

    LinearCase(int n, Index ds, double sigma, std::uint64_t seed)
        : prior(PriorModel::build(n, 0.1, 0.5)),
          map(random_linear_map(prior, SensorGrid::full(prior.mesh(), ds), seed)),
          noise(NoiseModel::isotropic(ds, sigma)),
          cov(test::dense_prior_covariance(prior.mesh(), 0.1, 0.5)),
          prec(test::dense_prior_precision(prior.mesh(), 0.1, 0.5)) {}

    Matrix a(const Design& d) const { return restrict_rows(map->matrix(), d); }
    Matrix noise_inv(const Design& d) const {
        return restrict_rows(Matrix(restrict_rows(noise.covariance(), d).transpose()), d).inverse();
    }
    Vector closed_form_map(const Design& d, const Vector& y) const {
        const Matrix a = this->a(d), ni = noise_inv(d);
        const Vector rhs = a.transpose() * ni * (y - restrict(map->offset(), d)) + prec * prior.mean();
        return (a.transpose() * ni * a + prec).llt().solve(rhs);
    }
    // Generalized eigenvalues of (H, Gamma^{-1}), descending.
    Vector dense_eigs(const Design& d) const {
        const Matrix a = this->a(d);
        const Matrix h = a.transpose() * noise_inv(d) * a;
        Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(h, prec);
        return ges.eigenvalues().reverse();
    }
};

}  // namespace

TEST_CASE("MAP point on a linear model matches the closed form") {
    const LinearCase c(6, 10, 0.05, 1);
    for (const Design& d : {Design{{0, 3, 7}}, Design::all(10)}) {
        const Vector y = c.map->evaluate(c.prior.sample(2, 0)) + 0.05 * standard_normal(10, 3);
        const Vector yd = restrict(y, d);
        InverseProblem p{c.map.get(), &c.prior, &c.noise, d, yd};
        const LaplaceResult r = map_hifi(p);
        CHECK(test::rel_err(r.m_map, c.closed_form_map(d, yd)) < 1e-8);
        CHECK(r.grad_norm <= 1e-8 * std::max(1.0, r.initial_grad_norm));
        CHECK(r.newton_iterations >= 1);
        CHECK(test::rel_err(c.prior.sample(r.eta_map), r.m_map) < 1e-12);
    }
}

TEST_CASE("data equal to the prior prediction keeps the prior mean") {
    const PriorModel prior = PriorModel::build(6, 0.1, 0.5, Vector::Constant(49, 0.3));
    auto mesh = std::make_shared<const Mesh2D>(6);
    auto model = ForwardModel::semilinear_reaction(mesh, SensorGrid::full(*mesh, 8), 0.01);
    const NoiseModel noise = NoiseModel::isotropic(8, 0.01);
    const Design d{{0, 2, 5, 6}};
    const Vector y = restrict(model->evaluate(prior.mean()), d);
    InverseProblem p{model.get(), &prior, &noise, d, y};
    const LaplaceResult r = map_hifi(p);
    CHECK(std::sqrt(prior.norm_sq(r.m_map - prior.mean())) < 1e-6);
}

TEST_CASE("nonlinear MAP is a stationary point") {
    const PriorModel prior = PriorModel::build(8, 0.1, 0.5);
    auto mesh = std::make_shared<const Mesh2D>(8);
    auto model = ForwardModel::semilinear_reaction(mesh, SensorGrid::full(*mesh, 12), 0.01);
    const NoiseModel noise = NoiseModel::isotropic(12, 0.01);
    const Design d{{1, 4, 6, 9, 11}};
    const Vector y = restrict(model->evaluate(prior.sample(5, 0)), d) + 0.01 * standard_normal(5, 6);
    InverseProblem p{model.get(), &prior, &noise, d, y};
    const LaplaceResult r = map_hifi(p);
    CHECK(r.grad_norm <= 1e-8 * std::max(1.0, r.initial_grad_norm));
    CHECK(r.objective == doctest::Approx(map_objective(p, r.m_map)).epsilon(1e-12));
    // Directional derivative of the objective vanishes at the MAP point.
    for (std::uint64_t k = 0; k < 3; ++k) {
        const Vector v = prior.sqrt_apply(standard_normal(prior.dim(), 10 + k));
        const double h = 1e-4;
        const double slope = (map_objective(p, r.m_map + h * v) - map_objective(p, r.m_map - h * v)) / (2 * h);
        const double scale = (map_objective(p, r.m_map + h * v) - r.objective) / (h * h);
        CHECK(std::abs(slope) < 1e-4 * std::max(1.0, scale));
    }
}

TEST_CASE("Newton iteration cap raises nonconvergence") {
    const PriorModel prior = PriorModel::build(8, 0.1, 0.5);
    auto mesh = std::make_shared<const Mesh2D>(8);
    auto model = ForwardModel::semilinear_reaction(mesh, SensorGrid::full(*mesh, 12), 0.01);
    const NoiseModel noise = NoiseModel::isotropic(12, 0.001);
    const Design d = Design::all(12);
    const Vector y = model->evaluate(prior.sample(7, 0));
    InverseProblem p{model.get(), &prior, &noise, d, y};
    NewtonCgOptions opts;
    opts.max_newton = 1;
    CHECK_THROWS_AS(map_hifi(p, opts), NonConvergence);
}

TEST_CASE("invalid inverse problems") {
    const LinearCase c(4, 6, 0.1, 2);
    InverseProblem p{c.map.get(), &c.prior, &c.noise, Design{{0, 1}}, Vector::Zero(3)};
    CHECK_THROWS_AS(map_hifi(p), DomainError);
    p.y = Vector::Zero(2);
    p.design = Design{{0, 9}};
    CHECK_THROWS_AS(map_hifi(p), DomainError);
}

TEST_CASE("generalized eigenproblem") {
    const LinearCase c(8, 12, 0.05, 3);
    for (Index rs : {1, 3, 6, 12}) {
        Design d;
        for (Index i = 0; i < rs; ++i) d.selected.push_back((5 * i) % 12);
        const Vector y = restrict(c.map->evaluate(c.prior.sample(4, 0)), d);
        InverseProblem p{c.map.get(), &c.prior, &c.noise, d, y};
        LaplaceResult r = map_hifi(p);
        gen_eig_hifi(c.prior, r, rs + 5);
        CHECK(r.eigvals.size() == rs);
        CHECK(test::rel_err(r.eigvals, c.dense_eigs(d).head(rs)) < 1e-8);
        // W is Gamma^{-1}-orthonormal and V is orthonormal.
        CHECK((r.eigvecs.transpose() * c.prec * r.eigvecs - Matrix::Identity(rs, rs)).norm() < 1e-7);
        CHECK((r.whitened_eigvecs.transpose() * r.whitened_eigvecs - Matrix::Identity(rs, rs)).norm() < 1e-10);
    }
}

TEST_CASE("eigenvalues scale inversely with the noise") {
    const LinearCase c(6, 8, 0.05, 4);
    const Design d{{0, 2, 4, 6}};
    const Vector m = c.prior.sample(5, 0);
    const Vector y = restrict(c.map->evaluate(m), d);
    const NoiseModel scaled = NoiseModel::dense(3.0 * c.noise.covariance());
    InverseProblem p1{c.map.get(), &c.prior, &c.noise, d, y};
    InverseProblem p3{c.map.get(), &c.prior, &scaled, d, y};
    const LaplaceResult a = gen_eig_hifi(p1, m, 4);
    const LaplaceResult b = gen_eig_hifi(p3, m, 4);
    CHECK(test::rel_err(b.eigvals, a.eigvals / 3.0) < 1e-10);
}

TEST_CASE("rank of the misfit Hessian is bounded by the sensor count") {
    const PriorModel prior = PriorModel::build(6, 0.1, 0.5);
    auto mesh = std::make_shared<const Mesh2D>(6);
    auto model = ForwardModel::linear_diffusion(mesh, SensorGrid::full(*mesh, 9));
    const NoiseModel noise = NoiseModel::isotropic(9, 0.01);
    const Design d{{0, 4, 8}};
    const Vector m = prior.sample(6, 0);
    InverseProblem p{model.get(), &prior, &noise, d, restrict(model->evaluate(m), d)};
    const LaplaceResult r = gen_eig_hifi(p, m, 20);
    CHECK(r.eigvals.size() <= 3);
    CHECK(r.eigvals.minCoeff() >= 0.0);
}

TEST_CASE("posterior covariance") {
    const LinearCase c(6, 8, 0.5, 5);
    const Vector v = standard_normal(c.prior.dim(), 7);

    SUBCASE("no information returns the prior covariance") {
        const Matrix w = Matrix::Identity(c.prior.dim(), 3);
        CHECK(test::rel_err(posterior_cov_apply(c.prior, Vector::Zero(3), w, v), c.cov * v) < 1e-10);
    }
    SUBCASE("Sherman-Morrison-Woodbury at full rank") {
        const Design d = Design::all(8);
        InverseProblem p{c.map.get(), &c.prior, &c.noise, d, c.map->evaluate(c.prior.mean())};
        const LaplaceResult r = gen_eig_hifi(p, c.prior.mean(), 8);
        const Matrix& vv = r.whitened_eigvecs;
        const Matrix id = Matrix::Identity(c.prior.dim(), c.prior.dim());
        const Matrix lhs = (id + vv * r.eigvals.asDiagonal() * vv.transpose()).inverse();
        const Vector dd = r.eigvals.array() / (1.0 + r.eigvals.array());
        const Matrix rhs = id - vv * dd.asDiagonal() * vv.transpose();
        CHECK((lhs - rhs).norm() < 1e-12);

        const Matrix a = c.a(d);
        const Matrix post = (a.transpose() * c.noise_inv(d) * a + c.prec).inverse();
        CHECK(test::rel_err(posterior_cov_apply(c.prior, r.eigvals, r.eigvecs, v), post * v) < 1e-8);
    }
}
