#include "oed/oracle.hpp"

#include "oed/criteria.hpp"
#include "oed/train.hpp"

#include <cmath>
#include <exception>
#include <iomanip>
#include <ostream>
#include <random>

#include <omp.h>

namespace oed {

namespace {

class LinearLinearization : public Linearization {
  public:
    LinearLinearization(const LinearMap& map, const Vector& m) : map_(&map), obs_(map.evaluate(m)) {}
    const Vector& observables() const override { return obs_; }
    Index parameter_dim() const override { return map_->parameter_dim(); }
    Matrix apply(const Matrix& v) const override {
        solves_ += static_cast<std::size_t>(v.cols());
        return map_->matrix() * v;
    }
    Matrix apply_transpose(const Matrix& w) const override {
        solves_ += static_cast<std::size_t>(w.cols());
        return map_->matrix().transpose() * w;
    }

  private:
    const LinearMap* map_;
    Vector obs_;
};

double logdet_spd(const Matrix& a, const char* what) {
    const Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) throw NumericalError(std::string(what) + ": matrix not SPD");
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace

LinearMap::LinearMap(Matrix g, Vector offset) : g_(std::move(g)), offset_(std::move(offset)) {
    if (offset_.size() == 0) offset_ = Vector::Zero(g_.rows());
    require(offset_.size() == g_.rows(), "LinearMap: offset length must equal the row count");
}

std::unique_ptr<Linearization> LinearMap::linearize(const Vector& m) const {
    require(m.size() == parameter_dim(), "LinearMap: parameter dimension mismatch");
    return std::make_unique<LinearLinearization>(*this, m);
}

std::shared_ptr<const LinearMap> random_linear_map(const PriorModel& prior, const SensorGrid& sensors,
                                                   std::uint64_t seed, double scale) {
    const Mesh2D& mesh = prior.mesh();
    const Vector lumped = prior.mass() * Vector::Ones(prior.dim());
    std::mt19937_64 engine(stream_key(seed, Stream::oracle, 0));
    std::uniform_real_distribution<double> width(0.05, 0.2), amp(0.5, 2.0);
    Matrix g(sensors.count(), prior.dim());
    for (Index i = 0; i < sensors.count(); ++i) {
        const auto& s = sensors.points()[static_cast<std::size_t>(i)];
        const double w = width(engine), a = amp(engine) * scale;
        for (Index k = 0; k < prior.dim(); ++k) {
            const auto& x = mesh.node(k);
            const double r2 = (x[0] - s[0]) * (x[0] - s[0]) + (x[1] - s[1]) * (x[1] - s[1]);
            g(i, k) = a * std::exp(-r2 / (2.0 * w * w)) * lumped(k) / (2.0 * M_PI * w * w);
        }
    }
    return std::make_shared<const LinearMap>(std::move(g));
}

Matrix dense_covariance(const PriorModel& prior) {
    require(prior.dim() <= kOracleMaxDim, "oracle: dense prior limited to " + std::to_string(kOracleMaxDim) + " nodes");
    const Matrix s = prior.sqrt_apply(Matrix(Matrix::Identity(prior.dim(), prior.dim())));
    Matrix c = s * s.transpose();
    return 0.5 * (c + c.transpose());
}

Matrix dense_precision(const PriorModel& prior) {
    require(prior.dim() <= kOracleMaxDim, "oracle: dense prior limited to " + std::to_string(kOracleMaxDim) + " nodes");
    Matrix p = prior.precision_apply(Matrix(Matrix::Identity(prior.dim(), prior.dim())));
    return 0.5 * (p + p.transpose());
}

LinearProblem make_linear_problem(const LinearMap& map, const PriorModel& prior, const NoiseModel& noise,
                                  const Design& design) {
    design.validate(map.observation_dim());
    LinearProblem lp;
    lp.a = restrict_rows(map.matrix(), design);
    lp.offset = restrict(map.offset(), design);
    lp.prior_cov = dense_covariance(prior);
    lp.prior_prec = dense_precision(prior);
    lp.prior_mean = prior.mean();
    lp.noise_cov = DesignNoise(noise, design).covariance();
    return lp;
}

LinearProblem make_linear_problem(Matrix a, Vector offset, Matrix prior_cov, Vector prior_mean, Matrix noise_cov) {
    require(prior_cov.rows() <= kOracleMaxDim, "oracle: dense prior limited to " + std::to_string(kOracleMaxDim));
    require(a.cols() == prior_cov.rows() && a.rows() == noise_cov.rows() && prior_mean.size() == a.cols(),
            "oracle: inconsistent dimensions");
    if (offset.size() == 0) offset = Vector::Zero(a.rows());
    LinearProblem lp;
    lp.a = std::move(a);
    lp.offset = std::move(offset);
    const Eigen::LLT<Matrix> llt(prior_cov);
    if (llt.info() != Eigen::Success) throw NumericalError("oracle: prior covariance not SPD");
    lp.prior_prec = llt.solve(Matrix(Matrix::Identity(prior_cov.rows(), prior_cov.cols())));
    lp.prior_prec = 0.5 * (lp.prior_prec + lp.prior_prec.transpose()).eval();
    lp.prior_cov = std::move(prior_cov);
    lp.prior_mean = std::move(prior_mean);
    lp.noise_cov = std::move(noise_cov);
    return lp;
}

namespace {

// H = A^T Gn^{-1} A and A^T Gn^{-1}.
std::pair<Matrix, Matrix> misfit_hessian(const LinearProblem& lp) {
    if (lp.a.rows() == 0) return {Matrix::Zero(lp.a.cols(), lp.a.cols()), Matrix::Zero(lp.a.cols(), 0)};
    const Eigen::LLT<Matrix> n(lp.noise_cov);
    if (n.info() != Eigen::Success) throw NumericalError("oracle: noise covariance not SPD");
    Matrix atn = n.solve(lp.a).transpose();
    Matrix h = atn * lp.a;
    return {0.5 * (h + h.transpose()), std::move(atn)};
}

}  // namespace

Vector oracle_map(const LinearProblem& lp, const Vector& y) {
    require(y.size() == lp.a.rows(), "oracle_map: data length mismatch");
    const auto [h, atn] = misfit_hessian(lp);
    const Matrix k = h + lp.prior_prec;
    Vector rhs = lp.prior_prec * lp.prior_mean;
    if (y.size() > 0) rhs += atn * (y - lp.offset);
    return k.llt().solve(rhs);
}

Vector oracle_eigs(const LinearProblem& lp) {
    const auto [h, atn] = misfit_hessian(lp);
    const Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(h, lp.prior_prec);
    if (ges.info() != Eigen::Success) throw NumericalError("oracle_eigs: generalized eigensolver failed");
    return ges.eigenvalues().reverse();
}

OracleCriteria oracle_criteria(const LinearProblem& lp, const Vector& y) {
    const auto [h, atn] = misfit_hessian(lp);
    const Matrix k = h + lp.prior_prec;
    const Eigen::LLT<Matrix> llt(k);
    if (llt.info() != Eigen::Success) throw NumericalError("oracle: posterior precision not SPD");
    OracleCriteria c;
    c.a = llt.solve(h).trace();
    c.d = logdet_spd(k, "oracle") - logdet_spd(lp.prior_prec, "oracle");
    const Vector dm = oracle_map(lp, y) - lp.prior_mean;
    c.eig = c.d - c.a + dm.dot(lp.prior_prec * dm);
    return c;
}

double oracle_expected_eig(const LinearProblem& lp) {
    const auto [h, atn] = misfit_hessian(lp);
    return logdet_spd(Matrix(h + lp.prior_prec), "oracle") - logdet_spd(lp.prior_prec, "oracle");
}

std::vector<LaplaceResult> hifi_reference(const ObservationMap& truth, const PriorModel& prior,
                                          const NoiseModel& noise, const std::vector<BudgetDraw>& draws,
                                          int workers) {
    std::vector<LaplaceResult> out(draws.size());
    std::exception_ptr error;
    const auto n = static_cast<long>(draws.size());
#pragma omp parallel for schedule(dynamic) num_threads(workers > 0 ? workers : omp_get_max_threads())
    for (long i = 0; i < n; ++i) {
        try {
            const auto& d = draws[static_cast<std::size_t>(i)];
            InverseProblem problem{&truth, &prior, &noise, d.design, d.y};
            LaplaceResult r = map_hifi(problem);
            gen_eig_hifi(prior, r, d.design.size());
            out[static_cast<std::size_t>(i)] = std::move(r);
        } catch (...) {
#pragma omp critical(oed_hifi_reference)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    return out;
}

namespace {

BudgetSample budget_sample(const ObservationMap& truth, const PriorModel& prior, const NoiseModel& noise,
                           const Surrogate& surrogate, const Matrix& phi_m, const BudgetDraw& draw,
                           const LaplaceResult& ref, const LbfgsOptions& lbfgs) {
    BudgetSample s;
    const DesignNoise dn(noise, draw.design);
    const Vector& m_star = ref.m_map;

    // Surrogate approximation errors at the hifi MAP point.
    s.eps1 = dn.whiten(Vector(restrict(Vector(truth.evaluate(m_star) - surrogate.evaluate(m_star)), draw.design)))
                 .norm();
    const Matrix p = dn.whiten(restrict_rows(surrogate.output_basis().columns, draw.design));
    const Matrix y_star = p * surrogate.reduced_map().jacobian(surrogate.encode(m_star)) * phi_m.transpose();
    s.eps2 = (ref.whitened_jacobian - y_star).norm();
    const Vector& eta = ref.eta_map;
    const Vector coeff = (phi_m.transpose() * phi_m).ldlt().solve(phi_m.transpose() * eta);
    s.eps3 = (eta - phi_m * coeff).norm();

    // Surrogate Laplace approximation.
    ReducedMapProblem rp{&surrogate, &noise, draw.design, draw.y, lbfgs, std::nullopt};
    ReducedLaplaceResult red = map_reduced(rp);
    eig_reduced(rp, red);
    const Vector dm = m_star - prior.mean();
    s.eps_m = std::sqrt(std::max(0.0, prior.norm_sq(m_star - red.m_map)));
    const double ref_norm = std::sqrt(std::max(0.0, prior.norm_sq(dm)));
    s.eps_m_rel = ref_norm > 0.0 ? s.eps_m / ref_norm : 0.0;

    const Index r = std::max(ref.eigvals.size(), red.eigvals.size());
    Vector l = Vector::Zero(r), lh = Vector::Zero(r);
    l.head(ref.eigvals.size()) = ref.eigvals;
    lh.head(red.eigvals.size()) = red.eigvals;
    s.rank = r;
    s.eps_lambda = r > 0 ? (l - lh).cwiseAbs().maxCoeff() : 0.0;

    // ||X^T X - Y^T Y||_F through a thin QR of [X^T Y^T].
    const Matrix& x = ref.whitened_jacobian;
    const Matrix yh = red.whitened_reduced_jacobian * phi_m.transpose();
    Matrix z(x.cols(), x.rows() + yh.rows());
    z << x.transpose(), yh.transpose();
    if (z.cols() > 0) {
        const Eigen::HouseholderQR<Matrix> qr(z);
        const Index k = std::min(z.rows(), z.cols());
        const Matrix rr = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
        Vector sign = Vector::Ones(z.cols());
        sign.tail(yh.rows()).setConstant(-1.0);
        s.hessian_gap = (rr * sign.asDiagonal() * rr.transpose()).norm();
    }

    s.a_gap = std::abs(a_opt(l) - a_opt(lh));
    s.d_gap = std::abs(d_opt(l) - d_opt(lh));
    // Roundoff slack for comparisons of quantities that may both be zero.
    const double scale = 1.0 + l.sum() + lh.sum();
    s.weyl_ok = s.eps_lambda <= s.hessian_gap + 1e-10 * scale;
    const double bound = static_cast<double>(r) * s.eps_lambda + 1e-12 * scale;
    s.criteria_ok = s.a_gap <= bound && s.d_gap <= bound;
    return s;
}

}  // namespace

ErrorBudget measure_error_budget(const ObservationMap& truth, const PriorModel& prior, const NoiseModel& noise,
                                 const Surrogate& surrogate, const std::vector<BudgetDraw>& draws,
                                 const std::vector<LaplaceResult>& reference, const LbfgsOptions& lbfgs,
                                 int workers) {
    require(reference.size() == draws.size(), "error budget: one hifi reference per draw required");
    require(!draws.empty(), "error budget: no draws");
    // Whitened input basis S^{-1} Psi_m.
    const Matrix& psi = surrogate.input_basis().columns;
    Matrix phi_m(psi.rows(), psi.cols());
    for (Index j = 0; j < psi.cols(); ++j) phi_m.col(j) = prior.sqrt_inverse_apply(psi.col(j));

    ErrorBudget b;
    b.samples.resize(draws.size());
    std::exception_ptr error;
    const auto n = static_cast<long>(draws.size());
#pragma omp parallel for schedule(dynamic) num_threads(workers > 0 ? workers : omp_get_max_threads())
    for (long i = 0; i < n; ++i) {
        try {
            const auto k = static_cast<std::size_t>(i);
            b.samples[k] = budget_sample(truth, prior, noise, surrogate, phi_m, draws[k], reference[k], lbfgs);
        } catch (...) {
#pragma omp critical(oed_budget)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);

    std::vector<double> em, emr, el;
    for (const auto& s : b.samples) {
        b.eps1 = std::max(b.eps1, s.eps1);
        b.eps2 = std::max(b.eps2, s.eps2);
        b.eps3 = std::max(b.eps3, s.eps3);
        b.eps_m = std::max(b.eps_m, s.eps_m);
        b.eps_lambda = std::max(b.eps_lambda, s.eps_lambda);
        em.push_back(s.eps_m);
        emr.push_back(s.eps_m_rel);
        el.push_back(s.eps_lambda);
    }
    b.median_eps_m = median(em);
    b.median_eps_m_rel = median(emr);
    b.median_eps_lambda = median(el);
    return b;
}

void write_budget_csv(std::ostream& os, const std::vector<BudgetRow>& rows) {
    os << "training_size,seed,eps1,eps2,eps3,eps_m,eps_lambda\n" << std::setprecision(17);
    for (const auto& r : rows)
        os << r.training_size << ',' << r.seed << ',' << r.budget.eps1 << ',' << r.budget.eps2 << ','
           << r.budget.eps3 << ',' << r.budget.eps_m << ',' << r.budget.eps_lambda << '\n';
}

}  // namespace oed
