#include "oed/pde.hpp"

#include <algorithm>
#include <cmath>

namespace oed {

std::string to_string(ProblemKind kind) {
    return kind == ProblemKind::LinearDiffusion ? "diffusion" : "reaction";
}

ProblemKind parse_problem_kind(const std::string& name) {
    if (name == "diffusion") return ProblemKind::LinearDiffusion;
    if (name == "reaction") return ProblemKind::SemilinearReaction;
    throw DomainError("unknown problem kind '" + name + "' (expected diffusion|reaction)");
}

std::shared_ptr<const ForwardModel> ForwardModel::linear_diffusion(std::shared_ptr<const Mesh2D> mesh,
                                                                   SensorGrid sensors) {
    auto model = std::shared_ptr<ForwardModel>(new ForwardModel());
    model->kind_ = ProblemKind::LinearDiffusion;
    model->mesh_ = std::move(mesh);
    model->sensors_ = std::move(sensors);
    model->setup();
    return model;
}

std::shared_ptr<const ForwardModel> ForwardModel::semilinear_reaction(std::shared_ptr<const Mesh2D> mesh,
                                                                      SensorGrid sensors, double nu,
                                                                      SourceFn source) {
    require(nu > 0.0, "reaction model: nu must be positive");
    auto model = std::shared_ptr<ForwardModel>(new ForwardModel());
    model->kind_ = ProblemKind::SemilinearReaction;
    model->mesh_ = std::move(mesh);
    model->sensors_ = std::move(sensors);
    model->nu_ = nu;
    if (!source) {
        source = [](double x, double y) {
            const double r2 = (x - 0.7) * (x - 0.7) + (y - 0.7) * (y - 0.7);
            return std::max(0.5, std::exp(-25.0 * r2));
        };
    }
    model->source_.resize(model->mesh_->node_count());
    for (Index k = 0; k < model->mesh_->node_count(); ++k) {
        const auto& p = model->mesh_->node(k);
        model->source_[k] = source(p[0], p[1]);
    }
    model->setup();
    return model;
}

void ForwardModel::setup() {
    const Mesh2D& mesh = *mesh_;
    require(sensors_.interpolation().cols() == mesh.node_count(), "forward model: sensors built on another mesh");
    const Index dm = mesh.node_count();
    free_of_node_.assign(static_cast<std::size_t>(dm), -1);
    node_of_free_.clear();
    dirichlet_values_ = Vector::Zero(dm);
    for (Index k = 0; k < dm; ++k) {
        bool dirichlet = false;
        if (kind_ == ProblemKind::LinearDiffusion) {
            if (mesh.on_top(k)) {
                dirichlet = true;
                dirichlet_values_[k] = 1.0;
            } else if (mesh.on_bottom(k)) {
                dirichlet = true;
            }
        } else {
            dirichlet = mesh.on_boundary(k);
        }
        if (!dirichlet) {
            free_of_node_[static_cast<std::size_t>(k)] = static_cast<Index>(node_of_free_.size());
            node_of_free_.push_back(k);
        }
    }
    const Index nf = static_cast<Index>(node_of_free_.size());

    element_stiffness_.resize(static_cast<std::size_t>(mesh.element_count()));
    std::vector<Triplet> trips;
    for (Index e = 0; e < mesh.element_count(); ++e) {
        const auto& el = mesh.element(e);
        element_stiffness_[static_cast<std::size_t>(e)] =
            p1_element(mesh.node(el[0]), mesh.node(el[1]), mesh.node(el[2])).stiffness;
        for (int a = 0; a < 3; ++a) {
            const Index fa = free_of_node_[static_cast<std::size_t>(el[a])];
            if (fa < 0) continue;
            for (int b = 0; b < 3; ++b) {
                const Index fb = free_of_node_[static_cast<std::size_t>(el[b])];
                if (fb >= 0) trips.emplace_back(fa, fb, element_stiffness_[static_cast<std::size_t>(e)](a, b));
            }
        }
    }
    laplacian_ff_.resize(nf, nf);
    laplacian_ff_.setFromTriplets(trips.begin(), trips.end());

    const SparseMatrix mass = assemble_mass(mesh);
    lumped_mass_ = mass * Vector::Ones(dm);
    if (kind_ == ProblemKind::SemilinearReaction) {
        const Vector mf = mass * source_;
        load_f_.resize(nf);
        for (Index i = 0; i < nf; ++i) load_f_[i] = mf[node_of_free_[static_cast<std::size_t>(i)]];
    }

    const SparseMatrix& b = sensors_.interpolation();
    std::vector<Triplet> bf;
    for (Index k = 0; k < b.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(b, k); it; ++it) {
            const Index f = free_of_node_[static_cast<std::size_t>(it.col())];
            if (f >= 0) bf.emplace_back(it.row(), f, it.value());
        }
    obs_free_.resize(b.rows(), nf);
    obs_free_.setFromTriplets(bf.begin(), bf.end());
}

Vector ForwardModel::residual(const Vector& u, const Vector& m) const {
    require(u.size() == parameter_dim() && m.size() == parameter_dim(), "residual: dimension mismatch");
    const Index nf = static_cast<Index>(node_of_free_.size());
    Vector r = Vector::Zero(nf);
    const Mesh2D& mesh = *mesh_;
    for (Index e = 0; e < mesh.element_count(); ++e) {
        const auto& el = mesh.element(e);
        const Eigen::Vector3d ue(u[el[0]], u[el[1]], u[el[2]]);
        double coef = nu_;
        if (kind_ == ProblemKind::LinearDiffusion)
            coef = (std::exp(m[el[0]]) + std::exp(m[el[1]]) + std::exp(m[el[2]])) / 3.0;
        const Eigen::Vector3d ke = coef * (element_stiffness_[static_cast<std::size_t>(e)] * ue);
        for (int a = 0; a < 3; ++a) {
            const Index fa = free_of_node_[static_cast<std::size_t>(el[a])];
            if (fa >= 0) r[fa] += ke[a];
        }
    }
    if (kind_ == ProblemKind::SemilinearReaction) {
        for (Index i = 0; i < nf; ++i) {
            const Index k = node_of_free_[static_cast<std::size_t>(i)];
            r[i] += lumped_mass_[k] * std::exp(m[k]) * u[k] * u[k] * u[k];
        }
        r -= load_f_;
    }
    return r;
}

std::unique_ptr<Linearization> ForwardModel::linearize(const Vector& m) const {
    return std::make_unique<StateSolution>(*this, m);
}

namespace {

SparseMatrix reaction_jacobian(const SparseMatrix& nu_k, const std::vector<Index>& nodes, const Vector& lumped,
                               const Vector& m, const Vector& u) {
    SparseMatrix jac = nu_k;
    for (Index i = 0; i < jac.rows(); ++i) {
        const Index k = nodes[static_cast<std::size_t>(i)];
        jac.coeffRef(i, i) += 3.0 * lumped[k] * std::exp(m[k]) * u[k] * u[k];
    }
    return jac;
}

}  // namespace

StateSolution::StateSolution(const ForwardModel& model, const Vector& m) : model_(&model) {
    require(m.size() == model.parameter_dim(), "solve_state: parameter has wrong dimension");
    const Mesh2D& mesh = *model.mesh_;
    const Index nf = static_cast<Index>(model.node_of_free_.size());
    u_ = model.dirichlet_values_;

    if (model.kind_ == ProblemKind::LinearDiffusion) {
        std::vector<Triplet> trips;
        Vector rhs = Vector::Zero(nf);
        for (Index e = 0; e < mesh.element_count(); ++e) {
            const auto& el = mesh.element(e);
            const double coef = (std::exp(m[el[0]]) + std::exp(m[el[1]]) + std::exp(m[el[2]])) / 3.0;
            const auto& ke = model.element_stiffness_[static_cast<std::size_t>(e)];
            for (int a = 0; a < 3; ++a) {
                const Index fa = model.free_of_node_[static_cast<std::size_t>(el[a])];
                if (fa < 0) continue;
                for (int b = 0; b < 3; ++b) {
                    const Index fb = model.free_of_node_[static_cast<std::size_t>(el[b])];
                    if (fb >= 0)
                        trips.emplace_back(fa, fb, coef * ke(a, b));
                    else
                        rhs[fa] -= coef * ke(a, b) * model.dirichlet_values_[el[b]];
                }
            }
        }
        SparseMatrix k(nf, nf);
        k.setFromTriplets(trips.begin(), trips.end());
        fact_.compute(k);
        if (fact_.info() != Eigen::Success) throw NumericalError("diffusion: stiffness factorization failed");
        const Vector uf = fact_.solve(rhs);
        for (Index i = 0; i < nf; ++i) u_[model.node_of_free_[static_cast<std::size_t>(i)]] = uf[i];
        history_.push_back(model.residual(u_, m).norm());
    } else {
        const NewtonOptions& opt = model.newton_;
        const SparseMatrix nu_k = model.nu_ * model.laplacian_ff_;
        // Start from the reaction-dominated balance e^m u^3 = f.
        for (Index i = 0; i < nf; ++i) {
            const Index k = model.node_of_free_[static_cast<std::size_t>(i)];
            u_[k] = std::cbrt(std::max(0.0, model.source_[k] * std::exp(-m[k])));
        }
        Vector r = model.residual(u_, m);
        double rn = r.norm();
        history_.push_back(rn);
        fact_.analyzePattern(nu_k);
        int iter = 0;
        while (rn > opt.tol) {
            if (iter >= opt.max_iter)
                throw NonConvergence("reaction: Newton did not converge in " + std::to_string(opt.max_iter) +
                                         " iterations",
                                     rn);
            fact_.factorize(reaction_jacobian(nu_k, model.node_of_free_, model.lumped_mass_, m, u_));
            if (fact_.info() != Eigen::Success) throw NumericalError("reaction: Jacobian factorization failed");
            const Vector du = fact_.solve(r);
            double step = 1.0;
            Vector trial;
            double tn = 0.0;
            int halvings = 0;
            for (;;) {
                trial = u_;
                for (Index i = 0; i < nf; ++i) trial[model.node_of_free_[static_cast<std::size_t>(i)]] -= step * du[i];
                tn = model.residual(trial, m).norm();
                if (std::isfinite(tn) && tn < (1.0 - 1e-4 * step) * rn) break;
                if (++halvings > opt.max_halvings)
                    throw NonConvergence("reaction: Newton line search failed", rn);
                step *= 0.5;
            }
            u_ = trial;
            r = model.residual(u_, m);
            rn = r.norm();
            history_.push_back(rn);
            ++iter;
        }
        fact_.factorize(reaction_jacobian(nu_k, model.node_of_free_, model.lumped_mass_, m, u_));
        if (fact_.info() != Eigen::Success) throw NumericalError("reaction: Jacobian factorization failed");
    }
    build_coupling(m);
    obs_ = model.sensors_.interpolation() * u_;
}

void StateSolution::build_coupling(const Vector& m) {
    const ForwardModel& model = *model_;
    const Mesh2D& mesh = *model.mesh_;
    const Index nf = static_cast<Index>(model.node_of_free_.size());
    std::vector<Triplet> trips;
    if (model.kind_ == ProblemKind::LinearDiffusion) {
        // d/dm_v of the element coefficient is e^{m_v}/3 for each vertex v.
        trips.reserve(static_cast<std::size_t>(9 * mesh.element_count()));
        for (Index e = 0; e < mesh.element_count(); ++e) {
            const auto& el = mesh.element(e);
            const Eigen::Vector3d ue(u_[el[0]], u_[el[1]], u_[el[2]]);
            const Eigen::Vector3d g = model.element_stiffness_[static_cast<std::size_t>(e)] * ue;
            for (int a = 0; a < 3; ++a) {
                const Index fa = model.free_of_node_[static_cast<std::size_t>(el[a])];
                if (fa < 0) continue;
                for (int v = 0; v < 3; ++v) trips.emplace_back(fa, el[v], std::exp(m[el[v]]) / 3.0 * g[a]);
            }
        }
    } else {
        trips.reserve(static_cast<std::size_t>(nf));
        for (Index i = 0; i < nf; ++i) {
            const Index k = model.node_of_free_[static_cast<std::size_t>(i)];
            trips.emplace_back(i, k, model.lumped_mass_[k] * std::exp(m[k]) * u_[k] * u_[k] * u_[k]);
        }
    }
    coupling_.resize(nf, model.parameter_dim());
    coupling_.setFromTriplets(trips.begin(), trips.end());
}

// J = -B_f (dR/du)^{-1} dR/dm; dR/du is symmetric so the adjoint reuses the same factors.
Matrix StateSolution::apply(const Matrix& directions) const {
    require(directions.rows() == parameter_dim(), "jacobian apply: direction has wrong dimension");
    solves_ += static_cast<std::size_t>(directions.cols());
    const Matrix rhs = coupling_ * directions;
    const Matrix du = fact_.solve(rhs);
    return -(model_->obs_free_ * du);
}

Matrix StateSolution::apply_transpose(const Matrix& weights) const {
    require(weights.rows() == observation_dim(), "jacobian transpose: weight has wrong dimension");
    solves_ += static_cast<std::size_t>(weights.cols());
    const Matrix rhs = model_->obs_free_.transpose() * weights;
    const Matrix adj = fact_.solve(rhs);
    return -(coupling_.transpose() * adj);
}

std::unique_ptr<StateSolution> solve_state(const ForwardModel& model, const Vector& m) {
    return std::make_unique<StateSolution>(model, m);
}

Vector observe(const StateSolution& state, const SensorGrid& sensors) {
    require(sensors.interpolation().cols() == state.state().size(), "observe: sensors built on another mesh");
    return sensors.interpolation() * state.state();
}

}  // namespace oed
