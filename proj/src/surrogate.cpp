#include "oed/surrogate.hpp"

namespace oed {

LinearReducedMap::LinearReducedMap(Vector offset, Matrix jac) : offset_(std::move(offset)), jac_(std::move(jac)) {
    require(offset_.size() == jac_.rows(), "LinearReducedMap: offset and Jacobian disagree");
}

Vector LinearReducedMap::forward(const Vector& beta) const {
    require(beta.size() == jac_.cols(), "LinearReducedMap: input has wrong dimension");
    return offset_ + jac_ * beta;
}

ExactReducedMap::ExactReducedMap(std::shared_ptr<const ObservationMap> model, ReducedBasis input, ReducedBasis output)
    : model_(std::move(model)), input_(std::move(input)), output_(std::move(output)) {
    require(input_.is_input() && !output_.is_input(), "ExactReducedMap: expected an input and an output basis");
    require(input_.dim() == model_->parameter_dim() && output_.dim() == model_->observation_dim(),
            "ExactReducedMap: bases do not match the model");
}

Vector ExactReducedMap::forward(const Vector& beta) const {
    return encode_output(output_, model_->evaluate(decode_input(input_, beta)));
}

Matrix ExactReducedMap::jacobian(const Vector& beta) const {
    const auto lin = model_->linearize(decode_input(input_, beta));
    return reduced_jacobian(*lin, input_.columns, output_.columns);
}

void ExactReducedMap::evaluate(const Vector& beta, Vector& out, Matrix& jac) const {
    const auto lin = model_->linearize(decode_input(input_, beta));
    out = encode_output(output_, lin->observables());
    jac = reduced_jacobian(*lin, input_.columns, output_.columns);
}

namespace {

class SurrogateLinearization : public Linearization {
  public:
    SurrogateLinearization(const Surrogate& s, const Vector& m) : s_(&s) {
        Vector out;
        s.reduced_map().evaluate(s.encode(m), out, g_);
        obs_ = decode_output(s.output_basis(), out);
    }
    const Vector& observables() const override { return obs_; }
    Index parameter_dim() const override { return s_->parameter_dim(); }
    Matrix apply(const Matrix& v) const override {
        const Matrix coeff = s_->input_basis().encoder.transpose() * v;
        return s_->output_basis().columns * (g_ * coeff);
    }
    Matrix apply_transpose(const Matrix& w) const override {
        const Matrix coeff = s_->output_basis().columns.transpose() * w;
        return s_->input_basis().encoder * (g_.transpose() * coeff);
    }

  private:
    const Surrogate* s_;
    Vector obs_;
    Matrix g_;
};

}  // namespace

Surrogate::Surrogate(ReducedBasis input, ReducedBasis output, std::shared_ptr<const ReducedMap> map)
    : input_(std::move(input)), output_(std::move(output)), map_(std::move(map)) {
    require(input_.is_input(), "Surrogate: input basis must use the prior-inverse metric");
    require(!output_.is_input(), "Surrogate: output basis must be Euclidean");
    require(map_ != nullptr, "Surrogate: reduced map is required");
    require(map_->input_dim() == input_.rank() && map_->output_dim() == output_.rank(),
            "Surrogate: reduced map dimensions do not match the bases");
    gram_ = input_.encoder.transpose() * input_.columns;
    gram_ = 0.5 * (gram_ + gram_.transpose()).eval();
}

Vector Surrogate::forward_reduced(const Vector& beta) const { return decode_output(output_, map_->forward(beta)); }

Vector Surrogate::evaluate(const Vector& m) const { return forward_reduced(encode(m)); }

std::unique_ptr<Linearization> Surrogate::linearize(const Vector& m) const {
    return std::make_unique<SurrogateLinearization>(*this, m);
}

Matrix Surrogate::jacobian_full(const Vector& m) const {
    const Matrix g = map_->jacobian(encode(m));
    return output_.columns * g * input_.encoder.transpose();
}

}  // namespace oed
