#include "oed/net.hpp"

#include <cmath>
#include <random>

namespace oed {

Index NetShape::parameter_count() const noexcept {
    return width * r_in + width + blocks * (2 * width * width + width) + r_out * width + r_out;
}

NeuralNet::NeuralNet(NetShape shape) : shape_(shape), params_(Vector::Zero(shape.parameter_count())) { layout(); }

NeuralNet::NeuralNet(NetShape shape, Vector params) : shape_(shape), params_(std::move(params)) {
    require(params_.size() == shape_.parameter_count(), "NeuralNet: parameter vector has wrong length");
    layout();
}

void NeuralNet::layout() {
    require(shape_.r_in >= 1 && shape_.r_out >= 1 && shape_.width >= 1 && shape_.blocks >= 0,
            "NeuralNet: invalid shape");
    const Index w = shape_.width;
    Index at = 0;
    offsets_.z_in = at;
    at += w * shape_.r_in;
    offsets_.b_in = at;
    at += w;
    offsets_.z.clear();
    offsets_.b.clear();
    offsets_.w.clear();
    for (Index l = 0; l < shape_.blocks; ++l) {
        offsets_.z.push_back(at);
        at += w * w;
        offsets_.b.push_back(at);
        at += w;
        offsets_.w.push_back(at);
        at += w * w;
    }
    offsets_.z_out = at;
    at += shape_.r_out * w;
    offsets_.b_out = at;
}

NeuralNet NeuralNet::xavier(NetShape shape, std::uint64_t seed) {
    NeuralNet net(shape);
    std::mt19937_64 engine(stream_key(seed, Stream::init, 0));
    auto fill = [&](Index offset, Index rows, Index cols) {
        const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
        std::uniform_real_distribution<double> u(-a, a);
        for (Index k = 0; k < rows * cols; ++k) net.params_[offset + k] = u(engine);
    };
    const Index w = shape.width;
    fill(net.offsets_.z_in, w, shape.r_in);
    for (Index l = 0; l < shape.blocks; ++l) {
        fill(net.offsets_.z[static_cast<std::size_t>(l)], w, w);
        fill(net.offsets_.w[static_cast<std::size_t>(l)], w, w);
    }
    fill(net.offsets_.z_out, shape.r_out, w);
    return net;
}

Eigen::Map<const Matrix> NeuralNet::z_in() const {
    return {params_.data() + offsets_.z_in, shape_.width, shape_.r_in};
}
Eigen::Map<const Vector> NeuralNet::b_in() const { return {params_.data() + offsets_.b_in, shape_.width}; }
Eigen::Map<const Matrix> NeuralNet::z_block(Index l) const {
    return {params_.data() + offsets_.z[static_cast<std::size_t>(l)], shape_.width, shape_.width};
}
Eigen::Map<const Vector> NeuralNet::b_block(Index l) const {
    return {params_.data() + offsets_.b[static_cast<std::size_t>(l)], shape_.width};
}
Eigen::Map<const Matrix> NeuralNet::w_block(Index l) const {
    return {params_.data() + offsets_.w[static_cast<std::size_t>(l)], shape_.width, shape_.width};
}
Eigen::Map<const Matrix> NeuralNet::z_out() const {
    return {params_.data() + offsets_.z_out, shape_.r_out, shape_.width};
}
Eigen::Map<const Vector> NeuralNet::b_out() const { return {params_.data() + offsets_.b_out, shape_.r_out}; }

namespace {

Matrix sigmoid(const Matrix& s) { return (1.0 / (1.0 + (-s.array()).exp())).matrix(); }

// Row-scale each r-column block b of m by column b of d.
Matrix scale_blocks(const Matrix& m, const Matrix& d, Index r) {
    Matrix out(m.rows(), m.cols());
    for (Index b = 0; b < d.cols(); ++b)
        out.middleCols(b * r, r) = m.middleCols(b * r, r).array().colwise() * d.col(b).array();
    return out;
}

// Column b of the result is the row-wise dot product of the b-th r-column blocks.
Matrix block_row_dots(const Matrix& x, const Matrix& y, Index r, Index batch) {
    Matrix out(x.rows(), batch);
    for (Index b = 0; b < batch; ++b)
        out.col(b) = (x.middleCols(b * r, r).array() * y.middleCols(b * r, r).array()).rowwise().sum();
    return out;
}

struct Tape {
    std::vector<Matrix> z;  // z_0 .. z_L, width x B
    std::vector<Matrix> h;  // sigmoid activations per block
    std::vector<Matrix> t;  // tangents T_0 .. T_L, width x (B r)
    std::vector<Matrix> u;  // Z_l T_l per block
    Matrix q;               // tanh(z_L)
    Matrix out;             // r_out x B
    Matrix jac;             // r_out x (B r)
};

void run_forward(const NeuralNet& net, const Matrix& betas, bool tangents, Tape& tape) {
    const NetShape& s = net.shape();
    require(betas.rows() == s.r_in, "NeuralNet: input has wrong dimension");
    const Index batch = betas.cols();
    const Index r = s.r_in;
    tape.z.clear();
    tape.h.clear();
    tape.t.clear();
    tape.u.clear();
    Matrix a = net.z_in() * betas;
    a.colwise() += net.b_in();
    tape.z.push_back(a.array().tanh().matrix());
    if (tangents) {
        const Matrix d0 = (1.0 - tape.z[0].array().square()).matrix();
        Matrix t0(s.width, batch * r);
        for (Index b = 0; b < batch; ++b) t0.middleCols(b * r, r) = net.z_in().array().colwise() * d0.col(b).array();
        tape.t.push_back(std::move(t0));
    }
    for (Index l = 0; l < s.blocks; ++l) {
        const Matrix& z = tape.z.back();
        Matrix pre = net.z_block(l) * z;
        pre.colwise() += net.b_block(l);
        Matrix h = sigmoid(pre);
        Matrix znext = z;
        znext.noalias() += net.w_block(l) * h;
        if (tangents) {
            const Matrix dh = (h.array() * (1.0 - h.array())).matrix();
            Matrix u = net.z_block(l) * tape.t.back();
            Matrix tnext = tape.t.back();
            tnext.noalias() += net.w_block(l) * scale_blocks(u, dh, r);
            tape.u.push_back(std::move(u));
            tape.t.push_back(std::move(tnext));
        }
        tape.h.push_back(std::move(h));
        tape.z.push_back(std::move(znext));
    }
    tape.q = tape.z.back().array().tanh().matrix();
    tape.out = net.z_out() * tape.q;
    tape.out.colwise() += net.b_out();
    if (tangents) {
        const Matrix dq = (1.0 - tape.q.array().square()).matrix();
        tape.jac = net.z_out() * scale_blocks(tape.t.back(), dq, r);
    }
}

}  // namespace

Matrix NeuralNet::forward_batch(const Matrix& betas) const {
    Tape tape;
    run_forward(*this, betas, false, tape);
    return tape.out;
}

Matrix NeuralNet::jacobian_batch(const Matrix& betas) const {
    Tape tape;
    run_forward(*this, betas, true, tape);
    return tape.jac;
}

Vector NeuralNet::forward(const Vector& beta) const { return forward_batch(beta); }

Matrix NeuralNet::jacobian(const Vector& beta) const { return jacobian_batch(beta); }

void NeuralNet::evaluate(const Vector& beta, Vector& out, Matrix& jac) const {
    Tape tape;
    run_forward(*this, beta, true, tape);
    out = tape.out.col(0);
    jac = std::move(tape.jac);
}

double dino_loss(const NeuralNet& net, const Matrix& beta_m, const Matrix& beta_f, const Matrix* jac, double lambda,
                 Vector* grad) {
    const NetShape& s = net.shape();
    const Index batch = beta_m.cols();
    const Index r = s.r_in;
    require(batch >= 1, "dino_loss: empty batch");
    require(beta_f.rows() == s.r_out && beta_f.cols() == batch, "dino_loss: output batch has wrong shape");
    require(lambda >= 0.0, "dino_loss: lambda must be nonnegative");
    const bool use_jac = lambda > 0.0;
    if (use_jac) {
        require(jac != nullptr, "dino_loss: Jacobian data required when lambda > 0");
        require(jac->rows() == s.r_out && jac->cols() == batch * r, "dino_loss: Jacobian batch has wrong shape");
    }
    Tape tape;
    run_forward(net, beta_m, use_jac, tape);
    const double inv_n = 1.0 / static_cast<double>(batch);
    const Matrix res = tape.out - beta_f;
    double value = res.squaredNorm() * inv_n;
    Matrix jres;
    if (use_jac) {
        jres = tape.jac - *jac;
        value += lambda * jres.squaredNorm() * inv_n;
    }
    if (grad == nullptr) return value;

    grad->setZero(s.parameter_count());
    const auto& off = net.offsets();
    const Index w = s.width;
    auto gmat = [&](Index o, Index rows, Index cols) { return Eigen::Map<Matrix>(grad->data() + o, rows, cols); };
    auto gvec = [&](Index o, Index n) { return Eigen::Map<Vector>(grad->data() + o, n); };

    // Output layer.
    const Matrix ybar = 2.0 * inv_n * res;
    Matrix zbar;
    Matrix tbar;
    {
        const Matrix dq = (1.0 - tape.q.array().square()).matrix();
        Matrix gz_out = ybar * tape.q.transpose();
        Matrix qbar = net.z_out().transpose() * ybar;
        if (use_jac) {
            const Matrix jbar = 2.0 * lambda * inv_n * jres;
            const Matrix p = scale_blocks(tape.t.back(), dq, r);
            gz_out.noalias() += jbar * p.transpose();
            const Matrix pbar = net.z_out().transpose() * jbar;
            tbar = scale_blocks(pbar, dq, r);
            qbar.array() -= 2.0 * tape.q.array() * block_row_dots(pbar, tape.t.back(), r, batch).array();
        }
        gmat(off.z_out, s.r_out, w) = gz_out;
        gvec(off.b_out, s.r_out) = ybar.rowwise().sum();
        zbar = (dq.array() * qbar.array()).matrix();
    }

    // Residual blocks, last to first. zbar / tbar hold the adjoints of z_{l+1} / T_{l+1}.
    for (Index l = s.blocks - 1; l >= 0; --l) {
        const std::size_t li = static_cast<std::size_t>(l);
        const Matrix& h = tape.h[li];
        const Matrix& z = tape.z[li];
        const Matrix dh = (h.array() * (1.0 - h.array())).matrix();
        Matrix gw = zbar * h.transpose();
        const Matrix hbar = net.w_block(l).transpose() * zbar;
        Matrix sbar = (dh.array() * hbar.array()).matrix();
        Matrix gz = Matrix::Zero(w, w);
        Matrix ubar;
        if (use_jac) {
            const Matrix& u = tape.u[li];
            const Matrix v = scale_blocks(u, dh, r);
            gw.noalias() += tbar * v.transpose();
            const Matrix vbar = net.w_block(l).transpose() * tbar;
            ubar = scale_blocks(vbar, dh, r);
            const Matrix ddh = (dh.array() * (1.0 - 2.0 * h.array())).matrix();
            sbar.array() += ddh.array() * block_row_dots(vbar, u, r, batch).array();
            gz.noalias() += ubar * tape.t[li].transpose();
        }
        gz.noalias() += sbar * z.transpose();
        gmat(off.w[li], w, w) = gw;
        gmat(off.z[li], w, w) = gz;
        gvec(off.b[li], w) = sbar.rowwise().sum();
        zbar.noalias() += net.z_block(l).transpose() * sbar;
        if (use_jac) tbar.noalias() += net.z_block(l).transpose() * ubar;
    }

    // Input adapter.
    const Matrix& z0 = tape.z[0];
    const Matrix d0 = (1.0 - z0.array().square()).matrix();
    Matrix gz_in = Matrix::Zero(w, r);
    if (use_jac) {
        Matrix d0bar(w, batch);
        const Matrix zin = net.z_in();
        for (Index b = 0; b < batch; ++b) {
            const auto tb = tbar.middleCols(b * r, r);
            d0bar.col(b) = (tb.array() * zin.array()).rowwise().sum();
            gz_in.array() += tb.array().colwise() * d0.col(b).array();
        }
        zbar.array() -= 2.0 * z0.array() * d0bar.array();
    }
    const Matrix abar = (d0.array() * zbar.array()).matrix();
    gz_in.noalias() += abar * beta_m.transpose();
    gmat(off.z_in, w, r) = gz_in;
    gvec(off.b_in, w) = abar.rowwise().sum();
    return value;
}

}  // namespace oed
