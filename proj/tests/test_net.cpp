#include "oed/pde.hpp"
#include "oed/surrogate.hpp"
#include "oed/train.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace oed;

namespace {

// Scalar-loop evaluation of the network, written out from the architecture.
Vector loop_forward(const NeuralNet& net, const Vector& beta) {
    const NetShape& s = net.shape();
    std::vector<double> z(static_cast<std::size_t>(s.width));
    for (Index i = 0; i < s.width; ++i) {
        double a = net.b_in()(i);
        for (Index k = 0; k < s.r_in; ++k) a += net.z_in()(i, k) * beta(k);
        z[static_cast<std::size_t>(i)] = std::tanh(a);
    }
    for (Index l = 0; l < s.blocks; ++l) {
        std::vector<double> h(z.size());
        for (Index i = 0; i < s.width; ++i) {
            double a = net.b_block(l)(i);
            for (Index k = 0; k < s.width; ++k) a += net.z_block(l)(i, k) * z[static_cast<std::size_t>(k)];
            h[static_cast<std::size_t>(i)] = 1.0 / (1.0 + std::exp(-a));
        }
        std::vector<double> next = z;
        for (Index i = 0; i < s.width; ++i)
            for (Index k = 0; k < s.width; ++k) next[static_cast<std::size_t>(i)] += net.w_block(l)(i, k) * h[static_cast<std::size_t>(k)];
        z = next;
    }
    Vector out(s.r_out);
    for (Index o = 0; o < s.r_out; ++o) {
        double a = net.b_out()(o);
        for (Index k = 0; k < s.width; ++k) a += net.z_out()(o, k) * std::tanh(z[static_cast<std::size_t>(k)]);
        out(o) = a;
    }
    return out;
}

NeuralNet random_net(NetShape shape, std::uint64_t key, double scale = 0.5) {
    return NeuralNet(shape, scale * standard_normal(shape.parameter_count(), key));
}

Matrix fd_jacobian(const ReducedMap& map, const Vector& beta, double h = 1e-5) {
    Matrix j(map.output_dim(), map.input_dim());
    for (Index k = 0; k < beta.size(); ++k) {
        Vector bp = beta, bm = beta;
        bp(k) += h;
        bm(k) -= h;
        j.col(k) = (map.forward(bp) - map.forward(bm)) / (2.0 * h);
    }
    return j;
}

TrainingData synthetic_data(Index n, Index rm, Index rf, std::uint64_t key) {
    // Targets from a fixed smooth map so the data are learnable.
    const Matrix a = 0.5 * Matrix::Identity(rf, rm) + 0.1 * Matrix::Ones(rf, rm);
    TrainingData d;
    d.beta_m.resize(rm, n);
    d.beta_f.resize(rf, n);
    d.jac.resize(rf, n * rm);
    for (Index i = 0; i < n; ++i) {
        const Vector b = standard_normal(rm, key + static_cast<std::uint64_t>(i));
        const Vector ab = a * b;
        d.beta_m.col(i) = b;
        d.beta_f.col(i) = ab.array().sin().matrix();
        d.jac.middleCols(i * rm, rm) = ab.array().cos().matrix().asDiagonal() * a;
    }
    return d;
}

}  // namespace

TEST_CASE("network shape and layout") {
    const NetShape s{3, 2, 5, 2};
    CHECK(s.parameter_count() == 5 * 3 + 5 + 2 * (2 * 25 + 5) + 2 * 5 + 2);
    const NeuralNet net(s);
    CHECK(net.params().size() == s.parameter_count());
    CHECK_THROWS_AS(NeuralNet(s, Vector::Zero(3)), DomainError);
    CHECK_THROWS_AS(NeuralNet(NetShape{0, 2, 5, 1}), DomainError);
    const NeuralNet a = NeuralNet::xavier(s, 4), b = NeuralNet::xavier(s, 4);
    CHECK(a.params() == b.params());
    CHECK(a.b_in().norm() == 0.0);
    CHECK(a.z_in().norm() > 0.0);
}

TEST_CASE("zero network") {
    const NeuralNet net(NetShape{4, 3, 6, 2});
    const Vector beta = standard_normal(4, 1);
    CHECK(net.forward(beta).norm() == 0.0);
    const Matrix j = net.jacobian(beta);
    CHECK(j.rows() == 3);
    CHECK(j.cols() == 4);
    CHECK(j.norm() == 0.0);
}

TEST_CASE("zero residual weights leave only the adapters") {
    const NetShape s{3, 2, 5, 2};
    NeuralNet net = random_net(s, 7);
    for (Index l = 0; l < s.blocks; ++l)
        for (Index k = 0; k < s.width * s.width; ++k) net.params()(net.offsets().w[static_cast<std::size_t>(l)] + k) = 0.0;
    const Vector beta = standard_normal(3, 8);
    const Vector z0 = (net.z_in() * beta + net.b_in()).array().tanh().matrix();
    const Vector expect = net.z_out() * z0.array().tanh().matrix() + net.b_out();
    CHECK(test::rel_err(net.forward(beta), expect) < 1e-14);
}

TEST_CASE("forward pass against the loop oracle") {
    const NetShape s{4, 3, 7, 3};
    const NeuralNet net = random_net(s, 9);
    Matrix betas(4, 6);
    for (Index i = 0; i < 6; ++i) betas.col(i) = standard_normal(4, 20 + static_cast<std::uint64_t>(i));
    const Matrix batch = net.forward_batch(betas);
    for (Index i = 0; i < 6; ++i) {
        CHECK(test::rel_err(net.forward(betas.col(i)), loop_forward(net, betas.col(i))) < 1e-13);
        CHECK((batch.col(i) - net.forward(betas.col(i))).cwiseAbs().maxCoeff() <= 1e-14);
    }
    const Matrix jb = net.jacobian_batch(betas);
    for (Index i = 0; i < 6; ++i) CHECK((jb.middleCols(4 * i, 4) - net.jacobian(betas.col(i))).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("network Jacobian against finite differences") {
    for (std::uint64_t k = 0; k < 5; ++k) {
        const NeuralNet net = random_net(NetShape{5, 4, 8, 2}, 100 + k);
        const Vector beta = standard_normal(5, 200 + k);
        CHECK(test::rel_err(net.jacobian(beta), fd_jacobian(net, beta)) < 1e-6);
        Vector out;
        Matrix jac;
        net.evaluate(beta, out, jac);
        CHECK((out - net.forward(beta)).norm() == 0.0);
        CHECK((jac - net.jacobian(beta)).norm() == 0.0);
    }
}

TEST_CASE("DINO loss") {
    const NetShape s{3, 2, 5, 1};
    const NeuralNet net = random_net(s, 31);
    Matrix bm(3, 4);
    for (Index i = 0; i < 4; ++i) bm.col(i) = standard_normal(3, 40 + static_cast<std::uint64_t>(i));

    SUBCASE("exact data gives zero loss") {
        const Matrix bf = net.forward_batch(bm);
        const Matrix jac = net.jacobian_batch(bm);
        CHECK(dino_loss(net, bm, bf, &jac, 1.0, nullptr) == 0.0);
    }
    SUBCASE("plain regression matches a direct sum") {
        Matrix bf(2, 4);
        for (Index i = 0; i < 4; ++i) bf.col(i) = standard_normal(2, 50 + static_cast<std::uint64_t>(i));
        double ref = 0.0;
        for (Index i = 0; i < 4; ++i) ref += (loop_forward(net, bm.col(i)) - bf.col(i)).squaredNorm();
        ref /= 4.0;
        CHECK(std::abs(dino_loss(net, bm, bf, nullptr, 0.0, nullptr) - ref) / ref < 1e-12);
    }
    SUBCASE("Jacobian term matches a direct sum") {
        Matrix bf = Matrix::Zero(2, 4), jac(2, 12);
        for (Index i = 0; i < 12; ++i) jac.col(i) = standard_normal(2, 60 + static_cast<std::uint64_t>(i));
        double ref = 0.0;
        for (Index i = 0; i < 4; ++i)
            ref += loop_forward(net, bm.col(i)).squaredNorm() +
                   0.3 * (fd_jacobian(net, bm.col(i)) - jac.middleCols(3 * i, 3)).squaredNorm();
        ref /= 4.0;
        CHECK(std::abs(dino_loss(net, bm, bf, &jac, 0.3, nullptr) - ref) / ref < 1e-8);
    }
    SUBCASE("gradient against finite differences") {
        Matrix bf(2, 4), jac(2, 12);
        for (Index i = 0; i < 4; ++i) bf.col(i) = standard_normal(2, 70 + static_cast<std::uint64_t>(i));
        for (Index i = 0; i < 12; ++i) jac.col(i) = standard_normal(2, 80 + static_cast<std::uint64_t>(i));
        for (double lambda : {0.0, 1.0}) {
            Vector grad;
            dino_loss(net, bm, bf, &jac, lambda, &grad);
            for (int c = 0; c < 20; ++c) {
                const Index k = (c * 37 + 5) % s.parameter_count();
                NeuralNet p = net, m = net;
                const double h = 1e-6;
                p.params()(k) += h;
                m.params()(k) -= h;
                const double fd = (dino_loss(p, bm, bf, &jac, lambda, nullptr) - dino_loss(m, bm, bf, &jac, lambda, nullptr)) / (2 * h);
                CHECK(std::abs(fd - grad(k)) <= 1e-5 * std::max(1.0, std::abs(grad(k))));
            }
        }
    }
    CHECK_THROWS_AS(dino_loss(net, Matrix(3, 0), Matrix(2, 0), nullptr, 0.0, nullptr), DomainError);
    CHECK_THROWS_AS(dino_loss(net, bm, Matrix::Zero(2, 4), nullptr, 1.0, nullptr), DomainError);
}

TEST_CASE("training decreases the loss") {
    const TrainingData data = synthetic_data(40, 3, 2, 300);
    for (std::uint64_t seed : {1, 2, 3}) {
        TrainConfig cfg;
        cfg.epochs = 30;
        cfg.batch = 8;
        cfg.seed = seed;
        const TrainResult r = train_dino(data, NetShape{3, 2, 10, 2}, cfg);
        CHECK(r.n_holdout == 4);
        CHECK(r.n_train == 36);
        CHECK(r.epoch_loss.size() == 30);
        CHECK(r.final_loss <= r.initial_loss);
        CHECK(std::isfinite(r.final_loss));
    }
}

TEST_CASE("training is deterministic and rejects bad data") {
    const TrainingData data = synthetic_data(20, 2, 2, 400);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch = 4;
    const TrainResult a = train_dino(data, NetShape{2, 2, 6, 1}, cfg);
    const TrainResult b = train_dino(data, NetShape{2, 2, 6, 1}, cfg);
    CHECK(a.net.params() == b.net.params());

    TrainingData bad = data;
    bad.beta_f(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(train_dino(bad, NetShape{2, 2, 6, 1}, cfg), NumericalError);
    CHECK_THROWS_AS(train_dino(data, NetShape{3, 2, 6, 1}, cfg), DomainError);
}

TEST_CASE("reduced error metrics") {
    const TrainingData data = synthetic_data(10, 3, 2, 500);
    const Matrix a = 0.5 * Matrix::Identity(2, 3) + 0.1 * Matrix::Ones(2, 3);
    const LinearReducedMap lin(Vector::Zero(2), a);
    const ReducedErrors e = reduced_errors(lin, data);
    CHECK(e.output > 0.0);
    CHECK(e.jacobian > 0.0);
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
}

TEST_CASE("surrogate composition") {
    const PriorModel prior = PriorModel::build(6, 0.1, 0.5);
    auto mesh = std::make_shared<const Mesh2D>(6);
    auto model = ForwardModel::linear_diffusion(mesh, SensorGrid::full(*mesh, 9));
    std::vector<Matrix> js;
    Matrix bank(12, 9);
    for (std::uint64_t k = 0; k < 12; ++k) {
        const Vector m = prior.sample(600, k);
        js.push_back(jacobian_full(*model->linearize(m)));
        bank.row(static_cast<Index>(k)) = model->evaluate(m).transpose();
    }
    const ReducedBasis in = compute_dis(prior, js, 5);
    const ReducedBasis out = compute_pca(bank, 4);
    auto net = std::make_shared<const NeuralNet>(random_net(NetShape{5, 4, 8, 2}, 601, 0.3));
    const Surrogate sur(in, out, net);

    CHECK(test::rel_err(sur.evaluate(prior.mean()), decode_output(out, net->forward(Vector::Zero(5)))) < 1e-14);

    const Vector m = prior.sample(602, 0);
    const Matrix j = sur.jacobian_full(m);
    CHECK(j.rows() == 9);
    CHECK(j.cols() == prior.dim());
    for (std::uint64_t k = 0; k < 3; ++k) {
        const Vector v = standard_normal(prior.dim(), 610 + k);
        const double h = 1e-5;
        const Vector fd = (sur.evaluate(m + h * v) - sur.evaluate(m - h * v)) / (2 * h);
        CHECK(test::rel_err(fd, j * v) < 1e-5);
    }
    const auto lin = sur.linearize(m);
    const Vector w = standard_normal(9, 620);
    CHECK(test::rel_err(lin->apply_transpose(w), j.transpose() * w) < 1e-12);

    const Design d{{4, 1, 7}};
    const Vector full = sur.evaluate(m);
    const Vector direct = restrict_rows(out.columns, d) * net->forward(sur.encode(m)) + restrict(out.center, d);
    CHECK((restrict(full, d) - direct).cwiseAbs().maxCoeff() < 1e-14);

    CHECK_THROWS_AS(Surrogate(out, out, net), DomainError);
    CHECK_THROWS_AS(Surrogate(in, out, std::make_shared<const NeuralNet>(NeuralNet(NetShape{4, 4, 3, 1}))), DomainError);
}
