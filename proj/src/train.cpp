#include "oed/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace oed {

void TrainingData::validate() const {
    require(beta_f.cols() == beta_m.cols(), "training data: sample counts disagree");
    if (has_jacobians())
        require(jac.rows() == beta_f.rows() && jac.cols() == beta_m.cols() * beta_m.rows(),
                "training data: Jacobian block has wrong shape");
}

TrainingData TrainingData::slice(Index first, Index count) const {
    require(first >= 0 && count >= 0 && first + count <= size(), "training data: slice out of range");
    TrainingData out;
    out.beta_m = beta_m.middleCols(first, count);
    out.beta_f = beta_f.middleCols(first, count);
    if (has_jacobians()) out.jac = jac.middleCols(first * r_m(), count * r_m());
    return out;
}

TrainingData TrainingData::gather(const std::vector<Index>& columns) const {
    const Index n = static_cast<Index>(columns.size());
    const Index r = r_m();
    TrainingData out;
    out.beta_m.resize(r, n);
    out.beta_f.resize(r_f(), n);
    if (has_jacobians()) out.jac.resize(r_f(), n * r);
    for (Index k = 0; k < n; ++k) {
        const Index c = columns[static_cast<std::size_t>(k)];
        out.beta_m.col(k) = beta_m.col(c);
        out.beta_f.col(k) = beta_f.col(c);
        if (has_jacobians()) out.jac.middleCols(k * r, r) = jac.middleCols(c * r, r);
    }
    return out;
}

namespace {

double full_loss(const NeuralNet& net, const TrainingData& d, double lambda) {
    if (d.size() == 0) return 0.0;
    return dino_loss(net, d.beta_m, d.beta_f, d.has_jacobians() ? &d.jac : nullptr, lambda, nullptr);
}

}  // namespace

TrainResult train_dino(const TrainingData& data, NetShape shape, const TrainConfig& config) {
    data.validate();
    require(data.size() >= 1, "train: empty training set");
    require(config.epochs >= 0 && config.batch >= 1 && config.lr > 0.0, "train: invalid configuration");
    require(config.lambda_jac == 0.0 || data.has_jacobians(), "train: Jacobian data required for lambda_jac > 0");
    require(shape.r_in == data.r_m() && shape.r_out == data.r_f(), "train: network shape does not match the data");

    TrainResult result;
    result.n_holdout = static_cast<Index>(std::ceil(config.holdout_fraction * static_cast<double>(data.size())));
    result.n_holdout = std::clamp<Index>(result.n_holdout, 0, data.size() - 1);
    result.n_train = data.size() - result.n_holdout;
    const TrainingData train = data.slice(0, result.n_train);
    const TrainingData holdout = data.slice(result.n_train, result.n_holdout);

    result.net = NeuralNet::xavier(shape, config.seed);
    NeuralNet& net = result.net;
    const double lambda = config.lambda_jac;
    result.initial_loss = full_loss(net, train, lambda);

    const Index np = shape.parameter_count();
    Vector m1 = Vector::Zero(np), m2 = Vector::Zero(np), grad;
    std::vector<Index> order(static_cast<std::size_t>(result.n_train));
    std::iota(order.begin(), order.end(), Index{0});
    long step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::mt19937_64 engine(stream_key(config.seed, Stream::shuffle, static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), engine);
        double total = 0.0;
        Index batches = 0;
        for (Index start = 0; start < result.n_train; start += config.batch) {
            const Index count = std::min(config.batch, result.n_train - start);
            const std::vector<Index> cols(order.begin() + start, order.begin() + start + count);
            const TrainingData b = train.gather(cols);
            const double value =
                dino_loss(net, b.beta_m, b.beta_f, b.has_jacobians() ? &b.jac : nullptr, lambda, &grad);
            if (!std::isfinite(value) || !grad.allFinite())
                throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch starting " +
                                     std::to_string(start) + " (lr " + std::to_string(config.lr) + ")");
            ++step;
            m1 = config.beta1 * m1 + (1.0 - config.beta1) * grad;
            m2 = config.beta2 * m2 + (1.0 - config.beta2) * grad.cwiseAbs2();
            const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            net.params().array() -=
                config.lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + config.adam_eps);
            total += value;
            ++batches;
        }
        result.epoch_loss.push_back(total / static_cast<double>(std::max<Index>(batches, 1)));
        if (result.n_holdout > 0) result.holdout_loss.push_back(full_loss(net, holdout, lambda));
    }
    result.final_loss = full_loss(net, train, lambda);
    return result;
}

ReducedErrors reduced_errors(const ReducedMap& map, const TrainingData& data) {
    data.validate();
    require(data.size() >= 1, "reduced_errors: empty data");
    require(data.has_jacobians(), "reduced_errors: Jacobian data required");
    const Index r = data.r_m();
    ReducedErrors e;
    const auto* net = dynamic_cast<const NeuralNet*>(&map);
    Matrix outs, jacs;
    if (net != nullptr) {
        outs = net->forward_batch(data.beta_m);
        jacs = net->jacobian_batch(data.beta_m);
    }
    for (Index n = 0; n < data.size(); ++n) {
        const Vector out = net ? Vector(outs.col(n)) : map.forward(data.beta_m.col(n));
        const Matrix jac = net ? Matrix(jacs.middleCols(n * r, r)) : map.jacobian(data.beta_m.col(n));
        const auto jr = data.jac.middleCols(n * r, r);
        e.output += (data.beta_f.col(n) - out).norm() / std::max(data.beta_f.col(n).norm(), 1e-300);
        e.jacobian += (jr - jac).norm() / std::max(jr.norm(), 1e-300);
    }
    e.output /= static_cast<double>(data.size());
    e.jacobian /= static_cast<double>(data.size());
    return e;
}

double median(std::vector<double> values) {
    require(!values.empty(), "median: empty sample");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace oed
