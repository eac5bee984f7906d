#include "oed/pipeline.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

#include <unistd.h>

using namespace oed;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("oed_pipe_" + tag + "_" + std::to_string(::getpid()))) {
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

const char* kTiny = R"(
mesh.n = 8
sensors.layout = full
sensors.count = 12
reduce.r_m = 4
reduce.r_f = 3
reduce.n_saa_basis = 4
train.n_train = 4
train.epochs = 3
train.batch = 2
train.width = 8
train.blocks = 1
oed.n_saa = 2
oed.r_s = 2
seed = 7
)";

CommandOptions options(const fs::path& out, int workers = 0) {
    CommandOptions o;
    o.out = out;
    o.workers = workers;
    return o;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("solve counts") {
    const Setup s = make_setup(parse_config(kTiny));
    const DataBank bank = generate_bank(*s.model, s.prior, 4, 7);
    CHECK(bank.size() == 4);
    CHECK(bank.state_solves == 4);
    CHECK(bank.keys.size() == 4);
    const auto [in, out] = build_bases(s, bank);
    CHECK(in.rank() == 4);
    CHECK(out.rank() == 3);
    const JacobianBank jb = reduced_jacobian_bank(*s.model, bank.parameters, in, out);
    CHECK(jb.state_solves == 4);
    CHECK(jb.linearized_solves == 4 * 3);
    CHECK(jb.reduced.rows() == 3);
    CHECK(jb.reduced.cols() == 16);
    const JacobianBank wide = reduced_jacobian_bank(*s.model, bank.parameters, in.truncated(2), out);
    CHECK(wide.linearized_solves == 4 * 2);

    // Reduced Jacobians agree with the projected full Jacobians.
    const std::vector<Matrix> full = jacobian_samples(*s.model, bank.parameters, 1);
    CHECK((out.columns.transpose() * full[0] * in.columns - jb.reduced.leftCols(4)).norm() <
          1e-10 * jb.reduced.leftCols(4).norm());

    const TrainingData td = encode_training(bank, &jb, in, out);
    CHECK(td.size() == 4);
    CHECK(td.r_m() == 4);
    CHECK(td.r_f() == 3);
    CHECK(td.jac == jb.reduced);
}

TEST_CASE("end to end on a tiny problem") {
    TempDir dir("tiny");
    const RunConfig c = parse_config(kTiny);
    const CommandOptions o = options(dir.path);
    CHECK_THROWS_AS(cmd_train(c, o), DomainError);
    cmd_gen_data(c, o);
    cmd_reduce(c, o);
    cmd_gen_data(c, o);
    CHECK(Container::exists(dir.path / "jacobians"));
    cmd_train(c, o);
    for (const char* name : {"data", "bases", "model", "jacobians"}) CHECK(Container::exists(dir.path / name));

    const Setup s = make_setup(c);
    const auto [in, out] = load_bases(Container::load(dir.path / "bases"), s.prior);
    const DataBank bank = generate_bank(*s.model, s.prior, 4, 7);
    const auto [in2, out2] = build_bases(s, bank);
    CHECK(in.columns == in2.columns);
    CHECK(out.columns == out2.columns);

    const auto sur = load_surrogate(dir.path, s.prior);
    const Vector f = sur->evaluate(s.prior.sample(3, 0));
    CHECK(f.size() == 12);
    CHECK(f.allFinite());

    // Rerunning a stage with the same config is a no-op; a changed config is refused.
    CHECK_NOTHROW(cmd_reduce(c, o));
    RunConfig changed = c;
    changed.r_m = 3;
    CHECK_THROWS_AS(cmd_reduce(changed, o), ContainerError);

    CommandOptions hifi = o;
    hifi.backend = Backend::HiFi;
    cmd_map(c, o);
    cmd_criteria(c, hifi);
    cmd_criteria(c, o);
    cmd_design(c, hifi);
    const Container d = Container::load(dir.path / "design-hifi");
    CHECK(d.u32("design").size() == 2);
    CHECK(slurp(dir.path / "design_trace_hifi.csv").rfind("step,phase,candidate,criterion,accepted\n", 0) == 0);
    CHECK(Container::load(dir.path / "map").has("error.map_l2"));

    std::ostringstream err;
    CHECK(run_command("train", fs::path(OED_SOURCE_DIR) / "configs" / "nope.cfg", o, err) == kExitValidation);
    CHECK(err.str().find("nope.cfg") != std::string::npos);
}

TEST_CASE("runs are deterministic across worker counts") {
    TempDir a("det_a"), b("det_b");
    const RunConfig c = parse_config(kTiny);
    for (auto [dir, workers] : {std::pair{&a, 1}, std::pair{&b, 2}}) {
        const CommandOptions o = options(dir->path, workers);
        cmd_gen_data(c, o);
        cmd_reduce(c, o);
        cmd_gen_data(c, o);
        cmd_train(c, o);
    }
    for (const char* name : {"data", "bases", "jacobians", "model"})
        CHECK(Container::load(a.path / name).checksum() == Container::load(b.path / name).checksum());
    CHECK(slurp(a.path / "train_loss.csv") == slurp(b.path / "train_loss.csv"));
}

TEST_CASE("surrogate and hifi designs agree") {
    TempDir dir("cross");
    const RunConfig c = parse_config(R"(
mesh.n = 8
sensors.layout = full
sensors.count = 12
noise.sigma = 0.05
reduce.r_m = 12
reduce.r_f = 12
reduce.n_saa_basis = 32
train.n_train = 128
train.epochs = 150
train.batch = 16
train.width = 32
train.blocks = 2
train.lr = 0.003
oed.n_saa = 10
oed.r_s = 3
seed = 11
)");
    CommandOptions o = options(dir.path);
    cmd_gen_data(c, o);
    cmd_reduce(c, o);
    cmd_gen_data(c, o);
    cmd_train(c, o);
    cmd_design(c, o);
    o.backend = Backend::HiFi;
    cmd_design(c, o);

    const Setup s = make_setup(c);
    const SaaBank bank = build_saa_bank(*s.model, s.prior, s.noise, 10, 99);
    const SampleEvaluator hifi = hifi_evaluator(*s.model, s.prior, s.noise, bank);
    auto hifi_value = [&](const char* which) {
        const auto sel = Container::load(dir.path / which).u32("design");
        Design d;
        for (auto i : sel) d.selected.push_back(static_cast<Index>(i));
        return expected_criterion(hifi, 10, d, CriterionKind::DOpt).value;
    };
    const double v_sur = hifi_value("design-surrogate");
    const double v_hifi = hifi_value("design-hifi");
    MESSAGE("hifi D-optimality: surrogate design " << v_sur << ", hifi design " << v_hifi);
    CHECK(v_sur >= 0.95 * v_hifi);
}
