#include "oed/config.hpp"
#include "oed/pipeline.hpp"

#include <doctest.h>

#include <cstdlib>

using namespace oed;

TEST_CASE("defaults and parsing") {
    const RunConfig d = parse_config("");
    CHECK(d.mesh_n == 16);
    CHECK(d.sensor_count == 50);
    CHECK(d.input_kind == BasisKind::DIS);

    const RunConfig c = parse_config(R"(
# comment
problem.kind = reaction
problem.nu = 0.02
mesh.n = 12
   sensors.layout = full
sensors.count = 20
reduce.input_kind = kle
reduce.output_kind = dos
oed.criterion = a
oed.backend = hifi
oed.design = 4, 1,7
prior.alpha = 2
seed = 42
)");
    CHECK(c.problem == ProblemKind::SemilinearReaction);
    CHECK(c.nu == 0.02);
    CHECK(c.mesh_n == 12);
    CHECK(c.sensor_layout == "full");
    CHECK(c.input_kind == BasisKind::KLE);
    CHECK(c.output_kind == BasisKind::DOS);
    CHECK(c.criterion == CriterionKind::AOpt);
    CHECK(c.backend == Backend::HiFi);
    CHECK(c.design == std::vector<Index>{4, 1, 7});
    CHECK(c.seed == 42);
    CHECK(std::find(config_keys().begin(), config_keys().end(), "train.lambda_jac") != config_keys().end());
}

TEST_CASE("rejected configs") {
    CHECK_THROWS_WITH_AS(parse_config("bogus.key = 1", "x.cfg"), doctest::Contains("bogus.key"), DomainError);
    CHECK_THROWS_WITH_AS(parse_config("\nmesh.n\n", "x.cfg"), doctest::Contains("x.cfg:2"), DomainError);
    CHECK_THROWS_AS(parse_config("mesh.n = 1"), DomainError);
    CHECK_THROWS_AS(parse_config("mesh.n = 8x"), DomainError);
    CHECK_THROWS_AS(parse_config("prior.gamma = -1"), DomainError);
    CHECK_THROWS_AS(parse_config("prior.alpha = 3"), DomainError);
    CHECK_THROWS_AS(parse_config("sensors.count = 10\noed.r_s = 11"), DomainError);
    CHECK_THROWS_AS(parse_config("sensors.layout = top"), DomainError);
    CHECK_THROWS_AS(parse_config("reduce.input_kind = pca"), DomainError);
    CHECK_THROWS_AS(parse_config("sensors.count = 10\noed.design = 2,2"), DomainError);
    CHECK_THROWS_AS(parse_config("sensors.count = 10\noed.design = 10"), DomainError);
    CHECK_THROWS_AS(parse_config("noise.cov_file = /no/such/file"), DomainError);
    CHECK_THROWS_AS(parse_config("oed.criterion = q"), DomainError);
    CHECK_THROWS_AS(load_config("/no/such/config.cfg"), DomainError);
}

TEST_CASE("seed override from the environment") {
    RunConfig c = parse_config("seed = 5");
    ::unsetenv("OED_DINO_SEED");
    apply_env_overrides(c);
    CHECK(c.seed == 5);
    ::setenv("OED_DINO_SEED", "123", 1);
    apply_env_overrides(c);
    CHECK(c.seed == 123);
    ::setenv("OED_DINO_SEED", "12a", 1);
    CHECK_THROWS_AS(apply_env_overrides(c), DomainError);
    ::setenv("OED_DINO_SEED", "-4", 1);
    CHECK_THROWS_AS(apply_env_overrides(c), DomainError);
    ::unsetenv("OED_DINO_SEED");
}

TEST_CASE("shipped configs are valid") {
    for (const char* name : {"diffusion.cfg", "reaction.cfg", "smoke.cfg"})
        CHECK_NOTHROW(load_config(std::string(OED_SOURCE_DIR) + "/configs/" + name));
}
