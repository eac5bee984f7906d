#pragma once

#include "oed/criteria.hpp"
#include "oed/pde.hpp"
#include "oed/reduce.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace oed {

/// Run configuration, read from flat "section.key = value" text. Lines starting
/// with '#' are comments. Unknown keys and out-of-range values throw DomainError.
struct RunConfig {
    ProblemKind problem = ProblemKind::LinearDiffusion;
    double nu = 0.01;
    int mesh_n = 16;

    double gamma = 0.1;
    double kappa = 0.5;

    std::string sensor_layout = "lower";  // lower | full
    Index sensor_count = 50;

    double noise_sigma = 0.01;
    std::string noise_cov_file;  // whitespace-separated d_s x d_s matrix; overrides sigma

    BasisKind input_kind = BasisKind::DIS;
    Index r_m = 16;
    BasisKind output_kind = BasisKind::PCA;
    Index r_f = 16;
    Index n_saa_basis = 64;

    Index n_train = 256;
    int epochs = 200;
    double lr = 1e-3;
    double lambda_jac = 1.0;
    Index batch = 32;
    int seeds = 1;
    Index width = 100;
    Index blocks = 3;

    CriterionKind criterion = CriterionKind::DOpt;
    Backend backend = Backend::Surrogate;
    AOptMode a_opt = AOptMode::Simplified;
    Index n_saa = 128;
    Index r_s = 5;
    int k_max = 3;
    double eps_min = 0.01;
    std::vector<Index> design;  // explicit design for map/criteria; empty = first r_s sensors

    std::uint64_t seed = 0;

    void validate() const;
};

/// Parses config text; `origin` names the source in error messages.
RunConfig parse_config(const std::string& text, const std::string& origin = "config");
RunConfig load_config(const std::filesystem::path& path);

/// All recognized keys, for documentation and error messages.
const std::vector<std::string>& config_keys();

}  // namespace oed
