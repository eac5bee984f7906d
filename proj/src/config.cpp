#include "oed/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace oed {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size())
        throw DomainError("config key '" + key + "': cannot parse '" + v + "' as a number");
    return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

template <class T, class M>
Setter num(M RunConfig::*field) {
    return [field](RunConfig& c, const std::string& k, const std::string& v) {
        c.*field = static_cast<M>(parse_number<T>(k, v));
    };
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"problem.kind", [](RunConfig& c, const std::string&, const std::string& v) { c.problem = parse_problem_kind(v); }},
        {"problem.nu", num<double>(&RunConfig::nu)},
        {"mesh.n", num<int>(&RunConfig::mesh_n)},
        {"prior.gamma", num<double>(&RunConfig::gamma)},
        {"prior.kappa", num<double>(&RunConfig::kappa)},
        {"prior.alpha",
         [](RunConfig&, const std::string& k, const std::string& v) {
             if (parse_number<int>(k, v) != 2) throw DomainError("config key 'prior.alpha': only alpha = 2 is supported");
         }},
        {"sensors.layout", [](RunConfig& c, const std::string&, const std::string& v) { c.sensor_layout = v; }},
        {"sensors.count", num<long>(&RunConfig::sensor_count)},
        {"noise.sigma", num<double>(&RunConfig::noise_sigma)},
        {"noise.cov_file", [](RunConfig& c, const std::string&, const std::string& v) { c.noise_cov_file = v; }},
        {"reduce.input_kind",
         [](RunConfig& c, const std::string&, const std::string& v) { c.input_kind = parse_basis_kind(v); }},
        {"reduce.r_m", num<long>(&RunConfig::r_m)},
        {"reduce.output_kind",
         [](RunConfig& c, const std::string&, const std::string& v) { c.output_kind = parse_basis_kind(v); }},
        {"reduce.r_f", num<long>(&RunConfig::r_f)},
        {"reduce.n_saa_basis", num<long>(&RunConfig::n_saa_basis)},
        {"train.n_train", num<long>(&RunConfig::n_train)},
        {"train.epochs", num<int>(&RunConfig::epochs)},
        {"train.lr", num<double>(&RunConfig::lr)},
        {"train.lambda_jac", num<double>(&RunConfig::lambda_jac)},
        {"train.batch", num<long>(&RunConfig::batch)},
        {"train.seeds", num<int>(&RunConfig::seeds)},
        {"train.width", num<long>(&RunConfig::width)},
        {"train.blocks", num<long>(&RunConfig::blocks)},
        {"oed.criterion",
         [](RunConfig& c, const std::string&, const std::string& v) { c.criterion = parse_criterion_kind(v); }},
        {"oed.backend", [](RunConfig& c, const std::string&, const std::string& v) { c.backend = parse_backend(v); }},
        {"oed.a_opt", [](RunConfig& c, const std::string&, const std::string& v) { c.a_opt = parse_a_opt_mode(v); }},
        {"oed.n_saa", num<long>(&RunConfig::n_saa)},
        {"oed.r_s", num<long>(&RunConfig::r_s)},
        {"oed.k_max", num<int>(&RunConfig::k_max)},
        {"oed.eps_min", num<double>(&RunConfig::eps_min)},
        {"oed.design",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.design.clear();
             std::stringstream ss(v);
             std::string item;
             while (std::getline(ss, item, ',')) {
                 item = trim(item);
                 if (!item.empty()) c.design.push_back(parse_number<long>(k, item));
             }
         }},
        {"seed", num<std::uint64_t>(&RunConfig::seed)},
    };
    return table;
}

}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& [name, s] : setters()) k.push_back(name);
        return k;
    }();
    return keys;
}

void RunConfig::validate() const {
    require(mesh_n >= 2, "config: mesh.n must be >= 2");
    require(gamma > 0.0 && kappa > 0.0, "config: prior.gamma and prior.kappa must be positive");
    require(nu > 0.0, "config: problem.nu must be positive");
    require(sensor_layout == "lower" || sensor_layout == "full", "config: sensors.layout must be lower or full");
    require(sensor_count >= 1, "config: sensors.count must be positive");
    require(noise_sigma > 0.0, "config: noise.sigma must be positive");
    if (!noise_cov_file.empty())
        require(std::filesystem::exists(noise_cov_file), "config: noise.cov_file '" + noise_cov_file + "' not found");
    require(input_kind == BasisKind::DIS || input_kind == BasisKind::KLE, "config: reduce.input_kind must be dis or kle");
    require(output_kind == BasisKind::PCA || output_kind == BasisKind::DOS,
            "config: reduce.output_kind must be pca or dos");
    require(r_m >= 1 && r_f >= 1 && n_saa_basis >= 1, "config: reduced dimensions must be positive");
    require(n_train >= 2 && epochs >= 0 && lr > 0.0 && lambda_jac >= 0.0 && batch >= 1 && seeds >= 1,
            "config: invalid training settings");
    require(width >= 1 && blocks >= 0, "config: invalid network shape");
    require(n_saa >= 1, "config: oed.n_saa must be positive");
    require(r_s >= 1 && r_s <= sensor_count, "config: need 0 < oed.r_s <= sensors.count");
    require(k_max >= 0 && eps_min >= 0.0, "config: invalid greedy settings");
    if (!design.empty()) Design{design}.validate(sensor_count);
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
    RunConfig c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw DomainError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        const auto it = setters().find(key);
        if (it == setters().end()) throw DomainError(origin + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        it->second(c, key, value);
    }
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open config file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

}  // namespace oed
