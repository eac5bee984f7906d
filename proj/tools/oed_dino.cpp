#include "oed/pipeline.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"DINO-accelerated Bayesian optimal experimental design"};
    app.require_subcommand(1, 1);

    std::string config;
    std::string out = "oed_out";
    int workers = 0;
    std::string backend, a_opt, warmstart;

    const char* commands[] = {"gen-data", "reduce", "train", "map", "criteria", "design", "verify"};
    for (const char* name : commands) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config, "configuration file")->required();
        sub->add_option("--workers", workers, "OpenMP worker threads (0 = runtime default)")->check(CLI::NonNegativeNumber);
        sub->add_option("--out", out, "output directory");
        sub->add_option("--backend", backend, "hifi or surrogate (overrides oed.backend)")
            ->check(CLI::IsMember({"hifi", "surrogate"}));
        sub->add_option("--a-opt", a_opt, "simplified or weighted (overrides oed.a_opt)")
            ->check(CLI::IsMember({"simplified", "weighted"}));
        sub->add_option("--warmstart", warmstart, "Adam warm start for the reduced MAP, adam:ITERS:LR");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? oed::kExitOk : oed::kExitValidation;
    }

    oed::CommandOptions opts;
    opts.out = out;
    opts.workers = workers;
    opts.log = &std::cout;
    try {
        if (!backend.empty()) opts.backend = oed::parse_backend(backend);
        if (!a_opt.empty()) opts.a_opt = oed::parse_a_opt_mode(a_opt);
        if (!warmstart.empty()) opts.warmstart = oed::parse_warmstart(warmstart);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return oed::kExitValidation;
    }
    if (workers > 0) omp_set_num_threads(workers);

    const std::string command = app.get_subcommands().front()->get_name();
    return oed::run_command(command, config, opts, std::cerr);
}
