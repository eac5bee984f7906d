#include "oed/greedy.hpp"

#include <algorithm>
#include <exception>
#include <iomanip>
#include <ostream>

#include <omp.h>

namespace oed {

namespace {

// Evaluates objective(make(c)) for every candidate c in parallel.
template <class Make>
std::vector<double> evaluate_all(const std::vector<Index>& cands, const Make& make, const DesignObjective& objective,
                                 int workers) {
    std::vector<double> values(cands.size());
    std::exception_ptr error;
    const auto n = static_cast<long>(cands.size());
#pragma omp parallel for schedule(dynamic) num_threads(workers > 0 ? workers : omp_get_max_threads())
    for (long i = 0; i < n; ++i) {
        try {
            values[static_cast<std::size_t>(i)] = objective(make(cands[static_cast<std::size_t>(i)]));
        } catch (...) {
#pragma omp critical(oed_greedy)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    return values;
}

std::vector<Index> unselected(Index candidates, const Design& d) {
    std::vector<Index> out;
    for (Index c = 0; c < candidates; ++c)
        if (std::find(d.selected.begin(), d.selected.end(), c) == d.selected.end()) out.push_back(c);
    return out;
}

}  // namespace

GreedyResult swapping_greedy(Index candidates, const DesignObjective& objective, const GreedyOptions& opts) {
    require(candidates >= 0 && opts.r_s >= 0 && opts.r_s <= candidates, "swapping_greedy: need 0 <= r_s <= d_s");
    require(opts.k_max >= 0, "swapping_greedy: k_max must be nonnegative");
    GreedyResult res;
    int step = 0;
    res.value = objective(res.design);
    ++res.evaluations;

    // Greedy initialization.
    for (Index t = 0; t < opts.r_s; ++t) {
        ++step;
        const auto cands = unselected(candidates, res.design);
        const auto values = evaluate_all(
            cands,
            [&](Index c) {
                Design d = res.design;
                d.selected.push_back(c);
                return d;
            },
            objective, opts.workers);
        res.evaluations += static_cast<Index>(cands.size());
        std::size_t best = 0;
        for (std::size_t i = 1; i < cands.size(); ++i)
            if (values[i] > values[best]) best = i;  // candidates ascend, so ties keep the lower index
        for (std::size_t i = 0; i < cands.size(); ++i)
            res.trace.push_back({step, "greedy", cands[i], values[i], i == best});
        res.design.selected.push_back(cands[best]);
        res.value = values[best];
        res.accepted_values.push_back(res.value);
    }

    // Swap sweeps.
    for (int k = 0; k < opts.k_max && opts.r_s > 0 && opts.r_s < candidates; ++k) {
        const double before = res.value;
        for (Index t = 0; t < opts.r_s; ++t) {
            ++step;
            const auto pos = static_cast<std::size_t>(t);
            const Index incumbent = res.design.selected[pos];
            auto cands = unselected(candidates, res.design);
            const auto values = evaluate_all(
                cands,
                [&](Index c) {
                    Design d = res.design;
                    d.selected[pos] = c;
                    return d;
                },
                objective, opts.workers);
            res.evaluations += static_cast<Index>(cands.size());
            // The incumbent competes with its current value.
            Index best_c = incumbent;
            double best_v = res.value;
            for (std::size_t i = 0; i < cands.size(); ++i)
                if (values[i] > best_v || (values[i] == best_v && cands[i] < best_c)) {
                    best_c = cands[i];
                    best_v = values[i];
                }
            res.trace.push_back({step, "swap", incumbent, res.value, best_c == incumbent});
            for (std::size_t i = 0; i < cands.size(); ++i)
                res.trace.push_back({step, "swap", cands[i], values[i], cands[i] == best_c});
            res.design.selected[pos] = best_c;
            res.value = best_v;
            res.accepted_values.push_back(res.value);
        }
        ++res.sweeps;
        if (res.value - before <= opts.eps_min) break;
    }
    return res;
}

ExhaustiveResult exhaustive_search(Index candidates, Index r_s, const DesignObjective& objective) {
    require(r_s >= 0 && r_s <= candidates && candidates <= 24, "exhaustive_search: need 0 <= r_s <= d_s <= 24");
    ExhaustiveResult best;
    bool have = false;
    std::vector<Index> idx(static_cast<std::size_t>(r_s));
    for (Index i = 0; i < r_s; ++i) idx[static_cast<std::size_t>(i)] = i;
    while (true) {
        Design d{idx};
        const double v = objective(d);
        ++best.evaluations;
        if (!have || v > best.value) {
            best.design = d;
            best.value = v;
            have = true;
        }
        // Next combination in lexicographic order.
        Index i = r_s - 1;
        while (i >= 0 && idx[static_cast<std::size_t>(i)] == candidates - r_s + i) --i;
        if (i < 0) break;
        ++idx[static_cast<std::size_t>(i)];
        for (Index j = i + 1; j < r_s; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
    return best;
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace) {
    os << "step,phase,candidate,criterion,accepted\n";
    os << std::setprecision(17);
    for (const auto& r : trace)
        os << r.step << ',' << r.phase << ',' << r.candidate << ',' << r.criterion << ','
           << (r.accepted ? "true" : "false") << '\n';
}

}  // namespace oed
