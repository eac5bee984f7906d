#pragma once

#include "oed/forward.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace oed {

/// Criterion value of a design; larger is better. Must be deterministic.
using DesignObjective = std::function<double(const Design&)>;

struct GreedyOptions {
    Index r_s = 1;
    int k_max = 3;          // maximum number of swap sweeps
    double eps_min = 0.01;  // stop when a sweep improves the criterion by no more than this
    int workers = 0;        // parallel candidate evaluations (0 = OpenMP default)
};

/// One evaluated candidate. `step` numbers the decisions: 1..r_s for the greedy
/// additions, then one per (sweep, position) during swapping.
struct TraceRow {
    int step = 0;
    std::string phase;  // "greedy" or "swap"
    Index candidate = 0;
    double criterion = 0.0;
    bool accepted = false;
};

struct GreedyResult {
    Design design;
    double value = 0.0;
    std::vector<TraceRow> trace;
    std::vector<double> accepted_values;  // criterion after each decision, in order
    int sweeps = 0;
    Index evaluations = 0;
};

/// Greedy initialization followed by swap sweeps. Each swap compares every
/// unselected candidate together with the incumbent at that position, so a
/// decision never lowers the criterion. Ties go to the lowest sensor index.
GreedyResult swapping_greedy(Index candidates, const DesignObjective& objective, const GreedyOptions& opts);

/// Best design of size r_s by enumerating all subsets (small d_s only).
struct ExhaustiveResult {
    Design design;
    double value = 0.0;
    Index evaluations = 0;
};
ExhaustiveResult exhaustive_search(Index candidates, Index r_s, const DesignObjective& objective);

/// CSV: step,phase,candidate,criterion,accepted
void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace);

}  // namespace oed
