#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "m4l/graph.hpp"

namespace m4l {

// full       adaptive source weights + bag-instance dispatch term
// noWeights  unit weights, dispatch kept (the plain joint objective)
// noDispatch adaptive weights, dispatch dropped
// dfmf       unit weights and no dispatch (collective factorization baseline)
enum class SolverMode { Full, NoWeights, NoDispatch, Dfmf };

enum class InitScheme { RandomUniform, SvdAbs };

// How the sum-to-one constraint groups the source weights: one simplex per
// weight-matrix row (default) or a single simplex over all declared blocks.
enum class SimplexScope { PerRow, Global };

struct SolverConfig {
    int rank = 40;                     // shared latent size d; clamped to n_i per type
    std::map<int, int> ranksByType;    // optional per-type override
    double alpha = 1e6;                // ridge on inter-relation weights
    double beta = 1e7;                 // ridge on intra-view weights
    int maxIters = 100;
    double relTol = 1e-6;
    SolverMode mode = SolverMode::Full;
    std::uint64_t seed = 0;
    InitScheme init = InitScheme::RandomUniform;
    SimplexScope simplexScope = SimplexScope::PerRow;

    bool adaptiveWeights() const {
        return mode == SolverMode::Full || mode == SolverMode::NoDispatch;
    }
    bool dispatchEnabled() const {
        return mode == SolverMode::Full || mode == SolverMode::NoWeights;
    }
    int rankFor(int typeId, Eigen::Index cardinality) const;
};

SolverMode parseSolverMode(const std::string& name);
std::string toString(SolverMode mode);

// Learned state. G factors are indexed by typeId-1; S is keyed by the
// ordered type pair. When the dispatch term is active, S also holds the
// (instanceType, labelType) core even if that relation is undeclared.
struct FactorModel {
    std::vector<Dense> G;
    std::map<std::pair<int, int>, Dense> S;
    Dense Wr;  // m x m, zero on undeclared pairs
    Dense Wh;  // m x tau, zero on absent views
    std::vector<double> history;  // objective after each full sweep

    const Dense& g(int typeId) const { return G.at(static_cast<size_t>(typeId) - 1); }
    Dense& g(int typeId) { return G.at(static_cast<size_t>(typeId) - 1); }
};

// Value of the mode's objective: weighted (or unit-weight) masked residuals,
// weighted signed trace terms, the dispatch residual when enabled, and the
// weight ridge terms when weights adapt.
double objective(const FusionGraph& graph, const FactorModel& model, const SolverConfig& config);

// Seeded factor initialization; bit-identical for equal seeds.
FactorModel initialize(const FusionGraph& graph, const SolverConfig& config);

// One multiplicative update of G_typeId from the signed gradient split.
void updateG(const FusionGraph& graph, FactorModel& model, const SolverConfig& config, int typeId);

// Closed-form refresh of every latent core; the dispatch-coupled core is
// solved on the stacked system.
void updateS(const FusionGraph& graph, FactorModel& model, const SolverConfig& config);

// Exact per-row simplex-constrained ridge step for Wr and Wh.
void updateWeights(const FusionGraph& graph, FactorModel& model, const SolverConfig& config);

// min over w of sum_j w_j costs_j + ridge * sum_j w_j^2, w >= 0, sum w = 1.
// Signed costs allowed. Exact water-filling solution.
std::vector<double> simplexRidgeWeights(const std::vector<double>& costs, double ridge);

// Alternating optimization until the relative decrease drops below relTol or
// maxIters sweeps; aborts if a sweep increases the objective beyond slack.
FactorModel fit(const FusionGraph& graph, const SolverConfig& config);

// Per-sweep slack used by fit's monotonicity guard.
inline double monotonicitySlack(double prev, double cur) {
    return 1e-8 * std::max({std::abs(prev), std::abs(cur), 1e-12});
}

}  // namespace m4l
