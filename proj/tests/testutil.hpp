#pragma once

// Shared builders for unit and acceptance tests: small deterministic fusion
// graphs, planted models, and an exhaustive simplex-QP oracle.

#include <algorithm>
#include <cmath>
#include <vector>

#include "m4l/graph.hpp"
#include "m4l/rng.hpp"
#include "m4l/solver.hpp"

namespace m4ltest {

using m4l::Dense;
using m4l::FusionGraph;
using m4l::InterRelation;
using m4l::IntraView;
using m4l::Matrix;
using m4l::Rng;

inline Dense uniformMatrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
    Dense m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform01() * scale;
    return m;
}

inline Dense bernoulliMatrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double p) {
    Dense m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform01() < p ? 1.0 : 0.0;
    return m;
}

// Signed similarity view in Laplacian form: negative off-diagonals mark
// similar pairs, the diagonal carries their total weight. Positive
// semi-definite, so its trace penalty is bounded below.
inline Dense laplacianView(Rng& rng, Eigen::Index n, double density = 0.4) {
    Dense w = Dense::Zero(n, n);
    for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = a + 1; b < n; ++b)
            if (rng.uniform01() < density) {
                w(a, b) = rng.uniform01();
                w(b, a) = w(a, b);
            }
    Dense lap = Dense(w.rowwise().sum().asDiagonal()) - w;
    // occasionally add explicit cannot-link structure (entrywise nonnegative)
    if (rng.uniform01() < 0.3) {
        for (int extra = 0; extra < 3; ++extra) {
            const Eigen::Index a = static_cast<Eigen::Index>(rng.index(n));
            const Eigen::Index b = static_cast<Eigen::Index>(rng.index(n));
            if (a != b) {
                const double v = rng.uniform01();
                lap(a, b) += v;
                lap(b, a) += v;
                lap(a, a) += v;
                lap(b, b) += v;
            }
        }
    }
    return lap;
}

// Round-robin membership partition over a shuffled instance order.
inline Dense membershipPartition(Rng& rng, Eigen::Index bags, Eigen::Index instances) {
    Dense m = Dense::Zero(bags, instances);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(instances));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
    rng.shuffle(order);
    for (std::size_t i = 0; i < order.size(); ++i)
        m(static_cast<Eigen::Index>(i % static_cast<std::size_t>(bags)), order[i]) = 1.0;
    return m;
}

// Minimal well-formed bags/instances/labels graph with fixed sizes.
inline FusionGraph toyGraph(std::uint64_t seed = 0, Eigen::Index bags = 4,
                            Eigen::Index instances = 8, Eigen::Index labels = 3) {
    Rng rng(seed);
    FusionGraph g;
    g.types = {{1, "bags", bags}, {2, "instances", instances}, {3, "labels", labels}};
    g.bagType = 1;
    g.instanceType = 2;
    g.labelType = 3;
    g.targetRelation = {1, 3};
    g.relations.push_back({1, 2, Matrix(membershipPartition(rng, bags, instances)), std::nullopt});
    g.relations.push_back({1, 3, Matrix(bernoulliMatrix(rng, bags, labels, 0.4)), std::nullopt});
    return g;
}

struct RandomGraphOptions {
    int maxAuxTypes = 2;         // beyond the three structural roles
    Eigen::Index maxCardinality = 20;
    bool allowViews = true;
    bool allowMasks = true;
    bool allowInstanceLabels = true;
};

// Random small graph drawn from the full structural space: 3..3+maxAuxTypes
// types, random extra relations, signed views, optional target mask.
inline FusionGraph randomGraph(Rng& rng, const RandomGraphOptions& opt = {}) {
    const int aux = static_cast<int>(rng.index(static_cast<std::uint64_t>(opt.maxAuxTypes + 1)));
    const int m = 3 + aux;
    auto card = [&]() {
        return static_cast<Eigen::Index>(2 + rng.index(static_cast<std::uint64_t>(
                                                 opt.maxCardinality - 1)));
    };

    FusionGraph g;
    for (int t = 1; t <= m; ++t)
        g.types.push_back({t, "t" + std::to_string(t), card()});
    g.bagType = 1;
    g.instanceType = 2;
    g.labelType = 3;
    g.targetRelation = {1, 3};

    const Eigen::Index nb = g.cardinality(1), ni = g.cardinality(2), nl = g.cardinality(3);
    g.relations.push_back({1, 2, Matrix(membershipPartition(rng, nb, ni)), std::nullopt});

    InterRelation sup{1, 3, Matrix(bernoulliMatrix(rng, nb, nl, 0.3 + 0.4 * rng.uniform01())),
                      std::nullopt};
    if (opt.allowMasks && rng.uniform01() < 0.5)
        sup.observedMask = bernoulliMatrix(rng, nb, nl, 0.5 + 0.5 * rng.uniform01());
    g.relations.push_back(std::move(sup));

    if (opt.allowInstanceLabels && rng.uniform01() < 0.5)
        g.relations.push_back({2, 3, Matrix(bernoulliMatrix(rng, ni, nl, 0.3)), std::nullopt});

    // random extra relations between distinct pairs not yet declared
    auto hasRelation = [&](int s, int t) {
        for (const auto& r : g.relations)
            if (r.source == s && r.target == t) return true;
        return false;
    };
    for (int s = 1; s <= m; ++s) {
        for (int t = 1; t <= m; ++t) {
            if (s == t || hasRelation(s, t)) continue;
            if (rng.uniform01() > 0.25) continue;
            g.relations.push_back(
                {s, t, Matrix(uniformMatrix(rng, g.cardinality(s), g.cardinality(t))),
                 std::nullopt});
        }
    }
    // anchor every auxiliary type with at least one relation; a type whose
    // only data is a signed view has nothing to hold its factor in place
    for (int t = 4; t <= m; ++t) {
        bool anchored = false;
        for (const auto& r : g.relations)
            if (r.source == t || r.target == t) anchored = true;
        if (!anchored) {
            const int other = 1 + static_cast<int>(rng.index(3));
            g.relations.push_back(
                {other, t, Matrix(uniformMatrix(rng, g.cardinality(other), g.cardinality(t))),
                 std::nullopt});
        }
    }

    if (opt.allowViews) {
        for (int p = 1; p <= m; ++p) {
            const int count = static_cast<int>(rng.index(3));  // 0..2 views
            for (int t = 1; t <= count; ++t)
                g.views.push_back({p, t, Matrix(laplacianView(rng, g.cardinality(p)))});
        }
    }
    return g;
}

// One deterministic draw from randomGraph for tests that just need a fixed
// nontrivial graph.
inline FusionGraph randomGraphFixture() {
    Rng rng(20240810);
    return randomGraph(rng);
}

inline m4l::SolverConfig randomConfig(Rng& rng) {
    m4l::SolverConfig cfg;
    cfg.rank = 1 + static_cast<int>(rng.index(3));
    static const m4l::SolverMode modes[] = {m4l::SolverMode::Full, m4l::SolverMode::NoWeights,
                                            m4l::SolverMode::NoDispatch, m4l::SolverMode::Dfmf};
    cfg.mode = modes[rng.index(4)];
    static const double ridges[] = {0.1, 1.0, 10.0, 1e6};
    cfg.alpha = ridges[rng.index(4)];
    cfg.beta = ridges[rng.index(4)];
    cfg.maxIters = 15;
    cfg.relTol = 0.0;  // run every sweep; monotonicity checks want full histories
    cfg.seed = rng.raw();
    return cfg;
}

// Exhaustive active-set oracle for min_w sum w_i e_i + ridge*sum w_i^2 on the
// probability simplex. Enumerates every support, keeps feasible stationary
// candidates, returns the best objective value. Independent of the
// water-filling route in the solver.
inline double simplexQpOracle(const std::vector<double>& e, double ridge) {
    const std::size_t n = e.size();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t mask = 1; mask < (std::size_t(1) << n); ++mask) {
        double sum = 0.0;
        std::size_t k = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask & (std::size_t(1) << i)) {
                sum += e[i];
                ++k;
            }
        const double lambda = (2.0 * ridge + sum) / static_cast<double>(k);
        bool feasible = true;
        double obj = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!(mask & (std::size_t(1) << i))) continue;
            const double w = (lambda - e[i]) / (2.0 * ridge);
            if (w < 0.0) {
                feasible = false;
                break;
            }
            obj += w * e[i] + ridge * w * w;
        }
        if (feasible) best = std::min(best, obj);
    }
    return best;
}

inline double weightObjective(const std::vector<double>& e, const std::vector<double>& w,
                              double ridge) {
    double obj = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) obj += w[i] * e[i] + ridge * w[i] * w[i];
    return obj;
}

// Straight-line evaluation of the unweighted collective-factorization
// objective (residuals plus signed traces), masked on relations that carry
// an observedMask. Written independently of m4l::objective.
inline double plainJointObjective(const FusionGraph& g, const m4l::FactorModel& model,
                                  bool withDispatch) {
    double total = 0.0;
    for (const auto& rel : g.relations) {
        const Dense pred = model.g(rel.source) * model.S.at({rel.source, rel.target}) *
                           model.g(rel.target).transpose();
        const Dense& r = rel.matrix.dense();
        for (Eigen::Index a = 0; a < r.rows(); ++a)
            for (Eigen::Index b = 0; b < r.cols(); ++b) {
                if (rel.observedMask && (*rel.observedMask)(a, b) == 0.0) continue;
                const double d = r(a, b) - pred(a, b);
                total += d * d;
            }
    }
    for (const auto& view : g.views) {
        const Dense& th = view.matrix.dense();
        const Dense& gp = model.g(view.type);
        for (Eigen::Index a = 0; a < th.rows(); ++a)
            for (Eigen::Index b = 0; b < th.cols(); ++b)
                total += th(a, b) * gp.row(a).dot(gp.row(b));  // tr(G^T Th G)
    }
    if (withDispatch) {
        const Dense* p = nullptr;
        const InterRelation* sup = nullptr;
        for (const auto& rel : g.relations) {
            if (rel.source == g.bagType && rel.target == g.instanceType) p = &rel.matrix.dense();
            if (rel.source == g.bagType && rel.target == g.labelType) sup = &rel;
        }
        const Dense pred = (*p) * model.g(g.instanceType) *
                           model.S.at({g.instanceType, g.labelType}) *
                           model.g(g.labelType).transpose();
        const Dense& v = sup->matrix.dense();
        for (Eigen::Index a = 0; a < v.rows(); ++a)
            for (Eigen::Index b = 0; b < v.cols(); ++b) {
                if (sup->observedMask && (*sup->observedMask)(a, b) == 0.0) continue;
                const double d = v(a, b) - pred(a, b);
                total += d * d;
            }
    }
    return total;
}

}  // namespace m4ltest
