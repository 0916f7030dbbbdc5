#include "m4l/solver.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "m4l/rng.hpp"

namespace m4l {

namespace {

constexpr double kDenFloor = 1e-12;

// M.*R + (1-M).*pred: masked entries are replaced by the current
// reconstruction, so one update step on the filled matrix decreases the
// masked objective (majorize-minimize).
Dense imputedTarget(const InterRelation& rel, const Dense& pred) {
    if (!rel.observedMask) return rel.matrix.dense();
    const Dense& m = *rel.observedMask;
    return (m.array() * rel.matrix.dense().array() + (1.0 - m.array()) * pred.array()).matrix();
}

double maskedResidualSq(const InterRelation& rel, const Dense& pred) {
    Dense resid = rel.matrix.dense() - pred;
    if (rel.observedMask) return frobeniusSq(resid, *rel.observedMask);
    return frobeniusSq(resid);
}

Dense reconstructRelation(const FactorModel& model, int i, int j) {
    const Dense& s = model.S.at({i, j});
    return model.g(i) * s * model.g(j).transpose();
}

struct DispatchRefs {
    const InterRelation* membership = nullptr;   // R(b,i)
    const InterRelation* supervision = nullptr;  // R(b,m)
};

DispatchRefs dispatchRefs(const FusionGraph& graph, const BlockIndex& index) {
    DispatchRefs d;
    d.membership = index.relation(graph.bagType, graph.instanceType);
    d.supervision = index.relation(graph.bagType, graph.labelType);
    if (!d.membership || !d.supervision)
        throw DataError("dispatch term requires bag-instance and bag-label relations");
    return d;
}

Dense dispatchPrediction(const FusionGraph& graph, const FactorModel& model,
                         const DispatchRefs& d) {
    const Dense& s = model.S.at({graph.instanceType, graph.labelType});
    return d.membership->matrix.dense() *
           (model.g(graph.instanceType) * s * model.g(graph.labelType).transpose());
}

}  // namespace

int SolverConfig::rankFor(int typeId, Eigen::Index cardinality) const {
    auto it = ranksByType.find(typeId);
    int k = (it != ranksByType.end()) ? it->second : rank;
    if (k < 1) throw DataError("rank must be >= 1");
    return static_cast<int>(std::min<Eigen::Index>(k, cardinality));
}

SolverMode parseSolverMode(const std::string& name) {
    if (name == "full") return SolverMode::Full;
    if (name == "no-weights" || name == "noWeights") return SolverMode::NoWeights;
    if (name == "no-dispatch" || name == "noDispatch") return SolverMode::NoDispatch;
    if (name == "dfmf") return SolverMode::Dfmf;
    throw DataError("unknown solver mode '" + name + "'");
}

std::string toString(SolverMode mode) {
    switch (mode) {
        case SolverMode::Full: return "full";
        case SolverMode::NoWeights: return "no-weights";
        case SolverMode::NoDispatch: return "no-dispatch";
        case SolverMode::Dfmf: return "dfmf";
    }
    return "?";
}

double objective(const FusionGraph& graph, const FactorModel& model,
                 const SolverConfig& config) {
    BlockIndex index(graph);
    const bool adaptive = config.adaptiveWeights();
    double total = 0.0;

    for (const auto& rel : graph.relations) {
        auto it = model.S.find({rel.source, rel.target});
        if (it == model.S.end()) throw DataError("model lacks a core for a declared relation");
        const Dense pred = model.g(rel.source) * it->second * model.g(rel.target).transpose();
        if (pred.rows() != rel.matrix.rows() || pred.cols() != rel.matrix.cols())
            throw DataError("objective: factor shapes inconsistent with relation");
        const double w = adaptive ? model.Wr(rel.source - 1, rel.target - 1) : 1.0;
        total += w * maskedResidualSq(rel, pred);
    }

    for (const auto& view : graph.views) {
        const double w = adaptive ? model.Wh(view.type - 1, view.viewIndex - 1) : 1.0;
        total += w * traceForm(model.g(view.type), view.matrix);
    }

    if (config.dispatchEnabled()) {
        DispatchRefs d = dispatchRefs(graph, index);
        total += maskedResidualSq(*d.supervision, dispatchPrediction(graph, model, d));
    }

    if (adaptive) {
        total += config.alpha * model.Wr.squaredNorm() + config.beta * model.Wh.squaredNorm();
    }

    if (!std::isfinite(total)) throw NumericError("objective: non-finite value");
    return total;
}

FactorModel initialize(const FusionGraph& graph, const SolverConfig& config) {
    const int m = graph.numTypes();
    const int tau = graph.maxViews();
    BlockIndex index(graph);
    Rng rng(config.seed);

    FactorModel model;
    model.G.resize(m);
    model.Wr = Dense::Zero(m, m);
    model.Wh = Dense::Zero(m, std::max(tau, 1));

    // mean observed entry over relations touching each type, for scaling
    std::vector<double> sum(m + 1, 0.0), count(m + 1, 0.0);
    for (const auto& rel : graph.relations) {
        const Dense& r = rel.matrix.dense();
        double s, c;
        if (rel.observedMask) {
            s = (rel.observedMask->array() * r.array()).sum();
            c = rel.observedMask->sum();
        } else {
            s = r.sum();
            c = static_cast<double>(r.size());
        }
        for (int t : {rel.source, rel.target}) {
            sum[t] += s;
            count[t] += c;
        }
    }

    for (int t = 1; t <= m; ++t) {
        const Eigen::Index n = graph.cardinality(t);
        const int k = config.rankFor(t, n);
        if (config.init == InitScheme::SvdAbs) {
            // concatenate every relation touching t along its t-side
            std::vector<const Dense*> blocks;
            std::vector<Dense> transposed;
            Eigen::Index width = 0;
            for (const auto& rel : graph.relations) {
                if (rel.source == t) {
                    blocks.push_back(&rel.matrix.dense());
                    width += rel.matrix.cols();
                } else if (rel.target == t) {
                    transposed.push_back(rel.matrix.dense().transpose());
                    width += rel.matrix.rows();
                }
            }
            if (width > 0) {
                Dense cat(n, width);
                Eigen::Index at = 0;
                for (const auto* b : blocks) {
                    cat.middleCols(at, b->cols()) = *b;
                    at += b->cols();
                }
                for (const auto& b : transposed) {
                    cat.middleCols(at, b.cols()) = b;
                    at += b.cols();
                }
                Eigen::BDCSVD<Dense> svd(cat, Eigen::ComputeThinU);
                const int got = static_cast<int>(std::min<Eigen::Index>(k, svd.matrixU().cols()));
                Dense g(n, k);
                for (int c = 0; c < got; ++c)
                    g.col(c) = (svd.matrixU().col(c) * std::sqrt(svd.singularValues()(c))).cwiseAbs();
                for (int c = got; c < k; ++c)
                    for (Eigen::Index rr = 0; rr < n; ++rr) g(rr, c) = rng.uniform01();
                model.G[t - 1] = std::move(g);
                continue;
            }
        }
        const double mean = count[t] > 0 ? sum[t] / count[t] : 1.0;
        const double scale = std::sqrt(std::max(mean, 1e-12) / static_cast<double>(k));
        Dense g(n, k);
        for (Eigen::Index r = 0; r < n; ++r)
            for (int c = 0; c < k; ++c) g(r, c) = rng.uniform01() * scale;
        model.G[t - 1] = std::move(g);
    }

    // cores from the initial factors; masked entries count as zero here
    // (there is no reconstruction to impute from yet)
    for (const auto& rel : graph.relations) {
        Dense target = rel.matrix.dense();
        if (rel.observedMask) target = rel.observedMask->cwiseProduct(target);
        model.S[{rel.source, rel.target}] =
            solveSylvesterLeastSquares(model.g(rel.source), target, model.g(rel.target));
    }
    if (config.dispatchEnabled() && !model.S.count({graph.instanceType, graph.labelType})) {
        DispatchRefs d = dispatchRefs(graph, index);
        Dense target = d.supervision->matrix.dense();
        if (d.supervision->observedMask) target = d.supervision->observedMask->cwiseProduct(target);
        Dense folded = d.membership->matrix.dense() * model.g(graph.instanceType);
        model.S[{graph.instanceType, graph.labelType}] =
            solveSylvesterLeastSquares(folded, target, model.g(graph.labelType));
    }

    for (int i = 1; i <= m; ++i) {
        const auto& targets = index.targetsOf(i);
        if (!targets.empty())
            for (int j : targets) model.Wr(i - 1, j - 1) = 1.0 / static_cast<double>(targets.size());
    }
    for (int p = 1; p <= m; ++p) {
        std::vector<int> present;
        for (const auto& v : graph.views)
            if (v.type == p) present.push_back(v.viewIndex);
        for (int t : present) model.Wh(p - 1, t - 1) = 1.0 / static_cast<double>(present.size());
    }
    return model;
}

void updateG(const FusionGraph& graph, FactorModel& model, const SolverConfig& config,
             int typeId) {
    const bool adaptive = config.adaptiveWeights();
    const Dense& gp = model.g(typeId);
    Dense num = Dense::Zero(gp.rows(), gp.cols());
    Dense den = Dense::Zero(gp.rows(), gp.cols());

    for (const auto& rel : graph.relations) {
        if (rel.source != typeId && rel.target != typeId) continue;
        const double w = adaptive ? model.Wr(rel.source - 1, rel.target - 1) : 1.0;
        if (w == 0.0) continue;
        const Dense pred = reconstructRelation(model, rel.source, rel.target);
        const Dense target = imputedTarget(rel, pred);
        const Dense& s = model.S.at({rel.source, rel.target});
        if (rel.source == typeId) {
            const Dense& gj = model.g(rel.target);
            Dense xtf = target * gj * s.transpose();
            Dense ftf = s * (gj.transpose() * gj) * s.transpose();
            auto [xp, xm] = splitSigned(xtf);
            auto [fp, fm] = splitSigned(ftf);
            num += w * (xp + gp * fm);
            den += w * (xm + gp * fp);
        }
        if (rel.target == typeId) {
            const Dense& gi = model.g(rel.source);
            Dense xtf = target.transpose() * gi * s;
            Dense ftf = s.transpose() * (gi.transpose() * gi) * s;
            auto [xp, xm] = splitSigned(xtf);
            auto [fp, fm] = splitSigned(ftf);
            num += w * (xp + gp * fm);
            den += w * (xm + gp * fp);
        }
    }

    for (const auto& view : graph.views) {
        if (view.type != typeId) continue;
        const double w = adaptive ? model.Wh(view.type - 1, view.viewIndex - 1) : 1.0;
        if (w == 0.0) continue;
        auto [tp, tm] = splitSigned(view.matrix.dense());
        Dense symPlus = 0.5 * (tp + tp.transpose());
        Dense symMinus = 0.5 * (tm + tm.transpose());
        num += w * (symMinus * gp);
        den += w * (symPlus * gp);
    }

    if (config.dispatchEnabled() &&
        (typeId == graph.instanceType || typeId == graph.labelType)) {
        BlockIndex index(graph);
        DispatchRefs d = dispatchRefs(graph, index);
        const Dense& p = d.membership->matrix.dense();
        const Dense& sd = model.S.at({graph.instanceType, graph.labelType});
        const Dense pred = dispatchPrediction(graph, model, d);
        const Dense target = imputedTarget(*d.supervision, pred);
        if (typeId == graph.instanceType) {
            const Dense& gm = model.g(graph.labelType);
            Dense c = p.transpose() * target * (gm * sd.transpose());
            Dense b = sd * (gm.transpose() * gm) * sd.transpose();
            auto [cp, cm] = splitSigned(c);
            auto [bp, bm] = splitSigned(b);
            num += cp + p.transpose() * (p * (gp * bm));
            den += cm + p.transpose() * (p * (gp * bp));
        } else {
            Dense folded = p * model.g(graph.instanceType);
            Dense xtf = target.transpose() * folded * sd;
            Dense ftf = sd.transpose() * (folded.transpose() * folded) * sd;
            auto [xp, xm] = splitSigned(xtf);
            auto [fp, fm] = splitSigned(ftf);
            num += xp + gp * fm;
            den += xm + gp * fp;
        }
    }

    if (num.isZero(0.0) && den.isZero(0.0)) return;  // isolated type, nothing to do

    Dense updated =
        gp.array() * (num.array() / den.array().max(kDenFloor)).sqrt();
    if (!updated.allFinite()) {
        std::ostringstream os;
        os << "updateG: non-finite update for type " << typeId;
        throw NumericError(os.str());
    }
    model.g(typeId) = std::move(updated);
}

void updateS(const FusionGraph& graph, FactorModel& model, const SolverConfig& config) {
    const bool dispatch = config.dispatchEnabled();
    const std::pair<int, int> dispatchKey{graph.instanceType, graph.labelType};

    for (const auto& rel : graph.relations) {
        const std::pair<int, int> key{rel.source, rel.target};
        if (dispatch && key == dispatchKey) continue;  // stacked solve below
        const Dense pred = reconstructRelation(model, rel.source, rel.target);
        model.S[key] = solveSylvesterLeastSquares(model.g(rel.source), imputedTarget(rel, pred),
                                                  model.g(rel.target));
    }

    if (dispatch) {
        BlockIndex index(graph);
        DispatchRefs d = dispatchRefs(graph, index);
        const Dense& gi = model.g(graph.instanceType);
        const Dense& gm = model.g(graph.labelType);
        const Dense folded = d.membership->matrix.dense() * gi;
        const Dense supTarget = imputedTarget(*d.supervision, dispatchPrediction(graph, model, d));

        double w = 0.0;
        const InterRelation* relIm = index.relation(graph.instanceType, graph.labelType);
        if (relIm) w = config.adaptiveWeights()
                           ? model.Wr(graph.instanceType - 1, graph.labelType - 1)
                           : 1.0;

        Dense gram = folded.transpose() * folded;
        Dense rhs = folded.transpose() * supTarget;
        if (relIm && w > 0.0) {
            const Dense predIm = gi * model.S.at(dispatchKey) * gm.transpose();
            gram += w * (gi.transpose() * gi);
            rhs += w * (gi.transpose() * imputedTarget(*relIm, predIm));
        }
        model.S[dispatchKey] = solveGramSandwich(gram, rhs, gm);
    }
}

std::vector<double> simplexRidgeWeights(const std::vector<double>& costs, double ridge) {
    if (costs.empty()) return {};
    if (!(ridge > 0.0))
        throw DataError("simplex weight step requires a strictly positive ridge");
    const std::size_t n = costs.size();
    // Euclidean projection of -costs/(2*ridge) onto the probability simplex.
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = -costs[i] / (2.0 * ridge);
    std::vector<double> u = v;
    std::sort(u.begin(), u.end(), std::greater<double>());
    double running = 0.0, theta = 0.0;
    std::size_t active = 0;
    for (std::size_t k = 0; k < n; ++k) {
        running += u[k];
        double candidate = (running - 1.0) / static_cast<double>(k + 1);
        if (u[k] - candidate > 0.0) {
            active = k + 1;
            theta = candidate;
        } else {
            break;
        }
    }
    (void)active;
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = std::max(v[i] - theta, 0.0);
    return w;
}

void updateWeights(const FusionGraph& graph, FactorModel& model, const SolverConfig& config) {
    if (!config.adaptiveWeights()) return;  // weights are frozen in these modes
    if (!(config.alpha > 0.0) || !(config.beta > 0.0))
        throw DataError("adaptive weights require alpha > 0 and beta > 0");

    BlockIndex index(graph);
    const int m = graph.numTypes();

    // residual cost of every declared relation at the current factors
    std::map<std::pair<int, int>, double> relCost;
    for (const auto& rel : graph.relations)
        relCost[{rel.source, rel.target}] =
            maskedResidualSq(rel, reconstructRelation(model, rel.source, rel.target));

    std::map<std::pair<int, int>, double> viewCost;
    for (const auto& view : graph.views)
        viewCost[{view.type, view.viewIndex}] = traceForm(model.g(view.type), view.matrix);

    if (config.simplexScope == SimplexScope::PerRow) {
        for (int i = 1; i <= m; ++i) {
            const auto& targets = index.targetsOf(i);
            if (targets.empty()) continue;
            std::vector<double> costs;
            costs.reserve(targets.size());
            for (int j : targets) costs.push_back(relCost.at({i, j}));
            auto w = simplexRidgeWeights(costs, config.alpha);
            for (std::size_t k = 0; k < targets.size(); ++k)
                model.Wr(i - 1, targets[k] - 1) = w[k];
        }
        for (int p = 1; p <= m; ++p) {
            std::vector<int> present;
            for (const auto& v : graph.views)
                if (v.type == p) present.push_back(v.viewIndex);
            if (present.empty()) continue;
            std::sort(present.begin(), present.end());
            std::vector<double> costs;
            costs.reserve(present.size());
            for (int t : present) costs.push_back(viewCost.at({p, t}));
            auto w = simplexRidgeWeights(costs, config.beta);
            for (std::size_t k = 0; k < present.size(); ++k)
                model.Wh(p - 1, present[k] - 1) = w[k];
        }
    } else {
        std::vector<std::pair<int, int>> relKeys;
        std::vector<double> costs;
        for (const auto& [key, cost] : relCost) {
            relKeys.push_back(key);
            costs.push_back(cost);
        }
        auto w = simplexRidgeWeights(costs, config.alpha);
        for (std::size_t k = 0; k < relKeys.size(); ++k)
            model.Wr(relKeys[k].first - 1, relKeys[k].second - 1) = w[k];

        std::vector<std::pair<int, int>> viewKeys;
        std::vector<double> vcosts;
        for (const auto& [key, cost] : viewCost) {
            viewKeys.push_back(key);
            vcosts.push_back(cost);
        }
        if (!viewKeys.empty()) {
            auto wh = simplexRidgeWeights(vcosts, config.beta);
            for (std::size_t k = 0; k < viewKeys.size(); ++k)
                model.Wh(viewKeys[k].first - 1, viewKeys[k].second - 1) = wh[k];
        }
    }
}

FactorModel fit(const FusionGraph& graph, const SolverConfig& config) {
    auto violations = validate(graph);
    if (!violations.empty()) {
        std::ostringstream os;
        os << "fit: invalid graph:";
        for (const auto& v : violations) os << "\n  - " << v;
        throw DataError(os.str());
    }

    FactorModel model = initialize(graph, config);
    double prev = objective(graph, model, config);

    for (int iter = 1; iter <= config.maxIters; ++iter) {
        try {
            for (int t = 1; t <= graph.numTypes(); ++t) updateG(graph, model, config, t);
            updateS(graph, model, config);
            if (config.adaptiveWeights()) updateWeights(graph, model, config);
        } catch (const NumericError& e) {
            std::ostringstream os;
            os << e.what() << " (sweep " << iter << ")";
            throw NumericError(os.str());
        }

        const double cur = objective(graph, model, config);
        if (!std::isfinite(cur)) {
            std::ostringstream os;
            os << "fit: non-finite objective at sweep " << iter;
            throw NumericError(os.str());
        }
        if (cur - prev > monotonicitySlack(prev, cur)) {
            std::ostringstream os;
            os << "fit: objective increased at sweep " << iter << " (" << prev << " -> " << cur
               << ")";
            throw NumericError(os.str());
        }
        model.history.push_back(cur);
        if (prev - cur < config.relTol * std::max(std::abs(prev), 1e-30)) break;
        prev = cur;
    }
    return model;
}

}  // namespace m4l
