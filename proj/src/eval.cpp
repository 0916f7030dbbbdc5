#include "m4l/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "m4l/rng.hpp"

namespace m4l {

std::optional<double> auroc(const std::vector<double>& scores, const std::vector<double>& labels) {
    if (scores.size() != labels.size()) throw DataError("auroc: length mismatch");
    const std::size_t n = scores.size();
    std::size_t pos = 0;
    for (double y : labels) pos += (y > 0.0) ? 1 : 0;
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) return std::nullopt;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // average ranks over tie groups, then the Mann-Whitney statistic
    double rankSumPos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avgRank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]] > 0.0) rankSumPos += avgRank;
        i = j + 1;
    }
    const double p = static_cast<double>(pos);
    return (rankSumPos - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

std::optional<double> auprc(const std::vector<double>& scores, const std::vector<double>& labels) {
    if (scores.size() != labels.size()) throw DataError("auprc: length mismatch");
    const std::size_t n = scores.size();
    std::size_t pos = 0;
    for (double y : labels) pos += (y > 0.0) ? 1 : 0;
    if (pos == 0) return std::nullopt;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0;
    std::size_t seenPos = 0;
    for (std::size_t r = 0; r < n; ++r) {
        if (labels[order[r]] > 0.0) {
            ++seenPos;
            ap += static_cast<double>(seenPos) / static_cast<double>(r + 1);
        }
    }
    return ap / static_cast<double>(pos);
}

double avgF1(const Dense& binarized, const Dense& labels, const Dense* mask,
             F1Averaging averaging) {
    if (binarized.rows() != labels.rows() || binarized.cols() != labels.cols())
        throw DataError("avgF1: shape mismatch");
    if (mask && (mask->rows() != labels.rows() || mask->cols() != labels.cols()))
        throw DataError("avgF1: mask shape mismatch");

    const bool overColumns = averaging == F1Averaging::MacroLabels;
    const Eigen::Index groups = overColumns ? labels.cols() : labels.rows();
    if (groups == 0) return 0.0;

    double total = 0.0;
    for (Eigen::Index g = 0; g < groups; ++g) {
        double tp = 0, fp = 0, fn = 0;
        const Eigen::Index len = overColumns ? labels.rows() : labels.cols();
        for (Eigen::Index s = 0; s < len; ++s) {
            const Eigen::Index r = overColumns ? s : g;
            const Eigen::Index c = overColumns ? g : s;
            if (mask && (*mask)(r, c) == 0.0) continue;
            const bool pred = binarized(r, c) > 0.0;
            const bool truth = labels(r, c) > 0.0;
            if (pred && truth) ++tp;
            else if (pred && !truth) ++fp;
            else if (!pred && truth) ++fn;
        }
        const double denom = 2.0 * tp + fp + fn;
        total += denom > 0.0 ? 2.0 * tp / denom : 0.0;  // inactive groups count as 0
    }
    return total / static_cast<double>(groups);
}

PerLabelResult perLabelAverage(const Dense& scores, const Dense& labels, RankMetric metric,
                               const Dense* mask) {
    if (scores.rows() != labels.rows() || scores.cols() != labels.cols())
        throw DataError("perLabelAverage: shape mismatch");
    if (mask && (mask->rows() != labels.rows() || mask->cols() != labels.cols()))
        throw DataError("perLabelAverage: mask shape mismatch");

    PerLabelResult out;
    double total = 0.0;
    for (Eigen::Index c = 0; c < labels.cols(); ++c) {
        std::vector<double> s, y;
        for (Eigen::Index r = 0; r < labels.rows(); ++r) {
            if (mask && (*mask)(r, c) == 0.0) continue;
            s.push_back(scores(r, c));
            y.push_back(labels(r, c));
        }
        std::optional<double> v = s.empty() ? std::nullopt
                                  : (metric == RankMetric::Auroc ? auroc(s, y) : auprc(s, y));
        if (v) {
            total += *v;
            ++out.evaluated;
        } else {
            ++out.skipped;
        }
    }
    if (out.evaluated > 0) out.value = total / out.evaluated;
    return out;
}

namespace {

// Continued fraction for the incomplete beta (Lentz's method).
double betaContinuedFraction(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double regularizedIncompleteBeta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double lnFront = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(lnFront);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betaContinuedFraction(a, b, x) / a;
    return 1.0 - front * betaContinuedFraction(b, a, 1.0 - x) / b;
}

TTestResult pairedTTest(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DataError("pairedTTest: length mismatch");
    const std::size_t n = a.size();
    if (n < 2) throw DataError("pairedTTest: need at least 2 paired samples");

    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i] - mean;
        ss += d * d;
    }
    const double var = ss / static_cast<double>(n - 1);

    TTestResult out;
    out.direction = (mean > 0.0) ? 1 : (mean < 0.0 ? -1 : 0);
    if (var == 0.0) {
        if (mean == 0.0) {
            out.t = 0.0;
            out.pValue = 1.0;
            out.significantAt95 = false;  // identical samples: no evidence
        } else {
            out.t = mean > 0.0 ? std::numeric_limits<double>::infinity()
                               : -std::numeric_limits<double>::infinity();
            out.pValue = 0.0;
            out.significantAt95 = true;  // constant nonzero shift
        }
        return out;
    }
    const double df = static_cast<double>(n - 1);
    out.t = mean / std::sqrt(var / static_cast<double>(n));
    out.pValue = regularizedIncompleteBeta(df / 2.0, 0.5, df / (df + out.t * out.t));
    out.significantAt95 = out.pValue < 0.05;
    return out;
}

void finalizeReport(EvalReport& report) {
    const std::size_t n = report.samples.size();
    if (n == 0) return;
    std::array<double, 3> sum{{0, 0, 0}};
    for (const auto& s : report.samples) {
        sum[0] += s.avgF1;
        sum[1] += s.auroc;
        sum[2] += s.auprc;
    }
    for (int k = 0; k < 3; ++k) report.mean[k] = sum[k] / static_cast<double>(n);
    std::array<double, 3> ss{{0, 0, 0}};
    for (const auto& s : report.samples) {
        ss[0] += (s.avgF1 - report.mean[0]) * (s.avgF1 - report.mean[0]);
        ss[1] += (s.auroc - report.mean[1]) * (s.auroc - report.mean[1]);
        ss[2] += (s.auprc - report.mean[2]) * (s.auprc - report.mean[2]);
    }
    for (int k = 0; k < 3; ++k)
        report.stddev[k] = n > 1 ? std::sqrt(ss[k] / static_cast<double>(n - 1)) : 0.0;

    report.roundMean.assign(report.plan.numRounds, {{0, 0, 0}});
    std::vector<int> counts(report.plan.numRounds, 0);
    for (const auto& s : report.samples) {
        report.roundMean[s.round][0] += s.avgF1;
        report.roundMean[s.round][1] += s.auroc;
        report.roundMean[s.round][2] += s.auprc;
        ++counts[s.round];
    }
    for (int r = 0; r < report.plan.numRounds; ++r)
        if (counts[r] > 0)
            for (int k = 0; k < 3; ++k) report.roundMean[r][k] /= counts[r];
}

MethodComparison compareSamples(const EvalReport& mine, const std::string& name,
                                const std::vector<FoldMetrics>& other) {
    if (other.size() != mine.samples.size())
        throw DataError("compareSamples: sample counts differ; reports are not paired");
    std::array<std::vector<double>, 3> a, b;
    for (std::size_t i = 0; i < mine.samples.size(); ++i) {
        a[0].push_back(mine.samples[i].avgF1);
        a[1].push_back(mine.samples[i].auroc);
        a[2].push_back(mine.samples[i].auprc);
        b[0].push_back(other[i].avgF1);
        b[1].push_back(other[i].auroc);
        b[2].push_back(other[i].auprc);
    }
    MethodComparison cmp;
    cmp.name = name;
    for (int k = 0; k < 3; ++k) cmp.tests[k] = pairedTTest(a[k], b[k]);
    return cmp;
}

namespace {

struct TargetView {
    const InterRelation* rel = nullptr;
    Dense values;        // the target matrix
    Dense origObserved;  // 1 where the original graph observes the entry
};

TargetView targetView(const FusionGraph& graph) {
    BlockIndex index(graph);
    TargetView t;
    t.rel = index.relation(graph.targetRelation.first, graph.targetRelation.second);
    if (!t.rel) throw DataError("crossValidate: target relation is not declared");
    t.values = t.rel->matrix.dense();
    t.origObserved = t.rel->observedMask ? *t.rel->observedMask
                                         : Dense::Ones(t.values.rows(), t.values.cols());
    return t;
}

Dense scoreTarget(const FusionGraph& graph, const FactorModel& model, const SolverConfig& config,
                  const CvOptions& options) {
    const bool bagTarget = graph.targetRelation ==
                           std::make_pair(graph.bagType, graph.labelType);
    bool aggregate = false;
    switch (options.scoreSource) {
        case ScoreSource::Auto: aggregate = bagTarget && config.dispatchEnabled(); break;
        case ScoreSource::Direct: aggregate = false; break;
        case ScoreSource::Aggregate: aggregate = true; break;
    }
    if (aggregate) {
        if (!bagTarget) throw DataError("aggregate scoring requires a bag-level target");
        return aggregateBagScores(model, graph, options.aggregation).scores;
    }
    return reconstruct(model, graph.targetRelation.first, graph.targetRelation.second).scores;
}

struct FoldEval {
    double avgF1;
    double auroc;
    double auprc;
    int aurocSkipped;
    int auprcSkipped;
    int k;
};

FoldEval evaluateFold(const FusionGraph& trainGraph, const TargetView& target,
                      const Dense& trainMask, const Dense& popMask, const Dense& truth,
                      const SolverConfig& config, const CvOptions& options,
                      std::uint64_t solverSeed) {
    SolverConfig cfg = config;
    cfg.seed = solverSeed;
    FactorModel model = fit(trainGraph, cfg);

    Dense scores = scoreTarget(trainGraph, model, cfg, options);
    const int k = chooseK(target.values, &trainMask, options.kPolicy);

    ScoreMatrix sm;
    sm.scores = scores;
    sm = topK(std::move(sm), k);

    PerLabelResult roc = perLabelAverage(scores, truth, RankMetric::Auroc, &popMask);
    PerLabelResult pr = perLabelAverage(scores, truth, RankMetric::Auprc, &popMask);
    if (!roc.value) throw DataError("crossValidate: every label column degenerate for AUROC");
    if (!pr.value) throw DataError("crossValidate: every label column degenerate for AUPRC");

    FoldEval out;
    out.avgF1 = avgF1(*sm.binarized, truth, &popMask, options.f1Averaging);
    out.auroc = *roc.value;
    out.auprc = *pr.value;
    out.aurocSkipped = roc.skipped;
    out.auprcSkipped = pr.skipped;
    out.k = k;
    return out;
}

}  // namespace

std::vector<std::vector<std::size_t>> makeFolds(std::size_t unitCount, int numFolds,
                                                std::uint64_t seed) {
    std::vector<std::size_t> perm(unitCount);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(perm);
    std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(numFolds));
    for (std::size_t u = 0; u < perm.size(); ++u)
        folds[u % static_cast<std::size_t>(numFolds)].push_back(perm[u]);
    return folds;
}

EvalReport crossValidate(const FusionGraph& graph, const SolverConfig& config,
                         const FoldPlan& plan, const CvOptions& options) {
    if (plan.numFolds < 2) throw DataError("crossValidate: need at least 2 folds");
    if (plan.numRounds < 1) throw DataError("crossValidate: need at least 1 round");

    TargetView target = targetView(graph);
    const Eigen::Index rows = target.values.rows();
    const Eigen::Index cols = target.values.cols();

    // units to partition
    std::vector<std::pair<Eigen::Index, Eigen::Index>> posEntries;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            if (target.origObserved(r, c) != 0.0 && target.values(r, c) > 0.0)
                posEntries.push_back({r, c});

    if (plan.unit == FoldPlan::Unit::Entries &&
        posEntries.size() < static_cast<std::size_t>(plan.numFolds))
        throw DataError("crossValidate: fewer observed positives than folds");
    if (plan.unit == FoldPlan::Unit::Rows && rows < plan.numFolds)
        throw DataError("crossValidate: fewer rows than folds");

    EvalReport report;
    report.plan = plan;

    // locate the target relation inside the working copy once per fold
    auto targetRelOf = [&](FusionGraph& g) -> InterRelation& {
        for (auto& rel : g.relations)
            if (rel.source == g.targetRelation.first && rel.target == g.targetRelation.second)
                return rel;
        throw DataError("crossValidate: target relation vanished from working copy");
    };

    for (int round = 0; round < plan.numRounds; ++round) {
        const std::size_t unitCount = plan.unit == FoldPlan::Unit::Entries
                                          ? posEntries.size()
                                          : static_cast<std::size_t>(rows);
        const auto folds = makeFolds(unitCount, plan.numFolds,
                                     plan.seed * 1000003ULL + static_cast<std::uint64_t>(round));

        for (int fold = 0; fold < plan.numFolds; ++fold) {
            Dense trainMask = target.origObserved;
            Dense popMask = Dense::Zero(rows, cols);
            Dense truth = Dense::Zero(rows, cols);
            std::size_t heldOutPositives = 0;

            if (plan.unit == FoldPlan::Unit::Entries) {
                for (std::size_t u : folds[static_cast<std::size_t>(fold)]) {
                    const auto [r, c] = posEntries[u];
                    trainMask(r, c) = 0.0;
                    popMask(r, c) = 1.0;
                    truth(r, c) = 1.0;
                    ++heldOutPositives;
                }
                // known negatives join the ranking population
                for (Eigen::Index r = 0; r < rows; ++r)
                    for (Eigen::Index c = 0; c < cols; ++c)
                        if (target.origObserved(r, c) != 0.0 && target.values(r, c) == 0.0)
                            popMask(r, c) = 1.0;
            } else {
                for (std::size_t u : folds[static_cast<std::size_t>(fold)]) {
                    const Eigen::Index r = static_cast<Eigen::Index>(u);
                    for (Eigen::Index c = 0; c < cols; ++c) {
                        trainMask(r, c) = 0.0;
                        if (target.origObserved(r, c) != 0.0) {
                            popMask(r, c) = 1.0;
                            truth(r, c) = target.values(r, c) > 0.0 ? 1.0 : 0.0;
                            if (truth(r, c) > 0.0) ++heldOutPositives;
                        }
                    }
                }
            }
            if (heldOutPositives == 0) {
                std::ostringstream os;
                os << "crossValidate: round " << round << " fold " << fold
                   << " holds out zero positives";
                throw DataError(os.str());
            }

            FusionGraph work = graph;
            targetRelOf(work).observedMask = trainMask;

            const std::uint64_t solverSeed =
                config.seed + 1000003ULL * static_cast<std::uint64_t>(round) +
                static_cast<std::uint64_t>(fold);
            FoldEval fe = evaluateFold(work, target, trainMask, popMask, truth, config, options,
                                       solverSeed);
            FoldMetrics fm;
            fm.round = round;
            fm.fold = fold;
            fm.avgF1 = fe.avgF1;
            fm.auroc = fe.auroc;
            fm.auprc = fe.auprc;
            fm.aurocSkipped = fe.aurocSkipped;
            fm.auprcSkipped = fe.auprcSkipped;
            report.samples.push_back(fm);
            report.chosenK = fe.k;
        }
    }

    finalizeReport(report);
    return report;
}

}  // namespace m4l
