#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "m4l/graph.hpp"
#include "m4l/predict.hpp"
#include "m4l/solver.hpp"

namespace m4l {

// Area under the ROC curve in Mann-Whitney form (ties count 1/2).
// Degenerate inputs (no positives or no negatives) give nullopt.
std::optional<double> auroc(const std::vector<double>& scores, const std::vector<double>& labels);

// Average-precision estimate of the area under the PR curve; ties are
// ordered by descending score then ascending index. No positives: nullopt.
std::optional<double> auprc(const std::vector<double>& scores, const std::vector<double>& labels);

enum class F1Averaging { MacroLabels, ExampleRows };

// Macro-averaged F1 over label columns (default) or over rows. Columns with
// no activity contribute 0 and are counted. The optional 0/1 mask restricts
// which entries enter the confusion counts.
double avgF1(const Dense& binarized, const Dense& labels, const Dense* mask = nullptr,
             F1Averaging averaging = F1Averaging::MacroLabels);

enum class RankMetric { Auroc, Auprc };

struct PerLabelResult {
    std::optional<double> value;  // mean over non-degenerate columns
    int evaluated = 0;
    int skipped = 0;
};

// Applies the metric per label column over mask-true rows and averages the
// defined columns; degenerate columns are skipped and counted.
PerLabelResult perLabelAverage(const Dense& scores, const Dense& labels, RankMetric metric,
                               const Dense* mask = nullptr);

struct TTestResult {
    double t = 0.0;
    double pValue = 1.0;
    bool significantAt95 = false;
    int direction = 0;  // +1: a > b, -1: a < b, 0: no difference
};

// Two-sided paired t-test; zero-variance differences with nonzero mean are
// treated as infinitely significant, with zero mean as no difference.
TTestResult pairedTTest(const std::vector<double>& a, const std::vector<double>& b);

// Regularized incomplete beta I_x(a,b), used for the t-distribution tail.
double regularizedIncompleteBeta(double a, double b, double x);

struct FoldPlan {
    int numFolds = 5;
    int numRounds = 10;
    std::uint64_t seed = 0;
    enum class Unit { Entries, Rows } unit = Unit::Entries;
};

// Deterministic partition of unitCount units into numFolds disjoint covering
// folds: a seeded shuffle dealt round-robin. Fold sizes differ by at most 1.
std::vector<std::vector<std::size_t>> makeFolds(std::size_t unitCount, int numFolds,
                                                std::uint64_t seed);

struct FoldMetrics {
    int round = 0;
    int fold = 0;
    double avgF1 = 0.0;
    double auroc = 0.0;
    double auprc = 0.0;
    int aurocSkipped = 0;
    int auprcSkipped = 0;
};

struct MethodComparison {
    std::string name;
    std::array<TTestResult, 3> tests;  // avgF1, auroc, auprc
};

struct EvalReport {
    FoldPlan plan;
    std::vector<FoldMetrics> samples;              // ordered by (round, fold)
    std::array<double, 3> mean{{0, 0, 0}};         // over all fold x round samples
    std::array<double, 3> stddev{{0, 0, 0}};       // sample convention (n-1)
    std::vector<std::array<double, 3>> roundMean;  // per-round aggregation
    std::vector<MethodComparison> comparisons;
    int chosenK = 0;  // K of the last fold, for the record
};

void finalizeReport(EvalReport& report);

// Paired comparison against another method's per-fold samples (same plan).
MethodComparison compareSamples(const EvalReport& mine, const std::string& name,
                                const std::vector<FoldMetrics>& other);

enum class ScoreSource {
    Auto,       // aggregate through the membership matrix when dispatch was on
    Direct,     // reconstruct the target relation
    Aggregate,  // always aggregate instance-level predictions
};

struct CvOptions {
    ScoreSource scoreSource = ScoreSource::Auto;
    BagAggregation aggregation = BagAggregation::Sum;
    NextIntegerPolicy kPolicy = NextIntegerPolicy::Ceiling;
    F1Averaging f1Averaging = F1Averaging::MacroLabels;
};

// Masked k-fold cross-validation over the target relation, repeated for
// independent rounds. Folds partition the observed positive entries (or the
// rows) exactly; each fold is hidden through the observedMask, never zeroed.
EvalReport crossValidate(const FusionGraph& graph, const SolverConfig& config,
                         const FoldPlan& plan, const CvOptions& options = {});

}  // namespace m4l
