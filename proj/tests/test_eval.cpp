#include <doctest.h>

#include <cmath>
#include <set>

#include "m4l/eval.hpp"
#include "m4l/io.hpp"
#include "testutil.hpp"

using namespace m4l;
using namespace m4ltest;

namespace {

// O(n^2) pair-counting oracle for the ROC area, ties worth 1/2.
double aurocPairOracle(const std::vector<double>& s, const std::vector<double>& y) {
    double correct = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] <= 0.0) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j] > 0.0) continue;
            pairs += 1.0;
            if (s[i] > s[j]) correct += 1.0;
            else if (s[i] == s[j]) correct += 0.5;
        }
    }
    return correct / pairs;
}

// Pairwise rank-walk oracle for average precision with the same tie rule
// (descending score, ascending index) but no sorting.
double auprcPairOracle(const std::vector<double>& s, const std::vector<double>& y) {
    auto before = [&](std::size_t j, std::size_t i) {
        return s[j] > s[i] || (s[j] == s[i] && j < i);
    };
    double ap = 0.0, positives = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] <= 0.0) continue;
        positives += 1.0;
        double posAtOrAbove = 1.0, atOrAbove = 1.0;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (j == i || !before(j, i)) continue;
            atOrAbove += 1.0;
            if (y[j] > 0.0) posAtOrAbove += 1.0;
        }
        ap += posAtOrAbove / atOrAbove;
    }
    return ap / positives;
}

}  // namespace

TEST_CASE("auroc examples") {
    CHECK(*auroc({0.9, 0.8, 0.1}, {1, 1, 0}) == doctest::Approx(1.0));
    CHECK(*auroc({0.9, 0.8, 0.1}, {1, 0, 1}) == doctest::Approx(0.5));
    CHECK(*auroc({0.5, 0.5}, {1, 0}) == doctest::Approx(0.5));
    CHECK(!auroc({0.1, 0.2}, {1, 1}).has_value());
    CHECK(!auroc({0.1, 0.2}, {0, 0}).has_value());
}

TEST_CASE("auroc properties") {
    Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.index(40);
        std::vector<double> s(n), y(n);
        bool pos = false, neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = std::round(rng.uniform01() * 8.0) / 8.0;  // force ties
            y[i] = rng.uniform01() < 0.4 ? 1.0 : 0.0;
            (y[i] > 0 ? pos : neg) = true;
        }
        if (!pos || !neg) continue;

        const double mine = *auroc(s, y);
        CHECK(mine == doctest::Approx(aurocPairOracle(s, y)).epsilon(1e-12));

        // strictly increasing transform leaves the value unchanged
        std::vector<double> mapped(n);
        for (std::size_t i = 0; i < n; ++i) mapped[i] = std::exp(2.0 * s[i]) + 1.0;
        CHECK(*auroc(mapped, y) == doctest::Approx(mine).epsilon(1e-12));

        // complement symmetry
        std::vector<double> flipped(n);
        for (std::size_t i = 0; i < n; ++i) flipped[i] = 1.0 - y[i];
        CHECK(mine + *auroc(s, flipped) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("auprc examples") {
    CHECK(*auprc({0.9, 0.8, 0.5, 0.1}, {1, 1, 0, 0}) == doctest::Approx(1.0));
    CHECK(*auprc({0.9, 0.8, 0.1}, {0, 1, 1}) == doctest::Approx(7.0 / 12.0));
    CHECK(*auprc({0.3}, {1}) == doctest::Approx(1.0));
    CHECK(!auprc({0.3, 0.4}, {0, 0}).has_value());
}

TEST_CASE("auprc matches the pair-walk oracle") {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.index(30);
        std::vector<double> s(n), y(n);
        bool pos = false;
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = std::round(rng.uniform01() * 6.0) / 6.0;
            y[i] = rng.uniform01() < 0.35 ? 1.0 : 0.0;
            if (y[i] > 0) pos = true;
        }
        if (!pos) continue;
        CHECK(*auprc(s, y) == doctest::Approx(auprcPairOracle(s, y)).epsilon(1e-12));
    }
}

TEST_CASE("auprc under random scores concentrates near the positive rate") {
    // the expectation exceeds the positive rate by a finite-length correction
    // (~0.017 at n=200), so it lands inside a +-0.05 band and above the rate
    Rng rng(3);
    const std::size_t n = 200, positives = 60;
    double sum = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> s(n), y(n, 0.0);
        for (auto& v : s) v = rng.uniform01();
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        rng.shuffle(idx);
        for (std::size_t i = 0; i < positives; ++i) y[idx[i]] = 1.0;
        sum += *auprc(s, y);
    }
    const double mean = sum / 200.0;
    CHECK(mean >= 0.3);
    CHECK(std::abs(mean - 0.3) < 0.05);
}

TEST_CASE("avgF1") {
    SUBCASE("exact match on active columns") {
        Dense labels(3, 2);
        labels << 1, 0, 0, 1, 1, 0;
        CHECK(avgF1(labels, labels) == doctest::Approx(1.0));
    }
    SUBCASE("all-zero prediction") {
        Dense labels = Dense::Ones(3, 2);
        CHECK(avgF1(Dense::Zero(3, 2), labels) == doctest::Approx(0.0));
    }
    SUBCASE("hand-built confusion") {
        // col 0: TP=1 FP=1 FN=0 -> 2/3; col 1: TP=0 FP=0 FN=1 -> 0
        Dense pred(2, 2), labels(2, 2);
        pred << 1, 0, 1, 0;
        labels << 1, 1, 0, 0;
        CHECK(avgF1(pred, labels) == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("row averaging switch") {
        Dense pred(2, 2), labels(2, 2);
        pred << 1, 0, 0, 1;
        labels << 1, 0, 1, 0;
        // rows: row0 TP=1 -> F1 1; row1 TP=0,FP=1,FN=1 -> 0
        CHECK(avgF1(pred, labels, nullptr, F1Averaging::ExampleRows) == doctest::Approx(0.5));
    }
    SUBCASE("mask restricts the counts") {
        Dense pred(2, 2), labels(2, 2), mask(2, 2);
        pred << 1, 1, 1, 1;
        labels << 1, 0, 0, 0;
        mask << 1, 0, 0, 0;  // only the true positive is visible
        CHECK(avgF1(pred, labels, &mask) == doctest::Approx(0.5));  // col1 inactive -> 0
    }
    SUBCASE("shape mismatch") {
        CHECK_THROWS_AS(avgF1(Dense::Zero(2, 2), Dense::Zero(3, 2)), DataError);
    }
}

TEST_CASE("perLabelAverage") {
    SUBCASE("identical columns average to the single-column value") {
        Dense scores(4, 2), labels(4, 2);
        scores << 0.9, 0.9, 0.8, 0.8, 0.3, 0.3, 0.1, 0.1;
        labels << 1, 1, 0, 0, 1, 1, 0, 0;
        auto both = perLabelAverage(scores, labels, RankMetric::Auroc);
        std::vector<double> col = {0.9, 0.8, 0.3, 0.1};
        std::vector<double> y = {1, 0, 1, 0};
        CHECK(*both.value == doctest::Approx(*auroc(col, y)));
        CHECK(both.evaluated == 2);
    }
    SUBCASE("degenerate column is skipped and counted") {
        Dense scores(3, 2), labels(3, 2);
        scores << 0.9, 0.5, 0.8, 0.5, 0.1, 0.5;
        labels << 1, 1, 1, 1, 0, 1;  // col 1 all-positive
        auto res = perLabelAverage(scores, labels, RankMetric::Auroc);
        CHECK(*res.value == doctest::Approx(1.0));
        CHECK(res.skipped == 1);
        CHECK(res.evaluated == 1);
    }
    SUBCASE("every column degenerate leaves no value") {
        Dense scores = Dense::Ones(3, 2);
        Dense labels = Dense::Ones(3, 2);
        auto res = perLabelAverage(scores, labels, RankMetric::Auroc);
        CHECK(!res.value.has_value());
        CHECK(res.skipped == 2);
    }
    SUBCASE("matches per-column brute force on random data") {
        Rng rng(4);
        Dense scores = uniformMatrix(rng, 10, 4);
        Dense labels = bernoulliMatrix(rng, 10, 4, 0.4);
        auto res = perLabelAverage(scores, labels, RankMetric::Auroc);
        double sum = 0.0;
        int used = 0;
        for (Eigen::Index c = 0; c < 4; ++c) {
            std::vector<double> s, y;
            for (Eigen::Index r = 0; r < 10; ++r) {
                s.push_back(scores(r, c));
                y.push_back(labels(r, c));
            }
            const double pos = std::accumulate(y.begin(), y.end(), 0.0);
            if (pos == 0.0 || pos == 10.0) continue;
            sum += aurocPairOracle(s, y);
            ++used;
        }
        REQUIRE(used == res.evaluated);
        if (used > 0) CHECK(*res.value == doctest::Approx(sum / used).epsilon(1e-12));
    }
}

TEST_CASE("regularizedIncompleteBeta matches reference t-distribution tails") {
    // two-sided p = I_{df/(df+t^2)}(df/2, 1/2), frozen from an independent
    // statistics package
    struct Case {
        double t, df, p;
    };
    const Case cases[] = {
        {2.776445105198, 4, 0.04999999999998946}, {1.0, 9, 0.34343639613791355},
        {3.5, 49, 0.0010013273839442356},         {0.5, 1, 0.7048327646991336},
        {12.0, 2, 0.00687293367715846},
    };
    for (const auto& c : cases) {
        const double p = regularizedIncompleteBeta(c.df / 2.0, 0.5, c.df / (c.df + c.t * c.t));
        CHECK(p == doctest::Approx(c.p).epsilon(1e-9));
    }
}

TEST_CASE("pairedTTest") {
    SUBCASE("identical samples") {
        std::vector<double> a{1, 2, 3};
        auto r = pairedTTest(a, a);
        CHECK(r.t == 0.0);
        CHECK(!r.significantAt95);
        CHECK(r.direction == 0);
    }
    SUBCASE("constant shift is infinitely significant") {
        std::vector<double> a, b;
        for (int i = 0; i < 10; ++i) {
            b.push_back(i);
            a.push_back(i + 1.0);
        }
        auto r = pairedTTest(a, b);
        CHECK(std::isinf(r.t));
        CHECK(r.significantAt95);
        CHECK(r.direction == 1);
    }
    SUBCASE("zero-mean differences give t = 0") {
        auto r = pairedTTest({1, 2, 3, 4}, {1.1, 1.9, 3.2, 3.8});
        CHECK(r.t == doctest::Approx(0.0));
        CHECK(r.pValue == doctest::Approx(1.0));
        CHECK(!r.significantAt95);
    }
    SUBCASE("matches a reference computation") {
        auto r = pairedTTest({1, 2, 3, 4}, {0.9, 1.7, 2.8, 3.6});
        CHECK(r.t == doctest::Approx(3.8729833462074184).epsilon(1e-6));
        CHECK(r.pValue == doctest::Approx(0.03046629166217095).epsilon(1e-6));
        CHECK(r.significantAt95);
        CHECK(r.direction == 1);
    }
    SUBCASE("length checks") {
        CHECK_THROWS_AS(pairedTTest({1.0}, {1.0}), DataError);
        CHECK_THROWS_AS(pairedTTest({1, 2}, {1, 2, 3}), DataError);
    }
}

TEST_CASE("makeFolds partitions exactly") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t units = 1 + rng.index(50);
        const int folds = 2 + static_cast<int>(rng.index(6));
        auto f = makeFolds(units, folds, rng.raw());
        std::set<std::size_t> seen;
        std::size_t total = 0;
        std::size_t maxSize = 0, minSize = units;
        for (const auto& fold : f) {
            total += fold.size();
            maxSize = std::max(maxSize, fold.size());
            minSize = std::min(minSize, fold.size());
            for (std::size_t u : fold) CHECK(seen.insert(u).second);  // disjoint
        }
        CHECK(total == units);  // covering
        CHECK(seen.size() == units);
        if (units >= static_cast<std::size_t>(folds)) CHECK(maxSize - minSize <= 1);
    }
}

TEST_CASE("crossValidate recovers planted structure") {
    SyntheticSpec spec;
    spec.numBags = 20;
    spec.numInstances = 40;
    spec.numLabels = 8;
    spec.rank = 3;
    spec.sigma = 0.1;
    spec.seed = 5;
    SyntheticData data = generateSynthetic(spec);

    SolverConfig cfg;
    cfg.rank = 3;
    cfg.maxIters = 40;
    cfg.relTol = 1e-5;
    cfg.seed = 1;
    FoldPlan plan;
    plan.numFolds = 5;
    plan.numRounds = 1;
    plan.seed = 2;

    EvalReport report = crossValidate(data.graph, cfg, plan);
    REQUIRE(report.samples.size() == 5);
    CHECK(report.mean[1] > 0.9);  // AUROC
}

TEST_CASE("crossValidate leave-one-out bookkeeping") {
    FusionGraph g = toyGraph(11, 5, 10, 3);
    // force exactly 6 observed positives
    Dense sup = Dense::Zero(5, 3);
    sup(0, 0) = sup(1, 1) = sup(2, 2) = sup(3, 0) = sup(4, 1) = sup(0, 2) = 1.0;
    g.relations[1].matrix = Matrix(sup);

    SolverConfig cfg;
    cfg.rank = 2;
    cfg.maxIters = 5;
    cfg.seed = 3;
    FoldPlan plan;
    plan.numFolds = 6;
    plan.numRounds = 1;
    plan.seed = 7;
    EvalReport report = crossValidate(g, cfg, plan);
    CHECK(report.samples.size() == 6);
}

TEST_CASE("crossValidate on random labels sits near chance") {
    Rng rng(13);
    FusionGraph g = toyGraph(13, 20, 40, 8);
    g.relations[1].matrix = Matrix(bernoulliMatrix(rng, 20, 8, 0.3));

    SolverConfig cfg;
    cfg.rank = 3;
    cfg.maxIters = 30;
    cfg.relTol = 1e-5;
    cfg.seed = 4;
    FoldPlan plan;
    plan.numFolds = 5;
    plan.numRounds = 2;
    plan.seed = 11;
    EvalReport report = crossValidate(g, cfg, plan);
    CHECK(report.mean[1] > 0.4);
    CHECK(report.mean[1] < 0.6);
}

TEST_CASE("crossValidate row unit and failure modes") {
    SUBCASE("row folds hide whole rows") {
        SyntheticSpec spec;
        spec.numBags = 18;
        spec.numInstances = 36;
        spec.numLabels = 6;
        spec.seed = 8;
        SyntheticData data = generateSynthetic(spec);
        SolverConfig cfg;
        cfg.rank = 3;
        cfg.maxIters = 20;
        cfg.seed = 2;
        FoldPlan plan;
        plan.numFolds = 3;
        plan.numRounds = 1;
        plan.unit = FoldPlan::Unit::Rows;
        EvalReport report = crossValidate(data.graph, cfg, plan);
        CHECK(report.samples.size() == 3);
    }
    SUBCASE("a fold with no held-out positives is an error") {
        FusionGraph g = toyGraph(14, 6, 12, 3);
        Dense sup = Dense::Zero(6, 3);
        sup.row(0).setOnes();  // all positives live in one row
        g.relations[1].matrix = Matrix(sup);
        SolverConfig cfg;
        cfg.rank = 2;
        cfg.maxIters = 3;
        FoldPlan plan;
        plan.numFolds = 3;
        plan.numRounds = 1;
        plan.unit = FoldPlan::Unit::Rows;
        CHECK_THROWS_AS(crossValidate(g, cfg, plan), DataError);
    }
    SUBCASE("not enough positives for the fold count") {
        FusionGraph g = toyGraph(15, 5, 10, 3);
        Dense sup = Dense::Zero(5, 3);
        sup(0, 0) = sup(1, 1) = 1.0;
        g.relations[1].matrix = Matrix(sup);
        SolverConfig cfg;
        FoldPlan plan;
        plan.numFolds = 5;
        CHECK_THROWS_AS(crossValidate(g, cfg, plan), DataError);
    }
}

TEST_CASE("compareSamples pairs fold for fold") {
    EvalReport mine;
    mine.plan.numFolds = 2;
    mine.plan.numRounds = 2;
    for (int r = 0; r < 2; ++r)
        for (int f = 0; f < 2; ++f)
            mine.samples.push_back({r, f, 0.5, 0.9, 0.6, 0, 0});
    finalizeReport(mine);

    std::vector<FoldMetrics> other = mine.samples;
    for (auto& s : other) s.auroc -= 0.1;
    auto cmp = compareSamples(mine, "baseline", other);
    CHECK(cmp.tests[1].direction == 1);
    CHECK(cmp.tests[1].significantAt95);  // constant shift
    CHECK(cmp.tests[0].direction == 0);

    other.pop_back();
    CHECK_THROWS_AS(compareSamples(mine, "short", other), DataError);
}
