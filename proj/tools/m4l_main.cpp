// m4l: joint tri-factorization of heterogeneous object networks.
//
// Subcommands: fit, cv, sweep, synth. Exit codes: 0 success, 2 usage error,
// 3 data error, 4 numerical error.

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>
#include <vector>

#include "m4l/eval.hpp"
#include "m4l/io.hpp"
#include "m4l/predict.hpp"
#include "m4l/solver.hpp"

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

double secondsSince(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct SolverFlags {
    std::string manifest;
    int rank = 40;
    double alpha = 1e6;
    double beta = 1e7;
    int maxIters = 100;
    double relTol = 1e-6;
    std::string mode = "full";
    std::string init = "random";
    std::string simplex = "per-row";
    std::uint64_t seed = 0;

    void attach(CLI::App* cmd, bool needManifest = true) {
        auto* opt = cmd->add_option("--manifest", manifest, "graph manifest file");
        if (needManifest) opt->required();
        cmd->add_option("--rank", rank, "shared latent size d")->check(CLI::PositiveNumber);
        cmd->add_option("--alpha", alpha, "ridge on inter-relation weights");
        cmd->add_option("--beta", beta, "ridge on intra-view weights");
        cmd->add_option("--max-iters", maxIters, "sweep cap")->check(CLI::PositiveNumber);
        cmd->add_option("--rel-tol", relTol, "relative decrease stop threshold");
        cmd->add_option("--mode", mode, "full | no-weights | no-dispatch | dfmf");
        cmd->add_option("--init", init, "random | svd");
        cmd->add_option("--simplex", simplex, "per-row | global weight simplex");
        cmd->add_option("--seed", seed, "rng seed");
    }

    m4l::SolverConfig config() const {
        m4l::SolverConfig cfg;
        cfg.rank = rank;
        cfg.alpha = alpha;
        cfg.beta = beta;
        cfg.maxIters = maxIters;
        cfg.relTol = relTol;
        cfg.mode = m4l::parseSolverMode(mode);
        cfg.seed = seed;
        if (init == "random") cfg.init = m4l::InitScheme::RandomUniform;
        else if (init == "svd") cfg.init = m4l::InitScheme::SvdAbs;
        else throw m4l::DataError("unknown init scheme '" + init + "'");
        if (simplex == "per-row") cfg.simplexScope = m4l::SimplexScope::PerRow;
        else if (simplex == "global") cfg.simplexScope = m4l::SimplexScope::Global;
        else throw m4l::DataError("unknown simplex scope '" + simplex + "'");
        return cfg;
    }

    void echo(std::ostream& out) const {
        out << "manifest " << manifest << "\n";
        out << "rank " << rank << "\nalpha " << alpha << "\nbeta " << beta << "\n";
        out << "max_iters " << maxIters << "\nrel_tol " << relTol << "\n";
        out << "mode " << mode << "\ninit " << init << "\nsimplex " << simplex << "\n";
        out << "seed " << seed << "\n";
    }
};

// Every command writes exactly one run record next to its primary output.
class RunRecord {
public:
    RunRecord(std::string command, fs::path path) : path_(std::move(path)) {
        body_ << "# m4l run record 1\n";
        body_ << "command " << command << "\n";
    }

    std::ostringstream& body() { return body_; }

    void phase(const std::string& name, double seconds) {
        body_ << "phase " << name << "_s " << seconds << "\n";
    }

    void output(const std::string& kind, const fs::path& p) {
        body_ << "output " << kind << " " << p.string() << "\n";
    }

    void write() {
        std::ofstream out(path_);
        if (!out) throw m4l::DataError("cannot write run record " + path_.string());
        out << body_.str();
    }

private:
    fs::path path_;
    std::ostringstream body_;
};

int runFit(const SolverFlags& flags, const std::string& outPath, const std::string& scoresOut,
           const std::string& recordPath) {
    RunRecord record("fit", recordPath.empty() ? outPath + ".run.txt" : recordPath);
    flags.echo(record.body());

    auto t0 = Clock::now();
    m4l::FusionGraph graph = m4l::loadGraph(flags.manifest);
    record.phase("load", secondsSince(t0));

    t0 = Clock::now();
    m4l::SolverConfig cfg = flags.config();
    m4l::FactorModel model = m4l::fit(graph, cfg);
    record.phase("fit", secondsSince(t0));

    record.body() << "sweeps " << model.history.size() << "\n";
    record.body() << "history";
    for (double h : model.history) record.body() << " " << h;
    record.body() << "\n";

    m4l::saveModel(model, outPath);
    record.output("model", outPath);

    if (!scoresOut.empty()) {
        const bool bagTarget = graph.targetRelation ==
                               std::make_pair(graph.bagType, graph.labelType);
        m4l::Dense scores =
            (bagTarget && cfg.dispatchEnabled())
                ? m4l::aggregateBagScores(model, graph).scores
                : m4l::reconstruct(model, graph.targetRelation.first,
                                   graph.targetRelation.second)
                      .scores;
        m4l::writeMatrixFile(scoresOut, scores);
        record.output("scores", scoresOut);
    }

    record.write();
    std::cout << "fit: " << model.history.size() << " sweeps, final objective "
              << (model.history.empty() ? 0.0 : model.history.back()) << "\n";
    return 0;
}

m4l::CvOptions cvOptions(const std::string& scoreSource, const std::string& aggregation,
                         const std::string& kPolicy, const std::string& f1Axis) {
    m4l::CvOptions opt;
    if (scoreSource == "auto") opt.scoreSource = m4l::ScoreSource::Auto;
    else if (scoreSource == "direct") opt.scoreSource = m4l::ScoreSource::Direct;
    else if (scoreSource == "aggregate") opt.scoreSource = m4l::ScoreSource::Aggregate;
    else throw m4l::DataError("unknown score source '" + scoreSource + "'");
    if (aggregation == "sum") opt.aggregation = m4l::BagAggregation::Sum;
    else if (aggregation == "mean") opt.aggregation = m4l::BagAggregation::Mean;
    else throw m4l::DataError("unknown aggregation '" + aggregation + "'");
    if (kPolicy == "ceiling") opt.kPolicy = m4l::NextIntegerPolicy::Ceiling;
    else if (kPolicy == "floor-plus-one") opt.kPolicy = m4l::NextIntegerPolicy::FloorPlusOne;
    else throw m4l::DataError("unknown k policy '" + kPolicy + "'");
    if (f1Axis == "labels") opt.f1Averaging = m4l::F1Averaging::MacroLabels;
    else if (f1Axis == "rows") opt.f1Averaging = m4l::F1Averaging::ExampleRows;
    else throw m4l::DataError("unknown f1 axis '" + f1Axis + "'");
    return opt;
}

int runCv(const SolverFlags& flags, const m4l::FoldPlan& plan, const m4l::CvOptions& options,
          const std::string& outPath, const std::vector<std::string>& comparePaths,
          const std::string& recordPath) {
    RunRecord record("cv", recordPath.empty() ? outPath + ".run.txt" : recordPath);
    flags.echo(record.body());
    record.body() << "folds " << plan.numFolds << "\nrounds " << plan.numRounds << "\ncv_seed "
                  << plan.seed << "\nunit "
                  << (plan.unit == m4l::FoldPlan::Unit::Entries ? "entries" : "rows") << "\n";

    auto t0 = Clock::now();
    m4l::FusionGraph graph = m4l::loadGraph(flags.manifest);
    record.phase("load", secondsSince(t0));

    t0 = Clock::now();
    m4l::EvalReport report = m4l::crossValidate(graph, flags.config(), plan, options);
    record.phase("cv", secondsSince(t0));

    for (const auto& cmpPath : comparePaths) {
        auto other = m4l::loadReportSamples(cmpPath);
        report.comparisons.push_back(
            m4l::compareSamples(report, fs::path(cmpPath).stem().string(), other));
    }

    m4l::saveReport(report, outPath);
    record.output("report", outPath);
    record.write();

    char line[256];
    std::snprintf(line, sizeof(line),
                  "cv: AvgF1 %.3f±%.3f AUROC %.3f±%.3f AUPRC %.3f±%.3f (%zu samples)\n",
                  report.mean[0], report.stddev[0], report.mean[1], report.stddev[1],
                  report.mean[2], report.stddev[2], report.samples.size());
    std::cout << line;
    return 0;
}

struct SweepCell {
    double alpha;
    double beta;
    int rank;
    double aurocMean = 0.0;
    double aurocStd = 0.0;
    bool failed = false;
    std::string error;
};

int runSweep(const SolverFlags& flags, const m4l::FoldPlan& plan,
             const std::vector<double>& alphas, const std::vector<double>& betas,
             const std::vector<int>& ranks, const std::string& outPath, int jobs,
             const std::string& recordPath) {
    RunRecord record("sweep", recordPath.empty() ? outPath + ".run.txt" : recordPath);
    flags.echo(record.body());

    auto t0 = Clock::now();
    m4l::FusionGraph graph = m4l::loadGraph(flags.manifest);
    record.phase("load", secondsSince(t0));

    std::vector<SweepCell> cells;
    for (double a : alphas)
        for (double b : betas)
            for (int d : ranks) cells.push_back({a, b, d});
    if (cells.empty()) throw m4l::DataError("sweep: empty grid");
    record.body() << "cells " << cells.size() << "\n";

    t0 = Clock::now();
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            SweepCell& cell = cells[i];
            try {
                m4l::SolverConfig cfg = flags.config();
                cfg.alpha = cell.alpha;
                cfg.beta = cell.beta;
                cfg.rank = cell.rank;
                m4l::EvalReport rep = m4l::crossValidate(graph, cfg, plan);
                cell.aurocMean = rep.mean[1];
                cell.aurocStd = rep.stddev[1];
            } catch (const std::exception& e) {
                cell.failed = true;
                cell.error = e.what();
            }
        }
    };
    const int threadCount = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));
    std::vector<std::thread> pool;
    for (int t = 0; t < threadCount; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    record.phase("sweep", secondsSince(t0));

    std::ofstream out(outPath);
    if (!out) throw m4l::DataError("cannot write sweep table " + outPath);
    out << "alpha\tbeta\td\tauroc_mean\tauroc_std\tstatus\n";
    for (const auto& cell : cells) {
        out << cell.alpha << "\t" << cell.beta << "\t" << cell.rank << "\t";
        if (cell.failed) out << "nan\tnan\tfailed: " << cell.error << "\n";
        else out << cell.aurocMean << "\t" << cell.aurocStd << "\tok\n";
    }
    record.output("table", outPath);
    record.write();
    std::cout << "sweep: " << cells.size() << " cells -> " << outPath << "\n";
    return 0;
}

int runSynth(const m4l::SyntheticSpec& spec, const std::string& outDir,
             const std::string& recordPath, bool writeTruth) {
    RunRecord record("synth",
                     recordPath.empty() ? (fs::path(outDir) / "synth.run.txt").string()
                                        : recordPath);
    record.body() << "bags " << spec.numBags << "\ninstances " << spec.numInstances
                  << "\nlabels " << spec.numLabels << "\naux " << spec.numAux << "\nrank "
                  << spec.rank << "\nsigma " << spec.sigma << "\ndensity " << spec.density
                  << "\nplanted_aux " << spec.plantedAuxRelations << "\nnoise_relations "
                  << spec.noiseRelations << "\nlabel_views " << spec.labelViews
                  << "\nnoise_views " << spec.noiseViews << "\ndeclare_instance_labels "
                  << spec.declareInstanceLabels << "\ntarget "
                  << (spec.bagTarget ? "bag" : "instance") << "\npositive_rate "
                  << spec.positiveRate << "\nseed " << spec.seed << "\n";

    auto t0 = Clock::now();
    m4l::SyntheticData data = m4l::generateSynthetic(spec);
    m4l::saveGraph(data.graph, outDir);
    if (writeTruth) {
        const fs::path truthDir = fs::path(outDir) / "groundtruth";
        fs::create_directories(truthDir);
        for (const auto& [typeId, g] : data.truth.factors) {
            std::ostringstream name;
            name << "g_" << typeId << ".txt";
            m4l::writeMatrixFile(truthDir / name.str(), g);
        }
        m4l::writeMatrixFile(truthDir / "instance_labels.txt", data.truth.instanceLabels);
        m4l::writeMatrixFile(truthDir / "bag_labels.txt", data.truth.bagLabels);
    }
    record.phase("generate", secondsSince(t0));
    record.output("dataset", outDir);
    record.write();
    std::cout << "synth: wrote " << outDir << " (" << data.graph.types.size() << " types, "
              << data.graph.relations.size() << " relations, " << data.graph.views.size()
              << " views)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"m4l: adaptive-weight joint matrix tri-factorization for "
                 "multi-typed bag/instance/label networks"};
    app.require_subcommand(1);

    // fit
    auto* fitCmd = app.add_subcommand("fit", "fit a factor model on a fusion graph");
    SolverFlags fitFlags;
    fitFlags.attach(fitCmd);
    std::string fitOut = "model.txt", fitScoresOut, fitRecord;
    fitCmd->add_option("--out", fitOut, "model output path");
    fitCmd->add_option("--scores-out", fitScoresOut, "also write target score matrix");
    fitCmd->add_option("--record", fitRecord, "run record path");

    // cv
    auto* cvCmd = app.add_subcommand("cv", "masked k-fold cross-validation on the target");
    SolverFlags cvFlags;
    cvFlags.attach(cvCmd);
    m4l::FoldPlan plan;
    std::string cvUnit = "entries", cvOut = "report.txt", cvRecord;
    std::string scoreSource = "auto", aggregation = "sum", kPolicy = "ceiling",
                f1Axis = "labels";
    std::vector<std::string> comparePaths;
    cvCmd->add_option("--folds", plan.numFolds, "fold count")->check(CLI::PositiveNumber);
    cvCmd->add_option("--rounds", plan.numRounds, "independent rounds")
        ->check(CLI::PositiveNumber);
    cvCmd->add_option("--cv-seed", plan.seed, "fold-shuffle seed");
    cvCmd->add_option("--unit", cvUnit, "entries | rows");
    cvCmd->add_option("--score-source", scoreSource, "auto | direct | aggregate");
    cvCmd->add_option("--aggregation", aggregation, "sum | mean bag aggregation");
    cvCmd->add_option("--k-policy", kPolicy, "ceiling | floor-plus-one");
    cvCmd->add_option("--f1-axis", f1Axis, "labels | rows");
    cvCmd->add_option("--compare", comparePaths, "other report(s) for paired t-tests");
    cvCmd->add_option("--out", cvOut, "report output path");
    cvCmd->add_option("--record", cvRecord, "run record path");

    // sweep
    auto* sweepCmd = app.add_subcommand("sweep", "grid-sweep hyperparameters with CV");
    SolverFlags sweepFlags;
    sweepFlags.attach(sweepCmd);
    m4l::FoldPlan sweepPlan;
    sweepPlan.numRounds = 1;
    std::vector<double> alphas, betas;
    std::vector<int> dValues;
    std::string sweepParam, sweepValues, sweepOut = "sweep.tsv", sweepRecord;
    int jobs = 1;
    sweepCmd->add_option("--alphas", alphas, "alpha grid values")->delimiter(',');
    sweepCmd->add_option("--betas", betas, "beta grid values")->delimiter(',');
    sweepCmd->add_option("--param", sweepParam, "single-parameter sweep: alpha | beta | d");
    sweepCmd->add_option("--values", sweepValues, "comma-separated values for --param");
    sweepCmd->add_option("--folds", sweepPlan.numFolds, "fold count")
        ->check(CLI::PositiveNumber);
    sweepCmd->add_option("--rounds", sweepPlan.numRounds, "rounds per cell")
        ->check(CLI::PositiveNumber);
    sweepCmd->add_option("--cv-seed", sweepPlan.seed, "fold-shuffle seed");
    sweepCmd->add_option("--jobs", jobs, "parallel cells")->check(CLI::PositiveNumber);
    sweepCmd->add_option("--out", sweepOut, "table output path");
    sweepCmd->add_option("--record", sweepRecord, "run record path");

    // synth
    auto* synthCmd = app.add_subcommand("synth", "generate a synthetic fusion-graph dataset");
    m4l::SyntheticSpec spec;
    std::string synthOut = "synthetic", synthTarget = "bag", synthRecord;
    bool noTruth = false;
    synthCmd->add_option("--out", synthOut, "output directory");
    synthCmd->add_option("--bags", spec.numBags)->check(CLI::PositiveNumber);
    synthCmd->add_option("--instances", spec.numInstances)->check(CLI::PositiveNumber);
    synthCmd->add_option("--labels", spec.numLabels)->check(CLI::PositiveNumber);
    synthCmd->add_option("--aux", spec.numAux)->check(CLI::PositiveNumber);
    synthCmd->add_option("--rank", spec.rank)->check(CLI::PositiveNumber);
    synthCmd->add_option("--sigma", spec.sigma);
    synthCmd->add_option("--density", spec.density);
    synthCmd->add_option("--planted-aux", spec.plantedAuxRelations);
    synthCmd->add_option("--noise-relations", spec.noiseRelations);
    synthCmd->add_option("--label-views", spec.labelViews);
    synthCmd->add_option("--noise-views", spec.noiseViews);
    synthCmd->add_flag("--complementary-aux", spec.complementaryAux);
    synthCmd->add_flag("--complementary-views", spec.complementaryViews);
    synthCmd->add_flag("--declare-instance-labels", spec.declareInstanceLabels);
    synthCmd->add_option("--target", synthTarget, "bag | instance");
    synthCmd->add_option("--positive-rate", spec.positiveRate);
    synthCmd->add_option("--seed", spec.seed);
    synthCmd->add_flag("--no-truth", noTruth, "skip the groundtruth directory");
    synthCmd->add_option("--record", synthRecord, "run record path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (fitCmd->parsed()) return runFit(fitFlags, fitOut, fitScoresOut, fitRecord);
        if (cvCmd->parsed()) {
            if (cvUnit == "entries") plan.unit = m4l::FoldPlan::Unit::Entries;
            else if (cvUnit == "rows") plan.unit = m4l::FoldPlan::Unit::Rows;
            else throw m4l::DataError("unknown fold unit '" + cvUnit + "'");
            return runCv(cvFlags, plan, cvOptions(scoreSource, aggregation, kPolicy, f1Axis),
                         cvOut, comparePaths, cvRecord);
        }
        if (sweepCmd->parsed()) {
            if (!sweepParam.empty()) {
                if (!alphas.empty() || !betas.empty())
                    throw m4l::DataError("--param excludes --alphas/--betas");
                std::vector<double> vals;
                std::stringstream ss(sweepValues);
                std::string item;
                while (std::getline(ss, item, ','))
                    if (!item.empty()) vals.push_back(std::stod(item));
                if (vals.empty()) throw m4l::DataError("--param requires --values");
                if (sweepParam == "alpha") alphas = vals;
                else if (sweepParam == "beta") betas = vals;
                else if (sweepParam == "d")
                    for (double v : vals) dValues.push_back(static_cast<int>(v));
                else throw m4l::DataError("unknown sweep parameter '" + sweepParam + "'");
            }
            if (alphas.empty()) alphas = {sweepFlags.alpha};
            if (betas.empty()) betas = {sweepFlags.beta};
            if (dValues.empty()) dValues = {sweepFlags.rank};
            return runSweep(sweepFlags, sweepPlan, alphas, betas, dValues, sweepOut, jobs,
                            sweepRecord);
        }
        if (synthCmd->parsed()) {
            if (synthTarget == "bag") spec.bagTarget = true;
            else if (synthTarget == "instance") spec.bagTarget = false;
            else throw m4l::DataError("unknown target '" + synthTarget + "'");
            return runSynth(spec, synthOut, synthRecord, !noTruth);
        }
    } catch (const m4l::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const m4l::NumericError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
