#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "m4l/eval.hpp"
#include "m4l/graph.hpp"
#include "m4l/solver.hpp"

namespace m4l {

// Plain-text matrix file: header "# rows cols dense|sparse", then either
// whitespace-separated dense rows or 0-based "row col value" triplets.
Dense readDenseFile(const std::filesystem::path& path, bool allowNegative);
Matrix readMatrixFile(const std::filesystem::path& path, bool allowNegative);
void writeMatrixFile(const std::filesystem::path& path, const Matrix& matrix);
void writeMatrixFile(const std::filesystem::path& path, const Dense& matrix);

// Manifest: bracketed sections ([graph], [type], [relation], [view]) of
// "key = value" lines; grammar documented in the README. Paths are relative
// to the manifest's directory.
FusionGraph loadGraph(const std::filesystem::path& manifestPath);
void saveGraph(const FusionGraph& graph, const std::filesystem::path& directory);

// Factor-model round trip at 17 significant digits.
void saveModel(const FactorModel& model, const std::filesystem::path& path);
FactorModel loadModel(const std::filesystem::path& path);

void saveReport(const EvalReport& report, const std::filesystem::path& path);
std::vector<FoldMetrics> loadReportSamples(const std::filesystem::path& path);

// Synthetic fusion-graph generator: plants nonnegative factors, derives
// binary instance labels by thresholding, lifts them to bags through the
// membership partition, and optionally injects structured or pure-noise
// auxiliary relations and signed label views.
struct SyntheticSpec {
    Eigen::Index numBags = 30;
    Eigen::Index numInstances = 60;
    Eigen::Index numLabels = 10;
    Eigen::Index numAux = 20;    // cardinality of every auxiliary type
    int rank = 3;                // planted factor rank
    double sigma = 0.01;         // additive Gaussian noise, clipped at 0
    double density = 1.0;        // observed fraction of the target relation
    int plantedAuxRelations = 0; // structured instance-aux relations
    int noiseRelations = 0;      // i.i.d. uniform instance-aux relations
    int labelViews = 0;          // planted signed label-correlation views
    int noiseViews = 0;          // random signed label views
    // Restrict each planted aux relation / label view to a rotating
    // two-column band of the planted factors, so the sources carry
    // complementary rather than redundant structure.
    bool complementaryAux = false;
    bool complementaryViews = false;
    bool declareInstanceLabels = false;
    bool bagTarget = true;       // target (bag,label) vs (instance,label)
    double positiveRate = 0.25;  // positive fraction of the instance-label matrix
    std::uint64_t seed = 0;
};

struct SyntheticTruth {
    std::map<int, Dense> factors;                 // planted G* by type id
    std::map<std::pair<int, int>, Dense> cores;   // planted S* by relation
    std::map<std::pair<int, int>, Dense> clean;   // noise-free real-valued relations
    Dense instanceLabels;                         // binary instance-label matrix
    Dense bagLabels;                              // binary bag-label matrix
};

struct SyntheticData {
    FusionGraph graph;
    SyntheticTruth truth;
};

SyntheticData generateSynthetic(const SyntheticSpec& spec);

}  // namespace m4l
