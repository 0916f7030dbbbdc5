#include "m4l/predict.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace m4l {

ScoreMatrix reconstruct(const FactorModel& model, int i, int j) {
    auto it = model.S.find({i, j});
    if (it == model.S.end())
        throw DataError("reconstruct: no core for relation (" + std::to_string(i) + "," +
                        std::to_string(j) + ")");
    ScoreMatrix out;
    out.sourceType = i;
    out.targetType = j;
    out.scores = matmul(matmul(model.g(i), it->second), model.g(j).transpose());
    return out;
}

ScoreMatrix aggregateBagScores(const FactorModel& model, const FusionGraph& graph,
                               BagAggregation aggregation) {
    BlockIndex index(graph);
    const InterRelation* membership = index.relation(graph.bagType, graph.instanceType);
    if (!membership) throw DataError("aggregateBagScores: membership matrix is missing");

    ScoreMatrix instance = reconstruct(model, graph.instanceType, graph.labelType);
    ScoreMatrix out;
    out.sourceType = graph.bagType;
    out.targetType = graph.labelType;
    out.scores = matmul(membership->matrix, Matrix(instance.scores)).dense();
    if (aggregation == BagAggregation::Mean) {
        Eigen::VectorXd sizes = membership->matrix.dense().rowwise().sum();
        for (Eigen::Index r = 0; r < out.scores.rows(); ++r)
            if (sizes(r) > 0.0) out.scores.row(r) /= sizes(r);
    }
    return out;
}

ScoreMatrix topK(ScoreMatrix scores, int k) {
    if (k < 1) throw DataError("topK: k must be >= 1");
    const Eigen::Index rows = scores.scores.rows();
    const Eigen::Index cols = scores.scores.cols();
    Dense bin = Dense::Zero(rows, cols);
    std::vector<Eigen::Index> order(static_cast<size_t>(cols));
    for (Eigen::Index r = 0; r < rows; ++r) {
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
            return scores.scores(r, a) > scores.scores(r, b);
        });
        Eigen::Index take = std::min<Eigen::Index>(k, cols);
        for (Eigen::Index t = 0; t < take; ++t) {
            if (!std::isfinite(scores.scores(r, order[t]))) break;  // fewer finite scores than k
            bin(r, order[t]) = 1.0;
        }
    }
    scores.binarized = std::move(bin);
    scores.k = k;
    return scores;
}

int chooseK(const Dense& trainLabels, const Dense* observedMask, NextIntegerPolicy policy) {
    if (observedMask &&
        (observedMask->rows() != trainLabels.rows() || observedMask->cols() != trainLabels.cols()))
        throw DataError("chooseK: mask shape mismatch");
    double positives = 0.0;
    Eigen::Index labeledRows = 0;
    for (Eigen::Index r = 0; r < trainLabels.rows(); ++r) {
        bool any = false;
        for (Eigen::Index c = 0; c < trainLabels.cols(); ++c) {
            const bool observed = !observedMask || (*observedMask)(r, c) != 0.0;
            if (!observed) continue;
            any = true;
            if (trainLabels(r, c) > 0.0) positives += 1.0;
        }
        if (any) ++labeledRows;
    }
    if (labeledRows == 0) throw DataError("chooseK: no labeled rows");
    const double avg = positives / static_cast<double>(labeledRows);
    double k = (policy == NextIntegerPolicy::Ceiling) ? std::ceil(avg) : std::floor(avg) + 1.0;
    return std::max(1, static_cast<int>(k));
}

}  // namespace m4l
