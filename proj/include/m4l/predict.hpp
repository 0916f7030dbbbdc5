#pragma once

#include <optional>

#include "m4l/graph.hpp"
#include "m4l/solver.hpp"

namespace m4l {

// Reconstructed association scores for one ordered type pair, optionally
// with a top-K binarization.
struct ScoreMatrix {
    int sourceType = 0;
    int targetType = 0;
    Dense scores;
    std::optional<Dense> binarized;
    int k = 0;
};

// G_i S_ij G_j^T for a core present in the model (declared relation, or the
// dispatch-created instance-label core).
ScoreMatrix reconstruct(const FactorModel& model, int i, int j);

enum class BagAggregation {
    Sum,   // R_bi * instance scores
    Mean,  // row-normalized by bag size
};

// Bag-level scores aggregated from instance-level predictions through the
// membership matrix. Empty bags get all-zero rows.
ScoreMatrix aggregateBagScores(const FactorModel& model, const FusionGraph& graph,
                               BagAggregation aggregation = BagAggregation::Sum);

// Marks the k largest entries of each row as 1; ties break toward the lower
// column index.
ScoreMatrix topK(ScoreMatrix scores, int k);

enum class NextIntegerPolicy {
    Ceiling,       // ceil(x); integral averages map to themselves
    FloorPlusOne,  // floor(x)+1; integral averages bump up
};

// K from the average number of labels per labeled row, never below 1.
// Rows with no observed entry (all-false mask row) do not count.
int chooseK(const Dense& trainLabels, const Dense* observedMask = nullptr,
            NextIntegerPolicy policy = NextIntegerPolicy::Ceiling);

}  // namespace m4l
