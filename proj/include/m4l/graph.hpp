#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "m4l/matrix.hpp"

namespace m4l {

// One class of objects in the fusion graph. Ids are 1-based and contiguous.
struct ObjectType {
    int id = 0;
    std::string name;
    Eigen::Index cardinality = 0;
};

// Observed associations between two object types; (i,j) and (j,i) are
// distinct. A missing observedMask means every entry is observed; masked-out
// entries are unknown, unmasked zeros are known negatives.
struct InterRelation {
    int source = 0;
    int target = 0;
    Matrix matrix;
    std::optional<Dense> observedMask;  // 0/1, same shape as matrix
};

// Signed similarity-structure matrix within one type: positive entries are
// cannot-link pairs, negative entries mark similar pairs.
struct IntraView {
    int type = 0;
    int viewIndex = 0;  // 1-based within the type
    Matrix matrix;
};

// The typed-object network plus its structural roles. Immutable by
// convention after validate() passes; safe for concurrent reads.
struct FusionGraph {
    std::vector<ObjectType> types;
    std::vector<InterRelation> relations;
    std::vector<IntraView> views;
    int bagType = 0;
    int instanceType = 0;
    int labelType = 0;
    std::pair<int, int> targetRelation{0, 0};

    int numTypes() const { return static_cast<int>(types.size()); }
    Eigen::Index cardinality(int typeId) const { return types.at(typeId - 1).cardinality; }
    // Largest view count over all types (tau).
    int maxViews() const;
};

enum class MembershipPolicy {
    Shared,     // an instance may belong to several bags
    Exclusive,  // every instance belongs to exactly one bag
};

// Structural diagnostics; empty means the graph is well-formed.
std::vector<std::string> validate(const FusionGraph& graph,
                                  MembershipPolicy policy = MembershipPolicy::Shared);

// O(1) block lookup over a validated graph. Absent blocks come back as
// nullptr, distinct from declared all-zero matrices; unknown type ids throw.
class BlockIndex {
public:
    explicit BlockIndex(const FusionGraph& graph);

    const InterRelation* relation(int i, int j) const;
    const IntraView* view(int p, int t) const;
    int viewCount(int p) const;  // t_p

    // Declared relation targets j for source type i, ascending.
    const std::vector<int>& targetsOf(int i) const;

    const InterRelation& membership() const;  // (bag, instance), guaranteed by validate
    const InterRelation& supervision() const; // (bag, label)

private:
    void checkType(int id) const;

    const FusionGraph* graph_;
    std::map<std::pair<int, int>, const InterRelation*> relations_;
    std::map<std::pair<int, int>, const IntraView*> views_;
    std::vector<std::vector<int>> targets_;
    std::vector<int> viewCounts_;
};

}  // namespace m4l
