#include "m4l/graph.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace m4l {

namespace {

std::string relName(int i, int j) {
    std::ostringstream os;
    os << "R(" << i << "," << j << ")";
    return os.str();
}

std::string viewName(int p, int t) {
    std::ostringstream os;
    os << "Theta(" << p << "," << t << ")";
    return os.str();
}

bool isZeroOne(const Dense& m) {
    return ((m.array() == 0.0) || (m.array() == 1.0)).all();
}

}  // namespace

int FusionGraph::maxViews() const {
    int tau = 0;
    for (const auto& v : views) tau = std::max(tau, v.viewIndex);
    return tau;
}

std::vector<std::string> validate(const FusionGraph& graph, MembershipPolicy policy) {
    std::vector<std::string> out;
    const int m = graph.numTypes();

    if (m == 0) {
        out.push_back("graph declares no object types");
        return out;
    }
    std::set<int> ids;
    for (const auto& t : graph.types) {
        if (!ids.insert(t.id).second) out.push_back("duplicate type id " + std::to_string(t.id));
        if (t.cardinality < 1)
            out.push_back("type " + std::to_string(t.id) + " has cardinality < 1");
    }
    for (int i = 1; i <= m; ++i)
        if (!ids.count(i)) out.push_back("type ids not contiguous: missing id " + std::to_string(i));
    if (!out.empty()) return out;  // shape checks below assume ids resolve

    auto knownType = [&](int id) { return id >= 1 && id <= m; };

    std::set<std::pair<int, int>> relKeys;
    for (const auto& r : graph.relations) {
        if (!knownType(r.source) || !knownType(r.target)) {
            out.push_back(relName(r.source, r.target) + ": unknown type id");
            continue;
        }
        if (!relKeys.insert({r.source, r.target}).second)
            out.push_back(relName(r.source, r.target) + ": declared more than once");
        const auto nr = graph.cardinality(r.source);
        const auto nc = graph.cardinality(r.target);
        if (r.matrix.rows() != nr || r.matrix.cols() != nc) {
            std::ostringstream os;
            os << relName(r.source, r.target) << ": shape " << r.matrix.rows() << "x"
               << r.matrix.cols() << " does not match cardinalities " << nr << "x" << nc;
            out.push_back(os.str());
            continue;
        }
        if (r.matrix.minCoeff() < 0.0)
            out.push_back(relName(r.source, r.target) + ": relation entries must be nonnegative");
        if (r.observedMask) {
            if (r.observedMask->rows() != nr || r.observedMask->cols() != nc)
                out.push_back(relName(r.source, r.target) + ": observedMask shape mismatch");
            else if (!isZeroOne(*r.observedMask))
                out.push_back(relName(r.source, r.target) + ": observedMask must be 0/1");
        }
    }

    std::set<std::pair<int, int>> viewKeys;
    for (const auto& v : graph.views) {
        if (!knownType(v.type)) {
            out.push_back(viewName(v.type, v.viewIndex) + ": unknown type id");
            continue;
        }
        if (v.viewIndex < 1) out.push_back(viewName(v.type, v.viewIndex) + ": view index must be >= 1");
        if (!viewKeys.insert({v.type, v.viewIndex}).second)
            out.push_back(viewName(v.type, v.viewIndex) + ": declared more than once");
        const auto n = graph.cardinality(v.type);
        if (v.matrix.rows() != n || v.matrix.cols() != n) {
            std::ostringstream os;
            os << viewName(v.type, v.viewIndex) << ": must be " << n << "x" << n << ", got "
               << v.matrix.rows() << "x" << v.matrix.cols();
            out.push_back(os.str());
        }
    }

    // structural roles
    for (auto [label, id] : {std::pair<const char*, int>{"bagType", graph.bagType},
                             {"instanceType", graph.instanceType},
                             {"labelType", graph.labelType}}) {
        if (!knownType(id)) out.push_back(std::string(label) + " is not a declared type id");
    }
    if (!out.empty()) return out;

    if (graph.bagType == graph.instanceType || graph.bagType == graph.labelType ||
        graph.instanceType == graph.labelType)
        out.push_back("bag, instance and label types must be distinct");

    const auto membership = relKeys.count({graph.bagType, graph.instanceType});
    if (!membership) {
        out.push_back("bag-instance relation " + relName(graph.bagType, graph.instanceType) +
                      " is missing");
    } else {
        for (const auto& r : graph.relations) {
            if (r.source != graph.bagType || r.target != graph.instanceType) continue;
            if (!isZeroOne(r.matrix.dense())) {
                out.push_back("bag-instance matrix must be 0/1");
            } else if (policy == MembershipPolicy::Exclusive) {
                Eigen::VectorXd colSums = r.matrix.dense().colwise().sum();
                for (Eigen::Index c = 0; c < colSums.size(); ++c) {
                    if (colSums(c) != 1.0) {
                        std::ostringstream os;
                        os << "exclusive membership: instance " << c << " belongs to "
                           << colSums(c) << " bags";
                        out.push_back(os.str());
                        break;
                    }
                }
            }
        }
    }

    if (!relKeys.count({graph.bagType, graph.labelType}))
        out.push_back("bag-label relation " + relName(graph.bagType, graph.labelType) +
                      " is missing");

    const std::pair<int, int> bagTarget{graph.bagType, graph.labelType};
    const std::pair<int, int> instTarget{graph.instanceType, graph.labelType};
    if (graph.targetRelation != bagTarget && graph.targetRelation != instTarget)
        out.push_back("target relation must be (bag,label) or (instance,label)");
    else if (!relKeys.count(graph.targetRelation))
        out.push_back("target relation " +
                      relName(graph.targetRelation.first, graph.targetRelation.second) +
                      " is not declared");

    return out;
}

BlockIndex::BlockIndex(const FusionGraph& graph) : graph_(&graph) {
    const int m = graph.numTypes();
    targets_.assign(m + 1, {});
    viewCounts_.assign(m + 1, 0);
    for (const auto& r : graph.relations) {
        relations_[{r.source, r.target}] = &r;
        targets_[r.source].push_back(r.target);
    }
    for (auto& t : targets_) std::sort(t.begin(), t.end());
    for (const auto& v : graph.views) {
        views_[{v.type, v.viewIndex}] = &v;
        viewCounts_[v.type] = std::max(viewCounts_[v.type], v.viewIndex);
    }
}

void BlockIndex::checkType(int id) const {
    if (id < 1 || id > graph_->numTypes())
        throw DataError("unknown type id " + std::to_string(id));
}

const InterRelation* BlockIndex::relation(int i, int j) const {
    checkType(i);
    checkType(j);
    auto it = relations_.find({i, j});
    return it == relations_.end() ? nullptr : it->second;
}

const IntraView* BlockIndex::view(int p, int t) const {
    checkType(p);
    auto it = views_.find({p, t});
    return it == views_.end() ? nullptr : it->second;
}

int BlockIndex::viewCount(int p) const {
    checkType(p);
    return viewCounts_[p];
}

const std::vector<int>& BlockIndex::targetsOf(int i) const {
    checkType(i);
    return targets_[i];
}

const InterRelation& BlockIndex::membership() const {
    const auto* r = relation(graph_->bagType, graph_->instanceType);
    if (!r) throw DataError("bag-instance relation is missing");
    return *r;
}

const InterRelation& BlockIndex::supervision() const {
    const auto* r = relation(graph_->bagType, graph_->labelType);
    if (!r) throw DataError("bag-label relation is missing");
    return *r;
}

}  // namespace m4l
