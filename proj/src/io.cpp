#include "m4l/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "m4l/rng.hpp"

namespace m4l {

namespace fs = std::filesystem;

namespace {

constexpr double kSparseLoadThreshold = 0.05;

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

[[noreturn]] void parseFail(const fs::path& path, int line, const std::string& msg) {
    std::ostringstream os;
    os << path.string() << ":" << line << ": " << msg;
    throw DataError(os.str());
}

struct MatrixFile {
    Eigen::Index rows = 0, cols = 0;
    bool sparseFormat = false;
    std::vector<Triplet> triplets;  // sparse
    Dense dense;                    // dense
};

MatrixFile parseMatrixFile(const fs::path& path, bool allowNegative) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open matrix file " + path.string());

    std::string header;
    if (!std::getline(in, header)) parseFail(path, 1, "empty file");
    std::istringstream hs(header);
    std::string hash, format;
    MatrixFile mf;
    if (!(hs >> hash >> mf.rows >> mf.cols >> format) || hash != "#")
        parseFail(path, 1, "expected header '# rows cols dense|sparse'");
    if (mf.rows < 0 || mf.cols < 0) parseFail(path, 1, "negative dimensions");
    if (format == "sparse") mf.sparseFormat = true;
    else if (format != "dense") parseFail(path, 1, "unknown format '" + format + "'");

    int lineNo = 1;
    if (mf.sparseFormat) {
        std::map<std::pair<Eigen::Index, Eigen::Index>, int> seen;
        std::string line;
        while (std::getline(in, line)) {
            ++lineNo;
            if (line.empty()) continue;
            std::istringstream ls(line);
            Eigen::Index r, c;
            double v;
            if (!(ls >> r >> c >> v)) parseFail(path, lineNo, "expected 'row col value'");
            if (r < 0 || r >= mf.rows || c < 0 || c >= mf.cols)
                parseFail(path, lineNo, "index out of range");
            if (!allowNegative && v < 0.0)
                parseFail(path, lineNo, "negative value in a relation file");
            auto [it, fresh] = seen.insert({{r, c}, lineNo});
            if (!fresh) {
                std::ostringstream os;
                os << "duplicate entry (" << r << "," << c << "), first seen at line "
                   << it->second;
                parseFail(path, lineNo, os.str());
            }
            mf.triplets.emplace_back(static_cast<int>(r), static_cast<int>(c), v);
        }
    } else {
        mf.dense.resize(mf.rows, mf.cols);
        for (Eigen::Index r = 0; r < mf.rows; ++r) {
            std::string line;
            do {
                if (!std::getline(in, line)) parseFail(path, lineNo, "unexpected end of file");
                ++lineNo;
            } while (line.empty());
            std::istringstream ls(line);
            for (Eigen::Index c = 0; c < mf.cols; ++c) {
                double v;
                if (!(ls >> v)) parseFail(path, lineNo, "expected a numeric value");
                if (!allowNegative && v < 0.0)
                    parseFail(path, lineNo, "negative value in a relation file");
                mf.dense(r, c) = v;
            }
            double extra;
            if (ls >> extra) parseFail(path, lineNo, "extra values on row");
        }
    }
    return mf;
}

}  // namespace

Dense readDenseFile(const fs::path& path, bool allowNegative) {
    MatrixFile mf = parseMatrixFile(path, allowNegative);
    if (!mf.sparseFormat) return mf.dense;
    Dense out = Dense::Zero(mf.rows, mf.cols);
    for (const auto& t : mf.triplets) out(t.row(), t.col()) = t.value();
    return out;
}

Matrix readMatrixFile(const fs::path& path, bool allowNegative) {
    MatrixFile mf = parseMatrixFile(path, allowNegative);
    if (mf.sparseFormat) {
        const double size = static_cast<double>(mf.rows) * static_cast<double>(mf.cols);
        const double density = size > 0 ? static_cast<double>(mf.triplets.size()) / size : 1.0;
        return Matrix::fromTriplets(mf.rows, mf.cols, mf.triplets,
                                    density < kSparseLoadThreshold);
    }
    return Matrix(std::move(mf.dense));
}

void writeMatrixFile(const fs::path& path, const Matrix& matrix) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    if (matrix.isSparse()) {
        out << "# " << matrix.rows() << " " << matrix.cols() << " sparse\n";
        const auto& sp = matrix.sparse();
        for (int k = 0; k < sp.outerSize(); ++k)
            for (SparseStore::InnerIterator it(sp, k); it; ++it)
                out << it.row() << " " << it.col() << " " << fmt17(it.value()) << "\n";
    } else {
        const Dense& d = matrix.dense();
        out << "# " << d.rows() << " " << d.cols() << " dense\n";
        for (Eigen::Index r = 0; r < d.rows(); ++r) {
            for (Eigen::Index c = 0; c < d.cols(); ++c) {
                if (c) out << " ";
                out << fmt17(d(r, c));
            }
            out << "\n";
        }
    }
    if (!out) throw DataError("write failed for " + path.string());
}

void writeMatrixFile(const fs::path& path, const Dense& matrix) {
    writeMatrixFile(path, Matrix(matrix));
}

namespace {

struct Section {
    std::string name;
    int line = 0;
    std::map<std::string, std::pair<std::string, int>> kv;  // key -> (value, line)
};

std::vector<Section> parseSections(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest " + path.string());
    std::vector<Section> sections;
    std::string line;
    int lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        // trim
        auto notSpace = [](unsigned char ch) { return !std::isspace(ch); };
        line.erase(line.begin(), std::find_if(line.begin(), line.end(), notSpace));
        line.erase(std::find_if(line.rbegin(), line.rend(), notSpace).base(), line.end());
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') parseFail(path, lineNo, "unterminated section header");
            sections.push_back({line.substr(1, line.size() - 2), lineNo, {}});
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) parseFail(path, lineNo, "expected 'key = value'");
        if (sections.empty()) parseFail(path, lineNo, "key outside of any section");
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        key.erase(std::find_if(key.rbegin(), key.rend(), notSpace).base(), key.end());
        value.erase(value.begin(), std::find_if(value.begin(), value.end(), notSpace));
        if (!sections.back().kv.insert({key, {value, lineNo}}).second)
            parseFail(path, lineNo, "duplicate key '" + key + "' in section");
    }
    return sections;
}

const std::pair<std::string, int>& need(const fs::path& path, const Section& s,
                                        const std::string& key) {
    auto it = s.kv.find(key);
    if (it == s.kv.end())
        parseFail(path, s.line, "section [" + s.name + "] is missing key '" + key + "'");
    return it->second;
}

int needInt(const fs::path& path, const Section& s, const std::string& key) {
    const auto& [value, line] = need(path, s, key);
    try {
        std::size_t used = 0;
        int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        parseFail(path, line, "key '" + key + "' must be an integer, got '" + value + "'");
    }
}

}  // namespace

FusionGraph loadGraph(const fs::path& manifestPath) {
    const fs::path dir = manifestPath.parent_path();
    FusionGraph graph;
    bool haveGraphSection = false;

    for (const auto& s : parseSections(manifestPath)) {
        if (s.name == "graph") {
            haveGraphSection = true;
            graph.bagType = needInt(manifestPath, s, "bag");
            graph.instanceType = needInt(manifestPath, s, "instance");
            graph.labelType = needInt(manifestPath, s, "label");
            const auto& [tv, tline] = need(manifestPath, s, "target");
            std::istringstream ts(tv);
            if (!(ts >> graph.targetRelation.first >> graph.targetRelation.second))
                parseFail(manifestPath, tline, "target must be two type ids");
        } else if (s.name == "type") {
            ObjectType t;
            t.id = needInt(manifestPath, s, "id");
            t.name = need(manifestPath, s, "name").first;
            t.cardinality = needInt(manifestPath, s, "cardinality");
            graph.types.push_back(std::move(t));
        } else if (s.name == "relation") {
            InterRelation r;
            r.source = needInt(manifestPath, s, "source");
            r.target = needInt(manifestPath, s, "target");
            r.matrix = readMatrixFile(dir / need(manifestPath, s, "file").first,
                                      /*allowNegative=*/false);
            if (auto it = s.kv.find("mask"); it != s.kv.end())
                r.observedMask = readDenseFile(dir / it->second.first, /*allowNegative=*/false);
            graph.relations.push_back(std::move(r));
        } else if (s.name == "view") {
            IntraView v;
            v.type = needInt(manifestPath, s, "type");
            v.viewIndex = needInt(manifestPath, s, "index");
            v.matrix = readMatrixFile(dir / need(manifestPath, s, "file").first,
                                      /*allowNegative=*/true);
            graph.views.push_back(std::move(v));
        } else {
            parseFail(manifestPath, s.line, "unknown section [" + s.name + "]");
        }
    }
    if (!haveGraphSection)
        throw DataError(manifestPath.string() + ": manifest has no [graph] section");

    auto violations = validate(graph);
    if (!violations.empty()) {
        std::ostringstream os;
        os << manifestPath.string() << ": graph is invalid:";
        for (const auto& v : violations) os << "\n  - " << v;
        throw DataError(os.str());
    }
    return graph;
}

void saveGraph(const FusionGraph& graph, const fs::path& directory) {
    fs::create_directories(directory);
    std::ofstream mf(directory / "manifest.mf");
    if (!mf) throw DataError("cannot write manifest in " + directory.string());

    mf << "[graph]\n";
    mf << "bag = " << graph.bagType << "\n";
    mf << "instance = " << graph.instanceType << "\n";
    mf << "label = " << graph.labelType << "\n";
    mf << "target = " << graph.targetRelation.first << " " << graph.targetRelation.second
       << "\n";
    for (const auto& t : graph.types) {
        mf << "\n[type]\nid = " << t.id << "\nname = " << t.name
           << "\ncardinality = " << t.cardinality << "\n";
    }
    for (const auto& r : graph.relations) {
        std::ostringstream base;
        base << "r_" << r.source << "_" << r.target;
        writeMatrixFile(directory / (base.str() + ".txt"), r.matrix);
        mf << "\n[relation]\nsource = " << r.source << "\ntarget = " << r.target
           << "\nfile = " << base.str() << ".txt\n";
        if (r.observedMask) {
            writeMatrixFile(directory / (base.str() + ".mask.txt"), *r.observedMask);
            mf << "mask = " << base.str() << ".mask.txt\n";
        }
    }
    for (const auto& v : graph.views) {
        std::ostringstream base;
        base << "theta_" << v.type << "_" << v.viewIndex;
        writeMatrixFile(directory / (base.str() + ".txt"), v.matrix);
        mf << "\n[view]\ntype = " << v.type << "\nindex = " << v.viewIndex
           << "\nfile = " << base.str() << ".txt\n";
    }
}

namespace {

void writeDenseBlock(std::ofstream& out, const Dense& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c) out << " ";
            out << fmt17(m(r, c));
        }
        out << "\n";
    }
}

Dense readDenseBlock(std::ifstream& in, const fs::path& path, Eigen::Index rows,
                     Eigen::Index cols, const char* what) {
    Dense m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            if (!(in >> m(r, c)))
                throw DataError(path.string() + ": truncated " + what + " block");
    return m;
}

}  // namespace

void saveModel(const FactorModel& model, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write model file " + path.string());
    const int m = static_cast<int>(model.G.size());
    out << "# m4l model 1\n";
    out << "types " << m << "\n";
    out << "ranks";
    for (const auto& g : model.G) out << " " << g.cols();
    out << "\n";
    for (int t = 1; t <= m; ++t) {
        const Dense& g = model.g(t);
        out << "G " << t << " " << g.rows() << " " << g.cols() << "\n";
        writeDenseBlock(out, g);
    }
    for (const auto& [key, s] : model.S) {
        out << "S " << key.first << " " << key.second << " " << s.rows() << " " << s.cols()
            << "\n";
        writeDenseBlock(out, s);
    }
    out << "Wr " << model.Wr.rows() << " " << model.Wr.cols() << "\n";
    writeDenseBlock(out, model.Wr);
    out << "Wh " << model.Wh.rows() << " " << model.Wh.cols() << "\n";
    writeDenseBlock(out, model.Wh);
    out << "history " << model.history.size();
    for (double h : model.history) out << " " << fmt17(h);
    out << "\nend\n";
    if (!out) throw DataError("write failed for " + path.string());
}

FactorModel loadModel(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file " + path.string());
    std::string header;
    std::getline(in, header);
    if (header != "# m4l model 1")
        throw DataError(path.string() + ": not an m4l model file (bad header)");

    std::string tok;
    int m = 0;
    if (!(in >> tok >> m) || tok != "types" || m <= 0)
        throw DataError(path.string() + ": malformed 'types' line");
    std::vector<Eigen::Index> ranks(m);
    if (!(in >> tok) || tok != "ranks") throw DataError(path.string() + ": missing 'ranks' line");
    for (auto& k : ranks)
        if (!(in >> k) || k < 1) throw DataError(path.string() + ": malformed rank header");

    FactorModel model;
    model.G.resize(m);
    std::vector<bool> seen(m, false);

    while (in >> tok) {
        if (tok == "G") {
            int t;
            Eigen::Index rows, cols;
            if (!(in >> t >> rows >> cols) || t < 1 || t > m)
                throw DataError(path.string() + ": malformed G header");
            if (cols != ranks[t - 1])
                throw DataError(path.string() + ": G block for type " + std::to_string(t) +
                                " disagrees with the rank header");
            model.G[t - 1] = readDenseBlock(in, path, rows, cols, "G");
            seen[t - 1] = true;
        } else if (tok == "S") {
            int i, j;
            Eigen::Index rows, cols;
            if (!(in >> i >> j >> rows >> cols))
                throw DataError(path.string() + ": malformed S header");
            model.S[{i, j}] = readDenseBlock(in, path, rows, cols, "S");
        } else if (tok == "Wr") {
            Eigen::Index rows, cols;
            if (!(in >> rows >> cols)) throw DataError(path.string() + ": malformed Wr header");
            model.Wr = readDenseBlock(in, path, rows, cols, "Wr");
        } else if (tok == "Wh") {
            Eigen::Index rows, cols;
            if (!(in >> rows >> cols)) throw DataError(path.string() + ": malformed Wh header");
            model.Wh = readDenseBlock(in, path, rows, cols, "Wh");
        } else if (tok == "history") {
            std::size_t n;
            if (!(in >> n)) throw DataError(path.string() + ": malformed history header");
            model.history.resize(n);
            for (auto& h : model.history)
                if (!(in >> h)) throw DataError(path.string() + ": truncated history");
        } else if (tok == "end") {
            for (int t = 0; t < m; ++t)
                if (!seen[t])
                    throw DataError(path.string() + ": missing G block for type " +
                                    std::to_string(t + 1));
            return model;
        } else {
            throw DataError(path.string() + ": unexpected token '" + tok + "'");
        }
    }
    throw DataError(path.string() + ": missing 'end' marker");
}

void saveReport(const EvalReport& report, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write report file " + path.string());
    out << "# m4l cv report 1\n";
    out << "plan folds " << report.plan.numFolds << " rounds " << report.plan.numRounds
        << " unit " << (report.plan.unit == FoldPlan::Unit::Entries ? "entries" : "rows")
        << " seed " << report.plan.seed << "\n";
    out << "metrics avgf1 auroc auprc\n";
    out << "k " << report.chosenK << "\n";
    for (const auto& s : report.samples)
        out << "sample " << s.round << " " << s.fold << " " << fmt17(s.avgF1) << " "
            << fmt17(s.auroc) << " " << fmt17(s.auprc) << "\n";
    for (std::size_t r = 0; r < report.roundMean.size(); ++r)
        out << "round_mean " << r << " " << fmt17(report.roundMean[r][0]) << " "
            << fmt17(report.roundMean[r][1]) << " " << fmt17(report.roundMean[r][2]) << "\n";
    out << "mean " << fmt17(report.mean[0]) << " " << fmt17(report.mean[1]) << " "
        << fmt17(report.mean[2]) << "\n";
    out << "std " << fmt17(report.stddev[0]) << " " << fmt17(report.stddev[1]) << " "
        << fmt17(report.stddev[2]) << "\n";

    char line[256];
    std::snprintf(line, sizeof(line),
                  "summary AvgF1 %.3f±%.3f AUROC %.3f±%.3f AUPRC %.3f±%.3f\n",
                  report.mean[0], report.stddev[0], report.mean[1], report.stddev[1],
                  report.mean[2], report.stddev[2]);
    out << line;

    static const char* metricNames[3] = {"avgf1", "auroc", "auprc"};
    for (const auto& cmp : report.comparisons) {
        for (int k = 0; k < 3; ++k) {
            const auto& t = cmp.tests[k];
            out << "compare " << cmp.name << " " << metricNames[k] << " t " << fmt17(t.t)
                << " p " << fmt17(t.pValue) << " significant " << (t.significantAt95 ? 1 : 0)
                << " direction " << (t.direction > 0 ? "gt" : (t.direction < 0 ? "lt" : "eq"))
                << "\n";
        }
    }
    if (!out) throw DataError("write failed for " + path.string());
}

std::vector<FoldMetrics> loadReportSamples(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open report file " + path.string());
    std::vector<FoldMetrics> samples;
    std::string line;
    int lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.rfind("sample ", 0) != 0) continue;
        std::istringstream ls(line);
        std::string tag;
        FoldMetrics fm;
        if (!(ls >> tag >> fm.round >> fm.fold >> fm.avgF1 >> fm.auroc >> fm.auprc))
            parseFail(path, lineNo, "malformed sample line");
        samples.push_back(fm);
    }
    if (samples.empty()) throw DataError(path.string() + ": no sample lines found");
    return samples;
}

// --- synthetic generator --------------------------------------------------

namespace {

Dense uniformMatrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Dense m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform01();
    return m;
}

Dense noisyClip(Rng& rng, const Dense& clean, double sigma) {
    if (sigma <= 0.0) return clean;
    Dense out = clean;
    for (Eigen::Index r = 0; r < out.rows(); ++r)
        for (Eigen::Index c = 0; c < out.cols(); ++c)
            out(r, c) = std::max(out(r, c) + rng.normal(0.0, sigma), 0.0);
    return out;
}

double quantile(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    const auto idx = static_cast<std::size_t>(q * static_cast<double>(values.size() - 1));
    return values[idx];
}

// Exact-count Bernoulli mask: precisely round(density * size) observed entries.
Dense observationMask(Rng& rng, Eigen::Index rows, Eigen::Index cols, double density) {
    const auto size = static_cast<std::size_t>(rows * cols);
    auto keep = static_cast<std::size_t>(std::llround(density * static_cast<double>(size)));
    keep = std::min(keep, size);
    std::vector<std::size_t> order(size);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    Dense mask = Dense::Zero(rows, cols);
    for (std::size_t u = 0; u < keep; ++u)
        mask(static_cast<Eigen::Index>(order[u] / static_cast<std::size_t>(cols)),
             static_cast<Eigen::Index>(order[u] % static_cast<std::size_t>(cols))) = 1.0;
    return mask;
}

// Signed similarity view in Laplacian form: similar pairs get negative
// off-diagonal entries, the diagonal collects their total weight. Positive
// semi-definite, so the trace penalty it induces is bounded below.
Dense laplacianOf(const Dense& similarity) {
    Dense w = similarity;
    w.diagonal().setZero();
    return Dense(w.rowwise().sum().asDiagonal()) - w;
}

Dense plantedSimilarityView(const Dense& g) {
    const Eigen::Index n = g.rows();
    Dense sim(n, n);
    for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = 0; b < n; ++b) {
            const double na = g.row(a).norm(), nb = g.row(b).norm();
            sim(a, b) = (na > 0 && nb > 0) ? g.row(a).dot(g.row(b)) / (na * nb) : 0.0;
        }
    return laplacianOf(sim);
}

// Two factor columns starting at `start` (wrapping), as a column selection.
Dense columnBand(const Dense& g, int start) {
    Dense out(g.rows(), 2);
    const int k = static_cast<int>(g.cols());
    out.col(0) = g.col(start % k);
    out.col(1) = g.col((start + 1) % k);
    return out;
}

}  // namespace

SyntheticData generateSynthetic(const SyntheticSpec& spec) {
    if (spec.rank < 1) throw DataError("generateSynthetic: rank must be >= 1");
    for (auto [n, what] : {std::pair<Eigen::Index, const char*>{spec.numBags, "bags"},
                           {spec.numInstances, "instances"},
                           {spec.numLabels, "labels"}})
        if (spec.rank > n)
            throw DataError(std::string("generateSynthetic: rank exceeds cardinality of ") +
                            what);
    if (spec.sigma < 0.0) throw DataError("generateSynthetic: sigma must be >= 0");
    if (!(spec.density > 0.0 && spec.density <= 1.0))
        throw DataError("generateSynthetic: density must be in (0,1]");

    Rng rng(spec.seed);
    SyntheticData out;
    FusionGraph& graph = out.graph;
    SyntheticTruth& truth = out.truth;

    const int auxCount = spec.plantedAuxRelations + spec.noiseRelations;
    graph.types.push_back({1, "bags", spec.numBags});
    graph.types.push_back({2, "instances", spec.numInstances});
    graph.types.push_back({3, "labels", spec.numLabels});
    for (int q = 0; q < auxCount; ++q) {
        std::ostringstream name;
        name << (q < spec.plantedAuxRelations ? "aux" : "noise") << (q + 1);
        graph.types.push_back({4 + q, name.str(), spec.numAux});
    }
    graph.bagType = 1;
    graph.instanceType = 2;
    graph.labelType = 3;
    graph.targetRelation = spec.bagTarget ? std::make_pair(1, 3) : std::make_pair(2, 3);

    // planted factors
    truth.factors[2] = uniformMatrix(rng, spec.numInstances, spec.rank);
    truth.factors[3] = uniformMatrix(rng, spec.numLabels, spec.rank);
    for (int q = 0; q < spec.plantedAuxRelations; ++q)
        truth.factors[4 + q] = uniformMatrix(rng, spec.numAux, spec.rank);

    // membership partition: shuffled instances dealt round-robin over bags
    Dense membership = Dense::Zero(spec.numBags, spec.numInstances);
    {
        std::vector<Eigen::Index> order(static_cast<std::size_t>(spec.numInstances));
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        rng.shuffle(order);
        for (std::size_t u = 0; u < order.size(); ++u)
            membership(static_cast<Eigen::Index>(u % static_cast<std::size_t>(spec.numBags)),
                       order[u]) = 1.0;
    }

    // instance labels: threshold the noisy planted reconstruction
    truth.cores[{2, 3}] = uniformMatrix(rng, Eigen::Index(spec.rank), Eigen::Index(spec.rank));
    Dense cleanIm = truth.factors[2] * truth.cores[{2, 3}] * truth.factors[3].transpose();
    truth.clean[{2, 3}] = cleanIm;
    Dense noisyIm = noisyClip(rng, cleanIm, spec.sigma);
    std::vector<double> flat(noisyIm.data(), noisyIm.data() + noisyIm.size());
    const double threshold = quantile(flat, 1.0 - spec.positiveRate);
    truth.instanceLabels = (noisyIm.array() > threshold).cast<double>().matrix();

    // bag labels: a bag carries a label iff one of its instances does
    truth.bagLabels =
        ((membership * truth.instanceLabels).array() >= 1.0).cast<double>().matrix();

    graph.relations.push_back({1, 2, Matrix(membership), std::nullopt});
    graph.relations.push_back({1, 3, Matrix(truth.bagLabels), std::nullopt});
    if (spec.declareInstanceLabels || !spec.bagTarget)
        graph.relations.push_back({2, 3, Matrix(truth.instanceLabels), std::nullopt});

    for (int q = 0; q < auxCount; ++q) {
        const int typeId = 4 + q;
        Dense r;
        if (q < spec.plantedAuxRelations) {
            Dense core = uniformMatrix(rng, Eigen::Index(spec.rank), Eigen::Index(spec.rank));
            if (spec.complementaryAux) {
                // expose only a rotating two-column band of the instance factor
                Dense banded = Dense::Zero(spec.rank, spec.rank);
                banded.row(q % spec.rank) = core.row(q % spec.rank);
                banded.row((q + 1) % spec.rank) = core.row((q + 1) % spec.rank);
                core = banded;
            }
            truth.cores[{2, typeId}] = core;
            Dense clean =
                truth.factors[2] * truth.cores[{2, typeId}] * truth.factors[typeId].transpose();
            truth.clean[{2, typeId}] = clean;
            r = noisyClip(rng, clean, spec.sigma);
        } else {
            r = uniformMatrix(rng, spec.numInstances, spec.numAux);
        }
        graph.relations.push_back({2, typeId, Matrix(std::move(r)), std::nullopt});
    }

    for (int t = 0; t < spec.labelViews + spec.noiseViews; ++t) {
        Dense view;
        if (t < spec.labelViews) {
            view = spec.complementaryViews
                       ? plantedSimilarityView(columnBand(truth.factors[3], t))
                       : plantedSimilarityView(truth.factors[3]);
        } else {
            Dense w = uniformMatrix(rng, spec.numLabels, spec.numLabels);
            view = laplacianOf(Dense(0.5 * (w + w.transpose())));
        }
        graph.views.push_back({3, t + 1, Matrix(std::move(view))});
    }

    if (spec.density < 1.0) {
        for (auto& rel : graph.relations) {
            if (std::make_pair(rel.source, rel.target) != graph.targetRelation) continue;
            rel.observedMask = observationMask(rng, rel.matrix.rows(), rel.matrix.cols(),
                                               spec.density);
        }
    }

    auto violations = validate(graph);
    if (!violations.empty()) {
        std::ostringstream os;
        os << "generateSynthetic produced an invalid graph:";
        for (const auto& v : violations) os << "\n  - " << v;
        throw DataError(os.str());
    }
    return out;
}

}  // namespace m4l
