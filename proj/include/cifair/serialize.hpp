#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cifair/adjustment.hpp"
#include "cifair/equivalence.hpp"
#include "cifair/graphs.hpp"
#include "cifair/learn.hpp"
#include "cifair/metrics.hpp"
#include "cifair/scm.hpp"

namespace cifair {

using json = nlohmann::ordered_json;

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << content;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// --- enum names -------------------------------------------------------------

inline std::string kind_name(NodeKind k) {
    return k == NodeKind::Binary ? "binary" : "continuous";
}
inline NodeKind kind_from_name(const std::string& s) {
    if (s == "binary") return NodeKind::Binary;
    if (s == "continuous") return NodeKind::Continuous;
    throw std::invalid_argument("unknown node kind: " + s);
}

inline std::string role_name(Role r) {
    switch (r) {
        case Role::Plain: return "plain";
        case Role::Sensitive: return "sensitive";
        case Role::Admissible: return "admissible";
        case Role::Target: return "target";
    }
    return "plain";
}
inline Role role_from_name(const std::string& s) {
    if (s == "plain") return Role::Plain;
    if (s == "sensitive") return Role::Sensitive;
    if (s == "admissible") return Role::Admissible;
    if (s == "target") return Role::Target;
    throw std::invalid_argument("unknown role: " + s);
}

inline std::string arc_state_name(ArcState s) {
    switch (s) {
        case ArcState::Marg: return "marg";
        case ArcState::Cond: return "cond";
        case ArcState::Never: return "never";
    }
    return "marg";
}
inline ArcState arc_state_from_name(const std::string& s) {
    if (s == "marg") return ArcState::Marg;
    if (s == "cond") return ArcState::Cond;
    if (s == "never") return ArcState::Never;
    throw std::invalid_argument("unknown arc state: " + s);
}

inline std::string xi_name(Nonlinearity x) {
    switch (x) {
        case Nonlinearity::None: return "none";
        case Nonlinearity::Sin: return "sin";
        case Nonlinearity::Cos: return "cos";
        case Nonlinearity::Tanh: return "tanh";
    }
    return "none";
}
inline Nonlinearity xi_from_name(const std::string& s) {
    if (s == "none") return Nonlinearity::None;
    if (s == "sin") return Nonlinearity::Sin;
    if (s == "cos") return Nonlinearity::Cos;
    if (s == "tanh") return Nonlinearity::Tanh;
    throw std::invalid_argument("unknown nonlinearity: " + s);
}

// --- graphs -----------------------------------------------------------------

inline json arcs_to_json(const std::vector<IndependenceArc>& arcs) {
    json out = json::array();
    for (const auto& a : arcs) {
        json j;
        j["triplet"] = {a.left, a.mid, a.right};
        j["state"] = arc_state_name(a.state);
        j["conn_marks"] = a.conn_marks;
        j["sep_marks"] = a.sep_marks;
        out.push_back(std::move(j));
    }
    return out;
}

inline std::vector<IndependenceArc> arcs_from_json(const json& j) {
    std::vector<IndependenceArc> arcs;
    for (const auto& a : j) {
        IndependenceArc arc;
        arc.left = a["triplet"][0];
        arc.mid = a["triplet"][1];
        arc.right = a["triplet"][2];
        arc.state = arc_state_from_name(a["state"]);
        arc.conn_marks = a["conn_marks"].get<std::vector<int>>();
        arc.sep_marks = a["sep_marks"].get<std::vector<int>>();
        arcs.push_back(std::move(arc));
    }
    return arcs;
}

inline json graph_document(const VariableDag& dag, const ClusterPartition& partition,
                           const ClusterDag* cluster = nullptr,
                           const ClusterCpdag* cpdag = nullptr) {
    json doc;
    json nodes = json::array();
    for (int v = 0; v < dag.node_count(); ++v)
        nodes.push_back({{"id", v}, {"kind", kind_name(dag.kind(v))}});
    doc["nodes"] = std::move(nodes);
    json edges = json::array();
    for (auto [p, c] : dag.edges()) edges.push_back({p, c});
    doc["edges"] = std::move(edges);
    doc["partition"] = partition.clusters();
    json roles = json::array();
    for (Role r : partition.roles()) roles.push_back(role_name(r));
    doc["roles"] = std::move(roles);
    if (cluster != nullptr) {
        json ce = json::array();
        for (auto [p, c] : cluster->edges()) ce.push_back({p, c});
        doc["cluster_edges"] = std::move(ce);
        doc["arcs"] = arcs_to_json(cluster->arcs());
    }
    if (cpdag != nullptr) {
        json ce = json::array();
        for (auto [p, c] : cpdag->directed_edges()) ce.push_back({p, c});
        doc["cluster_edges"] = std::move(ce);
        json ue = json::array();
        for (auto [u, v] : cpdag->undirected_edges()) ue.push_back({u, v});
        doc["undirected"] = std::move(ue);
        doc["arcs"] = arcs_to_json(cpdag->arcs());
    }
    return doc;
}

inline VariableDag dag_from_document(const json& doc) {
    std::vector<NodeKind> kinds;
    for (const auto& n : doc["nodes"]) kinds.push_back(kind_from_name(n["kind"]));
    std::vector<std::pair<int, int>> edges;
    for (const auto& e : doc["edges"]) edges.push_back({e[0], e[1]});
    const int n = static_cast<int>(kinds.size());
    return VariableDag(n, std::move(edges), std::move(kinds));
}

inline ClusterPartition partition_from_document(const json& doc) {
    std::vector<std::vector<int>> clusters;
    for (const auto& c : doc["partition"]) clusters.push_back(c.get<std::vector<int>>());
    std::vector<Role> roles;
    for (const auto& r : doc["roles"]) roles.push_back(role_from_name(r));
    return ClusterPartition(std::move(clusters), std::move(roles));
}

// --- adjustment -------------------------------------------------------------

inline std::string candidate_status_name(CandidateStatus s) {
    switch (s) {
        case CandidateStatus::ParentsOnly: return "parents-only";
        case CandidateStatus::Completed: return "completed";
        case CandidateStatus::Failed: return "failed";
    }
    return "parents-only";
}

inline json adjustment_report(const AdjustmentFamily& fam) {
    json doc;
    json cands = json::array();
    for (const auto& c : fam.candidates)
        cands.push_back({{"clusters", c.clusters}, {"status", candidate_status_name(c.status)}});
    doc["candidates"] = std::move(cands);
    doc["M"] = fam.M();
    doc["refinement_rounds"] = fam.refinement_rounds;
    doc["partition"] = fam.partition;
    return doc;
}

// --- scm / datasets ----------------------------------------------------------

inline json scm_to_json(const Scm& scm) {
    json doc;
    doc["kind"] = scm.kind == ScmKind::Linear ? "linear" : "nonlinear";
    json nodes = json::array();
    for (int v = 0; v < scm.dag.node_count(); ++v)
        nodes.push_back({{"id", v}, {"kind", kind_name(scm.dag.kind(v))}});
    doc["nodes"] = std::move(nodes);
    json edges = json::array();
    for (auto [p, c] : scm.dag.edges()) edges.push_back({p, c});
    doc["edges"] = std::move(edges);
    doc["partition"] = scm.partition.clusters();
    json roles = json::array();
    for (Role r : scm.partition.roles()) roles.push_back(role_name(r));
    doc["roles"] = std::move(roles);
    auto eq_json = [](const NodeEquation& e) {
        return json{{"parents", e.parents}, {"weights", e.weights}, {"xi", xi_name(e.xi)}};
    };
    json eqs = json::array();
    for (const auto& e : scm.equations) eqs.push_back(eq_json(e));
    doc["equations"] = std::move(eqs);
    doc["target"] = eq_json(scm.target);
    return doc;
}

inline Scm scm_from_json(const json& doc) {
    VariableDag dag = dag_from_document(doc);
    ClusterPartition part = partition_from_document(doc);
    Scm scm{dag, part, doc["kind"] == "linear" ? ScmKind::Linear : ScmKind::Nonlinear, {}, {}};
    auto eq_from = [](const json& j) {
        NodeEquation e;
        e.parents = j["parents"].get<std::vector<int>>();
        e.weights = j["weights"].get<std::vector<double>>();
        e.xi = xi_from_name(j["xi"]);
        return e;
    };
    for (const auto& e : doc["equations"]) scm.equations.push_back(eq_from(e));
    scm.target = eq_from(doc["target"]);
    return scm;
}

inline std::string dataset_to_csv(const Dataset& ds) {
    std::string out;
    const int d = static_cast<int>(ds.features.cols());
    for (int c = 0; c < d; ++c) {
        out += "x" + std::to_string(c);
        out += ',';
    }
    out += "y\n";
    for (int r = 0; r < ds.rows(); ++r) {
        for (int c = 0; c < d; ++c) {
            out += format_double(ds.features(r, c));
            out += ',';
        }
        out += format_double(ds.target[r]);
        out += '\n';
    }
    return out;
}

inline Dataset dataset_from_csv(const std::string& text) {
    Dataset ds;
    std::vector<std::vector<double>> rows;
    std::size_t pos = 0;
    bool header = true;
    int cols = -1;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        std::vector<double> vals;
        std::size_t p = 0;
        while (p <= line.size()) {
            std::size_t comma = line.find(',', p);
            if (comma == std::string::npos) comma = line.size();
            vals.push_back(std::stod(line.substr(p, comma - p)));
            p = comma + 1;
        }
        if (cols < 0) cols = static_cast<int>(vals.size());
        if (static_cast<int>(vals.size()) != cols)
            throw std::invalid_argument("dataset_from_csv: ragged row");
        rows.push_back(std::move(vals));
    }
    const int n = static_cast<int>(rows.size());
    ds.features.resize(n, cols - 1);
    ds.target.resize(n);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c + 1 < cols; ++c) ds.features(r, c) = rows[r][c];
        ds.target[r] = rows[r][cols - 1];
    }
    return ds;
}

// --- model checkpoints --------------------------------------------------------

inline json predictor_to_json(const TrainedPredictor& p) {
    json doc;
    doc["shapes"] = {{"in", p.net.input_dim()},
                     {"hidden", static_cast<int>(p.net.w1.rows())},
                     {"out", p.net.output_dim()}};
    doc["head"] = p.net.head == Head::Sigmoid ? "sigmoid" : "identity";
    doc["input_cols"] = p.input_cols;
    auto flat = [](const Eigen::MatrixXd& m) {
        std::vector<double> v(m.size());
        for (int c = 0, k = 0; c < m.cols(); ++c)
            for (int r = 0; r < m.rows(); ++r) v[k++] = m(r, c);
        return v;
    };
    doc["w1"] = flat(p.net.w1);
    doc["b1"] = std::vector<double>(p.net.b1.data(), p.net.b1.data() + p.net.b1.size());
    doc["w2"] = flat(p.net.w2);
    doc["b2"] = std::vector<double>(p.net.b2.data(), p.net.b2.data() + p.net.b2.size());
    doc["feat_mean"] =
        std::vector<double>(p.feat_mean.data(), p.feat_mean.data() + p.feat_mean.size());
    doc["feat_std"] = std::vector<double>(p.feat_std.data(), p.feat_std.data() + p.feat_std.size());
    doc["target_mean"] = p.target_mean;
    doc["target_std"] = p.target_std;
    return doc;
}

inline TrainedPredictor predictor_from_json(const json& doc) {
    TrainedPredictor p;
    const int in = doc["shapes"]["in"], hidden = doc["shapes"]["hidden"], out = doc["shapes"]["out"];
    p.net.head = doc["head"] == "sigmoid" ? Head::Sigmoid : Head::Identity;
    auto unflat = [](const std::vector<double>& v, int rows, int cols) {
        Eigen::MatrixXd m(rows, cols);
        for (int c = 0, k = 0; c < cols; ++c)
            for (int r = 0; r < rows; ++r) m(r, c) = v[k++];
        return m;
    };
    p.net.w1 = unflat(doc["w1"].get<std::vector<double>>(), hidden, in);
    p.net.w2 = unflat(doc["w2"].get<std::vector<double>>(), out, hidden);
    auto vec = [](const std::vector<double>& v) {
        return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()).eval();
    };
    p.net.b1 = vec(doc["b1"].get<std::vector<double>>());
    p.net.b2 = vec(doc["b2"].get<std::vector<double>>());
    p.input_cols = doc["input_cols"].get<std::vector<int>>();
    p.feat_mean = vec(doc["feat_mean"].get<std::vector<double>>());
    p.feat_std = vec(doc["feat_std"].get<std::vector<double>>());
    p.target_mean = doc["target_mean"];
    p.target_std = doc["target_std"];
    return p;
}

// --- evaluation ---------------------------------------------------------------

inline json eval_report_to_json(const EvalReport& r) {
    json doc;
    doc["method"] = r.method;
    doc["seed"] = r.seed;
    doc["rmse"] = r.rmse;
    doc["unfairness"] = r.unfairness;
    doc["n_eval"] = r.n_eval;
    doc["lambda"] = r.chosen_lambda;
    doc["refinement_rounds"] = r.refinement_rounds;
    doc["M"] = r.m_candidates;
    json pairs = json::array();
    for (const auto& p : r.pairs)
        pairs.push_back({{"a", p.a_index}, {"a2", p.a2_index}, {"xad", p.x_index}, {"mmd2", p.mmd2}});
    doc["pair_mmd2"] = std::move(pairs);
    return doc;
}

inline std::string training_log_csv(const std::vector<EpochStats>& log) {
    std::string out = "epoch,loss,penalty";
    std::size_t n_cand = log.empty() ? 0 : log.front().per_candidate.size();
    for (std::size_t m = 0; m < n_cand; ++m) out += ",penalty_m" + std::to_string(m);
    out += '\n';
    for (std::size_t e = 0; e < log.size(); ++e) {
        out += std::to_string(e) + ',' + format_double(log[e].loss) + ',' +
               format_double(log[e].penalty);
        for (double v : log[e].per_candidate) out += ',' + format_double(v);
        out += '\n';
    }
    return out;
}

}  // namespace cifair
