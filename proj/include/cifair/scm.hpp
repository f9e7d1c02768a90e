#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include "cifair/graphs.hpp"
#include "cifair/rng.hpp"

namespace cifair {

enum class ScmKind { Linear, Nonlinear };
enum class Nonlinearity { None, Sin, Cos, Tanh };

struct NodeEquation {
    std::vector<int> parents;
    std::vector<double> weights;
    Nonlinearity xi = Nonlinearity::None;
};

/// Structural causal model over a feature DAG plus one continuous target
/// equation. The target lives outside the DAG and never enters graph
/// identification.
struct Scm {
    VariableDag dag;
    ClusterPartition partition;
    ScmKind kind = ScmKind::Linear;
    std::vector<NodeEquation> equations;  // one per dag node
    NodeEquation target;
};

struct Dataset {
    Eigen::MatrixXd features;  // n x d_v
    Eigen::VectorXd target;
    std::string split_tag;

    int rows() const { return static_cast<int>(features.rows()); }
};

struct Intervention {
    std::map<int, double> assignments;  // variable -> fixed value
};

// Uniform random topological order; each forward pair kept independently with
// probability expected_degree/(d_v-1).
inline VariableDag sample_er_dag(int d_v, double expected_degree, Rng& rng,
                                 std::vector<NodeKind> kinds = {}) {
    if (d_v < 2) throw std::invalid_argument("sample_er_dag: need at least two nodes");
    if (expected_degree < 0 || expected_degree >= d_v)
        throw std::invalid_argument("sample_er_dag: expected degree out of range");
    std::vector<int> order(d_v);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const double p = std::min(1.0, expected_degree / (d_v - 1));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < d_v; ++i)
        for (int j = i + 1; j < d_v; ++j)
            if (unif(rng) < p) edges.push_back({order[i], order[j]});
    return VariableDag(d_v, std::move(edges), std::move(kinds));
}

inline double apply_nonlinearity(Nonlinearity xi, double t) {
    switch (xi) {
        case Nonlinearity::Sin: return std::sin(t);
        case Nonlinearity::Cos: return std::cos(t);
        case Nonlinearity::Tanh: return std::tanh(t);
        case Nonlinearity::None: return t;
    }
    return t;
}

// Random structural equations: each coefficient is a signed magnitude
// s*Unif(0.5, 2.0); the target takes one parent variable from every feature
// cluster with the sensitive cluster's coefficient amplified 5x. Nonlinear
// SCMs wrap each with-parent node's linear form in a random xi.
inline Scm build_scm(const VariableDag& dag, const ClusterPartition& partition, ScmKind kind,
                     Rng& rng) {
    partition.sensitive_cluster();  // roles required
    partition.cluster_of_variables(dag.node_count());

    std::uniform_real_distribution<double> mag(0.5, 2.0);
    std::uniform_int_distribution<int> sign(0, 1);
    std::uniform_int_distribution<int> xi_pick(0, 2);
    auto draw_weight = [&] {
        double s = sign(rng) ? 1.0 : -1.0;
        return s * mag(rng);
    };
    auto draw_xi = [&] {
        switch (xi_pick(rng)) {
            case 0: return Nonlinearity::Sin;
            case 1: return Nonlinearity::Cos;
            default: return Nonlinearity::Tanh;
        }
    };

    Scm scm{dag, partition, kind, {}, {}};
    scm.equations.resize(dag.node_count());
    for (int v = 0; v < dag.node_count(); ++v) {
        auto& eq = scm.equations[v];
        eq.parents = dag.parents(v);
        for (std::size_t i = 0; i < eq.parents.size(); ++i) eq.weights.push_back(draw_weight());
        if (kind == ScmKind::Nonlinear && !eq.parents.empty()) eq.xi = draw_xi();
    }

    const int sensitive = partition.sensitive_cluster();
    for (int c = 0; c < partition.cluster_count(); ++c) {
        if (partition.role(c) == Role::Target) continue;
        const auto& vars = partition.cluster(c);
        std::uniform_int_distribution<int> pick(0, static_cast<int>(vars.size()) - 1);
        scm.target.parents.push_back(vars[pick(rng)]);
        double w = draw_weight();
        if (c == sensitive) w *= 5.0;
        scm.target.weights.push_back(w);
    }
    if (kind == ScmKind::Nonlinear) scm.target.xi = draw_xi();
    return scm;
}

namespace detail {

inline Eigen::VectorXd eval_equation(const NodeEquation& eq, const Eigen::MatrixXd& features) {
    Eigen::VectorXd lin = Eigen::VectorXd::Zero(features.rows());
    for (std::size_t i = 0; i < eq.parents.size(); ++i)
        lin += eq.weights[i] * features.col(eq.parents[i]);
    if (eq.xi != Nonlinearity::None)
        for (int r = 0; r < lin.size(); ++r) lin[r] = apply_nonlinearity(eq.xi, lin[r]);
    return lin;
}

inline Dataset ancestral_sample(const Scm& scm, int n, Rng& rng,
                                const std::map<int, double>* fixed) {
    const auto& dag = scm.dag;
    Dataset ds;
    ds.features.setZero(n, dag.node_count());
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int v : dag.topological_order()) {
        if (fixed != nullptr) {
            auto it = fixed->find(v);
            if (it != fixed->end()) {
                ds.features.col(v).setConstant(it->second);
                continue;
            }
        }
        Eigen::VectorXd lin = eval_equation(scm.equations[v], ds.features);
        if (dag.kind(v) == NodeKind::Continuous) {
            for (int r = 0; r < n; ++r) ds.features(r, v) = lin[r] + gauss(rng);
        } else {
            for (int r = 0; r < n; ++r) {
                double p = 1.0 / (1.0 + std::exp(-lin[r]));
                ds.features(r, v) = unif(rng) < p ? 1.0 : 0.0;
            }
        }
    }
    Eigen::VectorXd ylin = eval_equation(scm.target, ds.features);
    ds.target.resize(n);
    for (int r = 0; r < n; ++r) ds.target[r] = ylin[r] + gauss(rng);
    return ds;
}

}  // namespace detail

inline Dataset sample_observational(const Scm& scm, int n, Rng& rng) {
    if (n <= 0) throw std::invalid_argument("sample_observational: n must be positive");
    return detail::ancestral_sample(scm, n, rng, nullptr);
}

/// Graph surgery: intervened variables are pinned and their equations severed.
inline Dataset sample_interventional(const Scm& scm, const Intervention& iv, int n, Rng& rng) {
    if (n <= 0) throw std::invalid_argument("sample_interventional: n must be positive");
    // Interventions must cover whole clusters.
    for (int c = 0; c < scm.partition.cluster_count(); ++c) {
        const auto& vars = scm.partition.cluster(c);
        int assigned = 0;
        for (int v : vars) assigned += static_cast<int>(iv.assignments.count(v));
        if (assigned != 0 && assigned != static_cast<int>(vars.size()))
            throw std::invalid_argument("sample_interventional: partial-cluster intervention");
    }
    return detail::ancestral_sample(scm, n, rng, &iv.assignments);
}

}  // namespace cifair
