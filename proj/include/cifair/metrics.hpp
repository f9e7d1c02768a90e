#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cifair/fairness.hpp"
#include "cifair/scm.hpp"

namespace cifair {

inline double rmse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets) {
    if (predictions.size() != targets.size() || predictions.size() == 0)
        throw std::invalid_argument("rmse: length mismatch");
    return std::sqrt((predictions - targets).squaredNorm() / predictions.size());
}

/// Biased (V-statistic) squared MMD under a Gaussian kernel; nonnegative.
inline double mmd2_biased(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double gamma) {
    const double inv = 1.0 / (2.0 * gamma * gamma);
    auto block = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        double s = 0;
        for (int i = 0; i < a.size(); ++i)
            for (int j = 0; j < b.size(); ++j) {
                double d = a[i] - b[j];
                s += std::exp(-d * d * inv);
            }
        return s / (static_cast<double>(a.size()) * b.size());
    };
    double v = block(x, x) + block(y, y) - 2.0 * block(x, y);
    return v > 0 ? v : 0.0;
}

struct PairMmd {
    int a_index = 0, a2_index = 0, x_index = 0;
    double mmd2 = 0;
};

struct EvalReport {
    double rmse = 0;
    double unfairness = 0;
    std::vector<PairMmd> pairs;
    int n_eval = 0;
    std::uint64_t seed = 0;
    std::string method;
    double chosen_lambda = 0;
    int refinement_rounds = -1;  // -1 when no adjustment stage ran
    int m_candidates = 0;
};

namespace detail {

inline std::vector<std::vector<double>> binary_combos(int k) {
    std::vector<std::vector<double>> out;
    for (int bits = 0; bits < (1 << k); ++bits) {
        std::vector<double> v(k);
        for (int i = 0; i < k; ++i) v[i] = (bits >> i) & 1;
        out.push_back(v);
    }
    return out;
}

}  // namespace detail

// Interventional unfairness against the true SCM: mean over admissible values
// and unordered sensitive-value pairs of the squared MMD between prediction
// samples, Gaussian kernel with median-heuristic bandwidth on the pooled
// predictions.
inline double unfairness(const std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>& predict,
                         const Scm& scm, const ClusterPartition& partition, int n_eval, Rng& rng,
                         std::vector<PairMmd>* pair_table = nullptr) {
    if (n_eval < 2) throw std::invalid_argument("unfairness: n_eval must be at least 2");
    const int a_cluster = partition.sensitive_cluster();
    auto ad_cluster = partition.find_role(Role::Admissible);
    const auto& a_vars = partition.cluster(a_cluster);
    std::vector<int> x_vars;
    if (ad_cluster) x_vars = partition.cluster(*ad_cluster);

    auto a_combos = detail::binary_combos(static_cast<int>(a_vars.size()));
    auto x_combos = detail::binary_combos(static_cast<int>(x_vars.size()));
    if (x_combos.empty()) x_combos.push_back({});

    // predictions per (x combo, a combo)
    std::vector<std::vector<Eigen::VectorXd>> preds(x_combos.size());
    std::vector<double> pooled;
    for (std::size_t xi = 0; xi < x_combos.size(); ++xi) {
        for (std::size_t ai = 0; ai < a_combos.size(); ++ai) {
            Intervention iv;
            for (std::size_t i = 0; i < a_vars.size(); ++i)
                iv.assignments[a_vars[i]] = a_combos[ai][i];
            for (std::size_t i = 0; i < x_vars.size(); ++i)
                iv.assignments[x_vars[i]] = x_combos[xi][i];
            Dataset ds = sample_interventional(scm, iv, n_eval, rng);
            Eigen::VectorXd p = predict(ds.features);
            for (int r = 0; r < p.size(); ++r) pooled.push_back(p[r]);
            preds[xi].push_back(std::move(p));
        }
    }

    // median-heuristic bandwidth on (a deterministic subsample of) the pool
    const int cap = 4096;
    const int m = static_cast<int>(pooled.size());
    const int step = std::max(1, m / cap);
    std::vector<double> sub;
    for (int i = 0; i < m; i += step) sub.push_back(pooled[i]);
    Eigen::MatrixXd pts(sub.size(), 1);
    for (std::size_t i = 0; i < sub.size(); ++i) pts(i, 0) = sub[i];
    const double gamma = median_heuristic(pts);

    double total = 0;
    int count = 0;
    for (std::size_t xi = 0; xi < x_combos.size(); ++xi)
        for (std::size_t a1 = 0; a1 < a_combos.size(); ++a1)
            for (std::size_t a2 = a1 + 1; a2 < a_combos.size(); ++a2) {
                double v = mmd2_biased(preds[xi][a1], preds[xi][a2], gamma);
                total += v;
                ++count;
                if (pair_table != nullptr)
                    pair_table->push_back({static_cast<int>(a1), static_cast<int>(a2),
                                           static_cast<int>(xi), v});
            }
    return count > 0 ? total / count : 0.0;
}

}  // namespace cifair
