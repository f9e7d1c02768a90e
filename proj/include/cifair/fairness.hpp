#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "cifair/errors.hpp"
#include "cifair/rng.hpp"

namespace cifair {

// Multiply-add counter for complexity assertions on instrumented runs.
inline long long& penalty_op_counter() {
    static long long counter = 0;
    return counter;
}

struct PenaltyConfig {
    double lambda = 0.0;
    double mellowmax_omega = 10.0;
    double clip_quantile = 1.0;  // 1.0 disables clipping
    int d_rff = 128;
    std::vector<double> bandwidth_multipliers = {0.5, 1.0, 2.0, 4.0, 8.0, 16.0};
    double propensity_floor = 1e-6;
};

/// Random Fourier features for a sum of Gaussian kernels with bandwidths
/// c*gamma. Frozen after construction.
struct RffMap {
    Eigen::MatrixXd freqs;   // (d_rff * |multipliers|) x dim
    Eigen::VectorXd phases;  // same row count, in [0, 2pi)
    double gamma = 1.0;
    std::vector<double> multipliers;
    int d_rff = 0;

    int feature_count() const { return static_cast<int>(freqs.rows()); }
    int dim() const { return static_cast<int>(freqs.cols()); }
};

inline RffMap build_rff_map(int dim, int d_rff, double gamma, std::vector<double> multipliers,
                            Rng& rng) {
    if (dim <= 0 || d_rff <= 0 || gamma <= 0 || multipliers.empty())
        throw std::invalid_argument("build_rff_map: bad configuration");
    RffMap map;
    map.gamma = gamma;
    map.multipliers = std::move(multipliers);
    map.d_rff = d_rff;
    const int blocks = static_cast<int>(map.multipliers.size());
    map.freqs.resize(d_rff * blocks, dim);
    map.phases.resize(d_rff * blocks);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 2.0 * M_PI);
    for (int b = 0; b < blocks; ++b) {
        const double sd = 1.0 / (map.multipliers[b] * gamma);
        for (int r = 0; r < d_rff; ++r) {
            for (int c = 0; c < dim; ++c) map.freqs(b * d_rff + r, c) = sd * gauss(rng);
            map.phases[b * d_rff + r] = unif(rng);
        }
    }
    return map;
}

/// Lower median of pairwise Euclidean distances; 1.0 when degenerate.
inline double median_heuristic(const Eigen::MatrixXd& points) {
    const int n = static_cast<int>(points.rows());
    if (n < 2) throw std::invalid_argument("median_heuristic: need at least two points");
    std::vector<double> dist;
    dist.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) dist.push_back((points.row(i) - points.row(j)).norm());
    auto mid = dist.begin() + (dist.size() - 1) / 2;
    std::nth_element(dist.begin(), mid, dist.end());
    return *mid > 0 ? *mid : 1.0;
}

inline Eigen::VectorXd rff_features(const Eigen::VectorXd& y, const RffMap& map) {
    if (y.size() != map.dim()) throw std::invalid_argument("rff_features: dimension mismatch");
    Eigen::VectorXd arg = map.freqs * y + map.phases;
    return std::sqrt(2.0 / map.d_rff) * arg.array().cos().matrix();
}

/// Row-wise feature map: returns n x (d_rff * |multipliers|).
inline Eigen::MatrixXd rff_features_batch(const Eigen::MatrixXd& ys, const RffMap& map) {
    if (ys.cols() != map.dim()) throw std::invalid_argument("rff_features_batch: dimension mismatch");
    Eigen::MatrixXd arg = (ys * map.freqs.transpose()).rowwise() + map.phases.transpose();
    return std::sqrt(2.0 / map.d_rff) * arg.array().cos().matrix();
}

/// Rows grouped by joint (sensitive, admissible) value. Combos are collected
/// in lexicographic order so group ids are stable.
struct GroupIndex {
    std::vector<int> group_of_row;
    std::vector<std::vector<int>> rows;           // per group
    std::vector<std::vector<double>> key_a;       // group -> sensitive values
    std::vector<std::vector<double>> key_x;       // group -> admissible values
    std::vector<int> a_id, x_id;                  // group -> combo indices
    int n_a_values = 0, n_x_values = 0;

    int group_count() const { return static_cast<int>(rows.size()); }

    int find_group(const std::vector<double>& a, const std::vector<double>& x) const {
        for (int g = 0; g < group_count(); ++g)
            if (key_a[g] == a && key_x[g] == x) return g;
        return -1;
    }
};

inline GroupIndex build_group_index(const Eigen::MatrixXd& features, const std::vector<int>& a_cols,
                                    const std::vector<int>& x_cols) {
    const int n = static_cast<int>(features.rows());
    std::map<std::pair<std::vector<double>, std::vector<double>>, std::vector<int>> buckets;
    for (int r = 0; r < n; ++r) {
        std::vector<double> a, x;
        for (int c : a_cols) a.push_back(features(r, c));
        for (int c : x_cols) x.push_back(features(r, c));
        buckets[{a, x}].push_back(r);
    }
    GroupIndex gi;
    gi.group_of_row.assign(n, -1);
    std::map<std::vector<double>, int> a_ids, x_ids;
    for (const auto& [key, rows] : buckets) {
        a_ids.emplace(key.first, 0);
        x_ids.emplace(key.second, 0);
    }
    int next = 0;
    for (auto& [k, v] : a_ids) v = next++;
    next = 0;
    for (auto& [k, v] : x_ids) v = next++;
    gi.n_a_values = static_cast<int>(a_ids.size());
    gi.n_x_values = static_cast<int>(x_ids.size());
    for (const auto& [key, rows] : buckets) {
        int g = gi.group_count();
        gi.rows.push_back(rows);
        gi.key_a.push_back(key.first);
        gi.key_x.push_back(key.second);
        gi.a_id.push_back(a_ids[key.first]);
        gi.x_id.push_back(x_ids[key.second]);
        for (int r : rows) gi.group_of_row[r] = g;
    }
    return gi;
}

struct IpwResult {
    Eigen::VectorXd weights;  // full batch length, zero outside the group
    int floored = 0;
};

// Indicator-over-propensity weights, quantile-clipped among the nonzero ones,
// then self-normalized to mean one over the batch.
inline IpwResult ipw_weights(const Eigen::VectorXd& group_propensity,
                             const std::vector<int>& group_rows, int batch_size,
                             const PenaltyConfig& cfg) {
    if (group_rows.empty()) throw empty_group_error("ipw_weights: empty group");
    IpwResult res;
    res.weights = Eigen::VectorXd::Zero(batch_size);
    std::vector<double> nonzero;
    nonzero.reserve(group_rows.size());
    for (int r : group_rows) {
        double p = group_propensity[r];
        if (p < cfg.propensity_floor) {
            p = cfg.propensity_floor;
            res.floored++;
        }
        res.weights[r] = 1.0 / p;
        nonzero.push_back(res.weights[r]);
    }
    if (cfg.clip_quantile < 1.0 && nonzero.size() > 1) {
        std::vector<double> sorted = nonzero;
        std::sort(sorted.begin(), sorted.end());
        auto rank = static_cast<std::size_t>(
            std::ceil(cfg.clip_quantile * static_cast<double>(sorted.size())));
        rank = std::min(std::max<std::size_t>(rank, 1), sorted.size());
        const double cap = sorted[rank - 1];
        for (int r : group_rows) res.weights[r] = std::min(res.weights[r], cap);
    }
    const double mean = res.weights.sum() / batch_size;
    if (mean <= 0) throw empty_group_error("ipw_weights: degenerate weights");
    res.weights /= mean;
    return res;
}

/// mu_hat = (1/n) sum_i w_i phi(y_i).
inline Eigen::VectorXd weighted_embedding(const Eigen::MatrixXd& phi,
                                          const Eigen::VectorXd& weights) {
    if (phi.rows() != weights.size())
        throw std::invalid_argument("weighted_embedding: length mismatch");
    if ((weights.array() != 0.0).count() == 0)
        throw empty_group_error("weighted_embedding: all-zero weights");
    penalty_op_counter() += static_cast<long long>(phi.rows()) * phi.cols();
    return phi.transpose() * weights / static_cast<double>(phi.rows());
}

inline double mellowmax(const std::vector<double>& values, double omega) {
    if (values.empty()) throw std::invalid_argument("mellowmax: empty list");
    if (omega <= 0) throw std::invalid_argument("mellowmax: omega must be positive");
    const double m = *std::max_element(values.begin(), values.end());
    double s = 0;
    for (double v : values) s += std::exp(omega * (v - m));
    return m + std::log(s / values.size()) / omega;
}

inline std::vector<double> mellowmax_softmax(const std::vector<double>& values, double omega) {
    const double m = *std::max_element(values.begin(), values.end());
    std::vector<double> w(values.size());
    double s = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        w[i] = std::exp(omega * (values[i] - m));
        s += w[i];
    }
    for (auto& x : w) x /= s;
    return w;
}

struct PenaltyTerms {
    double value = 0.0;
    Eigen::MatrixXd dvalue_dpred;  // n x pred_dim
    std::vector<double> per_candidate;
    std::vector<double> softmax;
    int skipped_groups = 0;
    int floored_weights = 0;
};

// Worst-case (mellowmax over candidates) sum of barycenter MMDs between
// IPW-estimated interventional embeddings, with the analytic gradient with
// respect to the predictions. `propensity_per_candidate[m]` holds the class
// probabilities (rows x groups) under candidate m's adjustment set.
inline PenaltyTerms penalty(const Eigen::MatrixXd& preds, const std::vector<int>& group_of_row,
                            const GroupIndex& gi,
                            const std::vector<Eigen::MatrixXd>& propensity_per_candidate,
                            const RffMap& map, const PenaltyConfig& cfg) {
    const int n = static_cast<int>(preds.rows());
    const int M = static_cast<int>(propensity_per_candidate.size());
    if (M == 0) throw identification_error("penalty: no completed adjustment candidates");
    if (static_cast<int>(group_of_row.size()) != n)
        throw std::invalid_argument("penalty: group index length mismatch");

    const int D = map.feature_count();
    Eigen::MatrixXd arg = (preds * map.freqs.transpose()).rowwise() + map.phases.transpose();
    const double scale = std::sqrt(2.0 / map.d_rff);
    Eigen::MatrixXd phi = scale * arg.array().cos().matrix();
    Eigen::MatrixXd dphi = -scale * arg.array().sin().matrix();  // d phi / d arg
    penalty_op_counter() += 2LL * n * D * preds.cols();

    std::vector<std::vector<int>> rows(gi.group_count());
    for (int r = 0; r < n; ++r)
        if (group_of_row[r] >= 0) rows[group_of_row[r]].push_back(r);

    PenaltyTerms out;
    out.dvalue_dpred.setZero(n, preds.cols());
    std::vector<Eigen::MatrixXd> grads(M);
    for (int m = 0; m < M; ++m) {
        const auto& probs = propensity_per_candidate[m];
        if (probs.rows() != n || probs.cols() != gi.group_count())
            throw std::invalid_argument("penalty: propensity matrix shape mismatch");
        std::vector<Eigen::VectorXd> mu(gi.group_count());
        std::vector<Eigen::VectorXd> w(gi.group_count());
        std::vector<char> present(gi.group_count(), 0);
        for (int g = 0; g < gi.group_count(); ++g) {
            if (rows[g].empty()) {
                out.skipped_groups++;
                continue;
            }
            auto res = ipw_weights(probs.col(g), rows[g], n, cfg);
            out.floored_weights += res.floored;
            mu[g] = weighted_embedding(phi, res.weights);
            w[g] = std::move(res.weights);
            present[g] = 1;
        }
        double value = 0;
        Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n, preds.cols());
        for (int x = 0; x < gi.n_x_values; ++x) {
            std::vector<int> gs;
            for (int g = 0; g < gi.group_count(); ++g)
                if (present[g] && gi.x_id[g] == x) gs.push_back(g);
            if (gs.size() < 1) continue;
            Eigen::VectorXd bary = Eigen::VectorXd::Zero(D);
            for (int g : gs) bary += mu[g];
            bary /= static_cast<double>(gs.size());
            for (int g : gs) {
                Eigen::VectorXd diff = mu[g] - bary;
                value += diff.squaredNorm();
                // d value / d pred_i = (w_i / n) * (2 diff)^T J_phi(y_i)
                Eigen::VectorXd coef = 2.0 * diff;
                for (int r : rows[g]) {
                    double wi = w[g][r] / n;
                    // row vector: sum_k coef_k dphi(r,k) freqs(k,:)
                    Eigen::RowVectorXd t =
                        (dphi.row(r).array() * coef.transpose().array()).matrix() * map.freqs;
                    grad.row(r) += wi * t;
                }
                penalty_op_counter() += 2LL * static_cast<long long>(rows[g].size()) * D;
            }
        }
        out.per_candidate.push_back(value);
        grads[m] = std::move(grad);
    }

    out.value = mellowmax(out.per_candidate, cfg.mellowmax_omega);
    out.softmax = mellowmax_softmax(out.per_candidate, cfg.mellowmax_omega);
    for (int m = 0; m < M; ++m) out.dvalue_dpred += out.softmax[m] * grads[m];
    return out;
}

}  // namespace cifair
