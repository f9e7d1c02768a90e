#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "cifair/adjustment.hpp"
#include "cifair/errors.hpp"
#include "cifair/fairness.hpp"
#include "cifair/rng.hpp"
#include "cifair/scm.hpp"

namespace cifair {

enum class Head { Identity, Sigmoid };

/// Two-layer rectifier MLP.
struct Mlp {
    Eigen::MatrixXd w1, w2;  // hidden x in, out x hidden
    Eigen::VectorXd b1, b2;
    Head head = Head::Identity;

    int input_dim() const { return static_cast<int>(w1.cols()); }
    int output_dim() const { return static_cast<int>(w2.rows()); }
};

inline Mlp make_mlp(int in, int hidden, int out, Head head, Rng& rng) {
    Mlp m;
    m.head = head;
    auto glorot = [&](Eigen::MatrixXd& w, int rows, int cols) {
        w.resize(rows, cols);
        const double limit = std::sqrt(6.0 / std::max(1, rows + cols));
        std::uniform_real_distribution<double> unif(-limit, limit);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) w(r, c) = unif(rng);
    };
    glorot(m.w1, hidden, in);
    glorot(m.w2, out, hidden);
    m.b1 = Eigen::VectorXd::Zero(hidden);
    m.b2 = Eigen::VectorXd::Zero(out);
    return m;
}

struct ForwardCache {
    Eigen::MatrixXd x;        // n x in
    Eigen::MatrixXd h_pre;    // n x hidden
    Eigen::MatrixXd h;        // rectified
    Eigen::MatrixXd out_pre;  // n x out
    Eigen::MatrixXd preds;
};

inline ForwardCache forward(const Mlp& m, const Eigen::MatrixXd& x) {
    if (x.cols() != m.input_dim()) throw std::invalid_argument("forward: input width mismatch");
    ForwardCache c;
    c.x = x;
    c.h_pre = (x * m.w1.transpose()).rowwise() + m.b1.transpose();
    c.h = c.h_pre.cwiseMax(0.0);
    c.out_pre = (c.h * m.w2.transpose()).rowwise() + m.b2.transpose();
    c.preds = m.head == Head::Sigmoid
                  ? (1.0 / (1.0 + (-c.out_pre.array()).exp())).matrix()
                  : c.out_pre;
    return c;
}

struct MlpGrads {
    Eigen::MatrixXd w1, w2;
    Eigen::VectorXd b1, b2;
};

// Exact gradients; the rectifier subgradient at zero is taken as zero.
inline MlpGrads backward(const Mlp& m, const ForwardCache& c, const Eigen::MatrixXd& dpreds) {
    if (dpreds.rows() != c.x.rows() || dpreds.cols() != m.output_dim())
        throw std::invalid_argument("backward: gradient shape mismatch");
    Eigen::MatrixXd dout = dpreds;
    if (m.head == Head::Sigmoid)
        dout = (dpreds.array() * c.preds.array() * (1.0 - c.preds.array())).matrix();
    MlpGrads g;
    g.w2 = dout.transpose() * c.h;
    g.b2 = dout.colwise().sum();
    Eigen::MatrixXd dh = dout * m.w2;
    dh = (dh.array() * (c.h_pre.array() > 0.0).cast<double>()).matrix();
    g.w1 = dh.transpose() * c.x;
    g.b1 = dh.colwise().sum();
    return g;
}

/// Adaptive-moment optimizer with decoupled weight decay.
struct OptimizerState {
    Eigen::MatrixXd m_w1, v_w1, m_w2, v_w2;
    Eigen::VectorXd m_b1, v_b1, m_b2, v_b2;
    long long step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double weight_decay = 1e-2;

    static OptimizerState init(const Mlp& m, double decay = 1e-2) {
        OptimizerState s;
        s.weight_decay = decay;
        s.m_w1 = Eigen::MatrixXd::Zero(m.w1.rows(), m.w1.cols());
        s.v_w1 = s.m_w1;
        s.m_w2 = Eigen::MatrixXd::Zero(m.w2.rows(), m.w2.cols());
        s.v_w2 = s.m_w2;
        s.m_b1 = Eigen::VectorXd::Zero(m.b1.size());
        s.v_b1 = s.m_b1;
        s.m_b2 = Eigen::VectorXd::Zero(m.b2.size());
        s.v_b2 = s.m_b2;
        return s;
    }
};

inline void optimizer_step(OptimizerState& s, Mlp& m, const MlpGrads& g, double lr) {
    auto finite = [](const auto& a) { return a.allFinite(); };
    if (!finite(g.w1) || !finite(g.w2) || !finite(g.b1) || !finite(g.b2))
        throw std::invalid_argument("optimizer_step: non-finite gradient, step rejected");
    s.step++;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    auto update = [&](auto& p, auto& mom, auto& vel, const auto& grad) {
        mom = s.beta1 * mom + (1.0 - s.beta1) * grad;
        vel = s.beta2 * vel + (1.0 - s.beta2) * grad.cwiseProduct(grad);
        auto mhat = mom / bc1;
        auto vhat = vel / bc2;
        p -= lr * (mhat.array() / (vhat.array().sqrt() + s.eps)).matrix();
        p -= lr * s.weight_decay * p;
    };
    update(m.w1, s.m_w1, s.v_w1, g.w1);
    update(m.b1, s.m_b1, s.v_b1, g.b1);
    update(m.w2, s.m_w2, s.v_w2, g.w2);
    update(m.b2, s.m_b2, s.v_b2, g.b2);
}

// ---------------------------------------------------------------------------
// Propensity models
// ---------------------------------------------------------------------------

class PropensityModel {
public:
    virtual ~PropensityModel() = default;
    // rows x groups, rows aligned with the given inputs
    virtual Eigen::MatrixXd class_probs(const Eigen::MatrixXd& z_inputs) const = 0;
};

/// Class frequencies; used when the adjustment set is empty.
class MarginalPropensity : public PropensityModel {
public:
    explicit MarginalPropensity(Eigen::VectorXd freqs) : freqs_(std::move(freqs)) {}
    Eigen::MatrixXd class_probs(const Eigen::MatrixXd& z) const override {
        Eigen::MatrixXd out(z.rows(), freqs_.size());
        out.rowwise() = freqs_.transpose();
        return out;
    }

private:
    Eigen::VectorXd freqs_;
};

/// Softmax MLP over the joint (sensitive, admissible) classes.
class MlpPropensity : public PropensityModel {
public:
    MlpPropensity(Mlp net, Eigen::VectorXd mean, Eigen::VectorXd stdev)
        : net_(std::move(net)), mean_(std::move(mean)), std_(std::move(stdev)) {}

    Eigen::MatrixXd class_probs(const Eigen::MatrixXd& z) const override {
        Eigen::MatrixXd zs = (z.rowwise() - mean_.transpose()).array().rowwise() /
                             std_.transpose().array();
        Eigen::MatrixXd logits = forward(net_, zs).preds;
        Eigen::MatrixXd shifted = logits.colwise() - logits.rowwise().maxCoeff();
        Eigen::MatrixXd ex = shifted.array().exp().matrix();
        return ex.array().colwise() / ex.rowwise().sum().array();
    }

private:
    Mlp net_;
    Eigen::VectorXd mean_, std_;
};

struct PropensityFitConfig {
    int hidden = 64;
    int epochs = 200;
    int batch_size = 256;
    double learning_rate = 1e-3;
    double weight_decay = 1e-2;
};

namespace detail {

inline std::pair<Eigen::VectorXd, Eigen::VectorXd> column_stats(const Eigen::MatrixXd& x) {
    Eigen::VectorXd mean = x.colwise().mean();
    Eigen::VectorXd stdev(x.cols());
    for (int c = 0; c < x.cols(); ++c) {
        double var = (x.col(c).array() - mean[c]).square().sum() / std::max(1, int(x.rows()) - 1);
        stdev[c] = std::sqrt(var);
        if (stdev[c] < 1e-12) stdev[c] = 1.0;
    }
    return {mean, stdev};
}

}  // namespace detail

inline std::unique_ptr<PropensityModel> fit_propensity(const Eigen::MatrixXd& z_train,
                                                       const std::vector<int>& class_of_row,
                                                       int n_classes,
                                                       const PropensityFitConfig& cfg, Rng& rng) {
    const int n = static_cast<int>(z_train.rows());
    if (z_train.cols() == 0) {
        Eigen::VectorXd freqs = Eigen::VectorXd::Zero(n_classes);
        for (int r = 0; r < n; ++r) freqs[class_of_row[r]] += 1.0;
        freqs /= static_cast<double>(n);
        return std::make_unique<MarginalPropensity>(std::move(freqs));
    }
    auto [mean, stdev] = detail::column_stats(z_train);
    Eigen::MatrixXd zs =
        (z_train.rowwise() - mean.transpose()).array().rowwise() / stdev.transpose().array();

    Mlp net = make_mlp(static_cast<int>(z_train.cols()), cfg.hidden, n_classes, Head::Identity, rng);
    OptimizerState opt = OptimizerState::init(net, cfg.weight_decay);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int b = std::min(cfg.batch_size, n - start);
            Eigen::MatrixXd xb(b, zs.cols());
            std::vector<int> yb(b);
            for (int i = 0; i < b; ++i) {
                xb.row(i) = zs.row(order[start + i]);
                yb[i] = class_of_row[order[start + i]];
            }
            ForwardCache cache = forward(net, xb);
            Eigen::MatrixXd shifted =
                cache.preds.colwise() - cache.preds.rowwise().maxCoeff();
            Eigen::MatrixXd ex = shifted.array().exp().matrix();
            Eigen::MatrixXd probs = ex.array().colwise() / ex.rowwise().sum().array();
            Eigen::MatrixXd dlogits = probs;
            for (int i = 0; i < b; ++i) dlogits(i, yb[i]) -= 1.0;
            dlogits /= static_cast<double>(b);
            optimizer_step(opt, net, backward(net, cache, dlogits), cfg.learning_rate);
        }
    }
    return std::make_unique<MlpPropensity>(std::move(net), std::move(mean), std::move(stdev));
}

// ---------------------------------------------------------------------------
// Predictor training
// ---------------------------------------------------------------------------

enum class Method { CIFair, Full, Unaware, NoDescs, Oracle };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::CIFair: return "c-ifair";
        case Method::Full: return "full";
        case Method::Unaware: return "unaware";
        case Method::NoDescs: return "no-descs";
        case Method::Oracle: return "oracle";
    }
    return "?";
}

inline std::optional<Method> method_from_name(const std::string& s) {
    for (Method m : {Method::CIFair, Method::Full, Method::Unaware, Method::NoDescs, Method::Oracle})
        if (method_name(m) == s) return m;
    return std::nullopt;
}

struct TrainConfig {
    int batch_size = 256;
    int epochs = 1000;
    double learning_rate = 1e-3;
    double weight_decay = 1e-2;
    int hidden = 32;
    std::optional<double> lambda;  // fixed penalty weight; grid-selected when unset
    std::vector<double> lambda_grid = {0, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20};
    std::uint64_t seed = 0;
    Method method = Method::Full;
    PropensityFitConfig propensity;
};

/// Standardizing wrapper around the trained network: consumes raw feature rows.
struct TrainedPredictor {
    Mlp net;
    std::vector<int> input_cols;
    Eigen::VectorXd feat_mean, feat_std;
    double target_mean = 0, target_std = 1;

    Eigen::VectorXd predict(const Eigen::MatrixXd& raw_features) const {
        Eigen::MatrixXd x(raw_features.rows(), input_cols.size());
        for (std::size_t c = 0; c < input_cols.size(); ++c) x.col(c) = raw_features.col(input_cols[c]);
        x = (x.rowwise() - feat_mean.transpose()).array().rowwise() / feat_std.transpose().array();
        return forward(net, x).preds.col(0);
    }
};

struct EpochStats {
    double loss = 0, penalty = 0;
    std::vector<double> per_candidate;
};

struct TrainResult {
    TrainedPredictor predictor;
    std::vector<EpochStats> log;
    double chosen_lambda = 0;
    double val_rmse = 0, val_penalty = 0;
};

struct PenaltyContext {
    // Per completed candidate: propensity model and the raw feature columns of
    // its adjustment variables.
    std::vector<std::unique_ptr<PropensityModel>> propensity;
    std::vector<std::vector<int>> z_cols;
    GroupIndex groups;  // built on the training split
    RffMap map;
};

// Propensity models are fitted per distinct adjustment set before predictor
// training; the RFF bandwidth comes from the median heuristic on the training
// targets (standardized scale).
inline PenaltyContext build_penalty_context(const Eigen::MatrixXd& features_raw,
                                            const Eigen::VectorXd& targets_std,
                                            const AdjustmentFamily& family,
                                            const std::vector<int>& a_cols,
                                            const std::vector<int>& x_cols,
                                            const PenaltyConfig& pcfg,
                                            const PropensityFitConfig& prop_cfg, Rng& rng) {
    PenaltyContext ctx;
    ctx.groups = build_group_index(features_raw, a_cols, x_cols);
    const int cap = std::min<int>(static_cast<int>(targets_std.size()), 4096);
    Eigen::MatrixXd sample = targets_std.head(cap);
    double gamma = median_heuristic(sample);
    ctx.map = build_rff_map(1, pcfg.d_rff, gamma, pcfg.bandwidth_multipliers, rng);
    for (const auto& cand : family.candidates) {
        if (cand.status != CandidateStatus::Completed) continue;
        std::vector<int> cols;
        for (int c : cand.clusters)
            for (int v : family.partition[c]) cols.push_back(v);
        std::sort(cols.begin(), cols.end());
        Eigen::MatrixXd z(features_raw.rows(), cols.size());
        for (std::size_t i = 0; i < cols.size(); ++i) z.col(i) = features_raw.col(cols[i]);
        ctx.propensity.push_back(fit_propensity(z, ctx.groups.group_of_row,
                                                ctx.groups.group_count(), prop_cfg, rng));
        ctx.z_cols.push_back(std::move(cols));
    }
    return ctx;
}

namespace detail {

struct PreparedData {
    Eigen::MatrixXd x;  // standardized, masked columns
    Eigen::VectorXd y;  // standardized
};

inline Eigen::MatrixXd select_cols(const Eigen::MatrixXd& m, const std::vector<int>& cols) {
    Eigen::MatrixXd out(m.rows(), cols.size());
    for (std::size_t i = 0; i < cols.size(); ++i) out.col(i) = m.col(cols[i]);
    return out;
}

}  // namespace detail

// One full optimization run at a fixed lambda. `mask_cols` are the raw feature
// columns visible to the model. When lambda > 0 the worst-case penalty and its
// gradient are added on each minibatch (batch-scope IPW normalization).
inline TrainResult train_single(const Dataset& train, const std::vector<int>& mask_cols,
                                double lambda, const TrainConfig& cfg, const PenaltyConfig& pcfg,
                                const PenaltyContext* ctx, Rng& rng) {
    const int n = train.rows();
    Eigen::MatrixXd x_raw = detail::select_cols(train.features, mask_cols);
    auto [fmean, fstd] = detail::column_stats(x_raw);
    Eigen::MatrixXd x = (x_raw.rowwise() - fmean.transpose()).array().rowwise() /
                        fstd.transpose().array();
    const double ymean = train.target.mean();
    const double ystd = [&] {
        double v = (train.target.array() - ymean).square().sum() / std::max(1, n - 1);
        return v > 1e-24 ? std::sqrt(v) : 1.0;
    }();
    Eigen::VectorXd y = (train.target.array() - ymean) / ystd;

    Mlp net = make_mlp(static_cast<int>(mask_cols.size()), cfg.hidden, 1, Head::Identity, rng);
    OptimizerState opt = OptimizerState::init(net, cfg.weight_decay);

    TrainResult res;
    res.chosen_lambda = lambda;
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    const bool use_penalty = lambda > 0 && ctx != nullptr;
    const int n_cand = ctx ? static_cast<int>(ctx->propensity.size()) : 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        EpochStats stats;
        stats.per_candidate.assign(n_cand, 0.0);
        int batches = 0;
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int b = std::min(cfg.batch_size, n - start);
            Eigen::MatrixXd xb(b, x.cols());
            Eigen::VectorXd yb(b);
            std::vector<int> rows(b);
            for (int i = 0; i < b; ++i) {
                rows[i] = order[start + i];
                xb.row(i) = x.row(rows[i]);
                yb[i] = y[rows[i]];
            }
            ForwardCache cache = forward(net, xb);
            Eigen::VectorXd err = cache.preds.col(0) - yb;
            double loss = err.squaredNorm() / b;
            Eigen::MatrixXd dpred = (2.0 / b) * err;

            if (use_penalty) {
                std::vector<int> batch_groups(b);
                for (int i = 0; i < b; ++i) batch_groups[i] = ctx->groups.group_of_row[rows[i]];
                std::vector<Eigen::MatrixXd> probs;
                probs.reserve(n_cand);
                for (int m = 0; m < n_cand; ++m) {
                    Eigen::MatrixXd zb(b, ctx->z_cols[m].size());
                    for (std::size_t c = 0; c < ctx->z_cols[m].size(); ++c)
                        for (int i = 0; i < b; ++i)
                            zb(i, c) = train.features(rows[i], ctx->z_cols[m][c]);
                    probs.push_back(ctx->propensity[m]->class_probs(zb));
                }
                PenaltyTerms terms =
                    penalty(cache.preds, batch_groups, ctx->groups, probs, ctx->map, pcfg);
                stats.penalty += terms.value;
                for (int m = 0; m < n_cand; ++m) stats.per_candidate[m] += terms.per_candidate[m];
                dpred += lambda * terms.dvalue_dpred;
                loss += lambda * terms.value;
            }
            stats.loss += loss;
            ++batches;
            optimizer_step(opt, net, backward(net, cache, dpred), cfg.learning_rate);
        }
        stats.loss /= batches;
        stats.penalty /= batches;
        for (auto& v : stats.per_candidate) v /= batches;
        res.log.push_back(std::move(stats));
    }

    res.predictor.net = std::move(net);
    res.predictor.input_cols = mask_cols;
    res.predictor.feat_mean = fmean;
    res.predictor.feat_std = fstd;
    res.predictor.target_mean = ymean;
    res.predictor.target_std = ystd;
    return res;
}

// Validation-split penalty at full-split scope; used for the lambda grid.
inline double validation_penalty(const TrainedPredictor& model, const Dataset& val,
                                 const PenaltyContext& ctx, const std::vector<int>& a_cols,
                                 const std::vector<int>& x_cols, const PenaltyConfig& pcfg) {
    const int n = val.rows();
    Eigen::MatrixXd preds = model.predict(val.features);
    std::vector<int> group_of_row(n, -1);
    for (int r = 0; r < n; ++r) {
        std::vector<double> a, xv;
        for (int c : a_cols) a.push_back(val.features(r, c));
        for (int c : x_cols) xv.push_back(val.features(r, c));
        group_of_row[r] = ctx.groups.find_group(a, xv);
    }
    std::vector<Eigen::MatrixXd> probs;
    for (std::size_t m = 0; m < ctx.propensity.size(); ++m) {
        Eigen::MatrixXd z = detail::select_cols(val.features, ctx.z_cols[m]);
        probs.push_back(ctx.propensity[m]->class_probs(z));
    }
    PenaltyTerms terms = penalty(preds, group_of_row, ctx.groups, probs, ctx.map, pcfg);
    return terms.value;
}

}  // namespace cifair
