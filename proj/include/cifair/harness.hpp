#pragma once

#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "cifair/adjustment.hpp"
#include "cifair/learn.hpp"
#include "cifair/metrics.hpp"
#include "cifair/serialize.hpp"

namespace cifair {

#ifndef CIFAIR_CODE_VERSION
#define CIFAIR_CODE_VERSION "unknown"
#endif

struct ExperimentConfig {
    int d = 5;
    int vars_per_cluster = 3;
    ScmKind kind = ScmKind::Linear;
    double expected_degree = 2.0;
    int n = 5000;
    double train_frac = 0.8, val_frac = 0.1, test_frac = 0.1;
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9,
                                        10, 11, 12, 13, 14, 15, 16, 17, 18, 19};
    std::vector<std::string> methods = {"full", "unaware", "no-descs", "oracle", "c-ifair"};
    bool admissible = false;
    std::string outdir;
    int n_eval = 2000;
    int mec_cap = 12;
    TrainConfig train;
    PenaltyConfig penalty;
};

inline json config_to_json(const ExperimentConfig& c) {
    json doc;
    doc["d"] = c.d;
    doc["vars_per_cluster"] = c.vars_per_cluster;
    doc["kind"] = c.kind == ScmKind::Linear ? "linear" : "nonlinear";
    doc["expected_degree"] = c.expected_degree;
    doc["n"] = c.n;
    doc["split"] = {c.train_frac, c.val_frac, c.test_frac};
    doc["seeds"] = c.seeds;
    doc["methods"] = c.methods;
    doc["admissible"] = c.admissible;
    doc["outdir"] = c.outdir;
    doc["n_eval"] = c.n_eval;
    doc["mec_cap"] = c.mec_cap;
    doc["train"] = {{"batch_size", c.train.batch_size},
                    {"epochs", c.train.epochs},
                    {"learning_rate", c.train.learning_rate},
                    {"weight_decay", c.train.weight_decay},
                    {"hidden", c.train.hidden},
                    {"lambda_grid", c.train.lambda_grid},
                    {"propensity_epochs", c.train.propensity.epochs},
                    {"propensity_hidden", c.train.propensity.hidden}};
    if (c.train.lambda) doc["train"]["lambda"] = *c.train.lambda;
    doc["penalty"] = {{"d_rff", c.penalty.d_rff},
                      {"mellowmax_omega", c.penalty.mellowmax_omega},
                      {"clip_quantile", c.penalty.clip_quantile},
                      {"bandwidth_multipliers", c.penalty.bandwidth_multipliers}};
    return doc;
}

inline ExperimentConfig config_from_json(const json& doc) {
    ExperimentConfig c;
    if (doc.contains("d")) c.d = doc["d"];
    if (doc.contains("vars_per_cluster")) c.vars_per_cluster = doc["vars_per_cluster"];
    if (doc.contains("kind"))
        c.kind = doc["kind"] == "nonlinear" ? ScmKind::Nonlinear : ScmKind::Linear;
    if (doc.contains("expected_degree")) c.expected_degree = doc["expected_degree"];
    if (doc.contains("n")) c.n = doc["n"];
    if (doc.contains("split")) {
        c.train_frac = doc["split"][0];
        c.val_frac = doc["split"][1];
        c.test_frac = doc["split"][2];
    }
    if (doc.contains("seeds")) c.seeds = doc["seeds"].get<std::vector<std::uint64_t>>();
    if (doc.contains("methods")) c.methods = doc["methods"].get<std::vector<std::string>>();
    if (doc.contains("admissible")) c.admissible = doc["admissible"];
    if (doc.contains("outdir")) c.outdir = doc["outdir"];
    if (doc.contains("n_eval")) c.n_eval = doc["n_eval"];
    if (doc.contains("mec_cap")) c.mec_cap = doc["mec_cap"];
    if (doc.contains("train")) {
        const auto& t = doc["train"];
        if (t.contains("batch_size")) c.train.batch_size = t["batch_size"];
        if (t.contains("epochs")) c.train.epochs = t["epochs"];
        if (t.contains("learning_rate")) c.train.learning_rate = t["learning_rate"];
        if (t.contains("weight_decay")) c.train.weight_decay = t["weight_decay"];
        if (t.contains("hidden")) c.train.hidden = t["hidden"];
        if (t.contains("lambda")) c.train.lambda = t["lambda"].get<double>();
        if (t.contains("lambda_grid")) c.train.lambda_grid = t["lambda_grid"].get<std::vector<double>>();
        if (t.contains("propensity_epochs")) c.train.propensity.epochs = t["propensity_epochs"];
        if (t.contains("propensity_hidden")) c.train.propensity.hidden = t["propensity_hidden"];
    }
    if (doc.contains("penalty")) {
        const auto& p = doc["penalty"];
        if (p.contains("d_rff")) c.penalty.d_rff = p["d_rff"];
        if (p.contains("mellowmax_omega")) c.penalty.mellowmax_omega = p["mellowmax_omega"];
        if (p.contains("clip_quantile")) c.penalty.clip_quantile = p["clip_quantile"];
        if (p.contains("bandwidth_multipliers"))
            c.penalty.bandwidth_multipliers = p["bandwidth_multipliers"].get<std::vector<double>>();
    }
    if (c.train_frac + c.val_frac + c.test_frac > 1.0 + 1e-9)
        throw std::invalid_argument("config: split fractions exceed 1");
    if (c.seeds.empty()) throw std::invalid_argument("config: seeds must be nonempty");
    return c;
}

inline std::uint64_t config_hash(const ExperimentConfig& c) {
    std::string s = config_to_json(c).dump();
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

/// One generated experiment world: graph, roles, SCM, splits.
struct Instance {
    VariableDag dag;
    ClusterPartition partition;
    Scm scm;
    Dataset train, val, test;
};

// Random DAG + random admissible partition + role/kind assignment per the
// synthetic protocol: sensitive cluster is the lowest-id binary-designated
// cluster of degree >= 2, admissible (optional) a random child of it.
inline Instance make_instance(const ExperimentConfig& cfg, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    const int d_v = cfg.d * cfg.vars_per_cluster;

    for (int attempt = 0; attempt < 200; ++attempt) {
        VariableDag skeleton = sample_er_dag(d_v, cfg.expected_degree, rng);
        std::optional<ClusterPartition> partition;
        for (int ptry = 0; ptry < 50; ++ptry) {
            std::vector<int> ids(d_v);
            std::iota(ids.begin(), ids.end(), 0);
            std::shuffle(ids.begin(), ids.end(), rng);
            std::vector<std::vector<int>> clusters(cfg.d);
            for (int i = 0; i < d_v; ++i) clusters[i / cfg.vars_per_cluster].push_back(ids[i]);
            ClusterPartition cand(clusters);
            if (is_admissible(skeleton, cand)) {
                partition = std::move(cand);
                break;
            }
        }
        if (!partition) continue;

        auto edges = project_clusters(skeleton, *partition);
        std::vector<int> degree(cfg.d, 0);
        for (auto [p, c] : edges) {
            degree[p]++;
            degree[c]++;
        }
        int a = -1;
        for (int c = 0; c < cfg.d; ++c)
            if (degree[c] >= 2) {
                a = c;
                break;
            }
        if (a < 0) {
            int best = -1;
            for (int c = 0; c < cfg.d; ++c)
                if (best < 0 || degree[c] > degree[best]) best = c;
            a = best;
        }

        std::vector<Role> roles(cfg.d, Role::Plain);
        roles[a] = Role::Sensitive;
        if (cfg.admissible) {
            std::vector<int> kids;
            for (auto [p, c] : edges)
                if (p == a) kids.push_back(c);
            if (!kids.empty()) {
                std::uniform_int_distribution<int> pick(0, static_cast<int>(kids.size()) - 1);
                roles[kids[pick(rng)]] = Role::Admissible;
            }
        }

        std::vector<NodeKind> kinds(d_v, NodeKind::Continuous);
        std::uniform_int_distribution<int> coin(0, 1);
        for (int c = 0; c < cfg.d; ++c) {
            bool binary = roles[c] == Role::Sensitive || roles[c] == Role::Admissible
                              ? true
                              : coin(rng) == 1;
            if (binary)
                for (int v : partition->cluster(c)) kinds[v] = NodeKind::Binary;
        }

        VariableDag dag(d_v, skeleton.edges(), kinds);
        ClusterPartition part(partition->clusters(), roles);
        Scm scm = build_scm(dag, part, cfg.kind, rng);
        Dataset all = sample_observational(scm, cfg.n, rng);

        const int n_train = static_cast<int>(cfg.n * cfg.train_frac);
        const int n_val = static_cast<int>(cfg.n * cfg.val_frac);
        auto slice = [&](int start, int count, const char* tag) {
            Dataset ds;
            ds.features = all.features.middleRows(start, count);
            ds.target = all.target.segment(start, count);
            ds.split_tag = tag;
            return ds;
        };
        Instance inst{dag, part, scm, slice(0, n_train, "train"),
                      slice(n_train, n_val, "validation"),
                      slice(n_train + n_val, cfg.n - n_train - n_val, "test")};
        return inst;
    }
    throw std::runtime_error("make_instance: failed to build an admissible instance");
}

namespace detail {

inline std::vector<int> all_columns(int d_v) {
    std::vector<int> cols(d_v);
    std::iota(cols.begin(), cols.end(), 0);
    return cols;
}

inline std::vector<int> drop_columns(int d_v, const std::vector<int>& dropped) {
    std::vector<char> drop(d_v, 0);
    for (int c : dropped) drop[c] = 1;
    std::vector<int> cols;
    for (int c = 0; c < d_v; ++c)
        if (!drop[c]) cols.push_back(c);
    return cols;
}

}  // namespace detail

// Feature mask per method. no-descs consults the cluster CPDAG; oracle the
// true variable DAG. Both remove the sensitive variables themselves along with
// the descendants.
inline std::vector<int> method_mask(Method method, const Instance& inst,
                                    const ClusterCpdag* cpdag) {
    const int d_v = inst.dag.node_count();
    const int a = inst.partition.sensitive_cluster();
    const auto& a_vars = inst.partition.cluster(a);
    switch (method) {
        case Method::CIFair:
        case Method::Full:
            return detail::all_columns(d_v);
        case Method::Unaware:
            return detail::drop_columns(d_v, a_vars);
        case Method::NoDescs: {
            if (cpdag == nullptr) throw std::invalid_argument("method_mask: no-descs needs a CPDAG");
            std::vector<int> dropped = a_vars;
            for (int c : definite_descendants(*cpdag, a))
                for (int v : inst.partition.cluster(c)) dropped.push_back(v);
            return detail::drop_columns(d_v, dropped);
        }
        case Method::Oracle: {
            std::vector<int> dropped;
            for (int v : a_vars)
                for (int u : inst.dag.descendants_and_self(v)) dropped.push_back(u);
            std::sort(dropped.begin(), dropped.end());
            dropped.erase(std::unique(dropped.begin(), dropped.end()), dropped.end());
            return detail::drop_columns(d_v, dropped);
        }
    }
    return detail::all_columns(d_v);
}

struct CellResult {
    EvalReport report;
    TrainResult train;
    std::optional<AdjustmentFamily> family;
};

/// Generate + identify (c-ifair only) + train; no evaluation.
inline CellResult train_cell(const ExperimentConfig& cfg, std::uint64_t seed, Method method,
                             const Instance& inst) {
    const int a = inst.partition.sensitive_cluster();
    auto ad = inst.partition.find_role(Role::Admissible);
    const std::vector<int> a_cols = inst.partition.cluster(a);
    const std::vector<int> x_cols = ad ? inst.partition.cluster(*ad) : std::vector<int>{};

    CellResult out;
    std::optional<ClusterCpdag> cpdag;
    if (method == Method::NoDescs) {
        ClusterDag cd = build_cluster_dag(inst.dag, inst.partition);
        cpdag = build_cluster_cpdag(enumerate_cluster_mec(cd, cfg.mec_cap));
    }
    std::optional<PenaltyContext> ctx;
    if (method == Method::CIFair) {
        AdjustmentOptions opts;
        opts.mec_cap = cfg.mec_cap;
        out.family = enumerate_adjustment_sets(inst.dag, inst.partition, opts);
        bool any_completed = false;
        for (const auto& c : out.family->candidates)
            any_completed = any_completed || c.status == CandidateStatus::Completed;
        if (!any_completed)
            throw identification_error("train_cell: no completed adjustment candidates");
        Rng prng = make_rng(child_seed(seed, 101));
        // standardized targets for the bandwidth heuristic
        Eigen::VectorXd y = inst.train.target;
        double mean = y.mean();
        double stdv =
            std::sqrt((y.array() - mean).square().sum() / std::max(1, inst.train.rows() - 1));
        if (stdv < 1e-12) stdv = 1.0;
        Eigen::VectorXd ys = (y.array() - mean) / stdv;
        ctx = build_penalty_context(inst.train.features, ys, *out.family, a_cols, x_cols,
                                    cfg.penalty, cfg.train.propensity, prng);
    }

    std::vector<int> mask = method_mask(method, inst, cpdag ? &*cpdag : nullptr);

    auto train_at = [&](double lambda) {
        Rng trng = make_rng(child_seed(seed, 202));
        return train_single(inst.train, mask, lambda, cfg.train, cfg.penalty,
                            ctx ? &*ctx : nullptr, trng);
    };

    if (method != Method::CIFair) {
        out.train = train_at(0.0);
    } else if (cfg.train.lambda) {
        out.train = train_at(*cfg.train.lambda);
    } else {
        double best_score = 0;
        bool first = true;
        for (double lambda : cfg.train.lambda_grid) {
            TrainResult r = train_at(lambda);
            Eigen::VectorXd val_std =
                (inst.val.target.array() - r.predictor.target_mean) / r.predictor.target_std;
            double vr = rmse(r.predictor.predict(inst.val.features), val_std);
            double vp = validation_penalty(r.predictor, inst.val, *ctx, a_cols, x_cols, cfg.penalty);
            double score = vr + vp;
            r.val_rmse = vr;
            r.val_penalty = vp;
            if (first || score < best_score) {
                best_score = score;
                out.train = std::move(r);
                first = false;
            }
        }
    }
    return out;
}

/// Test-split RMSE plus interventional unfairness against the true SCM.
inline EvalReport evaluate_cell(const ExperimentConfig& cfg, std::uint64_t seed, Method method,
                                const Instance& inst, const TrainedPredictor& model,
                                const std::optional<AdjustmentFamily>& family,
                                double chosen_lambda) {
    EvalReport rep;
    rep.method = method_name(method);
    rep.seed = seed;
    rep.chosen_lambda = chosen_lambda;
    rep.n_eval = cfg.n_eval;
    if (family) {
        rep.refinement_rounds = family->refinement_rounds;
        rep.m_candidates = family->M();
    }
    Eigen::VectorXd test_std =
        (inst.test.target.array() - model.target_mean) / model.target_std;
    rep.rmse = rmse(model.predict(inst.test.features), test_std);
    Rng erng = make_rng(child_seed(seed, 303));
    rep.unfairness = unfairness([&](const Eigen::MatrixXd& f) { return model.predict(f); },
                                inst.scm, inst.partition, cfg.n_eval, erng, &rep.pairs);
    return rep;
}

inline void write_cell_artifacts(const ExperimentConfig& cfg, std::uint64_t seed, Method method,
                                 const Instance& inst, const CellResult& cell) {
    namespace fs = std::filesystem;
    const std::string tag = method_name(method) + "_seed" + std::to_string(seed);
    fs::create_directories(cfg.outdir + "/graphs");
    fs::create_directories(cfg.outdir + "/results");
    fs::create_directories(cfg.outdir + "/checkpoints");
    ClusterDag cd = build_cluster_dag(inst.dag, inst.partition);
    write_text_file(cfg.outdir + "/graphs/graph_seed" + std::to_string(seed) + ".json",
                    graph_document(inst.dag, inst.partition, &cd).dump(2) + "\n");
    write_text_file(cfg.outdir + "/results/eval_" + tag + ".json",
                    eval_report_to_json(cell.report).dump(2) + "\n");
    write_text_file(cfg.outdir + "/checkpoints/model_" + tag + ".json",
                    predictor_to_json(cell.train.predictor).dump(2) + "\n");
    if (cell.family)
        write_text_file(cfg.outdir + "/results/adjustment_seed" + std::to_string(seed) + ".json",
                        adjustment_report(*cell.family).dump(2) + "\n");
    write_text_file(cfg.outdir + "/results/trainlog_" + tag + ".csv",
                    training_log_csv(cell.train.log));
}

// One (config, seed, method) cell: generate, identify (c-ifair), train,
// evaluate. Artifacts are written when cfg.outdir is set.
inline CellResult run_cell(const ExperimentConfig& cfg, std::uint64_t seed, Method method) {
    Instance inst = make_instance(cfg, seed);
    CellResult out = train_cell(cfg, seed, method, inst);
    out.report = evaluate_cell(cfg, seed, method, inst, out.train.predictor, out.family,
                               out.train.chosen_lambda);
    if (!cfg.outdir.empty()) write_cell_artifacts(cfg, seed, method, inst, out);
    return out;
}

struct TableRow {
    std::string method;
    int d = 0;
    std::string kind;
    double rmse_mean = 0, rmse_std = 0, unf_mean = 0, unf_std = 0;
    int n_seeds = 0;
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double var = 0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var = xs.size() > 1 ? var / (n - 1) : 0.0;
    return {mean, std::sqrt(var)};
}

}  // namespace detail

inline std::string hash_hex(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string table_to_csv(const std::vector<TableRow>& rows, std::uint64_t cfg_hash = 0) {
    std::string out = "method,d,kind,rmse_mean,rmse_std,unf_mean,unf_std,seeds,config_hash\n";
    for (const auto& r : rows)
        out += r.method + ',' + std::to_string(r.d) + ',' + r.kind + ',' +
               format_double(r.rmse_mean) + ',' + format_double(r.rmse_std) + ',' +
               format_double(r.unf_mean) + ',' + format_double(r.unf_std) + ',' +
               std::to_string(r.n_seeds) + ',' + hash_hex(cfg_hash) + '\n';
    return out;
}

/// Mean +- std of RMSE and unfairness per method over all seeds.
inline std::vector<TableRow> run_table(const ExperimentConfig& cfg,
                                       std::vector<CellResult>* cells = nullptr) {
    std::vector<TableRow> rows;
    for (const auto& mname : cfg.methods) {
        auto method = method_from_name(mname);
        if (!method) throw std::invalid_argument("run_table: unknown method " + mname);
        std::vector<double> rmses, unfs;
        for (std::uint64_t seed : cfg.seeds) {
            CellResult cell = run_cell(cfg, seed, *method);
            rmses.push_back(cell.report.rmse);
            unfs.push_back(cell.report.unfairness);
            if (cells != nullptr) cells->push_back(std::move(cell));
        }
        auto [rm, rs] = detail::mean_std(rmses);
        auto [um, us] = detail::mean_std(unfs);
        rows.push_back({mname, cfg.d, cfg.kind == ScmKind::Linear ? "linear" : "nonlinear", rm, rs,
                        um, us, static_cast<int>(cfg.seeds.size())});
    }
    if (!cfg.outdir.empty()) {
        std::filesystem::create_directories(cfg.outdir + "/results");
        write_text_file(cfg.outdir + "/results/table.csv", table_to_csv(rows, config_hash(cfg)));
        std::filesystem::create_directories(cfg.outdir + "/manifests");
        json manifest;
        manifest["config"] = config_to_json(cfg);
        manifest["config_hash"] = config_hash(cfg);
        manifest["code_version"] = CIFAIR_CODE_VERSION;
        manifest["seed_mixing"] = "child = splitmix64(base ^ (0x9E3779B97F4A7C15 * (index+1)))";
        write_text_file(cfg.outdir + "/manifests/table.json", manifest.dump(2) + "\n");
    }
    return rows;
}

inline double spearman_rho(const std::vector<double>& xs, const std::vector<double>& ys) {
    const int n = static_cast<int>(xs.size());
    auto ranks = [&](const std::vector<double>& v) {
        std::vector<int> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
        std::vector<double> r(n);
        int i = 0;
        while (i < n) {
            int j = i;
            while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
            double avg = (i + j) / 2.0 + 1.0;
            for (int k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    auto rx = ranks(xs), ry = ranks(ys);
    double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double num = 0, dx = 0, dy = 0;
    for (int i = 0; i < n; ++i) {
        num += (rx[i] - mx) * (ry[i] - my);
        dx += (rx[i] - mx) * (rx[i] - mx);
        dy += (ry[i] - my) * (ry[i] - my);
    }
    if (dx <= 0 || dy <= 0) return 0;
    return num / std::sqrt(dx * dy);
}

struct TradeoffPoint {
    double lambda = 0;
    double rmse_mean = 0, rmse_std = 0, unf_mean = 0, unf_std = 0;
};

struct TradeoffCurve {
    std::vector<TradeoffPoint> points;
    double spearman_lambda_unfairness = 0;
    double spearman_lambda_rmse = 0;
};

/// Per-lambda means over seeds for the c-ifair method, with trend statistics.
inline TradeoffCurve run_tradeoff(const ExperimentConfig& cfg, const std::vector<double>& lambdas) {
    if (lambdas.empty()) throw std::invalid_argument("run_tradeoff: empty lambda list");
    TradeoffCurve curve;
    std::vector<double> ls, unfs, rmses;
    for (double lambda : lambdas) {
        ExperimentConfig c = cfg;
        c.train.lambda = lambda;
        std::vector<double> rs, us;
        for (std::uint64_t seed : cfg.seeds) {
            CellResult cell = run_cell(c, seed, Method::CIFair);
            rs.push_back(cell.report.rmse);
            us.push_back(cell.report.unfairness);
        }
        auto [rm, rstd] = detail::mean_std(rs);
        auto [um, ustd] = detail::mean_std(us);
        curve.points.push_back({lambda, rm, rstd, um, ustd});
        ls.push_back(lambda);
        rmses.push_back(rm);
        unfs.push_back(um);
    }
    curve.spearman_lambda_unfairness = spearman_rho(ls, unfs);
    curve.spearman_lambda_rmse = spearman_rho(ls, rmses);
    if (!cfg.outdir.empty()) {
        std::filesystem::create_directories(cfg.outdir + "/results");
        std::string csv = "lambda,rmse_mean,rmse_std,unf_mean,unf_std,seeds,config_hash\n";
        const std::string h = hash_hex(config_hash(cfg));
        for (const auto& p : curve.points)
            csv += format_double(p.lambda) + ',' + format_double(p.rmse_mean) + ',' +
                   format_double(p.rmse_std) + ',' + format_double(p.unf_mean) + ',' +
                   format_double(p.unf_std) + ',' + std::to_string(cfg.seeds.size()) + ',' + h +
                   '\n';
        write_text_file(cfg.outdir + "/results/tradeoff.csv", csv);
        json meta;
        meta["spearman_lambda_unfairness"] = curve.spearman_lambda_unfairness;
        meta["spearman_lambda_rmse"] = curve.spearman_lambda_rmse;
        meta["config_hash"] = config_hash(cfg);
        meta["code_version"] = CIFAIR_CODE_VERSION;
        write_text_file(cfg.outdir + "/results/tradeoff_meta.json", meta.dump(2) + "\n");
    }
    return curve;
}

}  // namespace cifair
