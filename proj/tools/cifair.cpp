// Command-line front end for the synthetic interventional-fairness pipeline:
// dataset generation, graph construction, adjustment enumeration, training,
// evaluation, and the aggregate experiment tables.
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "cifair/harness.hpp"

using namespace cifair;
namespace fs = std::filesystem;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out = "out";
    std::uint64_t seed = 0;
    bool seed_given = false;
};

ExperimentConfig load_config(const CommonArgs& args) {
    ExperimentConfig cfg;
    if (!args.config_path.empty())
        cfg = config_from_json(json::parse(read_text_file(args.config_path)));
    if (args.seed_given) cfg.seeds = {args.seed};
    cfg.outdir = args.out;
    return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config JSON");
    cmd->add_option("--out", args.out, "output directory");
    cmd->add_option("--seed", args.seed, "instance seed")->each([&](const std::string&) {
        args.seed_given = true;
    });
}

void write_manifest(const ExperimentConfig& cfg, const std::string& name) {
    fs::create_directories(cfg.outdir + "/manifests");
    json manifest;
    manifest["config"] = config_to_json(cfg);
    manifest["config_hash"] = config_hash(cfg);
    manifest["code_version"] = CIFAIR_CODE_VERSION;
    manifest["seed_mixing"] = "child = splitmix64(base ^ (0x9E3779B97F4A7C15 * (index+1)))";
    write_text_file(cfg.outdir + "/manifests/" + name + ".json", manifest.dump(2) + "\n");
}

int cmd_gen(const CommonArgs& args) {
    ExperimentConfig cfg = load_config(args);
    for (std::uint64_t seed : cfg.seeds) {
        Instance inst = make_instance(cfg, seed);
        fs::create_directories(cfg.outdir + "/data");
        fs::create_directories(cfg.outdir + "/graphs");
        const std::string stem = "seed" + std::to_string(seed);
        write_text_file(cfg.outdir + "/graphs/dag_" + stem + ".json",
                        graph_document(inst.dag, inst.partition).dump(2) + "\n");
        write_text_file(cfg.outdir + "/data/scm_" + stem + ".json",
                        scm_to_json(inst.scm).dump(2) + "\n");
        Dataset all;
        all.features.resize(cfg.n, inst.dag.node_count());
        all.features << inst.train.features, inst.val.features, inst.test.features;
        all.target.resize(cfg.n);
        all.target << inst.train.target, inst.val.target, inst.test.target;
        write_text_file(cfg.outdir + "/data/data_" + stem + ".csv", dataset_to_csv(all));
        json sidecar;
        json roles = json::array();
        for (Role r : inst.partition.roles()) roles.push_back(role_name(r));
        sidecar["roles"] = roles;
        sidecar["seed"] = seed;
        sidecar["scm-kind"] = cfg.kind == ScmKind::Linear ? "linear" : "nonlinear";
        sidecar["dag-file"] = "../graphs/dag_" + stem + ".json";
        sidecar["split"] = {cfg.train_frac, cfg.val_frac, cfg.test_frac};
        write_text_file(cfg.outdir + "/data/data_" + stem + ".json", sidecar.dump(2) + "\n");
        std::cout << "gen: seed " << seed << " -> " << cfg.outdir << "/data/data_" << stem
                  << ".csv\n";
    }
    write_manifest(cfg, "gen");
    return 0;
}

int cmd_graph(const CommonArgs& args, const std::string& graph_path) {
    ExperimentConfig cfg = load_config(args);
    for (std::uint64_t seed : cfg.seeds) {
        VariableDag dag(2, {});
        ClusterPartition part(std::vector<std::vector<int>>{{0}, {1}});
        if (!graph_path.empty()) {
            json doc = json::parse(read_text_file(graph_path));
            dag = dag_from_document(doc);
            part = partition_from_document(doc);
        } else {
            Instance inst = make_instance(cfg, seed);
            dag = inst.dag;
            part = inst.partition;
        }
        ClusterDag cd = build_cluster_dag(dag, part);
        MecFamily mec = enumerate_cluster_mec(cd, cfg.mec_cap);
        ClusterCpdag cp = build_cluster_cpdag(mec);
        fs::create_directories(cfg.outdir + "/graphs");
        const std::string stem = "seed" + std::to_string(seed);
        write_text_file(cfg.outdir + "/graphs/cluster_dag_" + stem + ".json",
                        graph_document(dag, part, &cd).dump(2) + "\n");
        write_text_file(cfg.outdir + "/graphs/cluster_cpdag_" + stem + ".json",
                        graph_document(dag, part, nullptr, &cp).dump(2) + "\n");
        std::cout << "graph: seed " << seed << " MEC size " << mec.members.size() << ", "
                  << cp.undirected_edges().size() << " undirected edges\n";
        if (!graph_path.empty()) break;
    }
    write_manifest(cfg, "graph");
    return 0;
}

int cmd_adjust(const CommonArgs& args, const std::string& graph_path) {
    ExperimentConfig cfg = load_config(args);
    for (std::uint64_t seed : cfg.seeds) {
        VariableDag dag(2, {});
        ClusterPartition part(std::vector<std::vector<int>>{{0}, {1}});
        if (!graph_path.empty()) {
            json doc = json::parse(read_text_file(graph_path));
            dag = dag_from_document(doc);
            part = partition_from_document(doc);
        } else {
            Instance inst = make_instance(cfg, seed);
            dag = inst.dag;
            part = inst.partition;
        }
        AdjustmentOptions opts;
        opts.mec_cap = cfg.mec_cap;
        AdjustmentFamily fam = enumerate_adjustment_sets(dag, part, opts);
        fs::create_directories(cfg.outdir + "/results");
        const std::string stem = "seed" + std::to_string(seed);
        write_text_file(cfg.outdir + "/results/adjustment_" + stem + ".json",
                        adjustment_report(fam).dump(2) + "\n");
        std::cout << "adjust: seed " << seed << " M=" << fam.M() << " refinement_rounds="
                  << fam.refinement_rounds << "\n";
        if (!graph_path.empty()) break;
    }
    write_manifest(cfg, "adjust");
    return 0;
}

int cmd_train(const CommonArgs& args, const std::string& method_name_arg,
              std::optional<double> lambda) {
    ExperimentConfig cfg = load_config(args);
    if (lambda) cfg.train.lambda = *lambda;
    auto method = method_from_name(method_name_arg);
    if (!method) {
        std::cerr << "unknown method: " << method_name_arg << "\n";
        return 1;
    }
    for (std::uint64_t seed : cfg.seeds) {
        Instance inst = make_instance(cfg, seed);
        CellResult cell = train_cell(cfg, seed, *method, inst);
        const std::string tag = method_name(*method) + "_seed" + std::to_string(seed);
        fs::create_directories(cfg.outdir + "/checkpoints");
        fs::create_directories(cfg.outdir + "/results");
        write_text_file(cfg.outdir + "/checkpoints/model_" + tag + ".json",
                        predictor_to_json(cell.train.predictor).dump(2) + "\n");
        write_text_file(cfg.outdir + "/results/trainlog_" + tag + ".csv",
                        training_log_csv(cell.train.log));
        if (cell.family)
            write_text_file(cfg.outdir + "/results/adjustment_seed" + std::to_string(seed) + ".json",
                            adjustment_report(*cell.family).dump(2) + "\n");
        std::cout << "train: " << tag << " lambda=" << cell.train.chosen_lambda
                  << " final_loss=" << cell.train.log.back().loss << "\n";
    }
    write_manifest(cfg, "train");
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& method_name_arg,
             const std::string& model_path) {
    ExperimentConfig cfg = load_config(args);
    auto method = method_from_name(method_name_arg);
    if (!method) {
        std::cerr << "unknown method: " << method_name_arg << "\n";
        return 1;
    }
    fs::create_directories(cfg.outdir + "/results");
    std::string csv = "method,seed,config_hash,lambda,rmse,unfairness\n";
    for (std::uint64_t seed : cfg.seeds) {
        Instance inst = make_instance(cfg, seed);
        const std::string tag = method_name(*method) + "_seed" + std::to_string(seed);
        std::string path = model_path.empty()
                               ? cfg.outdir + "/checkpoints/model_" + tag + ".json"
                               : model_path;
        TrainedPredictor model = predictor_from_json(json::parse(read_text_file(path)));
        EvalReport rep = evaluate_cell(cfg, seed, *method, inst, model, std::nullopt, 0.0);
        write_text_file(cfg.outdir + "/results/eval_" + tag + ".json",
                        eval_report_to_json(rep).dump(2) + "\n");
        csv += rep.method + "," + std::to_string(seed) + "," + hash_hex(config_hash(cfg)) + "," + format_double(rep.chosen_lambda) +
               ',' + format_double(rep.rmse) + ',' + format_double(rep.unfairness) + '\n';
        std::cout << "eval: " << tag << " rmse=" << rep.rmse << " unfairness=" << rep.unfairness
                  << "\n";
    }
    write_text_file(cfg.outdir + "/results/eval_summary.csv", csv);
    write_manifest(cfg, "eval");
    return 0;
}

int cmd_table(const CommonArgs& args) {
    ExperimentConfig cfg = load_config(args);
    auto rows = run_table(cfg);
    std::cout << table_to_csv(rows, config_hash(cfg));
    return 0;
}

int cmd_tradeoff(const CommonArgs& args, std::vector<double> lambdas) {
    ExperimentConfig cfg = load_config(args);
    if (lambdas.empty()) lambdas = {0, 1, 2, 5, 10, 20, 50, 100, 200};
    TradeoffCurve curve = run_tradeoff(cfg, lambdas);
    std::cout << "lambda,rmse_mean,unf_mean\n";
    for (const auto& p : curve.points)
        std::cout << p.lambda << ',' << p.rmse_mean << ',' << p.unf_mean << '\n';
    std::cout << "spearman(lambda, unfairness) = " << curve.spearman_lambda_unfairness << "\n";
    std::cout << "spearman(lambda, rmse) = " << curve.spearman_lambda_rmse << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Interventional fairness with cluster CPDAGs: synthetic pipeline"};
    app.require_subcommand(1);

    CommonArgs gen_args, graph_args, adjust_args, train_args, eval_args, table_args, tradeoff_args;
    std::string graph_path, adjust_graph_path, train_method = "c-ifair", eval_method = "c-ifair";
    std::string model_path;
    double train_lambda = -1;
    std::vector<double> lambdas;

    auto* gen = app.add_subcommand("gen", "generate DAG, SCM, and dataset files");
    add_common(gen, gen_args);

    auto* graph = app.add_subcommand("graph", "build the cluster DAG and CPDAG");
    add_common(graph, graph_args);
    graph->add_option("--graph", graph_path, "graph document to load instead of generating");

    auto* adjust = app.add_subcommand("adjust", "enumerate adjustment cluster sets");
    add_common(adjust, adjust_args);
    adjust->add_option("--graph", adjust_graph_path, "graph document to load instead of generating");

    auto* train = app.add_subcommand("train", "train a predictor");
    add_common(train, train_args);
    train->add_option("--method", train_method, "full|unaware|no-descs|oracle|c-ifair");
    train->add_option("--lambda", train_lambda, "fixed penalty weight");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval, eval_args);
    eval->add_option("--method", eval_method, "method tag of the checkpoint");
    eval->add_option("--model", model_path, "checkpoint path (defaults to out/checkpoints)");

    auto* table = app.add_subcommand("table", "aggregate RMSE/unfairness table over seeds");
    add_common(table, table_args);

    auto* tradeoff = app.add_subcommand("tradeoff", "lambda sweep for the trade-off curve");
    add_common(tradeoff, tradeoff_args);
    tradeoff->add_option("--lambdas", lambdas, "lambda values for the sweep");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen(gen_args);
        if (graph->parsed()) return cmd_graph(graph_args, graph_path);
        if (adjust->parsed()) return cmd_adjust(adjust_args, adjust_graph_path);
        if (train->parsed())
            return cmd_train(train_args, train_method,
                             train_lambda >= 0 ? std::optional<double>(train_lambda) : std::nullopt);
        if (eval->parsed()) return cmd_eval(eval_args, eval_method, model_path);
        if (table->parsed()) return cmd_table(table_args);
        if (tradeoff->parsed()) return cmd_tradeoff(tradeoff_args, lambdas);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
