#pragma once

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mesc/affinity.hpp"
#include "mesc/data.hpp"
#include "mesc/metrics.hpp"
#include "mesc/network.hpp"
#include "mesc/run_config.hpp"
#include "mesc/spectral.hpp"

namespace mesc::cli {

namespace detail {

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

inline std::vector<std::pair<std::string, std::string>> collect_overrides(
    const std::vector<std::string>& args, std::size_t start, std::string& config_file) {
    std::vector<std::pair<std::string, std::string>> overrides;
    for (std::size_t i = start; i < args.size(); i += 2) {
        const std::string& flag = args[i];
        if (flag.size() < 3 || flag.compare(0, 2, "--") != 0) {
            throw ConfigError("expected a --key, got '" + flag + "'");
        }
        if (i + 1 >= args.size()) {
            throw ConfigError("key '" + flag.substr(2) + "': missing value");
        }
        const std::string key = flag.substr(2);
        if (key == "spec") {
            config_file = args[i + 1];
        } else {
            overrides.emplace_back(key, args[i + 1]);
        }
    }
    return overrides;
}

inline RunConfig config_from_args(const std::vector<std::string>& args, std::size_t start) {
    std::string config_file;
    const auto overrides = collect_overrides(args, start, config_file);
    return parse_config(config_file, overrides);
}

inline void write_report(const std::string& path, const std::string& body) {
    mesc::detail::write_file_bytes(path, body);
}

inline std::string dataset_dir_file(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

/// Loads the feature matrix of a dataset directory (features.mescmat, falling
/// back to flattened images.mescmat) or a single matrix file path.
inline Matrix load_features(const std::string& in) {
    namespace fs = std::filesystem;
    if (fs::is_directory(in)) {
        const std::string feat = dataset_dir_file(in, "features.mescmat");
        if (fs::exists(feat)) return load_matrix(feat);
        const std::string img = dataset_dir_file(in, "images.mescmat");
        if (fs::exists(img)) return load_matrix(img);
        throw IoError("no features.mescmat or images.mescmat under '" + in + "'");
    }
    return load_matrix(in);
}

inline SyntheticSpec synthetic_spec_from(const RunConfig& cfg) {
    SyntheticSpec spec;
    spec.k = cfg.k;
    spec.dims = cfg.dims.size() == 1 ? std::vector<std::size_t>(cfg.k, cfg.dims[0]) : cfg.dims;
    spec.counts =
        cfg.samples.size() == 1 ? std::vector<std::size_t>(cfg.k, cfg.samples[0]) : cfg.samples;
    spec.ambient = cfg.ambient;
    spec.noise_sigma = cfg.noise;
    spec.seed = cfg.seed;
    try {
        spec.validate();
    } catch (const ValueError& e) {
        throw ConfigError(e.what());
    }
    return spec;
}

struct SolveOutcome {
    SolveReport report;
    double final_objective = 0.0;
};

inline SolveOutcome run_solve(const Matrix& features, const RunConfig& cfg) {
    SolveOutcome out;
    out.report = solve_affinity(features, cfg.regularizer_spec(), cfg.solver_config());
    out.final_objective =
        out.report.objective_trace.empty() ? 0.0 : out.report.objective_trace.back();
    return out;
}

inline void write_trace_csv(const std::string& path, const std::vector<double>& trace) {
    std::string buf = "# iteration,objective\n";
    for (std::size_t i = 0; i < trace.size(); ++i) {
        buf += std::to_string(i + 1);
        buf.push_back(',');
        buf += fmt(trace[i]);
        buf.push_back('\n');
    }
    mesc::detail::write_file_bytes(path, buf);
}

}  // namespace detail

inline int cmd_generate(const std::vector<std::string>& args) {
    RunConfig cfg = detail::config_from_args(args, 1);
    if (cfg.out.empty()) cfg.out = "data";
    if (cfg.report.empty()) cfg.report = detail::dataset_dir_file(cfg.out, "generate_report.txt");
    const SyntheticSpec spec = detail::synthetic_spec_from(cfg);
    std::filesystem::create_directories(cfg.out);

    std::size_t n = 0;
    if (cfg.kind == "images") {
        Dataset ds = gen_images(spec, cfg.side);
        n = ds.x.cols();
        save_matrix(detail::dataset_dir_file(cfg.out, "images.mescmat"), ds.x);
        save_labels(detail::dataset_dir_file(cfg.out, "labels.txt"), ds.labels);
    } else {
        LabeledFeatures feats = gen_subspaces(spec);
        n = feats.z.cols();
        save_matrix(detail::dataset_dir_file(cfg.out, "features.mescmat"), feats.z);
        save_labels(detail::dataset_dir_file(cfg.out, "labels.txt"), feats.labels);
    }
    std::ostringstream meta;
    meta << "kind = " << cfg.kind << "\n";
    meta << "k = " << cfg.k << "\n";
    meta << "ambient = " << cfg.ambient << "\n";
    meta << "side = " << (cfg.kind == "images" ? cfg.side : 0) << "\n";
    meta << "seed = " << cfg.seed << "\n";
    meta << "noise = " << detail::fmt(cfg.noise) << "\n";
    mesc::detail::write_file_bytes(detail::dataset_dir_file(cfg.out, "dataset.meta"), meta.str());

    std::ostringstream rep;
    rep << "command: generate\n" << echo_config(cfg);
    rep << "samples: " << n << "\n";
    rep << "output_dir: " << cfg.out << "\n";
    detail::write_report(cfg.report, rep.str());
    std::cout << "generate: wrote " << n << " " << cfg.kind << " samples to " << cfg.out << "\n";
    std::cout << "report: " << cfg.report << "\n";
    return 0;
}

inline int cmd_solve(const std::vector<std::string>& args) {
    RunConfig cfg = detail::config_from_args(args, 1);
    if (cfg.in.empty()) cfg.in = "data";
    if (cfg.out.empty()) cfg.out = "C.mescmat";
    if (cfg.report.empty()) cfg.report = "solve_report.txt";
    const Matrix features = detail::load_features(cfg.in);
    const detail::SolveOutcome outcome = detail::run_solve(features, cfg);
    save_matrix(cfg.out, outcome.report.affinity);
    if (!cfg.trace.empty()) detail::write_trace_csv(cfg.trace, outcome.report.objective_trace);

    std::ostringstream rep;
    rep << "command: solve\n" << echo_config(cfg);
    rep << "samples: " << features.cols() << "\n";
    rep << "feature_dim: " << features.rows() << "\n";
    rep << "iterations: " << outcome.report.iterations << "\n";
    rep << "converged: " << (outcome.report.converged ? "yes" : "no") << "\n";
    rep << "final_objective: " << detail::fmt(outcome.final_objective) << "\n";
    rep << "affinity_out: " << cfg.out << "\n";
    detail::write_report(cfg.report, rep.str());
    std::cout << "solve: " << cfg.reg << " regularizer, " << outcome.report.iterations
              << " iterations, " << (outcome.report.converged ? "converged" : "iteration cap")
              << ", objective " << detail::fmt(outcome.final_objective) << "\n";
    std::cout << "report: " << cfg.report << "\n";
    return 0;
}

inline int cmd_train(const std::vector<std::string>& args) {
    RunConfig cfg = detail::config_from_args(args, 1);
    if (cfg.in.empty()) cfg.in = "data";
    if (cfg.out.empty()) cfg.out = "C.mescmat";
    if (cfg.report.empty()) cfg.report = "train_report.txt";
    if (cfg.params_path.empty()) cfg.params_path = "params.mescnet";

    const std::string img_path = detail::dataset_dir_file(cfg.in, "images.mescmat");
    if (!std::filesystem::exists(img_path)) {
        throw IoError("train needs an image dataset; missing '" + img_path + "'");
    }
    const Matrix pixels = load_matrix(img_path);
    std::size_t side = cfg.side;
    const std::string meta_path = detail::dataset_dir_file(cfg.in, "dataset.meta");
    if (std::filesystem::exists(meta_path)) {
        std::ifstream meta(meta_path);
        std::string line;
        while (std::getline(meta, line)) {
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos) continue;
            if (mesc::detail::trim(line.substr(0, eq)) == "side") {
                const std::string v = mesc::detail::trim(line.substr(eq + 1));
                const std::size_t parsed = std::stoull(v);
                if (parsed > 0) side = parsed;
            }
        }
    }
    const Tensor x = tensor_from_pixel_matrix(pixels, side, side);

    const NetworkSpec spec = make_network_spec(side, side, cfg.kernels, cfg.channels);
    NetworkParams params = build_network(spec, cfg.seed);
    TrainConfig train_cfg;
    train_cfg.learning_rate = cfg.lr;
    train_cfg.pretrain_steps = cfg.pretrain_steps;
    train_cfg.finetune_steps = cfg.steps;
    train_cfg.lambda1 = cfg.lambda1;
    train_cfg.lambda2 = cfg.lambda2;
    train_cfg.coupled = cfg.mode == "coupled";
    train_cfg.pretrain = cfg.pretrain;
    train_cfg.seed = cfg.seed;
    train_cfg.epsilon = cfg.eps;

    TrainHistory pre_history;
    if (cfg.pretrain && cfg.pretrain_steps > 0) {
        pre_history = pretrain(spec, params, x, cfg.pretrain_steps, cfg.lr);
    }
    Matrix c(x.n, x.n, 1.0 / static_cast<double>(x.n));
    TrainHistory history = train_joint(spec, params, c, x, train_cfg);

    save_matrix(cfg.out, c);
    save_params(cfg.params_path, spec, params);
    if (!cfg.trace.empty()) {
        std::string buf = "# step,total,reconstruction,self_expressive,regularizer\n";
        for (std::size_t i = 0; i < history.steps.size(); ++i) {
            const LossParts& p = history.steps[i];
            buf += std::to_string(i + 1) + "," + detail::fmt(p.total) + "," +
                   detail::fmt(p.reconstruction) + "," + detail::fmt(p.self_expressive) + "," +
                   detail::fmt(p.regularizer) + "\n";
        }
        mesc::detail::write_file_bytes(cfg.trace, buf);
    }

    std::ostringstream rep;
    rep << "command: train\n" << echo_config(cfg);
    rep << "samples: " << x.n << "\n";
    rep << "latent_dim: " << spec.latent_dim() << "\n";
    rep << "pretrain_steps_run: " << pre_history.steps.size() << "\n";
    rep << "finetune_steps_run: " << history.steps.size() << "\n";
    if (!pre_history.steps.empty()) {
        rep << "pretrain_initial_loss: " << detail::fmt(pre_history.steps.front().total) << "\n";
        rep << "pretrain_final_loss: " << detail::fmt(pre_history.steps.back().total) << "\n";
    }
    if (!history.steps.empty()) {
        rep << "finetune_initial_loss: " << detail::fmt(history.steps.front().total) << "\n";
        rep << "finetune_final_loss: " << detail::fmt(history.steps.back().total) << "\n";
    }
    rep << "affinity_out: " << cfg.out << "\n";
    rep << "params_out: " << cfg.params_path << "\n";
    detail::write_report(cfg.report, rep.str());
    std::cout << "train: " << cfg.mode << " mode, "
              << (cfg.pretrain ? "with" : "without") << " pre-training, "
              << history.steps.size() << " fine-tune steps\n";
    std::cout << "report: " << cfg.report << "\n";
    return 0;
}

inline int cmd_cluster(const std::vector<std::string>& args) {
    RunConfig cfg = detail::config_from_args(args, 1);
    if (cfg.in.empty()) cfg.in = "C.mescmat";
    if (cfg.out.empty()) cfg.out = "labels_pred.txt";
    if (cfg.report.empty()) cfg.report = "cluster_report.txt";
    if (cfg.k < 2) throw ConfigError("key 'k': spectral clustering needs k >= 2");
    const Matrix c = load_matrix(cfg.in);
    const ClusterAssignment assign = spectral_cluster(c, cfg.k, cfg.seed, cfg.restarts);
    save_labels(cfg.out, assign.labels);

    std::ostringstream rep;
    rep << "command: cluster\n" << echo_config(cfg);
    rep << "samples: " << assign.labels.size() << "\n";
    rep << "labels_out: " << cfg.out << "\n";
    detail::write_report(cfg.report, rep.str());
    std::cout << "cluster: " << assign.labels.size() << " samples into " << cfg.k
              << " clusters\n";
    std::cout << "report: " << cfg.report << "\n";
    return 0;
}

inline int cmd_eval(const std::vector<std::string>& args) {
    RunConfig cfg = detail::config_from_args(args, 1);
    if (cfg.pred.empty()) cfg.pred = "labels_pred.txt";
    if (cfg.truth.empty()) cfg.truth = detail::dataset_dir_file("data", "labels.txt");
    if (cfg.report.empty()) cfg.report = "eval_report.txt";
    const std::vector<int> pred = load_labels(cfg.pred);
    const std::vector<int> truth = load_labels(cfg.truth);
    const double acc = accuracy(truth, pred);
    const double mutual = nmi(truth, pred);
    const auto [homogeneity, completeness] = homogeneity_completeness(truth, pred);

    std::ostringstream rep;
    rep << "command: eval\n" << echo_config(cfg);
    rep << "samples: " << pred.size() << "\n";
    rep << "acc_percent: " << detail::fmt(acc) << "\n";
    rep << "nmi_percent: " << detail::fmt(mutual) << "\n";
    rep << "homogeneity: " << detail::fmt(homogeneity) << "\n";
    rep << "completeness: " << detail::fmt(completeness) << "\n";
    if (!cfg.affinity.empty()) {
        const Matrix c = load_matrix(cfg.affinity);
        const BlockDiagnostics diag = block_diagnostics(c, truth);
        double mean_var = 0.0;
        for (double v : diag.per_block_variance) mean_var += v;
        mean_var /= static_cast<double>(diag.per_block_variance.size());
        rep << "mean_block_variance: " << detail::fmt(mean_var) << "\n";
        for (std::size_t b = 0; b < diag.per_block_variance.size(); ++b) {
            rep << "block_variance." << b << ": " << detail::fmt(diag.per_block_variance[b])
                << "\n";
        }
        rep << "offblock_mass: " << detail::fmt(diag.offblock_mass) << "\n";
        rep << "cosine_to_ideal: " << detail::fmt(diag.cosine_to_ideal) << "\n";
    }
    detail::write_report(cfg.report, rep.str());
    std::cout << "eval: ACC " << detail::fmt(acc) << "%, NMI " << detail::fmt(mutual)
              << "%, homogeneity " << detail::fmt(homogeneity) << ", completeness "
              << detail::fmt(completeness) << "\n";
    std::cout << "report: " << cfg.report << "\n";
    return 0;
}

inline int cmd_compare(const std::vector<std::string>& args) {
    RunConfig cfg = detail::config_from_args(args, 1);
    if (cfg.in.empty()) cfg.in = "data";
    if (cfg.report.empty()) cfg.report = "compare_report.txt";
    if (cfg.k < 2) throw ConfigError("key 'k': spectral clustering needs k >= 2");
    const Matrix features = detail::load_features(cfg.in);
    const std::vector<int> truth = load_labels(detail::dataset_dir_file(cfg.in, "labels.txt"));

    std::vector<std::string> regs;
    {
        std::istringstream ss(cfg.regs);
        std::string field;
        while (std::getline(ss, field, ',')) {
            const std::string name = mesc::detail::trim(field);
            regularizer_from_name(name);  // validates
            regs.push_back(name);
        }
        if (regs.empty()) throw ConfigError("key 'regs': empty regularizer list");
    }

    std::ostringstream rep;
    rep << "command: compare\n" << echo_config(cfg);
    rep << "samples: " << features.cols() << "\n";
    rep << "table: regularizer acc_percent nmi_percent mean_block_variance offblock_mass "
           "cosine_to_ideal\n";
    std::cout << "compare: reg ACC NMI mean_var offblock cosine\n";
    for (const std::string& name : regs) {
        RunConfig sub = cfg;
        sub.reg = name;
        const detail::SolveOutcome outcome = detail::run_solve(features, sub);
        const ClusterAssignment assign =
            spectral_cluster(outcome.report.affinity, cfg.k, cfg.seed, cfg.restarts);
        const double acc = accuracy(truth, assign.labels);
        const double mutual = nmi(truth, assign.labels);
        const BlockDiagnostics diag = block_diagnostics(outcome.report.affinity, truth);
        double mean_var = 0.0;
        for (double v : diag.per_block_variance) mean_var += v;
        mean_var /= static_cast<double>(diag.per_block_variance.size());
        rep << "row: " << name << " " << detail::fmt(acc) << " " << detail::fmt(mutual) << " "
            << detail::fmt(mean_var) << " " << detail::fmt(diag.offblock_mass) << " "
            << detail::fmt(diag.cosine_to_ideal) << "\n";
        std::cout << "compare: " << name << " " << detail::fmt(acc) << " "
                  << detail::fmt(mutual) << " " << detail::fmt(mean_var) << " "
                  << detail::fmt(diag.offblock_mass) << " " << detail::fmt(diag.cosine_to_ideal)
                  << "\n";
        if (!cfg.out.empty()) {
            std::filesystem::create_directories(cfg.out);
            save_matrix(detail::dataset_dir_file(cfg.out, "C_" + name + ".mescmat"),
                        outcome.report.affinity);
        }
    }
    detail::write_report(cfg.report, rep.str());
    std::cout << "report: " << cfg.report << "\n";
    return 0;
}

inline int cmd_heatmap(const std::vector<std::string>& args) {
    RunConfig cfg = detail::config_from_args(args, 1);
    if (cfg.in.empty()) cfg.in = "C.mescmat";
    if (cfg.out.empty()) cfg.out = "C.pgm";
    const Matrix m = load_matrix(cfg.in);
    export_heatmap(cfg.out, m);
    std::cout << "heatmap: wrote " << m.rows() << "x" << m.cols() << " graymap to " << cfg.out
              << "\n";
    return 0;
}

/// Entry point shared by the binary and the tests. Returns the process exit
/// code: 0 on success, 2 for argument/config errors, 1 for runtime failures.
inline int run(const std::vector<std::string>& args) {
    try {
        if (args.empty()) {
            std::cerr << "usage: mesc <generate|solve|train|cluster|eval|compare|heatmap> "
                         "[--key value ...]\n";
            return 2;
        }
        const std::string& cmd = args[0];
        if (cmd == "generate") return cmd_generate(args);
        if (cmd == "solve") return cmd_solve(args);
        if (cmd == "train") return cmd_train(args);
        if (cmd == "cluster") return cmd_cluster(args);
        if (cmd == "eval") return cmd_eval(args);
        if (cmd == "compare") return cmd_compare(args);
        if (cmd == "heatmap") return cmd_heatmap(args);
        std::cerr << "unknown subcommand '" << cmd << "'\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ValueError& e) {
        std::cerr << "argument error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

inline int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace mesc::cli
