#include "pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace projpost {

namespace fs = std::filesystem;

namespace {

constexpr int kSchemaVersion = 1;

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("bad config field '") + key + "': " + e.what());
    }
}

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::Sgd;
    if (s == "adam") return OptimizerKind::Adam;
    throw ConfigError("unknown optimizer '" + s + "'");
}

BlockMode block_mode_from_string(const std::string& s) {
    if (s == "output-jacobian") return BlockMode::OutputJacobian;
    if (s == "loss-gradient") return BlockMode::LossGradient;
    throw ConfigError("unknown projector mode '" + s + "'");
}

int exit_code_for(const Error& e) { return e.kind() == Error::Kind::Numeric ? 3 : 2; }

template <typename Fn>
int guarded(const char* command, Fn&& fn) {
    try {
        fn();
        return 0;
    } catch (const Error& e) {
        std::cerr << command << ": " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const Json::exception& e) {
        std::cerr << command << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << command << ": " << e.what() << "\n";
        return 3;
    }
}

void ensure_out_dir(const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir);
}

std::string join(const std::string& dir, const char* file) {
    return (fs::path(dir) / file).string();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << text;
    if (!out) throw IoError("write failed for " + path);
}

Json histogram_json(const std::vector<double>& values, double lo, double hi, int bins) {
    std::vector<std::ptrdiff_t> counts(size_t(bins), 0);
    const double width = hi > lo ? (hi - lo) / bins : 1.0;
    for (double v : values) {
        int b = int((v - lo) / width);
        b = std::clamp(b, 0, bins - 1);
        ++counts[size_t(b)];
    }
    return Json{{"min", lo}, {"max", hi}, {"counts", counts}};
}

}  // namespace

Json RunConfig::resolved() const {
    Json j;
    j["name"] = name;
    j["dataset"] = dataset_spec;
    if (!test_dataset_spec.is_null()) j["test_dataset"] = test_dataset_spec;
    if (!ood_dataset_spec.is_null()) j["ood_dataset"] = ood_dataset_spec;
    j["arch"] = arch_to_json(arch);
    j["loss"] = loss == LossKind::Mse ? "mse" : "cross_entropy";
    j["train"] = Json{{"optimizer", train.optimizer == OptimizerKind::Sgd ? "sgd" : "adam"},
                      {"learning_rate", train.learning_rate},
                      {"momentum", train.momentum},
                      {"beta1", train.beta1},
                      {"beta2", train.beta2},
                      {"eps", train.eps},
                      {"weight_decay", train.weight_decay},
                      {"epochs", train.epochs},
                      {"batch_size", train.batch_size},
                      {"seed", train.seed},
                      {"init_seed", init_seed}};
    j["projector"] =
        Json{{"mode", projector.mode == BlockMode::OutputJacobian ? "output-jacobian"
                                                                  : "loss-gradient"},
             {"batch_size", projector.batch_size},
             {"t_max", projector.t_max},
             {"residual_tol", projector.residual_tol},
             {"rank_tol", projector.rank_tol},
             {"partition_seed", projector.partition_seed},
             {"cache_rows", projector.cache_rows}};
    Json post{{"kind", to_string(posterior.kind)},
              {"k", posterior.k},
              {"seed", posterior.seed},
              {"alpha_convention", to_string(posterior.convention)},
              {"probes", posterior.probes}};
    post["alpha"] = posterior.alpha_auto ? Json("auto") : Json(posterior.alpha);
    j["posterior"] = post;
    j["metrics"] = Json{{"bins", metric_bins}};
    j["plot"] = Json{{"grid_min", plot.grid_min},
                     {"grid_max", plot.grid_max},
                     {"grid_points", plot.grid_points}};
    j["diagnose"] = Json{{"synthetic", diagnose.synthetic},
                         {"oracle_budget", diagnose.oracle_budget},
                         {"probe_seed", diagnose.probe_seed}};
    return j;
}

RunConfig parse_run_config(const Json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    RunConfig cfg;
    cfg.name = get_or<std::string>(j, "name", "run");
    if (!j.contains("dataset")) throw ConfigError("config needs a 'dataset' entry");
    cfg.dataset_spec = j.at("dataset");
    cfg.test_dataset_spec = j.contains("test_dataset") ? j.at("test_dataset") : Json();
    cfg.ood_dataset_spec = j.contains("ood_dataset") ? j.at("ood_dataset") : Json();
    if (!j.contains("arch")) throw ConfigError("config needs an 'arch' entry");
    cfg.arch = arch_from_json(j.at("arch"));

    const Json train = j.contains("train") ? j.at("train") : Json::object();
    cfg.train.optimizer = optimizer_from_string(get_or<std::string>(train, "optimizer", "adam"));
    cfg.train.learning_rate = get_or<double>(train, "learning_rate", 1e-3);
    cfg.train.momentum = get_or<double>(train, "momentum", 0.0);
    cfg.train.beta1 = get_or<double>(train, "beta1", 0.9);
    cfg.train.beta2 = get_or<double>(train, "beta2", 0.999);
    cfg.train.eps = get_or<double>(train, "eps", 1e-8);
    cfg.train.weight_decay = get_or<double>(train, "weight_decay", 0.0);
    cfg.train.epochs = get_or<int>(train, "epochs", 1);
    cfg.train.batch_size = get_or<int>(train, "batch_size", 32);
    cfg.train.seed = get_or<std::uint64_t>(train, "seed", 0);
    cfg.init_seed = get_or<std::uint64_t>(train, "init_seed", cfg.train.seed);
    cfg.train.validate();

    const Json proj = j.contains("projector") ? j.at("projector") : Json::object();
    cfg.projector.mode =
        block_mode_from_string(get_or<std::string>(proj, "mode", "output-jacobian"));
    cfg.projector.batch_size = get_or<int>(proj, "batch_size", 16);
    cfg.projector.t_max = get_or<int>(proj, "t_max", 1000);
    cfg.projector.residual_tol = get_or<double>(proj, "residual_tol", 0.0);
    cfg.projector.rank_tol = get_or<double>(proj, "rank_tol", 1e-10);
    cfg.projector.partition_seed = get_or<std::uint64_t>(proj, "partition_seed", 0);
    cfg.projector.cache_rows = get_or<bool>(proj, "cache_rows", false);
    if (cfg.projector.batch_size < 1) throw ConfigError("projector batch_size must be >= 1");
    if (cfg.projector.t_max < 1) throw ConfigError("projector t_max must be >= 1");

    const Json post = j.contains("posterior") ? j.at("posterior") : Json::object();
    cfg.posterior.kind = sample_kind_from_string(get_or<std::string>(post, "kind", "projected"));
    if (post.contains("alpha") && !post.at("alpha").is_string()) {
        cfg.posterior.alpha_auto = false;
        cfg.posterior.alpha = post.at("alpha").get<double>();
        if (cfg.posterior.alpha <= 0.0) throw ConfigError("posterior alpha must be > 0");
    } else if (post.contains("alpha") && post.at("alpha").get<std::string>() != "auto") {
        throw ConfigError("posterior alpha must be a positive number or \"auto\"");
    }
    cfg.posterior.k = get_or<int>(post, "k", 30);
    cfg.posterior.seed = get_or<std::uint64_t>(post, "seed", 0);
    cfg.posterior.convention = alpha_convention_from_string(
        get_or<std::string>(post, "alpha_convention", "rank-over-norm"));
    cfg.posterior.probes = get_or<int>(post, "probes", 64);
    if (cfg.posterior.k < 1) throw ConfigError("posterior k must be >= 1");

    cfg.metric_bins = get_or<int>(j.contains("metrics") ? j.at("metrics") : Json::object(),
                                  "bins", 15);
    if (cfg.metric_bins < 1) throw ConfigError("metrics bins must be >= 1");

    const Json plot = j.contains("plot") ? j.at("plot") : Json::object();
    cfg.plot.grid_min = get_or<double>(plot, "grid_min", -1.5);
    cfg.plot.grid_max = get_or<double>(plot, "grid_max", 1.5);
    cfg.plot.grid_points = get_or<int>(plot, "grid_points", 201);
    if (cfg.plot.grid_points < 2 || cfg.plot.grid_max <= cfg.plot.grid_min)
        throw ConfigError("bad plot grid");

    const Json diag = j.contains("diagnose") ? j.at("diagnose") : Json::object();
    cfg.diagnose.synthetic = get_or<std::string>(diag, "synthetic", "none");
    if (cfg.diagnose.synthetic != "none" && cfg.diagnose.synthetic != "orthogonal" &&
        cfg.diagnose.synthetic != "45deg")
        throw ConfigError("diagnose.synthetic must be none|orthogonal|45deg");
    cfg.diagnose.oracle_budget = get_or<std::ptrdiff_t>(diag, "oracle_budget", 10'000'000);
    cfg.diagnose.probe_seed = get_or<std::uint64_t>(diag, "probe_seed", 0);

    // Loss kind: explicit, else implied by the dataset kind.
    std::string loss = get_or<std::string>(j, "loss", "");
    if (loss.empty()) {
        const std::string gen = get_or<std::string>(cfg.dataset_spec, "generator", "");
        const bool classification =
            gen == "two_moons" || gen == "blob" ||
            cfg.dataset_spec.contains("idx_images") ||
            get_or<std::string>(cfg.dataset_spec, "kind", "") == "classification";
        loss = classification ? "cross_entropy" : "mse";
    }
    if (loss == "mse") {
        cfg.loss = LossKind::Mse;
    } else if (loss == "cross_entropy") {
        cfg.loss = LossKind::CrossEntropySoftmax;
    } else {
        throw ConfigError("loss must be mse|cross_entropy");
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    return parse_run_config(read_json_file(path));
}

Dataset build_dataset(const Json& spec) {
    if (!spec.is_object()) throw ConfigError("dataset spec must be a JSON object");
    if (spec.contains("generator")) {
        const std::string gen = spec.at("generator").get<std::string>();
        const std::uint64_t seed = get_or<std::uint64_t>(spec, "seed", 0);
        if (gen == "toy_regression")
            return gen_toy_regression(get_or<int>(spec, "n_per_cluster", 8),
                                      get_or<double>(spec, "noise_sd", 0.05), seed);
        if (gen == "two_moons")
            return gen_two_moons(get_or<int>(spec, "n", 64),
                                 get_or<double>(spec, "noise_sd", 0.08), seed);
        if (gen == "blob") {
            std::vector<double> center = get_or<std::vector<double>>(spec, "center", {0.0, 0.0});
            Vec c(std::ptrdiff_t(center.size()));
            for (size_t i = 0; i < center.size(); ++i) c[std::ptrdiff_t(i)] = center[i];
            return gen_ood_blob(get_or<int>(spec, "n", 64), c, get_or<double>(spec, "sd", 1.0),
                                seed);
        }
        throw ConfigError("unknown dataset generator '" + gen + "'");
    }
    if (spec.contains("csv")) {
        const std::string kind_str = get_or<std::string>(spec, "kind", "regression");
        if (kind_str != "regression" && kind_str != "classification")
            throw ConfigError("dataset kind must be regression|classification");
        return load_csv(spec.at("csv").get<std::string>(), spec.at("input_dim").get<int>(),
                        spec.at("output_dim").get<int>(),
                        kind_str == "regression" ? DatasetKind::Regression
                                                 : DatasetKind::Classification);
    }
    if (spec.contains("idx_images")) {
        return dataset_from_idx(spec.at("idx_images").get<std::string>(),
                                spec.at("idx_labels").get<std::string>(),
                                get_or<int>(spec, "classes", 10),
                                get_or<std::ptrdiff_t>(spec, "limit", 0),
                                get_or<double>(spec, "scale", 1.0 / 255.0));
    }
    throw ConfigError("dataset spec needs 'generator', 'csv', or 'idx_images'");
}

KernelProjector build_projector(const Network& net, const Vec& theta_map, const Dataset& dataset,
                                const RunConfig& cfg) {
    const BatchPartition batches =
        partition(dataset.size(), cfg.projector.batch_size, cfg.projector.partition_seed);
    ProjectorOptions options;
    options.t_max = cfg.projector.t_max;
    options.residual_tol = cfg.projector.residual_tol;
    options.rank_tolerance = cfg.projector.rank_tol;
    options.cache_rows = cfg.projector.cache_rows;
    return KernelProjector::for_network(net, theta_map, dataset, cfg.projector.mode, cfg.loss,
                                        batches, options);
}

PredictiveBatch predictive_batch(const Network& net, const Vec& theta_map, const SampleSet& samples,
                                 const Mat& inputs, bool classification) {
    const std::ptrdiff_t n = inputs.rows();
    const int o = net.output_dim();
    PredictiveBatch out;
    const Mat base = net.forward_batch(theta_map, inputs);

    if (samples.kind == SampleKind::MapDelta) {
        out.mean_output = base;
        out.var_output = Mat::Zero(n, o);
        if (classification) {
            out.mean_probs.resize(n, o);
            for (std::ptrdiff_t i = 0; i < n; ++i) out.mean_probs.row(i) = softmax(base.row(i));
        }
        return out;
    }

    const bool linearized = samples.kind != SampleKind::LossProjected;
    const std::ptrdiff_t k = samples.count();
    Mat sum = Mat::Zero(n, o), sum_sq = Mat::Zero(n, o);
    Mat prob_sum = classification ? Mat::Zero(n, o) : Mat();
    for (std::ptrdiff_t i = 0; i < k; ++i) {
        const Vec theta = samples.samples.row(i);
        Mat outputs;
        if (linearized) {
            outputs = base + net.jvp_batch(theta_map, inputs, theta - theta_map);
        } else {
            outputs = net.forward_batch(theta, inputs);
        }
        sum += outputs;
        sum_sq += outputs.array().square().matrix();
        if (classification)
            for (std::ptrdiff_t r = 0; r < n; ++r)
                prob_sum.row(r) += softmax(outputs.row(r)).transpose();
    }
    out.mean_output = sum / double(k);
    if (k > 1) {
        out.var_output =
            (sum_sq - sum.array().square().matrix() / double(k)).cwiseMax(0.0) / double(k - 1);
    } else {
        out.var_output = Mat::Zero(n, o);
    }
    if (classification) out.mean_probs = prob_sum / double(k);
    return out;
}

PlotData compute_plot_data(const Network& net, const Vec& theta_map, const SampleSet& samples,
                           const Dataset& train, const PlotConfig& plot) {
    if (train.kind != DatasetKind::Regression || train.input_dim() != 1 || net.output_dim() != 1)
        throw ConfigError("plot needs a 1-D regression fixture");
    Mat grid(plot.grid_points, 1);
    for (int i = 0; i < plot.grid_points; ++i)
        grid(i, 0) =
            plot.grid_min + (plot.grid_max - plot.grid_min) * double(i) / (plot.grid_points - 1);

    const PredictiveBatch pred = predictive_batch(net, theta_map, samples, grid, false);
    PlotData data;
    for (int i = 0; i < plot.grid_points; ++i) {
        data.grid_x.push_back(grid(i, 0));
        data.mean.push_back(pred.mean_output(i, 0));
        data.sd.push_back(std::sqrt(std::max(0.0, pred.var_output(i, 0))));
    }
    for (std::ptrdiff_t i = 0; i < train.size(); ++i) {
        data.train_x.push_back(train.inputs(i, 0));
        data.train_y.push_back(train.targets(i, 0));
    }
    return data;
}

namespace {

struct LoadedModel {
    ArchitectureSpec arch;
    Vec theta;
    Network net;
};

LoadedModel load_model(const std::string& checkpoint_path) {
    auto [arch, theta] = load_checkpoint(checkpoint_path);
    return LoadedModel{arch, theta, Network(arch)};
}

SampleSet load_samples_checked(const std::string& samples_path, const Network& net) {
    auto [arch, set] = load_samples(samples_path);
    if (Network(arch).param_count() != net.param_count())
        throw ConfigError("sample file architecture does not match the checkpoint");
    return std::move(set);
}

Json variance_summary_json(const Mat& var_output) {
    const Vec trace = var_output.rowwise().sum();
    return Json{{"max_trace_variance", trace.maxCoeff()},
                {"mean_trace_variance", trace.mean()},
                {"min_trace_variance", trace.minCoeff()}};
}

}  // namespace

int run_train(const std::string& config_path, const std::string& out_dir, const RunOptions& opt) {
    return guarded("train", [&] {
        RunConfig cfg = load_run_config(config_path);
        if (opt.seed_override) cfg.train.seed = *opt.seed_override;
        const Dataset dataset = build_dataset(cfg.dataset_spec);
        dataset.validate();
        const Network net(cfg.arch);
        const Vec theta0 = net.init_params(cfg.init_seed);
        TrainResult result = train_map(net, theta0, dataset, cfg.loss, cfg.train);

        ensure_out_dir(out_dir);
        save_checkpoint(join(out_dir, "checkpoint.bin"), cfg.arch, result.theta);
        Json log;
        log["schema_version"] = kSchemaVersion;
        log["config"] = cfg.resolved();
        log["epoch_mean_loss"] = result.epoch_mean_loss;
        log["epoch_objective"] = result.epoch_objective;
        log["final_mean_loss"] =
            result.epoch_mean_loss.empty() ? Json() : Json(result.epoch_mean_loss.back());
        write_json_file(join(out_dir, "train_log.json"), log);
    });
}

int run_sample(const std::string& config_path, const std::string& checkpoint_path,
               const std::string& out_dir, const RunOptions& opt) {
    return guarded("sample", [&] {
        RunConfig cfg = load_run_config(config_path);
        if (opt.seed_override) cfg.posterior.seed = *opt.seed_override;
        const LoadedModel model = load_model(checkpoint_path);
        const Dataset dataset = build_dataset(cfg.dataset_spec);
        dataset.validate();

        Json report;
        report["schema_version"] = kSchemaVersion;
        report["config"] = cfg.resolved();
        report["kind"] = to_string(cfg.posterior.kind);

        SampleSet set;
        double alpha_used = cfg.posterior.alpha;
        const SampleKind kind = cfg.posterior.kind;
        if (kind == SampleKind::Projected || kind == SampleKind::LossProjected) {
            const KernelProjector projector =
                build_projector(model.net, model.theta, dataset, cfg);
            const AlphaEstimate est = optimal_alpha(
                model.theta, [&](const Vec& v) { return projector.project(v); },
                cfg.posterior.probes, cfg.posterior.seed + 1, cfg.posterior.convention);
            if (cfg.posterior.alpha_auto) alpha_used = est.alpha_star;
            report["alpha_rank_over_norm"] = est.alpha_rank_over_norm;
            report["alpha_paper_printed"] = est.alpha_paper_printed;
            report["trace_estimate"] = est.trace_estimate;
            report["probes"] = est.probes;
            report["convention"] = to_string(est.convention);
            set = sample_kernel_posterior(model.theta, projector, alpha_used, cfg.posterior.k,
                                          cfg.posterior.seed, kind, opt.threads);
            set.mode = cfg.projector.mode;
            set.batch_size = cfg.projector.batch_size;
        } else if (kind == SampleKind::LlaDense) {
            if (cfg.posterior.alpha_auto)
                throw ConfigError("alpha=\"auto\" is only available for kernel posteriors");
            set = lla_dense_posterior(model.net, model.theta, dataset, alpha_used)
                      .sample_set(cfg.posterior.k, cfg.posterior.seed);
        } else if (kind == SampleKind::DiagLaplace) {
            if (cfg.posterior.alpha_auto)
                throw ConfigError("alpha=\"auto\" is only available for kernel posteriors");
            set = diag_laplace(model.net, model.theta, dataset, alpha_used)
                      .sample_set(cfg.posterior.k, cfg.posterior.seed);
        } else {
            set = sample_map_delta(model.theta, cfg.posterior.k);
            alpha_used = cfg.posterior.alpha_auto ? 1.0 : cfg.posterior.alpha;
            set.alpha = alpha_used;
        }
        report["alpha_used"] = alpha_used;
        report["k"] = int(set.count());

        ensure_out_dir(out_dir);
        save_samples(join(out_dir, "samples.bin"), cfg.arch, set);
        write_json_file(join(out_dir, "alpha_report.json"), report);
    });
}

int run_eval(const std::string& config_path, const std::string& checkpoint_path,
             const std::string& samples_path, const std::string& role, const std::string& out_dir,
             const RunOptions& opt) {
    (void)opt;
    return guarded("eval", [&] {
        if (role != "train" && role != "test") throw ConfigError("eval role must be train|test");
        RunConfig cfg = load_run_config(config_path);
        const LoadedModel model = load_model(checkpoint_path);
        const SampleSet samples = load_samples_checked(samples_path, model.net);

        Json spec = cfg.dataset_spec;
        if (role == "test") {
            if (cfg.test_dataset_spec.is_null())
                throw ConfigError("eval role=test needs a 'test_dataset' entry in the config");
            spec = cfg.test_dataset_spec;
        }
        const Dataset dataset = build_dataset(spec);
        dataset.validate();
        if (dataset.input_dim() != model.net.input_dim())
            throw ConfigError("eval dataset does not match the network input dimension");

        const bool classification = dataset.kind == DatasetKind::Classification;
        const PredictiveBatch pred =
            predictive_batch(model.net, model.theta, samples, dataset.inputs, classification);

        Json out;
        out["schema_version"] = kSchemaVersion;
        out["config"] = cfg.resolved();
        out["role"] = role;
        out["kind"] = to_string(samples.kind);
        out["variance_summary"] = variance_summary_json(pred.var_output);

        if (classification) {
            std::vector<PredictionRecord> records(static_cast<size_t>(dataset.size()));
            for (std::ptrdiff_t i = 0; i < dataset.size(); ++i) {
                records[size_t(i)].probabilities = pred.mean_probs.row(i);
                records[size_t(i)].label = dataset.labels[size_t(i)];
            }
            out["metrics"] = classification_metrics(records, cfg.metric_bins).to_json();
        } else {
            std::vector<double> means, vars, targets;
            for (std::ptrdiff_t i = 0; i < dataset.size(); ++i) {
                means.push_back(pred.mean_output(i, 0));
                vars.push_back(pred.var_output(i, 0));
                targets.push_back(dataset.targets(i, 0));
            }
            const RegressionBandStats stats = regression_band_stats(means, vars, targets);
            out["metrics"] = Json{{"rmse", stats.rmse},
                                  {"mean_predictive_sd", stats.mean_predictive_sd},
                                  {"n", dataset.size()}};
        }

        ensure_out_dir(out_dir);
        write_json_file(join(out_dir, "metrics.json"), out);
    });
}

namespace {

std::vector<double> ood_scores(const Network& net, const Vec& theta_map, const SampleSet& samples,
                               const Dataset& dataset) {
    const PredictiveBatch pred =
        predictive_batch(net, theta_map, samples, dataset.inputs, true);
    std::vector<double> scores(static_cast<size_t>(dataset.size()));
    for (std::ptrdiff_t i = 0; i < dataset.size(); ++i) {
        if (samples.kind == SampleKind::MapDelta) {
            scores[size_t(i)] = map_confidence_score(pred.mean_output.row(i));
        } else {
            scores[size_t(i)] = ood_score(pred.var_output.row(i));
        }
    }
    return scores;
}

}  // namespace

int run_ood(const std::string& config_path, const std::string& checkpoint_path,
            const std::string& samples_path, const std::string& out_dir, const RunOptions& opt) {
    (void)opt;
    return guarded("ood", [&] {
        RunConfig cfg = load_run_config(config_path);
        const LoadedModel model = load_model(checkpoint_path);
        const SampleSet samples = load_samples_checked(samples_path, model.net);
        if (cfg.ood_dataset_spec.is_null())
            throw ConfigError("ood needs an 'ood_dataset' entry in the config");
        const Json in_spec =
            cfg.test_dataset_spec.is_null() ? cfg.dataset_spec : cfg.test_dataset_spec;
        const Dataset in_data = build_dataset(in_spec);
        const Dataset out_data = build_dataset(cfg.ood_dataset_spec);
        in_data.validate();
        out_data.validate();
        if (in_data.input_dim() != model.net.input_dim() ||
            out_data.input_dim() != model.net.input_dim())
            throw ConfigError("ood datasets do not match the network input dimension");

        const std::vector<double> scores_in = ood_scores(model.net, model.theta, samples, in_data);
        const std::vector<double> scores_out =
            ood_scores(model.net, model.theta, samples, out_data);
        const double auc = auroc(scores_in, scores_out);

        double lo = scores_in[0], hi = scores_in[0];
        for (double s : scores_in) lo = std::min(lo, s), hi = std::max(hi, s);
        for (double s : scores_out) lo = std::min(lo, s), hi = std::max(hi, s);

        Json out;
        out["schema_version"] = kSchemaVersion;
        out["config"] = cfg.resolved();
        out["kind"] = to_string(samples.kind);
        out["score_kind"] = samples.kind == SampleKind::MapDelta ? "one-minus-max-softmax"
                                                                 : "max-logit-variance";
        out["auroc"] = auc;
        out["in_histogram"] = histogram_json(scores_in, lo, hi, 20);
        out["out_histogram"] = histogram_json(scores_out, lo, hi, 20);
        ensure_out_dir(out_dir);
        write_json_file(join(out_dir, "ood.json"), out);
    });
}

int run_diagnose(const std::string& config_path, const std::string& checkpoint_path,
                 const std::string& out_dir, const RunOptions& opt) {
    return guarded("diagnose", [&] {
        RunConfig cfg = load_run_config(config_path);
        if (opt.seed_override) cfg.diagnose.probe_seed = *opt.seed_override;

        Json out;
        out["schema_version"] = kSchemaVersion;
        out["config"] = cfg.resolved();
        out["synthetic"] = cfg.diagnose.synthetic;

        RateEstimate rate;
        Json discrepancy;  // null unless the dense oracle fits the budget
        if (cfg.diagnose.synthetic == "orthogonal") {
            // Two axis-aligned blocks in R^3: the intersection projection is
            // exact after a single sweep.
            std::vector<std::unique_ptr<RowBlock>> blocks;
            Mat r1(1, 3), r2(1, 3);
            r1 << 1, 0, 0;
            r2 << 0, 1, 0;
            blocks.push_back(std::make_unique<DenseRowBlock>(r1));
            blocks.push_back(std::make_unique<DenseRowBlock>(r2));
            ProjectorOptions options;
            options.t_max = cfg.projector.t_max;
            const KernelProjector projector(std::move(blocks), options);
            Rng rng(cfg.diagnose.probe_seed);
            Vec probe(3);
            for (int i = 0; i < 3; ++i) probe[i] = rng.normal();
            rate = projector.project_to_kernel(probe).second;
        } else if (cfg.diagnose.synthetic == "45deg") {
            // Rows (1,1)/sqrt(2) then (1,0): two lines at 45 degrees, so the
            // sweep contracts the residual by cos^2(pi/4) = 1/2.
            std::vector<std::unique_ptr<RowBlock>> blocks;
            Mat r1(1, 2), r2(1, 2);
            r1 << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
            r2 << 1, 0;
            blocks.push_back(std::make_unique<DenseRowBlock>(r1));
            blocks.push_back(std::make_unique<DenseRowBlock>(r2));
            ProjectorOptions options;
            options.t_max = cfg.projector.t_max;
            const KernelProjector projector(std::move(blocks), options);
            Rng rng(cfg.diagnose.probe_seed);
            Vec probe(2);
            for (int i = 0; i < 2; ++i) probe[i] = rng.normal();
            rate = projector.project_to_kernel(probe).second;
        } else {
            const LoadedModel model = load_model(checkpoint_path);
            const Dataset dataset = build_dataset(cfg.dataset_spec);
            dataset.validate();
            const KernelProjector projector =
                build_projector(model.net, model.theta, dataset, cfg);
            Rng rng(cfg.diagnose.probe_seed);
            Vec probe(model.net.param_count());
            for (std::ptrdiff_t i = 0; i < probe.size(); ++i) probe[i] = rng.normal();
            auto [projected, estimate] = projector.project_to_kernel(probe);
            rate = std::move(estimate);

            const std::ptrdiff_t row_count =
                cfg.projector.mode == BlockMode::OutputJacobian
                    ? dataset.size() * model.net.output_dim()
                    : dataset.size();
            if (row_count * model.net.param_count() <= cfg.diagnose.oracle_budget) {
                const DenseProjector oracle = dense_kernel_projector(
                    model.net, model.theta, dataset, cfg.projector.mode, cfg.loss,
                    cfg.diagnose.oracle_budget, cfg.projector.rank_tol);
                const double norm = probe.norm();
                discrepancy = (projected - oracle.apply(probe)).norm() / (norm > 0 ? norm : 1.0);
            }
        }

        out["residuals"] = rate.residuals;
        out["c_hat"] = rate.c_hat;
        out["sweeps"] = rate.sweeps;
        out["early_stopped"] = rate.early_stopped;
        out["oracle_discrepancy"] = discrepancy;
        ensure_out_dir(out_dir);
        write_json_file(join(out_dir, "diagnose.json"), out);
    });
}

int run_plot(const std::string& config_path, const std::string& checkpoint_path,
             const std::string& samples_path, const std::string& out_dir, const RunOptions& opt) {
    (void)opt;
    return guarded("plot", [&] {
        RunConfig cfg = load_run_config(config_path);
        const LoadedModel model = load_model(checkpoint_path);
        const SampleSet samples = load_samples_checked(samples_path, model.net);
        const Dataset dataset = build_dataset(cfg.dataset_spec);
        dataset.validate();
        const PlotData data =
            compute_plot_data(model.net, model.theta, samples, dataset, cfg.plot);
        ensure_out_dir(out_dir);
        write_text_file(join(out_dir, "plot.svg"), render_regression_band_svg(data));
    });
}

}  // namespace projpost
