#include "projpost/projpost.h"

#include <cstring>
#include <memory>
#include <string>

#include "pipeline.hpp"

using namespace projpost;

namespace {

thread_local std::string g_last_error;

pp_status status_for(const Error& e) {
    return e.kind() == Error::Kind::Numeric ? PP_ERR_NUMERIC : PP_ERR_CONFIG;
}

template <typename Fn>
pp_status guard(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return PP_OK;
    } catch (const Error& e) {
        g_last_error = e.what();
        return status_for(e);
    } catch (const Json::exception& e) {
        g_last_error = e.what();
        return PP_ERR_CONFIG;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return PP_ERR_INTERNAL;
    }
}

RunOptions to_run_options(const pp_run_options* options) {
    RunOptions opt;
    if (options) {
        opt.threads = options->threads > 1 ? options->threads : 1;
        if (options->has_seed) opt.seed_override = options->seed_override;
    }
    return opt;
}

pp_status from_exit_code(int code) {
    switch (code) {
        case 0: return PP_OK;
        case 2: return PP_ERR_CONFIG;
        case 3: return PP_ERR_NUMERIC;
        default: return PP_ERR_INTERNAL;
    }
}

void require_arg(const void* p, const char* name) {
    if (!p) throw ConfigError(std::string(name) + " must not be null");
}

}  // namespace

struct pp_network {
    ArchitectureSpec arch;
    Network net;
    Vec theta;
};

struct pp_dataset {
    Dataset data;
};

struct pp_projector {
    // Keeps private copies of the model and data so the handle stays valid
    // independently of the objects it was created from.
    std::unique_ptr<pp_network> model;
    std::unique_ptr<pp_dataset> data;
    std::unique_ptr<KernelProjector> projector;
};

struct pp_samples {
    SampleSet set;
    ArchitectureSpec arch;
};

extern "C" {

const char* pp_version(void) { return "1.0.0"; }

const char* pp_last_error(void) { return g_last_error.c_str(); }

pp_status pp_run_train(const char* config_path, const char* out_dir,
                       const pp_run_options* options) {
    if (!config_path || !out_dir) return PP_ERR_CONFIG;
    return from_exit_code(run_train(config_path, out_dir, to_run_options(options)));
}

pp_status pp_run_sample(const char* config_path, const char* checkpoint_path, const char* out_dir,
                        const pp_run_options* options) {
    if (!config_path || !checkpoint_path || !out_dir) return PP_ERR_CONFIG;
    return from_exit_code(
        run_sample(config_path, checkpoint_path, out_dir, to_run_options(options)));
}

pp_status pp_run_eval(const char* config_path, const char* checkpoint_path,
                      const char* samples_path, const char* role, const char* out_dir,
                      const pp_run_options* options) {
    if (!config_path || !checkpoint_path || !samples_path || !role || !out_dir)
        return PP_ERR_CONFIG;
    return from_exit_code(
        run_eval(config_path, checkpoint_path, samples_path, role, out_dir, to_run_options(options)));
}

pp_status pp_run_ood(const char* config_path, const char* checkpoint_path,
                     const char* samples_path, const char* out_dir,
                     const pp_run_options* options) {
    if (!config_path || !checkpoint_path || !samples_path || !out_dir) return PP_ERR_CONFIG;
    return from_exit_code(
        run_ood(config_path, checkpoint_path, samples_path, out_dir, to_run_options(options)));
}

pp_status pp_run_diagnose(const char* config_path, const char* checkpoint_path,
                          const char* out_dir, const pp_run_options* options) {
    if (!config_path || !out_dir) return PP_ERR_CONFIG;
    return from_exit_code(run_diagnose(config_path, checkpoint_path ? checkpoint_path : "",
                                       out_dir, to_run_options(options)));
}

pp_status pp_run_plot(const char* config_path, const char* checkpoint_path,
                      const char* samples_path, const char* out_dir,
                      const pp_run_options* options) {
    if (!config_path || !checkpoint_path || !samples_path || !out_dir) return PP_ERR_CONFIG;
    return from_exit_code(
        run_plot(config_path, checkpoint_path, samples_path, out_dir, to_run_options(options)));
}

pp_status pp_network_create(const char* arch_json, uint64_t init_seed, pp_network** out) {
    return guard([&] {
        require_arg(arch_json, "arch_json");
        require_arg(out, "out");
        const ArchitectureSpec arch = arch_from_json(Json::parse(arch_json));
        auto handle = std::make_unique<pp_network>(pp_network{arch, Network(arch), Vec()});
        handle->theta = handle->net.init_params(init_seed);
        *out = handle.release();
    });
}

void pp_network_free(pp_network* net) { delete net; }

int64_t pp_network_param_count(const pp_network* net) {
    return net ? int64_t(net->net.param_count()) : -1;
}

int pp_network_input_dim(const pp_network* net) { return net ? net->net.input_dim() : -1; }

int pp_network_output_dim(const pp_network* net) { return net ? net->net.output_dim() : -1; }

pp_status pp_network_get_params(const pp_network* net, double* buf) {
    return guard([&] {
        require_arg(net, "net");
        require_arg(buf, "buf");
        std::memcpy(buf, net->theta.data(), size_t(net->theta.size()) * sizeof(double));
    });
}

pp_status pp_network_set_params(pp_network* net, const double* buf) {
    return guard([&] {
        require_arg(net, "net");
        require_arg(buf, "buf");
        Vec theta = Eigen::Map<const Vec>(buf, net->net.param_count());
        if (!theta.allFinite()) throw NumericError("parameters must be finite");
        net->theta = std::move(theta);
    });
}

pp_status pp_network_forward(const pp_network* net, const double* x, double* y) {
    return guard([&] {
        require_arg(net, "net");
        require_arg(x, "x");
        require_arg(y, "y");
        const Vec out =
            net->net.forward(net->theta, Eigen::Map<const Vec>(x, net->net.input_dim()));
        std::memcpy(y, out.data(), size_t(out.size()) * sizeof(double));
    });
}

pp_status pp_network_jvp(const pp_network* net, const double* x, const double* v, double* out) {
    return guard([&] {
        require_arg(net, "net");
        require_arg(x, "x");
        require_arg(v, "v");
        require_arg(out, "out");
        const Vec result =
            net->net.jvp(net->theta, Eigen::Map<const Vec>(x, net->net.input_dim()),
                         Eigen::Map<const Vec>(v, net->net.param_count()));
        std::memcpy(out, result.data(), size_t(result.size()) * sizeof(double));
    });
}

pp_status pp_network_vjp(const pp_network* net, const double* x, const double* u, double* out) {
    return guard([&] {
        require_arg(net, "net");
        require_arg(x, "x");
        require_arg(u, "u");
        require_arg(out, "out");
        const Vec result =
            net->net.vjp(net->theta, Eigen::Map<const Vec>(x, net->net.input_dim()),
                         Eigen::Map<const Vec>(u, net->net.output_dim()));
        std::memcpy(out, result.data(), size_t(result.size()) * sizeof(double));
    });
}

pp_status pp_network_save_checkpoint(const pp_network* net, const char* path) {
    return guard([&] {
        require_arg(net, "net");
        require_arg(path, "path");
        save_checkpoint(path, net->arch, net->theta);
    });
}

pp_status pp_network_load_checkpoint(const char* path, pp_network** out) {
    return guard([&] {
        require_arg(path, "path");
        require_arg(out, "out");
        auto [arch, theta] = load_checkpoint(path);
        auto handle = std::make_unique<pp_network>(pp_network{arch, Network(arch), theta});
        *out = handle.release();
    });
}

pp_status pp_dataset_toy_regression(int n_per_cluster, double noise_sd, uint64_t seed,
                                    pp_dataset** out) {
    return guard([&] {
        require_arg(out, "out");
        *out = new pp_dataset{gen_toy_regression(n_per_cluster, noise_sd, seed)};
    });
}

pp_status pp_dataset_two_moons(int n, double noise_sd, uint64_t seed, pp_dataset** out) {
    return guard([&] {
        require_arg(out, "out");
        *out = new pp_dataset{gen_two_moons(n, noise_sd, seed)};
    });
}

pp_status pp_dataset_blob(int n, const double* center, int dim, double sd, uint64_t seed,
                          pp_dataset** out) {
    return guard([&] {
        require_arg(out, "out");
        require_arg(center, "center");
        *out = new pp_dataset{gen_ood_blob(n, Eigen::Map<const Vec>(center, dim), sd, seed)};
    });
}

pp_status pp_dataset_from_csv(const char* path, int input_dim, int output_dim, const char* kind,
                              pp_dataset** out) {
    return guard([&] {
        require_arg(path, "path");
        require_arg(kind, "kind");
        require_arg(out, "out");
        DatasetKind k;
        if (std::strcmp(kind, "regression") == 0) {
            k = DatasetKind::Regression;
        } else if (std::strcmp(kind, "classification") == 0) {
            k = DatasetKind::Classification;
        } else {
            throw ConfigError("kind must be regression|classification");
        }
        *out = new pp_dataset{load_csv(path, input_dim, output_dim, k)};
    });
}

pp_status pp_dataset_from_idx(const char* images_path, const char* labels_path, int num_classes,
                              int64_t limit, double scale, pp_dataset** out) {
    return guard([&] {
        require_arg(images_path, "images_path");
        require_arg(labels_path, "labels_path");
        require_arg(out, "out");
        *out = new pp_dataset{dataset_from_idx(images_path, labels_path, num_classes, limit, scale)};
    });
}

void pp_dataset_free(pp_dataset* dataset) { delete dataset; }

int64_t pp_dataset_size(const pp_dataset* dataset) {
    return dataset ? int64_t(dataset->data.size()) : -1;
}

int pp_dataset_input_dim(const pp_dataset* dataset) {
    return dataset ? dataset->data.input_dim() : -1;
}

pp_status pp_train(pp_network* net, const pp_dataset* dataset, const char* train_json,
                   double* final_mean_loss) {
    return guard([&] {
        require_arg(net, "net");
        require_arg(dataset, "dataset");
        const Json j = train_json ? Json::parse(train_json) : Json::object();
        TrainConfig config;
        if (j.contains("optimizer"))
            config.optimizer = j.at("optimizer").get<std::string>() == "sgd" ? OptimizerKind::Sgd
                                                                             : OptimizerKind::Adam;
        config.learning_rate = j.value("learning_rate", config.learning_rate);
        config.momentum = j.value("momentum", config.momentum);
        config.beta1 = j.value("beta1", config.beta1);
        config.beta2 = j.value("beta2", config.beta2);
        config.eps = j.value("eps", config.eps);
        config.weight_decay = j.value("weight_decay", config.weight_decay);
        config.epochs = j.value("epochs", config.epochs);
        config.batch_size = j.value("batch_size", config.batch_size);
        config.seed = j.value("seed", config.seed);

        const LossKind loss = dataset->data.kind == DatasetKind::Classification
                                  ? LossKind::CrossEntropySoftmax
                                  : LossKind::Mse;
        TrainResult result = train_map(net->net, net->theta, dataset->data, loss, config);
        net->theta = std::move(result.theta);
        if (final_mean_loss)
            *final_mean_loss =
                result.epoch_mean_loss.empty() ? 0.0 : result.epoch_mean_loss.back();
    });
}

pp_status pp_projector_create(const pp_network* net, const pp_dataset* dataset,
                              const char* options_json, pp_projector** out) {
    return guard([&] {
        require_arg(net, "net");
        require_arg(dataset, "dataset");
        require_arg(out, "out");
        const Json j = options_json ? Json::parse(options_json) : Json::object();

        auto handle = std::make_unique<pp_projector>();
        handle->model = std::make_unique<pp_network>(*net);
        handle->data = std::make_unique<pp_dataset>(*dataset);

        ProjectorOptions options;
        options.t_max = j.value("t_max", 1000);
        options.residual_tol = j.value("residual_tol", 0.0);
        options.rank_tolerance = j.value("rank_tol", 1e-10);
        options.cache_rows = j.value("cache_rows", false);
        const int batch_size = j.value("batch_size", 16);
        const std::uint64_t partition_seed = j.value("partition_seed", std::uint64_t(0));
        const std::string mode_str = j.value("mode", std::string("output-jacobian"));
        BlockMode mode;
        if (mode_str == "output-jacobian") {
            mode = BlockMode::OutputJacobian;
        } else if (mode_str == "loss-gradient") {
            mode = BlockMode::LossGradient;
        } else {
            throw ConfigError("mode must be output-jacobian|loss-gradient");
        }
        const LossKind loss = handle->data->data.kind == DatasetKind::Classification
                                  ? LossKind::CrossEntropySoftmax
                                  : LossKind::Mse;
        const BatchPartition batches =
            partition(handle->data->data.size(), batch_size, partition_seed);
        handle->projector = std::make_unique<KernelProjector>(KernelProjector::for_network(
            handle->model->net, handle->model->theta, handle->data->data, mode, loss, batches,
            options));
        *out = handle.release();
    });
}

void pp_projector_free(pp_projector* projector) { delete projector; }

pp_status pp_projector_project(const pp_projector* projector, const double* v, double* out) {
    return guard([&] {
        require_arg(projector, "projector");
        require_arg(v, "v");
        require_arg(out, "out");
        const Vec result =
            projector->projector->project(Eigen::Map<const Vec>(v, projector->projector->dim()));
        std::memcpy(out, result.data(), size_t(result.size()) * sizeof(double));
    });
}

pp_status pp_samples_draw(const pp_network* net, const pp_dataset* dataset,
                          const pp_projector* projector, const char* options_json,
                          pp_samples** out) {
    return guard([&] {
        require_arg(net, "net");
        require_arg(out, "out");
        const Json j = options_json ? Json::parse(options_json) : Json::object();
        const SampleKind kind =
            sample_kind_from_string(j.value("kind", std::string("projected")));
        const int k = j.value("k", 30);
        const std::uint64_t seed = j.value("seed", std::uint64_t(0));
        const int threads = j.value("threads", 1);
        double alpha = 1.0;
        bool alpha_auto = true;
        if (j.contains("alpha") && !j.at("alpha").is_string()) {
            alpha = j.at("alpha").get<double>();
            alpha_auto = false;
        }

        SampleSet set;
        if (kind == SampleKind::Projected || kind == SampleKind::LossProjected) {
            require_arg(projector, "projector");
            if (alpha_auto) {
                const AlphaEstimate est = optimal_alpha(
                    net->theta,
                    [&](const Vec& v) { return projector->projector->project(v); },
                    j.value("probes", 64), seed + 1,
                    alpha_convention_from_string(
                        j.value("alpha_convention", std::string("rank-over-norm"))));
                alpha = est.alpha_star;
            }
            set = sample_kernel_posterior(net->theta, *projector->projector, alpha, k, seed, kind,
                                          threads);
        } else if (kind == SampleKind::LlaDense) {
            require_arg(dataset, "dataset");
            if (alpha_auto) throw ConfigError("alpha=\"auto\" needs a kernel posterior kind");
            set = lla_dense_posterior(net->net, net->theta, dataset->data, alpha).sample_set(k, seed);
        } else if (kind == SampleKind::DiagLaplace) {
            require_arg(dataset, "dataset");
            if (alpha_auto) throw ConfigError("alpha=\"auto\" needs a kernel posterior kind");
            set = diag_laplace(net->net, net->theta, dataset->data, alpha).sample_set(k, seed);
        } else {
            set = sample_map_delta(net->theta, k);
        }
        *out = new pp_samples{std::move(set), net->arch};
    });
}

void pp_samples_free(pp_samples* samples) { delete samples; }

int64_t pp_samples_count(const pp_samples* samples) {
    return samples ? int64_t(samples->set.count()) : -1;
}

double pp_samples_alpha(const pp_samples* samples) { return samples ? samples->set.alpha : 0.0; }

pp_status pp_samples_get(const pp_samples* samples, int64_t index, double* buf) {
    return guard([&] {
        require_arg(samples, "samples");
        require_arg(buf, "buf");
        if (index < 0 || index >= samples->set.count())
            throw ConfigError("sample index out of range");
        const Vec row = samples->set.samples.row(std::ptrdiff_t(index));
        std::memcpy(buf, row.data(), size_t(row.size()) * sizeof(double));
    });
}

pp_status pp_samples_save(const pp_samples* samples, const pp_network* net, const char* path) {
    return guard([&] {
        require_arg(samples, "samples");
        require_arg(net, "net");
        require_arg(path, "path");
        save_samples(path, net->arch, samples->set);
    });
}

pp_status pp_samples_load(const char* path, pp_samples** out) {
    return guard([&] {
        require_arg(path, "path");
        require_arg(out, "out");
        auto [arch, set] = load_samples(path);
        *out = new pp_samples{std::move(set), arch};
    });
}

pp_status pp_predict_linearized(const pp_network* net, const pp_samples* samples, const double* x,
                                double* mean, double* variance) {
    return guard([&] {
        require_arg(net, "net");
        require_arg(samples, "samples");
        require_arg(x, "x");
        require_arg(mean, "mean");
        require_arg(variance, "variance");
        const PredictiveStats stats =
            predictive_linearized(net->net, net->theta, samples->set,
                                  Eigen::Map<const Vec>(x, net->net.input_dim()));
        std::memcpy(mean, stats.mean.data(), size_t(stats.mean.size()) * sizeof(double));
        std::memcpy(variance, stats.variance.data(),
                    size_t(stats.variance.size()) * sizeof(double));
    });
}

}  // extern "C"
