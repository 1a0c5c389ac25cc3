#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "metrics.hpp"
#include "posterior.hpp"
#include "svgplot.hpp"

namespace projpost {

struct RunOptions {
    int threads = 1;
    std::optional<std::uint64_t> seed_override;
};

struct ProjectorConfig {
    BlockMode mode = BlockMode::OutputJacobian;
    int batch_size = 16;
    int t_max = 1000;
    double residual_tol = 0.0;
    double rank_tol = 1e-10;
    std::uint64_t partition_seed = 0;
    bool cache_rows = false;
};

struct PosteriorConfig {
    SampleKind kind = SampleKind::Projected;
    bool alpha_auto = true;
    double alpha = 1.0;
    int k = 30;
    std::uint64_t seed = 0;
    AlphaConvention convention = AlphaConvention::RankOverNorm;
    int probes = 64;
};

struct PlotConfig {
    double grid_min = -1.5;
    double grid_max = 1.5;
    int grid_points = 201;
};

struct DiagnoseConfig {
    std::string synthetic = "none";  // none | orthogonal | 45deg
    std::ptrdiff_t oracle_budget = 10'000'000;
    std::uint64_t probe_seed = 0;
};

struct RunConfig {
    Json dataset_spec;
    Json test_dataset_spec;  // null when absent
    Json ood_dataset_spec;   // null when absent
    ArchitectureSpec arch;
    LossKind loss = LossKind::Mse;
    TrainConfig train;
    std::uint64_t init_seed = 0;
    ProjectorConfig projector;
    PosteriorConfig posterior;
    int metric_bins = 15;
    PlotConfig plot;
    DiagnoseConfig diagnose;
    std::string name;

    Json resolved() const;  // config with all defaults filled in
};

RunConfig parse_run_config(const Json& j);
RunConfig load_run_config(const std::string& path);
Dataset build_dataset(const Json& dataset_spec);

// Kernel projector per the config (partition + blocks + Gram factors).
KernelProjector build_projector(const Network& net, const Vec& theta_map, const Dataset& dataset,
                                const RunConfig& cfg);

// Per-point predictive over a whole dataset: linearized for projected /
// lla-dense / diag-laplace samples, nonlinear MC for loss-projected, plain
// MAP for map-delta.
struct PredictiveBatch {
    Mat mean_output;   // N x O mean logits (or regression outputs)
    Mat var_output;    // N x O per-dimension variance
    Mat mean_probs;    // N x C mean softmax probabilities (classification only)
};
PredictiveBatch predictive_batch(const Network& net, const Vec& theta_map, const SampleSet& samples,
                                 const Mat& inputs, bool classification);

PlotData compute_plot_data(const Network& net, const Vec& theta_map, const SampleSet& samples,
                           const Dataset& train, const PlotConfig& plot);

// Command entry points; each validates inputs, runs, and writes its
// artifacts under out_dir. Returned codes: 0 ok, 2 config/input error,
// 3 numeric failure.
int run_train(const std::string& config_path, const std::string& out_dir, const RunOptions& opt);
int run_sample(const std::string& config_path, const std::string& checkpoint_path,
               const std::string& out_dir, const RunOptions& opt);
int run_eval(const std::string& config_path, const std::string& checkpoint_path,
             const std::string& samples_path, const std::string& role, const std::string& out_dir,
             const RunOptions& opt);
int run_ood(const std::string& config_path, const std::string& checkpoint_path,
            const std::string& samples_path, const std::string& out_dir, const RunOptions& opt);
int run_diagnose(const std::string& config_path, const std::string& checkpoint_path,
                 const std::string& out_dir, const RunOptions& opt);
int run_plot(const std::string& config_path, const std::string& checkpoint_path,
             const std::string& samples_path, const std::string& out_dir, const RunOptions& opt);

}  // namespace projpost
