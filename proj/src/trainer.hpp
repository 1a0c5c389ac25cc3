#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dataflow.hpp"
#include "jsonio.hpp"
#include "netcore.hpp"

namespace projpost {

enum class OptimizerKind { Sgd, Adam };

struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    double momentum = 0.0;  // sgd only
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // prior precision used during training
    int epochs = 1;
    int batch_size = 32;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainResult {
    Vec theta;
    // Full-dataset mean loss and regularized objective after each epoch.
    std::vector<double> epoch_mean_loss;
    std::vector<double> epoch_objective;
};

// Minimizes mean_n loss_n(theta) + (weight_decay/2) * ||theta||^2 / N.
// Single-threaded and deterministic in (seed, config, dataset); epochs == 0
// returns theta_init untouched.
TrainResult train_map(const Network& net, Vec theta_init, const Dataset& dataset,
                      LossKind loss_kind, const TrainConfig& config);

double dataset_mean_loss(const Network& net, const Vec& theta, const Dataset& dataset,
                         LossKind loss_kind);

// Binary container, little-endian throughout:
//   magic "PROJPOST1" | u32 version | u32 json_len | json descriptor |
//   u64 P | (version 2 only: u32 k) | payload of f64 | u32 CRC32(payload)
// Version 1 stores one parameter vector (a checkpoint); version 2 stores a
// k x P row matrix plus extra metadata inside the descriptor.
void save_checkpoint(const std::string& path, const ArchitectureSpec& arch, const Vec& theta);
std::pair<ArchitectureSpec, Vec> load_checkpoint(const std::string& path);

struct MatrixContainer {
    ArchitectureSpec arch;
    Json meta;  // descriptor minus the "arch" key
    Mat rows;
};
void save_matrix_container(const std::string& path, const ArchitectureSpec& arch,
                           const Json& meta, const Mat& rows);
MatrixContainer load_matrix_container(const std::string& path);

}  // namespace projpost
