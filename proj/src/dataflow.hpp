#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "netcore.hpp"

namespace projpost {

enum class DatasetKind { Regression, Classification };

struct Dataset {
    Mat inputs;               // N x I
    Mat targets;              // N x O (regression only)
    std::vector<int> labels;  // length N (classification only)
    DatasetKind kind = DatasetKind::Regression;
    int num_classes = 0;      // classification only
    std::string name;

    std::ptrdiff_t size() const { return inputs.rows(); }
    int input_dim() const { return int(inputs.cols()); }
    int target_dim() const {
        return kind == DatasetKind::Regression ? int(targets.cols()) : num_classes;
    }
    void validate() const;
};

struct BatchPartition {
    int batch_size = 0;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::ptrdiff_t>> index_lists;
};

// Two 1-D input clusters on [-1,-0.4] and [0.4,1] with targets sin(3x) plus
// Gaussian noise; the gap in between is never sampled.
Dataset gen_toy_regression(int n_per_cluster, double noise_sd, std::uint64_t seed);

// Interleaved half-circles, two classes; ceil(n/2) points on the upper moon.
Dataset gen_two_moons(int n, double noise_sd, std::uint64_t seed);

// Isotropic Gaussian cloud labeled class 0.
Dataset gen_ood_blob(int n, const Vec& center, double sd, std::uint64_t seed);

struct IdxTensor {
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> data;

    std::ptrdiff_t element_count() const {
        std::ptrdiff_t n = 1;
        for (std::uint32_t d : dims) n *= std::ptrdiff_t(d);
        return n;
    }
};

// Big-endian IDX container, u8 payload only (type code 0x08).
IdxTensor load_idx(const std::string& path);
void write_idx(const std::string& path, const IdxTensor& tensor);

// Pairs an image tensor (N x H x W or N x D) with a label vector (N),
// scaling pixel values by `scale`. limit <= 0 keeps everything.
Dataset dataset_from_idx(const std::string& images_path, const std::string& labels_path,
                         int num_classes, std::ptrdiff_t limit, double scale);

// Headerless CSV, one datum per row: I inputs then the targets (O values for
// regression, one class index for classification with O classes).
Dataset load_csv(const std::string& path, int input_dim, int output_dim, DatasetKind kind);

// Nearest-neighbor rotation about the image center via the inverse map;
// pixels falling outside the source image become 0.
Dataset rotate_square_images(const Dataset& dataset, double degrees);

// Deterministic shuffled split into ceil(N/S) batches of size <= S.
BatchPartition partition(std::ptrdiff_t n, int batch_size, std::uint64_t seed);

}  // namespace projpost
