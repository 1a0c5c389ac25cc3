#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dataflow.hpp"
#include "netcore.hpp"

namespace projpost {

enum class BlockMode { OutputJacobian, LossGradient };

// One row block M_b of the stacked row matrix, exposed matrix-free.
// apply/apply_transpose must be exact adjoints of each other.
class RowBlock {
public:
    virtual ~RowBlock() = default;
    virtual std::ptrdiff_t rows() const = 0;  // r
    virtual std::ptrdiff_t dim() const = 0;   // P
    virtual Vec apply(const Vec& v) const = 0;             // M_b v
    virtual Vec apply_transpose(const Vec& u) const = 0;   // M_b^T u
    virtual Vec row(std::ptrdiff_t i) const = 0;           // one materialized row
    virtual std::string row_label(std::ptrdiff_t i) const {
        return "row " + std::to_string(i);
    }
};

// Rows are either all output-Jacobian rows of the batch (S*O of them) or the
// per-datum loss gradients (S of them). An optional output-space transform
// hook pre-multiplies a likelihood-Hessian square root; it ships unset,
// which is the identity-Hessian convention used throughout.
class JacobianRowBlock final : public RowBlock {
public:
    JacobianRowBlock(const Network& net, const Vec& theta_map, const Dataset& dataset,
                     std::vector<std::ptrdiff_t> indices, BlockMode mode, LossKind loss_kind,
                     std::function<Vec(const Vec&)> hessian_sqrt = {});

    std::ptrdiff_t rows() const override;
    std::ptrdiff_t dim() const override { return net_->param_count(); }
    Vec apply(const Vec& v) const override;
    Vec apply_transpose(const Vec& u) const override;
    Vec row(std::ptrdiff_t i) const override;
    std::string row_label(std::ptrdiff_t i) const override;

    BlockMode mode() const { return mode_; }
    const std::vector<std::ptrdiff_t>& indices() const { return indices_; }

private:
    const Network* net_;
    const Vec* theta_map_;
    const Dataset* dataset_;
    std::vector<std::ptrdiff_t> indices_;
    Mat batch_inputs_;  // S x I, gathered once
    BlockMode mode_;
    LossKind loss_kind_;
    std::function<Vec(const Vec&)> hessian_sqrt_;
    Mat out_grads_;  // S x O output-space loss gradients, LossGradient mode only
};

// Explicit rows; used by the synthetic diagnostics fixtures and tests.
class DenseRowBlock final : public RowBlock {
public:
    explicit DenseRowBlock(Mat rows) : rows_(std::move(rows)) {}
    std::ptrdiff_t rows() const override { return rows_.rows(); }
    std::ptrdiff_t dim() const override { return rows_.cols(); }
    Vec apply(const Vec& v) const override { return rows_ * v; }
    Vec apply_transpose(const Vec& u) const override { return rows_.transpose() * u; }
    Vec row(std::ptrdiff_t i) const override { return rows_.row(i); }

private:
    Mat rows_;
};

// Tolerance-truncated eigendecomposition of M_b M_b^T.
struct GramFactor {
    Mat gram;              // r x r, symmetrized
    Vec eigenvalues;       // nonincreasing
    Mat eigenvectors;      // columns match eigenvalues
    double rank_tolerance = 1e-10;
    std::ptrdiff_t effective_rank = 0;

    // (M_b M_b^T)^+ y using only eigenvalues above the relative threshold.
    Vec pinv_apply(const Vec& y) const;
};

// cache_rows materializes all r rows at once (O(rP) memory); the default
// streams one row at a time and fills the Gram column by column.
GramFactor build_gram(const RowBlock& block, double rank_tolerance = 1e-10,
                      bool cache_rows = false);

// v - M^T (M M^T)^+ M v: the orthogonal projection onto ker(M_b).
Vec block_kernel_project(const RowBlock& block, const GramFactor& factor, const Vec& v);

struct ProjectorOptions {
    int t_max = 1000;
    double residual_tol = 0.0;  // 0 disables early stopping
    double rank_tolerance = 1e-10;
    bool cache_rows = false;
};

struct RateEstimate {
    std::vector<double> residuals;  // per-sweep displacement norms
    double c_hat = 0.0;             // fitted geometric rate in [0, 1]
    int sweeps = 0;
    bool early_stopped = false;
};

// Alternating projections onto the intersection of the per-block kernels.
// Immutable after construction; projections of distinct vectors may run
// concurrently.
class KernelProjector {
public:
    KernelProjector(std::vector<std::unique_ptr<RowBlock>> blocks, ProjectorOptions options);

    static KernelProjector for_network(const Network& net, const Vec& theta_map,
                                       const Dataset& dataset, BlockMode mode, LossKind loss_kind,
                                       const BatchPartition& batches, ProjectorOptions options);

    std::ptrdiff_t dim() const { return dim_; }
    size_t block_count() const { return blocks_.size(); }
    const RowBlock& block(size_t b) const { return *blocks_[b]; }
    const GramFactor& factor(size_t b) const { return factors_[b]; }
    const ProjectorOptions& options() const { return options_; }

    // One pass over all blocks in fixed order; never increases the norm.
    Vec sweep(Vec v) const;

    std::pair<Vec, RateEstimate> project_to_kernel(const Vec& v) const;
    Vec project(const Vec& v) const { return project_to_kernel(v).first; }

    // Row-per-vector batch; bitwise identical to projecting each row alone,
    // at any thread count.
    Mat project_many(const Mat& vectors, int threads = 1) const;

private:
    std::vector<std::unique_ptr<RowBlock>> blocks_;
    std::vector<GramFactor> factors_;
    ProjectorOptions options_;
    std::ptrdiff_t dim_ = 0;
};

// Fitted geometric decay rate of a residual trace: exp of the least-squares
// slope of log r_t against t, over the strictly positive prefix.
double fit_geometric_rate(const std::vector<double>& residuals);

// SVD oracle: orthonormal kernel basis of the fully materialized row matrix.
struct DenseProjector {
    Mat kernel_basis;       // P x R, orthonormal columns
    Vec singular_values;    // of the row matrix, nonincreasing
    std::ptrdiff_t rank = 0;

    std::ptrdiff_t kernel_dim() const { return kernel_basis.cols(); }
    Vec apply(const Vec& v) const { return kernel_basis * (kernel_basis.transpose() * v); }
};

Mat materialize_rows(const Network& net, const Vec& theta_map, const Dataset& dataset,
                     BlockMode mode, LossKind loss_kind,
                     std::ptrdiff_t entry_budget = Network::kDefaultDenseBudget);

DenseProjector dense_projector_from_rows(const Mat& rows, double rank_tolerance = 1e-10);

DenseProjector dense_kernel_projector(const Network& net, const Vec& theta_map,
                                      const Dataset& dataset, BlockMode mode, LossKind loss_kind,
                                      std::ptrdiff_t entry_budget = Network::kDefaultDenseBudget,
                                      double rank_tolerance = 1e-10);

// Max over probes of ||J^L v|| / ||v|| for v drawn from the dense
// output-Jacobian kernel; near zero iff ker(J) is contained in ker(J^L).
double kernel_containment_check(const Network& net, const Vec& theta_map, const Dataset& dataset,
                                LossKind loss_kind, int probes, std::uint64_t seed,
                                std::ptrdiff_t entry_budget = Network::kDefaultDenseBudget);

}  // namespace projpost
