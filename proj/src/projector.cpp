#include "projector.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

namespace projpost {

namespace {

Mat gather_rows(const Mat& m, const std::vector<std::ptrdiff_t>& idx) {
    Mat out(std::ptrdiff_t(idx.size()), m.cols());
    for (size_t i = 0; i < idx.size(); ++i) out.row(std::ptrdiff_t(i)) = m.row(idx[i]);
    return out;
}

}  // namespace

JacobianRowBlock::JacobianRowBlock(const Network& net, const Vec& theta_map,
                                   const Dataset& dataset, std::vector<std::ptrdiff_t> indices,
                                   BlockMode mode, LossKind loss_kind,
                                   std::function<Vec(const Vec&)> hessian_sqrt)
    : net_(&net),
      theta_map_(&theta_map),
      dataset_(&dataset),
      indices_(std::move(indices)),
      mode_(mode),
      loss_kind_(loss_kind),
      hessian_sqrt_(std::move(hessian_sqrt)) {
    net.check_params(theta_map);
    if (indices_.empty()) throw ConfigError("row block needs at least one datum");
    for (std::ptrdiff_t i : indices_)
        if (i < 0 || i >= dataset.size()) throw ConfigError("row block index out of range");
    batch_inputs_ = gather_rows(dataset.inputs, indices_);

    if (mode_ == BlockMode::LossGradient) {
        // The output-space loss gradients are fixed once theta_map is; keep
        // them so each apply costs a single batched pass.
        const Mat outputs = net.forward_batch(theta_map, batch_inputs_);
        out_grads_.resize(outputs.rows(), outputs.cols());
        for (std::ptrdiff_t i = 0; i < outputs.rows(); ++i) {
            const Vec y = outputs.row(i);
            if (loss_kind_ == LossKind::Mse) {
                out_grads_.row(i) = mse_output_grad(y, dataset.targets.row(indices_[size_t(i)]));
            } else {
                out_grads_.row(i) =
                    cross_entropy_output_grad(y, dataset.labels[size_t(indices_[size_t(i)])]);
            }
        }
    }
}

std::ptrdiff_t JacobianRowBlock::rows() const {
    const auto s = std::ptrdiff_t(indices_.size());
    return mode_ == BlockMode::OutputJacobian ? s * net_->output_dim() : s;
}

Vec JacobianRowBlock::apply(const Vec& v) const {
    if (v.size() != dim()) throw ShapeError("block apply: vector dimension mismatch");
    const Mat per_datum = net_->jvp_batch(*theta_map_, batch_inputs_, v);  // S x O
    if (mode_ == BlockMode::OutputJacobian) {
        const std::ptrdiff_t o = net_->output_dim();
        Vec out(per_datum.rows() * o);
        for (std::ptrdiff_t i = 0; i < per_datum.rows(); ++i) {
            Vec y = per_datum.row(i);
            if (hessian_sqrt_) y = hessian_sqrt_(y);
            out.segment(i * o, o) = y;
        }
        return out;
    }
    return (per_datum.array() * out_grads_.array()).rowwise().sum();
}

Vec JacobianRowBlock::apply_transpose(const Vec& u) const {
    if (u.size() != rows()) throw ShapeError("block apply_transpose: vector dimension mismatch");
    const std::ptrdiff_t s = std::ptrdiff_t(indices_.size());
    const std::ptrdiff_t o = net_->output_dim();
    Mat cotangents(s, o);
    if (mode_ == BlockMode::OutputJacobian) {
        for (std::ptrdiff_t i = 0; i < s; ++i) {
            Vec y = u.segment(i * o, o);
            if (hessian_sqrt_) y = hessian_sqrt_(y);  // H^{1/2} is symmetric
            cotangents.row(i) = y;
        }
    } else {
        cotangents = out_grads_.array().colwise() * Eigen::ArrayXd(u.array());
    }
    return net_->vjp_batch_sum(*theta_map_, batch_inputs_, cotangents);
}

Vec JacobianRowBlock::row(std::ptrdiff_t i) const {
    if (i < 0 || i >= rows()) throw ShapeError("block row index out of range");
    if (mode_ == BlockMode::OutputJacobian) {
        const std::ptrdiff_t o = net_->output_dim();
        const std::ptrdiff_t datum = indices_[size_t(i / o)];
        Vec basis = Vec::Zero(o);
        basis[i % o] = 1.0;
        if (hessian_sqrt_) basis = hessian_sqrt_(basis);
        return net_->vjp(*theta_map_, dataset_->inputs.row(datum), basis);
    }
    return net_->vjp(*theta_map_, dataset_->inputs.row(indices_[size_t(i)]),
                     Vec(out_grads_.row(i)));
}

std::string JacobianRowBlock::row_label(std::ptrdiff_t i) const {
    std::ostringstream os;
    if (mode_ == BlockMode::OutputJacobian) {
        const std::ptrdiff_t o = net_->output_dim();
        os << "datum " << indices_[size_t(i / o)] << ", output " << i % o;
    } else {
        os << "datum " << indices_[size_t(i)];
    }
    return os.str();
}

Vec GramFactor::pinv_apply(const Vec& y) const {
    if (effective_rank == 0) return Vec::Zero(y.size());
    const auto vecs = eigenvectors.leftCols(effective_rank);
    Vec coeffs = vecs.transpose() * y;
    coeffs.array() /= eigenvalues.head(effective_rank).array();
    return vecs * coeffs;
}

GramFactor build_gram(const RowBlock& block, double rank_tolerance, bool cache_rows) {
    const std::ptrdiff_t r = block.rows();
    GramFactor factor;
    factor.rank_tolerance = rank_tolerance;

    if (cache_rows) {
        Mat rows(r, block.dim());
        for (std::ptrdiff_t i = 0; i < r; ++i) {
            rows.row(i) = block.row(i);
            if (!rows.row(i).allFinite())
                throw NumericError("gram: non-finite row (" + block.row_label(i) + ")");
        }
        factor.gram = rows * rows.transpose();
    } else {
        // Column by column: G e_j = M (M^T e_j), one P-length row resident.
        factor.gram.resize(r, r);
        for (std::ptrdiff_t j = 0; j < r; ++j) {
            const Vec row = block.row(j);
            if (!row.allFinite())
                throw NumericError("gram: non-finite row (" + block.row_label(j) + ")");
            factor.gram.col(j) = block.apply(row);
        }
    }
    factor.gram = 0.5 * (factor.gram + factor.gram.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<Mat> solver(factor.gram);
    if (solver.info() != Eigen::Success) throw NumericError("gram: eigendecomposition failed");
    factor.eigenvalues = solver.eigenvalues().reverse();
    factor.eigenvectors = solver.eigenvectors().rowwise().reverse();

    const double lambda_max = std::max(factor.eigenvalues[0], 0.0);
    const double threshold = rank_tolerance * lambda_max;
    if (factor.eigenvalues[r - 1] < -threshold)
        throw NumericError("gram: significantly negative eigenvalue, assembly is inconsistent");
    factor.effective_rank =
        std::ptrdiff_t((factor.eigenvalues.array() > threshold).count());
    return factor;
}

Vec block_kernel_project(const RowBlock& block, const GramFactor& factor, const Vec& v) {
    if (factor.effective_rank == 0) return v;
    return v - block.apply_transpose(factor.pinv_apply(block.apply(v)));
}

KernelProjector::KernelProjector(std::vector<std::unique_ptr<RowBlock>> blocks,
                                 ProjectorOptions options)
    : blocks_(std::move(blocks)), options_(options) {
    if (blocks_.empty()) throw ConfigError("projector needs at least one block");
    if (options_.t_max < 1) throw ConfigError("t_max must be >= 1");
    dim_ = blocks_.front()->dim();
    factors_.reserve(blocks_.size());
    for (const auto& block : blocks_) {
        if (block->dim() != dim_) throw ShapeError("projector blocks disagree on dimension");
        factors_.push_back(build_gram(*block, options_.rank_tolerance, options_.cache_rows));
    }
}

KernelProjector KernelProjector::for_network(const Network& net, const Vec& theta_map,
                                             const Dataset& dataset, BlockMode mode,
                                             LossKind loss_kind, const BatchPartition& batches,
                                             ProjectorOptions options) {
    std::vector<std::unique_ptr<RowBlock>> blocks;
    blocks.reserve(batches.index_lists.size());
    for (const auto& idx : batches.index_lists)
        blocks.push_back(
            std::make_unique<JacobianRowBlock>(net, theta_map, dataset, idx, mode, loss_kind));
    return KernelProjector(std::move(blocks), options);
}

Vec KernelProjector::sweep(Vec v) const {
    for (size_t b = 0; b < blocks_.size(); ++b)
        v = block_kernel_project(*blocks_[b], factors_[b], v);
    return v;
}

std::pair<Vec, RateEstimate> KernelProjector::project_to_kernel(const Vec& v) const {
    if (v.size() != dim_) throw ShapeError("project_to_kernel: vector dimension mismatch");
    RateEstimate rate;
    const double scale = v.norm();
    Vec current = v;
    for (int t = 1; t <= options_.t_max; ++t) {
        Vec next = sweep(current);
        const double displacement = (next - current).norm();
        rate.residuals.push_back(displacement);
        rate.sweeps = t;
        current = std::move(next);
        if (options_.residual_tol > 0.0 &&
            displacement < options_.residual_tol * (scale > 0.0 ? scale : 1.0)) {
            rate.early_stopped = true;
            break;
        }
    }
    rate.c_hat = fit_geometric_rate(rate.residuals);
    return {std::move(current), std::move(rate)};
}

Mat KernelProjector::project_many(const Mat& vectors, int threads) const {
    if (vectors.cols() != dim_) throw ShapeError("project_many: vector dimension mismatch");
    const std::ptrdiff_t k = vectors.rows();
    Mat out(k, dim_);
    threads = std::clamp(threads, 1, 256);
    if (threads == 1 || k <= 1) {
        for (std::ptrdiff_t i = 0; i < k; ++i) out.row(i) = project(vectors.row(i));
        return out;
    }
    std::atomic<std::ptrdiff_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::ptrdiff_t i = next.fetch_add(1);
            if (i >= k) return;
            out.row(i) = project(vectors.row(i));
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < std::min<std::ptrdiff_t>(threads, k); ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    return out;
}

double fit_geometric_rate(const std::vector<double>& residuals) {
    if (residuals.empty()) return 0.0;
    // Keep the strictly positive prefix, truncated once the trace hits the
    // floating-point floor relative to its first entry.
    const double floor = std::max(residuals.front() * 1e-13, 1e-300);
    size_t count = 0;
    while (count < residuals.size() && residuals[count] > floor) ++count;
    if (count < 2) return 0.0;

    double st = 0, sy = 0, stt = 0, sty = 0;
    for (size_t t = 0; t < count; ++t) {
        const double y = std::log(residuals[t]);
        st += double(t);
        sy += y;
        stt += double(t) * double(t);
        sty += double(t) * y;
    }
    const double n = double(count);
    const double denom = n * stt - st * st;
    if (denom == 0.0) return 0.0;
    const double slope = (n * sty - st * sy) / denom;
    return std::clamp(std::exp(slope), 0.0, 1.0);
}

Mat materialize_rows(const Network& net, const Vec& theta_map, const Dataset& dataset,
                     BlockMode mode, LossKind loss_kind, std::ptrdiff_t entry_budget) {
    const std::ptrdiff_t n = dataset.size();
    const std::ptrdiff_t row_count =
        mode == BlockMode::OutputJacobian ? n * net.output_dim() : n;
    if (row_count * net.param_count() > entry_budget) {
        std::ostringstream os;
        os << "dense row matrix needs " << row_count * net.param_count()
           << " entries, budget is " << entry_budget;
        throw BudgetError(os.str());
    }
    Mat rows(row_count, net.param_count());
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const Vec x = dataset.inputs.row(i);
        if (mode == BlockMode::OutputJacobian) {
            rows.middleRows(i * net.output_dim(), net.output_dim()) =
                net.dense_jacobian(theta_map, x, entry_budget);
        } else if (loss_kind == LossKind::Mse) {
            rows.row(i) = loss_grad_params(net, theta_map, x, Vec(dataset.targets.row(i)));
        } else {
            rows.row(i) = loss_grad_params(net, theta_map, x, dataset.labels[size_t(i)]);
        }
    }
    return rows;
}

DenseProjector dense_projector_from_rows(const Mat& rows, double rank_tolerance) {
    Eigen::BDCSVD<Mat> svd(rows, Eigen::ComputeFullV);
    DenseProjector proj;
    proj.singular_values = svd.singularValues();
    const double sigma_max = proj.singular_values.size() > 0 ? proj.singular_values[0] : 0.0;
    const double threshold = rank_tolerance * sigma_max;
    proj.rank = std::ptrdiff_t((proj.singular_values.array() > threshold).count());
    proj.kernel_basis = svd.matrixV().rightCols(rows.cols() - proj.rank);
    return proj;
}

DenseProjector dense_kernel_projector(const Network& net, const Vec& theta_map,
                                      const Dataset& dataset, BlockMode mode, LossKind loss_kind,
                                      std::ptrdiff_t entry_budget, double rank_tolerance) {
    return dense_projector_from_rows(
        materialize_rows(net, theta_map, dataset, mode, loss_kind, entry_budget), rank_tolerance);
}

double kernel_containment_check(const Network& net, const Vec& theta_map, const Dataset& dataset,
                                LossKind loss_kind, int probes, std::uint64_t seed,
                                std::ptrdiff_t entry_budget) {
    const DenseProjector jac_kernel = dense_kernel_projector(
        net, theta_map, dataset, BlockMode::OutputJacobian, loss_kind, entry_budget);
    if (jac_kernel.kernel_dim() == 0) return 0.0;
    const Mat loss_rows =
        materialize_rows(net, theta_map, dataset, BlockMode::LossGradient, loss_kind, entry_budget);

    Rng rng(seed);
    double worst = 0.0;
    for (int p = 0; p < probes; ++p) {
        Vec coeffs(jac_kernel.kernel_dim());
        for (std::ptrdiff_t i = 0; i < coeffs.size(); ++i) coeffs[i] = rng.normal();
        const Vec v = jac_kernel.kernel_basis * coeffs;
        const double norm = v.norm();
        if (norm == 0.0) continue;
        worst = std::max(worst, (loss_rows * v).norm() / norm);
    }
    return worst;
}

}  // namespace projpost
