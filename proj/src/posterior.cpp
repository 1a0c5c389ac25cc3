#include "posterior.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace projpost {

const char* to_string(SampleKind k) {
    switch (k) {
        case SampleKind::Projected: return "projected";
        case SampleKind::LossProjected: return "loss-projected";
        case SampleKind::LlaDense: return "lla-dense";
        case SampleKind::DiagLaplace: return "diag-laplace";
        case SampleKind::MapDelta: return "map-delta";
    }
    return "?";
}

SampleKind sample_kind_from_string(const std::string& s) {
    if (s == "projected") return SampleKind::Projected;
    if (s == "loss-projected") return SampleKind::LossProjected;
    if (s == "lla-dense") return SampleKind::LlaDense;
    if (s == "diag-laplace") return SampleKind::DiagLaplace;
    if (s == "map-delta") return SampleKind::MapDelta;
    throw ConfigError("unknown posterior kind '" + s + "'");
}

const char* to_string(AlphaConvention c) {
    return c == AlphaConvention::RankOverNorm ? "rank-over-norm" : "paper-printed";
}

AlphaConvention alpha_convention_from_string(const std::string& s) {
    if (s == "rank-over-norm") return AlphaConvention::RankOverNorm;
    if (s == "paper-printed") return AlphaConvention::PaperPrinted;
    throw ConfigError("unknown alpha convention '" + s + "'");
}

SampleSet sample_kernel_posterior(const Vec& theta_map, const KernelProjector& projector,
                                  double alpha, int k, std::uint64_t seed, SampleKind kind,
                                  int threads) {
    if (alpha <= 0.0) throw ConfigError("alpha must be > 0");
    if (k < 1) throw ConfigError("sample count must be >= 1");
    if (theta_map.size() != projector.dim()) throw ShapeError("projector dimension mismatch");

    Rng rng(seed);
    Mat noise(k, theta_map.size());
    for (std::ptrdiff_t i = 0; i < noise.rows(); ++i)
        for (std::ptrdiff_t j = 0; j < noise.cols(); ++j) noise(i, j) = rng.normal();

    SampleSet set;
    set.samples = projector.project_many(noise, threads);
    set.samples *= 1.0 / std::sqrt(alpha);
    set.samples.rowwise() += theta_map.transpose();
    set.alpha = alpha;
    set.kind = kind;
    set.seed = seed;
    set.t_max = projector.options().t_max;
    if (!set.samples.allFinite()) throw NumericError("posterior produced non-finite samples");
    return set;
}

SampleSet sample_projected(const Vec& theta_map, const KernelProjector& projector, double alpha,
                           int k, std::uint64_t seed, int threads) {
    SampleSet s = sample_kernel_posterior(theta_map, projector, alpha, k, seed,
                                          SampleKind::Projected, threads);
    s.mode = BlockMode::OutputJacobian;
    return s;
}

SampleSet sample_loss_projected(const Vec& theta_map, const KernelProjector& loss_projector,
                                double alpha, int k, std::uint64_t seed, int threads) {
    SampleSet s = sample_kernel_posterior(theta_map, loss_projector, alpha, k, seed,
                                          SampleKind::LossProjected, threads);
    s.mode = BlockMode::LossGradient;
    return s;
}

SampleSet sample_map_delta(const Vec& theta_map, int k) {
    if (k < 1) throw ConfigError("sample count must be >= 1");
    SampleSet set;
    set.samples = theta_map.transpose().replicate(k, 1);
    set.kind = SampleKind::MapDelta;
    return set;
}

AlphaEstimate optimal_alpha(const Vec& theta_map,
                            const std::function<Vec(const Vec&)>& kernel_project, int probes,
                            std::uint64_t seed, AlphaConvention convention) {
    if (probes < 1) throw ConfigError("probes must be >= 1");
    const std::ptrdiff_t p = theta_map.size();
    Rng rng(seed);
    KahanSum acc;
    for (int i = 0; i < probes; ++i) {
        Vec z(p);
        for (std::ptrdiff_t j = 0; j < p; ++j) z[j] = rng.rademacher();
        acc.add(z.dot(kernel_project(z)));
    }

    AlphaEstimate est;
    est.trace_estimate = acc.value() / double(probes);
    est.probes = probes;
    est.convention = convention;

    const double rank_estimate = double(p) - est.trace_estimate;
    const double norm_sq = theta_map.squaredNorm();
    if (rank_estimate <= 0.0)
        throw NumericError("optimal_alpha: rank estimate is not positive (kernel fills the space)");
    if (norm_sq <= 0.0) throw NumericError("optimal_alpha: theta_map has zero norm");
    est.alpha_rank_over_norm = rank_estimate / norm_sq;
    est.alpha_paper_printed = norm_sq / rank_estimate;
    est.alpha_star = convention == AlphaConvention::RankOverNorm ? est.alpha_rank_over_norm
                                                                 : est.alpha_paper_printed;
    return est;
}

Mat dense_ggn(const Network& net, const Vec& theta_map, const Dataset& dataset,
              std::ptrdiff_t max_params) {
    if (net.param_count() > max_params) {
        std::ostringstream os;
        os << "dense GGN needs " << net.param_count() << " parameters, budget is " << max_params;
        throw BudgetError(os.str());
    }
    Mat ggn = Mat::Zero(net.param_count(), net.param_count());
    for (std::ptrdiff_t n = 0; n < dataset.size(); ++n) {
        const Mat jac = net.dense_jacobian(theta_map, dataset.inputs.row(n));
        ggn.noalias() += jac.transpose() * jac;
    }
    return 0.5 * (ggn + ggn.transpose()).eval();
}

DensePosterior lla_dense_posterior(const Network& net, const Vec& theta_map,
                                   const Dataset& dataset, double alpha,
                                   std::ptrdiff_t max_params) {
    if (alpha <= 0.0) throw ConfigError("alpha must be > 0");
    const Mat ggn = dense_ggn(net, theta_map, dataset, max_params);
    Eigen::SelfAdjointEigenSolver<Mat> solver(ggn);
    if (solver.info() != Eigen::Success) throw NumericError("GGN eigendecomposition failed");

    DensePosterior post;
    post.mean = theta_map;
    post.alpha = alpha;
    post.ggn_eigenvalues = solver.eigenvalues().reverse();
    post.ggn_eigenvectors = solver.eigenvectors().rowwise().reverse();
    const Vec shifted_inv = (post.ggn_eigenvalues.array() + alpha).inverse();
    post.covariance =
        post.ggn_eigenvectors * shifted_inv.asDiagonal() * post.ggn_eigenvectors.transpose();
    return post;
}

Mat DensePosterior::sample(int k, std::uint64_t seed) const {
    if (k < 1) throw ConfigError("sample count must be >= 1");
    Rng rng(seed);
    const Vec scale = (ggn_eigenvalues.array() + alpha).rsqrt();
    Mat out(k, mean.size());
    Vec eps(mean.size());
    for (int i = 0; i < k; ++i) {
        for (std::ptrdiff_t j = 0; j < eps.size(); ++j) eps[j] = rng.normal();
        out.row(i) = (mean + ggn_eigenvectors * (scale.asDiagonal() * eps)).transpose();
    }
    return out;
}

SampleSet DensePosterior::sample_set(int k, std::uint64_t seed) const {
    SampleSet set;
    set.samples = sample(k, seed);
    set.alpha = alpha;
    set.kind = SampleKind::LlaDense;
    set.seed = seed;
    return set;
}

DiagPosterior diag_laplace(const Network& net, const Vec& theta_map, const Dataset& dataset,
                           double alpha) {
    if (alpha <= 0.0) throw ConfigError("alpha must be > 0");
    DiagPosterior post;
    post.mean = theta_map;
    post.alpha = alpha;
    post.precision = Vec::Constant(net.param_count(), alpha);
    Vec basis = Vec::Zero(net.output_dim());
    for (std::ptrdiff_t n = 0; n < dataset.size(); ++n) {
        const Vec x = dataset.inputs.row(n);
        for (int o = 0; o < net.output_dim(); ++o) {
            basis[o] = 1.0;
            post.precision += net.vjp(theta_map, x, basis).array().square().matrix();
            basis[o] = 0.0;
        }
    }
    return post;
}

Mat DiagPosterior::sample(int k, std::uint64_t seed) const {
    if (k < 1) throw ConfigError("sample count must be >= 1");
    Rng rng(seed);
    const Vec sd = precision.array().rsqrt();
    Mat out(k, mean.size());
    for (int i = 0; i < k; ++i)
        for (std::ptrdiff_t j = 0; j < mean.size(); ++j)
            out(i, j) = mean[j] + sd[j] * rng.normal();
    return out;
}

SampleSet DiagPosterior::sample_set(int k, std::uint64_t seed) const {
    SampleSet set;
    set.samples = sample(k, seed);
    set.alpha = alpha;
    set.kind = SampleKind::DiagLaplace;
    set.seed = seed;
    return set;
}

namespace {

PredictiveStats stats_from_rows(const Mat& rows) {
    PredictiveStats stats;
    const std::ptrdiff_t k = rows.rows();
    stats.mean = rows.colwise().mean();
    if (k > 1) {
        const Mat centered = rows.rowwise() - stats.mean.transpose();
        stats.variance = centered.array().square().colwise().sum() / double(k - 1);
    } else {
        stats.variance = Vec::Zero(rows.cols());
    }
    stats.trace_variance = stats.variance.sum();
    return stats;
}

}  // namespace

PredictiveStats predictive_linearized(const Network& net, const Vec& theta_map,
                                      const SampleSet& samples, const Vec& x) {
    const Vec base = net.forward(theta_map, x);
    Mat outputs(samples.count(), base.size());
    for (std::ptrdiff_t i = 0; i < samples.count(); ++i)
        outputs.row(i) =
            base + net.jvp(theta_map, x, Vec(samples.samples.row(i).transpose()) - theta_map);
    return stats_from_rows(outputs);
}

PredictiveStats predictive_mc(const Network& net, const SampleSet& samples, const Vec& x,
                              Task task) {
    Mat logits(samples.count(), net.output_dim());
    for (std::ptrdiff_t i = 0; i < samples.count(); ++i)
        logits.row(i) = net.forward(Vec(samples.samples.row(i).transpose()), x);
    if (task == Task::Regression) return stats_from_rows(logits);

    PredictiveStats stats = stats_from_rows(logits);  // per-logit variances
    Mat probs(logits.rows(), logits.cols());
    for (std::ptrdiff_t i = 0; i < logits.rows(); ++i) probs.row(i) = softmax(logits.row(i));
    stats.mean = probs.colwise().mean();
    return stats;
}

double ood_score(const Vec& per_dim_variance) {
    if (per_dim_variance.size() == 0) throw ShapeError("ood_score: empty variance vector");
    return per_dim_variance.maxCoeff();
}

double map_confidence_score(const Vec& logits) { return 1.0 - softmax(logits).maxCoeff(); }

BoundsReport lla_variance_bounds_check(const Network& net, const Vec& theta_map,
                                       const Dataset& dataset, double alpha,
                                       std::ptrdiff_t max_params, double slack) {
    if (alpha <= 0.0) throw ConfigError("alpha must be > 0");
    if (net.param_count() > max_params)
        throw BudgetError("lla_variance_bounds_check: parameter budget exceeded");

    const Mat rows = materialize_rows(net, theta_map, dataset, BlockMode::OutputJacobian,
                                      LossKind::Mse, max_params * max_params);
    Eigen::BDCSVD<Mat> svd(rows);
    const Vec sigma = svd.singularValues();

    BoundsReport report;
    report.lambda = sigma.size() > 0 ? sigma[0] : 0.0;
    // When there are more rows than parameters the spectrum completes with
    // zeros, so the smallest singular value is 0.
    report.gamma = rows.rows() > rows.cols() ? 0.0 : (sigma.size() > 0 ? sigma[sigma.size() - 1] : 0.0);
    const double o = double(net.output_dim());
    report.lower = o * report.gamma * report.gamma / (report.gamma * report.gamma + alpha);
    report.upper = o * report.lambda * report.lambda / (report.lambda * report.lambda + alpha);
    report.spectrum_total = (sigma.array().square() / (sigma.array().square() + alpha)).sum();

    const Mat ggn = 0.5 * (rows.transpose() * rows + (rows.transpose() * rows).transpose());
    Eigen::SelfAdjointEigenSolver<Mat> solver(ggn);
    if (solver.info() != Eigen::Success) throw NumericError("GGN eigendecomposition failed");
    const Vec inv = (solver.eigenvalues().array() + alpha).inverse();
    const Mat cov = solver.eigenvectors() * inv.asDiagonal() * solver.eigenvectors().transpose();

    report.ok = true;
    KahanSum total;
    const int o_dim = net.output_dim();
    for (std::ptrdiff_t n = 0; n < dataset.size(); ++n) {
        const Mat jac = rows.middleRows(n * o_dim, o_dim);
        const double var = (jac * cov * jac.transpose()).trace();
        report.train_variance.push_back(var);
        total.add(var);
        if (var < report.lower - slack || var > report.upper + slack) report.ok = false;
    }
    report.total_variance = total.value();
    return report;
}

ErrorBoundReport covariance_error_check(const Network& net, const Vec& theta_map,
                                        const Dataset& dataset, double alpha,
                                        std::ptrdiff_t max_params, double slack) {
    if (alpha <= 0.0) throw ConfigError("alpha must be > 0");
    const Mat ggn = dense_ggn(net, theta_map, dataset, max_params);
    Eigen::SelfAdjointEigenSolver<Mat> solver(ggn);
    if (solver.info() != Eigen::Success) throw NumericError("GGN eigendecomposition failed");
    const Vec lambdas = solver.eigenvalues().reverse();  // nonincreasing
    const Mat vecs = solver.eigenvectors().rowwise().reverse();
    const std::ptrdiff_t p = ggn.rows();

    const double lambda_max = std::max(lambdas[0], 0.0);
    const double threshold = 1e-10 * lambda_max;
    ErrorBoundReport report;
    report.rank = std::ptrdiff_t((lambdas.array() > threshold).count());
    report.tau = report.rank > 0 ? lambdas[report.rank - 1] : 0.0;
    report.spectral_bound = 1.0 / (report.tau + alpha);
    report.wasserstein_bound = double(report.rank) / (report.tau + alpha);

    const Mat lla_cov =
        vecs * Vec((lambdas.array() + alpha).inverse()).asDiagonal() * vecs.transpose();
    Mat proj_cov = Mat::Zero(p, p);
    if (report.rank < p) {
        const Mat kernel_vecs = vecs.rightCols(p - report.rank);
        proj_cov = (kernel_vecs * kernel_vecs.transpose()) / alpha;
    }

    const Mat diff = 0.5 * ((lla_cov - proj_cov) + (lla_cov - proj_cov).transpose());
    Eigen::SelfAdjointEigenSolver<Mat> diff_solver(diff);
    report.spectral_diff = diff_solver.eigenvalues().cwiseAbs().maxCoeff();

    // Closed-form Gaussian W2^2 with equal means:
    //   tr(S1) + tr(S2) - 2 tr((S2^{1/2} S1 S2^{1/2})^{1/2})
    Eigen::SelfAdjointEigenSolver<Mat> proj_solver(proj_cov);
    const Vec proj_sqrt_eigs = proj_solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Mat proj_sqrt = proj_solver.eigenvectors() * proj_sqrt_eigs.asDiagonal() *
                          proj_solver.eigenvectors().transpose();
    const Mat inner = proj_sqrt * lla_cov * proj_sqrt;
    Eigen::SelfAdjointEigenSolver<Mat> inner_solver(0.5 * (inner + inner.transpose()));
    const double cross = inner_solver.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    report.wasserstein_sq = std::max(0.0, lla_cov.trace() + proj_cov.trace() - 2.0 * cross);

    report.ok = report.spectral_diff <= report.spectral_bound + slack &&
                report.wasserstein_sq <= report.wasserstein_bound + slack;
    return report;
}

SlopeReport loss_preservation_check(const Network& net, const Vec& theta_map,
                                    const KernelProjector& loss_projector, const Dataset& dataset,
                                    LossKind loss_kind, const std::vector<double>& scales,
                                    std::uint64_t seed, bool control_direction) {
    if (scales.size() < 2) throw ConfigError("loss_preservation_check needs >= 2 scales");
    Rng rng(seed);
    Vec z(theta_map.size());
    for (std::ptrdiff_t i = 0; i < z.size(); ++i) z[i] = rng.normal();
    Vec direction = loss_projector.project(z);
    if (control_direction) direction = z - direction;  // row-space component
    const double norm = direction.norm();
    if (norm < 1e-12) throw NumericError("loss_preservation_check: degenerate direction");
    direction /= norm;

    auto per_datum_losses = [&](const Vec& theta) {
        const Mat outputs = net.forward_batch(theta, dataset.inputs);
        Vec losses(dataset.size());
        for (std::ptrdiff_t n = 0; n < dataset.size(); ++n) {
            const Vec y = outputs.row(n);
            losses[n] = loss_kind == LossKind::Mse
                            ? mse_loss(y, dataset.targets.row(n))
                            : cross_entropy_loss(y, dataset.labels[size_t(n)]);
        }
        return losses;
    };
    const Vec base = per_datum_losses(theta_map);

    SlopeReport report;
    std::vector<double> log_s, log_d;
    for (double s : scales) {
        const Vec perturbed = per_datum_losses(theta_map + s * direction);
        const double delta = (perturbed - base).cwiseAbs().maxCoeff();
        report.scales.push_back(s);
        report.deltas.push_back(delta);
        if (delta > 0.0) {
            log_s.push_back(std::log(s));
            log_d.push_back(std::log(delta));
        }
    }
    if (log_s.size() < 2) throw NumericError("loss_preservation_check: loss deltas all vanish");

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < log_s.size(); ++i) {
        sx += log_s[i];
        sy += log_d[i];
        sxx += log_s[i] * log_s[i];
        sxy += log_s[i] * log_d[i];
    }
    const double n = double(log_s.size());
    report.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return report;
}

void save_samples(const std::string& path, const ArchitectureSpec& arch, const SampleSet& set) {
    Json meta;
    meta["samples"] = {
        {"alpha", set.alpha},
        {"kind", to_string(set.kind)},
        {"seed", set.seed},
        {"t_max", set.t_max},
        {"batch_size", set.batch_size},
        {"mode", set.mode == BlockMode::OutputJacobian ? "output-jacobian" : "loss-gradient"},
    };
    save_matrix_container(path, arch, meta, set.samples);
}

std::pair<ArchitectureSpec, SampleSet> load_samples(const std::string& path) {
    MatrixContainer mc = load_matrix_container(path);
    SampleSet set;
    set.samples = std::move(mc.rows);
    try {
        const Json& meta = mc.meta.at("samples");
        set.alpha = meta.at("alpha").get<double>();
        set.kind = sample_kind_from_string(meta.at("kind").get<std::string>());
        set.seed = meta.at("seed").get<std::uint64_t>();
        set.t_max = meta.at("t_max").get<int>();
        set.batch_size = meta.at("batch_size").get<int>();
        set.mode = meta.at("mode").get<std::string>() == "loss-gradient"
                       ? BlockMode::LossGradient
                       : BlockMode::OutputJacobian;
    } catch (const Json::exception& e) {
        throw IoError("sample file " + path + " has a bad descriptor: " + e.what());
    }
    return {mc.arch, std::move(set)};
}

}  // namespace projpost
