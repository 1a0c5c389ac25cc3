#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "projector.hpp"
#include "trainer.hpp"

namespace projpost {

enum class SampleKind { Projected, LossProjected, LlaDense, DiagLaplace, MapDelta };
enum class AlphaConvention { RankOverNorm, PaperPrinted };
enum class Task { Regression, Classification };

const char* to_string(SampleKind k);
SampleKind sample_kind_from_string(const std::string& s);
const char* to_string(AlphaConvention c);
AlphaConvention alpha_convention_from_string(const std::string& s);

struct SampleSet {
    Mat samples;  // k x P
    double alpha = 1.0;
    SampleKind kind = SampleKind::MapDelta;
    std::uint64_t seed = 0;
    // projector metadata (kernel posteriors only)
    int t_max = 0;
    int batch_size = 0;
    BlockMode mode = BlockMode::OutputJacobian;

    std::ptrdiff_t count() const { return samples.rows(); }
};

// theta_map + alpha^{-1/2} * Pi(eps) with eps ~ N(0, I); the projection is
// applied to the unscaled noise so deviations scale exactly as 1/sqrt(alpha)
// across alpha for a fixed seed.
SampleSet sample_kernel_posterior(const Vec& theta_map, const KernelProjector& projector,
                                  double alpha, int k, std::uint64_t seed, SampleKind kind,
                                  int threads = 1);
SampleSet sample_projected(const Vec& theta_map, const KernelProjector& projector, double alpha,
                           int k, std::uint64_t seed, int threads = 1);
SampleSet sample_loss_projected(const Vec& theta_map, const KernelProjector& loss_projector,
                                double alpha, int k, std::uint64_t seed, int threads = 1);
SampleSet sample_map_delta(const Vec& theta_map, int k);

struct AlphaEstimate {
    double alpha_star = 0.0;  // value under `convention`
    double alpha_rank_over_norm = 0.0;
    double alpha_paper_printed = 0.0;
    double trace_estimate = 0.0;  // Hutchinson estimate of tr(Pi_kernel)
    int probes = 0;
    AlphaConvention convention = AlphaConvention::RankOverNorm;
};

// Hutchinson trace of the kernel projector via Rademacher probes; the rank
// estimate is P - tr(Pi). The default rank-over-norm convention returns
// rank / ||theta_map||^2; paper-printed returns the reciprocal.
AlphaEstimate optimal_alpha(const Vec& theta_map,
                            const std::function<Vec(const Vec&)>& kernel_project, int probes,
                            std::uint64_t seed,
                            AlphaConvention convention = AlphaConvention::RankOverNorm);

struct DensePosterior {
    Vec mean;
    Mat covariance;  // (alpha I + GGN)^{-1}
    Vec ggn_eigenvalues;  // nonincreasing
    Mat ggn_eigenvectors;
    double alpha = 1.0;

    Mat sample(int k, std::uint64_t seed) const;
    SampleSet sample_set(int k, std::uint64_t seed) const;
};

// GGN = J^T J with the identity likelihood Hessian, fully materialized.
Mat dense_ggn(const Network& net, const Vec& theta_map, const Dataset& dataset,
              std::ptrdiff_t max_params = 2000);

DensePosterior lla_dense_posterior(const Network& net, const Vec& theta_map,
                                   const Dataset& dataset, double alpha,
                                   std::ptrdiff_t max_params = 2000);

struct DiagPosterior {
    Vec mean;
    Vec precision;  // alpha + diag(GGN)
    double alpha = 1.0;

    Mat sample(int k, std::uint64_t seed) const;
    SampleSet sample_set(int k, std::uint64_t seed) const;
};

// Exact GGN diagonal via O vjp calls per datum.
DiagPosterior diag_laplace(const Network& net, const Vec& theta_map, const Dataset& dataset,
                           double alpha);

struct PredictiveStats {
    Vec mean;
    Vec variance;  // per output dimension, unbiased (k-1); zero when k == 1
    double trace_variance = 0.0;
};

// Sample statistics of the linearized predictive f(map) + J(x)(theta - map).
PredictiveStats predictive_linearized(const Network& net, const Vec& theta_map,
                                      const SampleSet& samples, const Vec& x);

// Nonlinear Monte-Carlo predictive. Regression: mean/variance of raw
// outputs. Classification: mean softmax probabilities with per-logit
// variance.
PredictiveStats predictive_mc(const Network& net, const SampleSet& samples, const Vec& x,
                              Task task);

double ood_score(const Vec& per_dim_variance);
double map_confidence_score(const Vec& logits);  // 1 - max softmax

struct BoundsReport {
    std::vector<double> train_variance;  // linearized LLA variance per train point
    double gamma = 0.0;   // smallest singular value of the stacked Jacobian
    double lambda = 0.0;  // largest
    double lower = 0.0;   // O gamma^2 / (gamma^2 + alpha)
    double upper = 0.0;   // O lambda^2 / (lambda^2 + alpha)
    double total_variance = 0.0;
    double spectrum_total = 0.0;  // sum_i sigma_i^2 / (sigma_i^2 + alpha)
    bool ok = false;
};

BoundsReport lla_variance_bounds_check(const Network& net, const Vec& theta_map,
                                       const Dataset& dataset, double alpha,
                                       std::ptrdiff_t max_params = 2000, double slack = 1e-8);

struct ErrorBoundReport {
    double spectral_diff = 0.0;    // ||(aI+GGN)^{-1} - a^{-1}(I - P(GGN))||_2
    double tau = 0.0;              // smallest nonzero GGN eigenvalue
    std::ptrdiff_t rank = 0;       // GGN rank
    double wasserstein_sq = 0.0;   // W2^2 between the two Gaussians
    double spectral_bound = 0.0;   // 1 / (tau + alpha)
    double wasserstein_bound = 0.0;  // rank / (tau + alpha)
    bool ok = false;
};

ErrorBoundReport covariance_error_check(const Network& net, const Vec& theta_map,
                                        const Dataset& dataset, double alpha,
                                        std::ptrdiff_t max_params = 2000, double slack = 1e-8);

struct SlopeReport {
    double slope = 0.0;  // of log max_n |loss change| against log scale
    std::vector<double> scales;
    std::vector<double> deltas;
};

// Perturbs theta_map along a unit direction drawn from the loss-gradient
// kernel (or, for the control, from its orthogonal complement) and fits the
// loss-change order.
SlopeReport loss_preservation_check(const Network& net, const Vec& theta_map,
                                    const KernelProjector& loss_projector, const Dataset& dataset,
                                    LossKind loss_kind, const std::vector<double>& scales,
                                    std::uint64_t seed, bool control_direction = false);

// Version-2 container persistence for sample sets.
void save_samples(const std::string& path, const ArchitectureSpec& arch, const SampleSet& set);
std::pair<ArchitectureSpec, SampleSet> load_samples(const std::string& path);

}  // namespace projpost
