// Acceptance suite: runs every criterion at its stated tolerance and prints
// one pass/fail line per criterion. Exit code is the number of failures.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "pipeline.hpp"

using namespace projpost;

namespace {

namespace fs = std::filesystem;

struct Check {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

int g_failures = 0;

void criterion(int id, const std::string& title, const std::function<void(Check&)>& body) {
    Check check;
    const auto start = std::chrono::steady_clock::now();
    try {
        body(check);
    } catch (const std::exception& e) {
        check.ok = false;
        check.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] criterion %2d: %s (%.1fs)%s%s\n", check.ok ? "PASS" : "FAIL", id,
                title.c_str(), secs, check.ok ? "" : " -- ", check.detail.c_str());
    std::fflush(stdout);
    if (!check.ok) ++g_failures;
}

Vec random_vec(std::ptrdiff_t n, Rng& rng) {
    Vec v(n);
    for (std::ptrdiff_t i = 0; i < n; ++i) v[i] = rng.normal();
    return v;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------
// Shared fixtures (built once, reused across criteria)

struct ScratchDir {
    fs::path base;
    ScratchDir() {
        base = fs::temp_directory_path() / "projpost_acceptance";
        fs::remove_all(base);
        fs::create_directories(base);
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(base, ec);
    }
    std::string path(const std::string& name) const { return (base / name).string(); }
};

ScratchDir g_scratch;

Dataset random_regression(int n, int input_dim, int output_dim, std::uint64_t seed) {
    Rng rng(seed);
    Dataset d;
    d.kind = DatasetKind::Regression;
    d.inputs.resize(n, input_dim);
    d.targets.resize(n, output_dim);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < input_dim; ++j) d.inputs(i, j) = rng.normal();
        for (int j = 0; j < output_dim; ++j) d.targets(i, j) = rng.normal();
    }
    d.name = "random-regression";
    return d;
}

// Tiny MLP at a generic (random-init) parameter point: P = 202, N = 32, O = 2.
struct TinyMlpFixture {
    Network net{ArchitectureSpec::mlp(2, {40}, 2)};
    Vec theta{net.init_params(101)};
    Dataset data{random_regression(32, 2, 2, 102)};

    KernelProjector projector(int batch_size, int t_max, BlockMode mode) const {
        ProjectorOptions opt;
        opt.t_max = t_max;
        return KernelProjector::for_network(net, theta, data, mode, LossKind::Mse,
                                            partition(data.size(), batch_size, 7), opt);
    }
};

const TinyMlpFixture& tiny_mlp() {
    static TinyMlpFixture fx;
    return fx;
}

struct MoonsFixture {
    Network net{ArchitectureSpec::mlp(2, {16, 16}, 2)};
    Dataset train{gen_two_moons(64, 0.08, 11)};
    Dataset test{gen_two_moons(256, 0.08, 12)};
    Vec theta;

    MoonsFixture() {
        TrainConfig cfg;
        cfg.optimizer = OptimizerKind::Adam;
        cfg.learning_rate = 1e-3;
        cfg.epochs = 500;
        cfg.batch_size = 16;
        cfg.seed = 13;
        theta = train_map(net, net.init_params(17), train, LossKind::CrossEntropySoftmax, cfg)
                    .theta;
    }

    KernelProjector projector(int t_max) const {
        ProjectorOptions opt;
        opt.t_max = t_max;
        return KernelProjector::for_network(net, theta, train, BlockMode::OutputJacobian,
                                            LossKind::CrossEntropySoftmax,
                                            partition(train.size(), 16, 31), opt);
    }
};

const MoonsFixture& moons() {
    static MoonsFixture fx;
    return fx;
}

struct ToyFixture {
    Network net{ArchitectureSpec::mlp(1, {10, 10}, 1)};
    Dataset train{gen_toy_regression(8, 0.05, 21)};
    Vec theta;

    ToyFixture() {
        TrainConfig cfg;
        cfg.optimizer = OptimizerKind::Adam;
        cfg.learning_rate = 1e-2;
        cfg.epochs = 800;
        cfg.batch_size = 8;
        cfg.seed = 23;
        theta = train_map(net, net.init_params(25), train, LossKind::Mse, cfg).theta;
    }

    KernelProjector projector(int t_max) const {
        ProjectorOptions opt;
        opt.t_max = t_max;
        return KernelProjector::for_network(net, theta, train, BlockMode::OutputJacobian,
                                            LossKind::Mse, partition(train.size(), 4, 33), opt);
    }
};

const ToyFixture& toy() {
    static ToyFixture fx;
    return fx;
}

// Synthetic 10-class image set in IDX files: one noisy prototype per class.
void write_digit_files(const std::string& images_path, const std::string& labels_path, int n,
                       std::uint64_t seed) {
    const int w = 10;
    Rng proto_rng(909);
    std::vector<std::vector<double>> prototypes(10, std::vector<double>(size_t(w * w)));
    for (auto& proto : prototypes)
        for (double& p : proto) p = proto_rng.uniform(0.0, 255.0);

    Rng rng(seed);
    IdxTensor images, labels;
    images.dims = {std::uint32_t(n), w, w};
    images.data.resize(size_t(n) * w * w);
    labels.dims = {std::uint32_t(n)};
    labels.data.resize(size_t(n));
    for (int i = 0; i < n; ++i) {
        const int cls = i % 10;
        labels.data[size_t(i)] = std::uint8_t(cls);
        for (int p = 0; p < w * w; ++p) {
            const double v = prototypes[size_t(cls)][size_t(p)] + 40.0 * rng.normal();
            images.data[size_t(i) * w * w + size_t(p)] =
                std::uint8_t(std::clamp(v, 0.0, 255.0));
        }
    }
    write_idx(images_path, images);
    write_idx(labels_path, labels);
}

struct DigitsFixture {
    Network net{ArchitectureSpec::mlp(100, {128}, 10)};
    Dataset train;
    Dataset test;
    Vec theta;

    DigitsFixture() {
        const std::string train_images = g_scratch.path("digits_train_images.idx");
        const std::string train_labels = g_scratch.path("digits_train_labels.idx");
        const std::string test_images = g_scratch.path("digits_test_images.idx");
        const std::string test_labels = g_scratch.path("digits_test_labels.idx");
        write_digit_files(train_images, train_labels, 1000, 41);
        write_digit_files(test_images, test_labels, 400, 42);
        train = dataset_from_idx(train_images, train_labels, 10, 0, 1.0 / 255.0);
        test = dataset_from_idx(test_images, test_labels, 10, 0, 1.0 / 255.0);

        TrainConfig cfg;
        cfg.optimizer = OptimizerKind::Adam;
        cfg.learning_rate = 1e-3;
        cfg.epochs = 30;
        cfg.batch_size = 64;
        cfg.seed = 43;
        theta = train_map(net, net.init_params(44), train, LossKind::CrossEntropySoftmax, cfg)
                    .theta;
    }
};

const DigitsFixture& digits() {
    static DigitsFixture fx;
    return fx;
}

double accuracy_of(const Network& net, const Vec& theta, const Dataset& data,
                   const Mat& mean_probs) {
    int correct = 0;
    for (std::ptrdiff_t i = 0; i < data.size(); ++i) {
        int best = 0;
        for (int c = 1; c < mean_probs.cols(); ++c)
            if (mean_probs(i, c) > mean_probs(i, best)) best = c;
        correct += best == data.labels[size_t(i)] ? 1 : 0;
    }
    (void)net;
    (void)theta;
    return double(correct) / double(data.size());
}

double map_accuracy(const Network& net, const Vec& theta, const Dataset& data) {
    const Mat logits = net.forward_batch(theta, data.inputs);
    int correct = 0;
    for (std::ptrdiff_t i = 0; i < data.size(); ++i) {
        int best = 0;
        for (int c = 1; c < logits.cols(); ++c)
            if (logits(i, c) > logits(i, best)) best = c;
        correct += best == data.labels[size_t(i)] ? 1 : 0;
    }
    return double(correct) / double(data.size());
}

bool xml_well_formed(const std::string& text) {
    std::vector<std::string> stack;
    size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '<') {
            ++i;
            continue;
        }
        const size_t end = text.find('>', i);
        if (end == std::string::npos) return false;
        std::string tag = text.substr(i + 1, end - i - 1);
        i = end + 1;
        if (tag.empty()) return false;
        if (tag.front() == '?' || tag.front() == '!') continue;
        const bool self_closing = tag.back() == '/';
        if (self_closing) tag.pop_back();
        const bool closing = tag.front() == '/';
        if (closing) tag.erase(0, 1);
        const std::string name = tag.substr(0, tag.find_first_of(" \t\r\n"));
        if (name.empty()) return false;
        if (closing) {
            if (stack.empty() || stack.back() != name) return false;
            stack.pop_back();
        } else if (!self_closing) {
            stack.push_back(name);
        }
    }
    return stack.empty();
}

}  // namespace

// ---------------------------------------------------------------------

int main() {
    criterion(1, "autodiff: adjoint identity and finite-difference Jacobian", [](Check& c) {
        Network net(ArchitectureSpec::mlp(2, {8}, 3));
        Rng rng(1);
        const Vec theta = random_vec(net.param_count(), rng);
        for (int trial = 0; trial < 100; ++trial) {
            const Vec x = random_vec(2, rng);
            const Vec u = random_vec(3, rng);
            const Vec v = random_vec(net.param_count(), rng);
            const double lhs = u.dot(net.jvp(theta, x, v));
            const double rhs = net.vjp(theta, x, u).dot(v);
            c.require(std::abs(lhs - rhs) <= 1e-10 * (1.0 + std::abs(lhs)),
                      "adjoint identity violated");

            const double h = 1e-5;
            const Vec fd = (net.forward(theta + h * v, x) - net.forward(theta - h * v, x)) /
                           (2.0 * h);
            const Vec exact = net.jvp(theta, x, v);
            c.require((exact - fd).norm() <= 1e-6 * (1.0 + exact.norm()),
                      "finite-difference mismatch");
        }
    });

    criterion(2, "alternating projections match the dense SVD oracle", [](Check& c) {
        const auto start = std::chrono::steady_clock::now();
        const TinyMlpFixture& fx = tiny_mlp();
        c.require(fx.net.param_count() == 202, "fixture should have P = 202");
        const KernelProjector proj = fx.projector(4, 200, BlockMode::OutputJacobian);
        const DenseProjector oracle = dense_kernel_projector(
            fx.net, fx.theta, fx.data, BlockMode::OutputJacobian, LossKind::Mse);
        Rng rng(2);
        for (int trial = 0; trial < 20; ++trial) {
            const Vec v = random_vec(proj.dim(), rng);
            const double err = (proj.project(v) - oracle.apply(v)).norm();
            c.require(err <= 1e-4 * v.norm(), "oracle discrepancy " + std::to_string(err));
        }
        // residual trace to the oracle is monotone nonincreasing
        const Vec v = random_vec(proj.dim(), rng);
        const Vec target = oracle.apply(v);
        Vec w = v;
        double prev = (w - target).norm();
        for (int t = 0; t < 50; ++t) {
            w = proj.sweep(w);
            const double r = (w - target).norm();
            c.require(r <= prev * (1.0 + 1e-9), "oracle residual increased");
            prev = r;
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        c.require(secs < 10.0, "runtime " + std::to_string(secs) + "s exceeds 10s");
    });

    criterion(3, "analytic alternating-projection rates", [](Check& c) {
        Mat r1(1, 2), r2(1, 2);
        r1 << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
        r2 << 1.0, 0.0;
        std::vector<std::unique_ptr<RowBlock>> blocks;
        blocks.push_back(std::make_unique<DenseRowBlock>(r1));
        blocks.push_back(std::make_unique<DenseRowBlock>(r2));
        ProjectorOptions opt;
        opt.t_max = 25;
        const KernelProjector angled(std::move(blocks), opt);
        Vec v(2);
        v << 0, 1;
        const RateEstimate rate = angled.project_to_kernel(v).second;
        c.require(std::abs(rate.c_hat - 0.5) <= 0.02,
                  "45-degree rate c_hat = " + std::to_string(rate.c_hat));

        Mat o1(1, 3), o2(1, 3);
        o1 << 1, 0, 0;
        o2 << 0, 1, 0;
        std::vector<std::unique_ptr<RowBlock>> oblocks;
        oblocks.push_back(std::make_unique<DenseRowBlock>(o1));
        oblocks.push_back(std::make_unique<DenseRowBlock>(o2));
        const KernelProjector ortho(std::move(oblocks), opt);
        Rng rng(3);
        const RateEstimate orate = ortho.project_to_kernel(random_vec(3, rng)).second;
        c.require(orate.residuals.size() >= 2 && orate.residuals[1] == 0.0,
                  "orthogonal fixture did not converge in one sweep");
        c.require(orate.c_hat <= 0.01, "orthogonal fixture c_hat too large");
    });

    criterion(4, "projected posterior preserves training predictions", [](Check& c) {
        const MoonsFixture& fx = moons();
        c.require(map_accuracy(fx.net, fx.theta, fx.train) >= 0.99, "MAP failed to fit");
        const KernelProjector proj = fx.projector(1000);
        const SampleSet samples = sample_projected(fx.theta, proj, 1.0, 30, 47, 2);

        const Mat map_logits = fx.net.forward_batch(fx.theta, fx.train.inputs);
        const double scale = map_logits.cwiseAbs().mean() + 1.0;
        const PredictiveBatch pred =
            predictive_batch(fx.net, fx.theta, samples, fx.train.inputs, true);
        for (std::ptrdiff_t n = 0; n < fx.train.size(); ++n) {
            const double trace_var = pred.var_output.row(n).sum();
            c.require(trace_var <= 1e-8 * scale * scale,
                      "train trace variance " + std::to_string(trace_var));
            int map_best = map_logits(n, 0) >= map_logits(n, 1) ? 0 : 1;
            int mean_best = pred.mean_output(n, 0) >= pred.mean_output(n, 1) ? 0 : 1;
            c.require(map_best == mean_best, "argmax flipped on a training point");
        }
        // per-sample linearized deviation at each training point
        for (std::ptrdiff_t i = 0; i < samples.count(); ++i) {
            const Vec delta = Vec(samples.samples.row(i).transpose()) - fx.theta;
            const Mat dev = fx.net.jvp_batch(fx.theta, fx.train.inputs, delta);
            c.require(dev.cwiseAbs().maxCoeff() <= 1e-5,
                      "per-sample deviation " + std::to_string(dev.cwiseAbs().maxCoeff()));
        }
    });

    criterion(5, "in-between uncertainty on the toy regression gap", [](Check& c) {
        const ToyFixture& fx = toy();
        const KernelProjector proj = fx.projector(1000);
        const SampleSet samples = sample_projected(fx.theta, proj, 1.0, 30, 51, 2);

        double max_train_var = 0.0;
        for (std::ptrdiff_t n = 0; n < fx.train.size(); ++n) {
            const PredictiveStats stats = predictive_linearized(
                fx.net, fx.theta, samples, Vec(fx.train.inputs.row(n).transpose()));
            max_train_var = std::max(max_train_var, stats.trace_variance);
        }
        Vec gap(1);
        gap << 0.0;
        const PredictiveStats gap_stats = predictive_linearized(fx.net, fx.theta, samples, gap);
        c.require(gap_stats.trace_variance >= 1e3 * max_train_var,
                  "gap variance ratio " +
                      std::to_string(gap_stats.trace_variance / (max_train_var + 1e-300)));

        // rank condition via the dense oracle: appending the gap row raises the rank
        const Mat train_rows = materialize_rows(fx.net, fx.theta, fx.train,
                                                BlockMode::OutputJacobian, LossKind::Mse);
        Mat augmented(train_rows.rows() + 1, train_rows.cols());
        augmented << train_rows, fx.net.dense_jacobian(fx.theta, gap);
        const DenseProjector train_proj = dense_projector_from_rows(train_rows);
        const DenseProjector aug_proj = dense_projector_from_rows(augmented);
        c.require(aug_proj.rank > train_proj.rank, "rank condition failed on the fixture");
    });

    criterion(6, "LLA train variance bounds", [](Check& c) {
        const TinyMlpFixture& fx = tiny_mlp();
        for (double alpha : {0.1, 1.0, 10.0}) {
            const BoundsReport report =
                lla_variance_bounds_check(fx.net, fx.theta, fx.data, alpha, 2000, 1e-8);
            c.require(report.ok, "bounds violated at alpha " + std::to_string(alpha));
            c.require(std::abs(report.total_variance - report.spectrum_total) <=
                          1e-8 * (1.0 + report.spectrum_total),
                      "spectrum cross-check failed");
        }
    });

    criterion(7, "covariance error and Wasserstein bounds", [](Check& c) {
        const TinyMlpFixture& fx = tiny_mlp();
        for (double alpha : {0.1, 1.0, 10.0}) {
            const ErrorBoundReport report =
                covariance_error_check(fx.net, fx.theta, fx.data, alpha, 2000, 1e-8);
            c.require(report.ok, "error bounds violated at alpha " + std::to_string(alpha));
        }
    });

    criterion(8, "optimal prior precision estimates", [](Check& c) {
        const TinyMlpFixture& fx = tiny_mlp();
        const KernelProjector proj = fx.projector(4, 200, BlockMode::OutputJacobian);
        const DenseProjector oracle = dense_kernel_projector(
            fx.net, fx.theta, fx.data, BlockMode::OutputJacobian, LossKind::Mse);
        const AlphaEstimate est = optimal_alpha(
            fx.theta, [&](const Vec& v) { return proj.project(v); }, 256, 8,
            AlphaConvention::RankOverNorm);
        const double exact_rank = double(oracle.rank);
        const double est_rank = double(fx.net.param_count()) - est.trace_estimate;
        c.require(std::abs(est_rank - exact_rank) <= 0.05 * exact_rank,
                  "Hutchinson rank " + std::to_string(est_rank) + " vs exact " +
                      std::to_string(exact_rank));

        // 1x2 linear fixture, theta = (3, 4)
        Network lin(ArchitectureSpec::mlp(2, {}, 1, ActivationKind::Tanh, false));
        Vec theta(2);
        theta << 3, 4;
        Dataset datum;
        datum.kind = DatasetKind::Regression;
        datum.inputs = Mat(1, 2);
        datum.inputs << 1, 0;
        datum.targets = Mat::Zero(1, 1);
        ProjectorOptions opt;
        opt.t_max = 4;
        const KernelProjector lproj = KernelProjector::for_network(
            lin, theta, datum, BlockMode::OutputJacobian, LossKind::Mse, partition(1, 1, 0), opt);
        const AlphaEstimate lest = optimal_alpha(
            theta, [&](const Vec& v) { return lproj.project(v); }, 16, 9,
            AlphaConvention::RankOverNorm);
        c.require(std::abs(lest.alpha_rank_over_norm - 0.04) <= 1e-12,
                  "rank-over-norm alpha = " + std::to_string(lest.alpha_rank_over_norm));
        c.require(std::abs(lest.alpha_paper_printed - 25.0) <= 1e-9,
                  "paper-printed alpha = " + std::to_string(lest.alpha_paper_printed));
    });

    criterion(9, "loss-gradient kernel contains the output-Jacobian kernel", [](Check& c) {
        const TinyMlpFixture& fx = tiny_mlp();
        const double residual =
            kernel_containment_check(fx.net, fx.theta, fx.data, LossKind::Mse, 50, 10);
        c.require(residual <= 1e-8, "containment residual " + std::to_string(residual));

        // O = 1 MSE: mutual containment
        Network net(ArchitectureSpec::mlp(2, {10}, 1));
        const Vec theta = net.init_params(5);
        const Dataset d = random_regression(12, 2, 1, 6);
        const Mat jac_rows =
            materialize_rows(net, theta, d, BlockMode::OutputJacobian, LossKind::Mse);
        const Mat loss_rows =
            materialize_rows(net, theta, d, BlockMode::LossGradient, LossKind::Mse);
        const DenseProjector jk = dense_projector_from_rows(jac_rows);
        const DenseProjector lk = dense_projector_from_rows(loss_rows);
        c.require(jk.kernel_dim() == lk.kernel_dim(), "kernel dimensions differ for O=1");
        const double fwd = (loss_rows * jk.kernel_basis).cwiseAbs().maxCoeff();
        const double bwd = (jac_rows * lk.kernel_basis).cwiseAbs().maxCoeff();
        c.require(fwd <= 1e-8 * (1.0 + loss_rows.cwiseAbs().maxCoeff()), "forward containment");
        c.require(bwd <= 1e-8 * (1.0 + jac_rows.cwiseAbs().maxCoeff()), "backward containment");
    });

    criterion(10, "second-order loss preservation along loss-kernel directions", [](Check& c) {
        const TinyMlpFixture& fx = tiny_mlp();
        ProjectorOptions opt;
        opt.t_max = 600;
        const KernelProjector loss_proj = KernelProjector::for_network(
            fx.net, fx.theta, fx.data, BlockMode::LossGradient, LossKind::Mse,
            partition(fx.data.size(), 4, 7), opt);
        const std::vector<double> scales = {1e-1, 1e-2, 1e-3, 1e-4};
        const SlopeReport kernel_dir = loss_preservation_check(fx.net, fx.theta, loss_proj,
                                                               fx.data, LossKind::Mse, scales, 7);
        c.require(kernel_dir.slope >= 1.9 && kernel_dir.slope <= 2.1,
                  "kernel slope " + std::to_string(kernel_dir.slope));
        const SlopeReport control = loss_preservation_check(
            fx.net, fx.theta, loss_proj, fx.data, LossKind::Mse, scales, 7, true);
        c.require(control.slope >= 0.9 && control.slope <= 1.1,
                  "control slope " + std::to_string(control.slope));
    });

    criterion(11, "linear-in-P sweep cost and S x S loss Grams", [](Check& c) {
        // Doubling the hidden widths of a two-layer net roughly quadruples P.
        const int n = 64, s = 8;
        const Dataset data = random_regression(n, 2, 2, 61);
        auto sweep_seconds = [&](int hidden) {
            Network net(ArchitectureSpec::mlp(2, {hidden, hidden}, 2));
            const Vec theta = net.init_params(62);
            ProjectorOptions opt;
            opt.t_max = 1;
            const KernelProjector proj =
                KernelProjector::for_network(net, theta, data, BlockMode::OutputJacobian,
                                             LossKind::Mse, partition(n, s, 63), opt);
            Rng rng(64);
            Vec v = random_vec(net.param_count(), rng);
            v = proj.sweep(v);  // warm up
            double best = 1e300;
            for (int rep = 0; rep < 3; ++rep) {
                const auto t0 = std::chrono::steady_clock::now();
                for (int sweep = 0; sweep < 30; ++sweep) v = proj.sweep(v);
                best = std::min(best, std::chrono::duration<double>(
                                          std::chrono::steady_clock::now() - t0)
                                          .count());
            }
            return best;
        };
        const double small = sweep_seconds(32);   // P = 1218
        const double large = sweep_seconds(64);   // P = 4482 (~3.7x)
        c.require(large <= 6.0 * small, "sweep time ratio " + std::to_string(large / small));

        const TinyMlpFixture& fx = tiny_mlp();
        const KernelProjector loss_proj = fx.projector(4, 1, BlockMode::LossGradient);
        for (size_t b = 0; b < loss_proj.block_count(); ++b)
            c.require(loss_proj.factor(b).gram.rows() == 4 &&
                          loss_proj.factor(b).gram.cols() == 4,
                      "loss Gram is not S x S");
        const KernelProjector jac_proj = fx.projector(4, 1, BlockMode::OutputJacobian);
        for (size_t b = 0; b < jac_proj.block_count(); ++b)
            c.require(jac_proj.factor(b).gram.rows() == 8, "output Gram is not S*O x S*O");
    });

    criterion(12, "projected posterior matches MAP accuracy in distribution", [](Check& c) {
        // two-moons
        {
            const MoonsFixture& fx = moons();
            const KernelProjector proj = fx.projector(1000);
            const AlphaEstimate est = optimal_alpha(
                fx.theta, [&](const Vec& v) { return proj.project(v); }, 16, 71,
                AlphaConvention::RankOverNorm);
            const SampleSet samples =
                sample_projected(fx.theta, proj, est.alpha_star, 30, 72, 2);

            const PredictiveBatch train_pred =
                predictive_batch(fx.net, fx.theta, samples, fx.train.inputs, true);
            const double acc_train = accuracy_of(fx.net, fx.theta, fx.train, train_pred.mean_probs);
            c.require(acc_train == map_accuracy(fx.net, fx.theta, fx.train),
                      "two-moons train accuracy differs from MAP");

            const PredictiveBatch test_pred =
                predictive_batch(fx.net, fx.theta, samples, fx.test.inputs, true);
            const double acc_test = accuracy_of(fx.net, fx.theta, fx.test, test_pred.mean_probs);
            const double map_test = map_accuracy(fx.net, fx.theta, fx.test);
            c.require(std::abs(acc_test - map_test) <= 0.005 + 1e-12,
                      "two-moons test accuracy gap " + std::to_string(acc_test - map_test));

            const SampleSet delta = sample_map_delta(fx.theta, 30);
            const PredictiveBatch delta_pred =
                predictive_batch(fx.net, fx.theta, delta, fx.test.inputs, true);
            const double acc_delta = accuracy_of(fx.net, fx.theta, fx.test, delta_pred.mean_probs);
            c.require(acc_delta == map_test, "map-delta accuracy differs from MAP");
        }
        // 1000-image synthetic digits loaded from IDX files
        {
            const DigitsFixture& fx = digits();
            const double map_train = map_accuracy(fx.net, fx.theta, fx.train);
            c.require(map_train >= 0.95, "digits MAP underfit: " + std::to_string(map_train));

            ProjectorOptions opt;
            opt.t_max = 60;
            opt.cache_rows = true;
            const KernelProjector proj = KernelProjector::for_network(
                fx.net, fx.theta, fx.train, BlockMode::OutputJacobian,
                LossKind::CrossEntropySoftmax, partition(fx.train.size(), 16, 73), opt);
            const AlphaEstimate est = optimal_alpha(
                fx.theta, [&](const Vec& v) { return proj.project(v); }, 4, 74,
                AlphaConvention::RankOverNorm);
            const SampleSet samples =
                sample_projected(fx.theta, proj, est.alpha_star, 10, 75, 2);

            const PredictiveBatch train_pred =
                predictive_batch(fx.net, fx.theta, samples, fx.train.inputs, true);
            c.require(accuracy_of(fx.net, fx.theta, fx.train, train_pred.mean_probs) == map_train,
                      "digits train accuracy differs from MAP");

            const PredictiveBatch test_pred =
                predictive_batch(fx.net, fx.theta, samples, fx.test.inputs, true);
            const double acc_test = accuracy_of(fx.net, fx.theta, fx.test, test_pred.mean_probs);
            const double map_test = map_accuracy(fx.net, fx.theta, fx.test);
            c.require(std::abs(acc_test - map_test) <= 0.005 + 1e-12,
                      "digits test accuracy gap " + std::to_string(acc_test - map_test));
        }
    });

    criterion(13, "OOD AUROC pattern", [](Check& c) {
        const MoonsFixture& fx = moons();
        const KernelProjector proj = fx.projector(1000);
        const SampleSet samples = sample_projected(fx.theta, proj, 1.0, 30, 81, 2);

        Vec center(2);
        center << 10.0, 10.0;
        const Dataset blob = gen_ood_blob(256, center, 0.5, 82);

        auto scores_for = [&](const Dataset& data) {
            const PredictiveBatch pred =
                predictive_batch(fx.net, fx.theta, samples, data.inputs, true);
            std::vector<double> scores;
            for (std::ptrdiff_t i = 0; i < data.size(); ++i)
                scores.push_back(pred.var_output.row(i).maxCoeff());
            return scores;
        };
        const std::vector<double> in_scores = scores_for(fx.test);
        const std::vector<double> out_scores = scores_for(blob);
        const double auc = auroc(in_scores, out_scores);
        c.require(auc >= 0.9, "far-blob AUROC " + std::to_string(auc));

        const double self_auc = auroc(in_scores, in_scores);
        c.require(std::abs(self_auc - 0.5) <= 0.02,
                  "identical-distribution AUROC " + std::to_string(self_auc));
    });

    criterion(14, "in-between uncertainty shows up in the plot band", [](Check& c) {
        const ToyFixture& fx = toy();
        const KernelProjector proj = fx.projector(1000);
        const SampleSet samples = sample_projected(fx.theta, proj, 1.0, 30, 91, 2);

        PlotConfig plot_cfg;
        const PlotData data = compute_plot_data(fx.net, fx.theta, samples, fx.train, plot_cfg);
        // band width at the gap midpoint vs at each training input
        size_t mid = 0;
        for (size_t i = 0; i < data.grid_x.size(); ++i)
            if (std::abs(data.grid_x[i]) < std::abs(data.grid_x[mid])) mid = i;
        const double gap_sd = data.sd[mid];
        for (std::ptrdiff_t n = 0; n < fx.train.size(); ++n) {
            const PredictiveStats stats = predictive_linearized(
                fx.net, fx.theta, samples, Vec(fx.train.inputs.row(n).transpose()));
            c.require(gap_sd > std::sqrt(stats.trace_variance),
                      "gap band not wider than a training band");
        }

        const std::string svg = render_regression_band_svg(data);
        c.require(xml_well_formed(svg), "svg is not well-formed XML");
        c.require(svg.find("id=\"band\"") != std::string::npos, "svg lacks the band path");

        // contrast check: diagonal Laplace has a visible band on training points
        const DiagPosterior diag = diag_laplace(fx.net, fx.theta, fx.train, 1.0);
        const SampleSet diag_samples = diag.sample_set(30, 92);
        double min_train_sd = 1e300;
        for (std::ptrdiff_t n = 0; n < fx.train.size(); ++n) {
            const PredictiveStats stats = predictive_linearized(
                fx.net, fx.theta, diag_samples, Vec(fx.train.inputs.row(n).transpose()));
            min_train_sd = std::min(min_train_sd, std::sqrt(stats.trace_variance));
        }
        c.require(min_train_sd > 1e-6, "diagonal Laplace band collapsed on training points");
    });

    criterion(15, "end-to-end determinism of all artifacts", [](Check& c) {
        const Json config = {
            {"name", "determinism"},
            {"dataset",
             {{"generator", "toy_regression"}, {"n_per_cluster", 8}, {"noise_sd", 0.05},
              {"seed", 1}}},
            {"test_dataset",
             {{"generator", "toy_regression"}, {"n_per_cluster", 16}, {"noise_sd", 0.05},
              {"seed", 2}}},
            {"ood_dataset",
             {{"generator", "blob"}, {"n", 16}, {"center", {6.0}}, {"sd", 0.3}, {"seed", 3}}},
            {"arch",
             {{"input_dim", 1}, {"hidden", {10, 10}}, {"output_dim", 1}, {"activation", "tanh"},
              {"bias", true}}},
            {"train",
             {{"optimizer", "adam"}, {"learning_rate", 1e-2}, {"epochs", 150}, {"batch_size", 8},
              {"seed", 4}, {"init_seed", 5}}},
            {"projector", {{"batch_size", 4}, {"t_max", 200}}},
            {"posterior",
             {{"kind", "projected"}, {"alpha", "auto"}, {"k", 8}, {"seed", 6}, {"probes", 16}}},
        };
        const std::string config_path = g_scratch.path("det_config.json");
        write_json_file(config_path, config);

        const RunOptions opt;  // single-threaded
        std::vector<std::string> artifacts;
        for (const char* run : {"det_run_a", "det_run_b"}) {
            const std::string out = g_scratch.path(run);
            c.require(run_train(config_path, out, opt) == 0, "train failed");
            const std::string ckpt = out + "/checkpoint.bin";
            c.require(run_sample(config_path, ckpt, out, opt) == 0, "sample failed");
            const std::string samples = out + "/samples.bin";
            c.require(run_eval(config_path, ckpt, samples, "train", out, opt) == 0, "eval failed");
            c.require(run_ood(config_path, ckpt, samples, out, opt) == 0, "ood failed");
            c.require(run_diagnose(config_path, ckpt, out, opt) == 0, "diagnose failed");
            c.require(run_plot(config_path, ckpt, samples, out, opt) == 0, "plot failed");
        }
        for (const char* name : {"checkpoint.bin", "train_log.json", "samples.bin",
                                 "alpha_report.json", "metrics.json", "ood.json",
                                 "diagnose.json", "plot.svg"}) {
            const std::string a = slurp(g_scratch.path(std::string("det_run_a/") + name));
            const std::string b = slurp(g_scratch.path(std::string("det_run_b/") + name));
            c.require(!a.empty() && a == b, std::string(name) + " differs between runs");
        }
    });

    if (g_failures == 0) {
        std::printf("all acceptance criteria passed\n");
    } else {
        std::printf("%d acceptance criteria FAILED\n", g_failures);
    }
    return g_failures;
}
