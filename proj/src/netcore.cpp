#include "netcore.hpp"

#include <cmath>
#include <sstream>

namespace projpost {

namespace {

using RowMajorMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using WeightMap = Eigen::Map<const RowMajorMat>;
using BiasMap = Eigen::Map<const Vec>;

WeightMap weight_of(const Vec& theta, const LayerShape& l) {
    return WeightMap(theta.data() + l.weight_offset, l.out, l.in);
}

void apply_activation(ActivationKind act, Mat& z) {
    switch (act) {
        case ActivationKind::Tanh:
            z = z.array().tanh();
            break;
        case ActivationKind::Relu:
            z = z.array().max(0.0);
            break;
        case ActivationKind::Identity:
            break;
    }
}

// Derivative evaluated at the preactivation. relu' at exactly 0 is 0.
Mat activation_deriv(ActivationKind act, const Mat& preact) {
    switch (act) {
        case ActivationKind::Tanh:
            return 1.0 - preact.array().tanh().square();
        case ActivationKind::Relu:
            return (preact.array() > 0.0).cast<double>();
        case ActivationKind::Identity:
            return Mat::Ones(preact.rows(), preact.cols());
    }
    return Mat();
}

}  // namespace

ActivationKind activation_from_string(const std::string& s) {
    if (s == "tanh") return ActivationKind::Tanh;
    if (s == "relu") return ActivationKind::Relu;
    if (s == "identity") return ActivationKind::Identity;
    throw ConfigError("unknown activation '" + s + "' (expected tanh|relu|identity)");
}

const char* to_string(ActivationKind a) {
    switch (a) {
        case ActivationKind::Tanh: return "tanh";
        case ActivationKind::Relu: return "relu";
        case ActivationKind::Identity: return "identity";
    }
    return "?";
}

void ArchitectureSpec::validate() const {
    if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
    if (output_dim < 1) throw ConfigError("output_dim must be >= 1");
    for (int w : hidden_widths)
        if (w < 1) throw ConfigError("hidden widths must be >= 1");
    if (activations.size() != hidden_widths.size())
        throw ConfigError("need exactly one activation per hidden layer");
    if (bias.size() != size_t(layer_count()))
        throw ConfigError("need exactly one bias flag per layer");
}

ArchitectureSpec ArchitectureSpec::mlp(int input_dim, std::vector<int> hidden, int output_dim,
                                       ActivationKind activation, bool with_bias) {
    ArchitectureSpec spec;
    spec.input_dim = input_dim;
    spec.hidden_widths = std::move(hidden);
    spec.output_dim = output_dim;
    spec.activations.assign(spec.hidden_widths.size(), activation);
    spec.bias.assign(size_t(spec.layer_count()), with_bias);
    return spec;
}

Network::Network(ArchitectureSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    const int layer_count = spec_.layer_count();
    layers_.resize(size_t(layer_count));
    std::ptrdiff_t offset = 0;
    int in = spec_.input_dim;
    for (int l = 0; l < layer_count; ++l) {
        const int out = (l < layer_count - 1) ? spec_.hidden_widths[size_t(l)] : spec_.output_dim;
        LayerShape& shape = layers_[size_t(l)];
        shape.in = in;
        shape.out = out;
        shape.weight_offset = offset;
        offset += std::ptrdiff_t(in) * out;
        if (spec_.bias[size_t(l)]) {
            shape.bias_offset = offset;
            offset += out;
        }
        in = out;
    }
    param_count_ = offset;
}

Vec Network::init_params(std::uint64_t seed) const {
    Rng rng(seed);
    Vec theta(param_count_);
    for (const LayerShape& l : layers_) {
        const double scale = 1.0 / std::sqrt(double(l.in));
        for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(l.in) * l.out; ++i)
            theta[l.weight_offset + i] = rng.uniform(-scale, scale);
        if (l.bias_offset >= 0)
            for (int i = 0; i < l.out; ++i) theta[l.bias_offset + i] = rng.uniform(-scale, scale);
    }
    return theta;
}

void Network::check_params(const Vec& theta) const {
    if (theta.size() != param_count_) {
        std::ostringstream os;
        os << "parameter vector has length " << theta.size() << ", expected " << param_count_;
        throw ShapeError(os.str());
    }
}

void Network::check_input(const Vec& x) const {
    if (x.size() != spec_.input_dim) {
        std::ostringstream os;
        os << "input has length " << x.size() << ", expected " << spec_.input_dim;
        throw ShapeError(os.str());
    }
}

Mat Network::forward_batch(const Vec& theta, const Mat& inputs) const {
    check_params(theta);
    if (inputs.cols() != spec_.input_dim) throw ShapeError("batch input dimension mismatch");
    Mat z = inputs;
    const int last = spec_.layer_count() - 1;
    for (int l = 0; l <= last; ++l) {
        const LayerShape& shape = layers_[size_t(l)];
        Mat a = z * weight_of(theta, shape).transpose();
        if (shape.bias_offset >= 0)
            a.rowwise() += BiasMap(theta.data() + shape.bias_offset, shape.out).transpose();
        if (l < last) apply_activation(spec_.activations[size_t(l)], a);
        z = std::move(a);
    }
    return z;
}

Vec Network::forward(const Vec& theta, const Vec& x) const {
    check_input(x);
    return forward_batch(theta, x.transpose()).row(0);
}

Mat Network::jvp_batch(const Vec& theta, const Mat& inputs, const Vec& tangent) const {
    check_params(theta);
    check_params(tangent);
    if (inputs.cols() != spec_.input_dim) throw ShapeError("batch input dimension mismatch");
    Mat z = inputs;
    Mat dz = Mat::Zero(inputs.rows(), inputs.cols());
    const int last = spec_.layer_count() - 1;
    for (int l = 0; l <= last; ++l) {
        const LayerShape& shape = layers_[size_t(l)];
        const auto w = weight_of(theta, shape);
        const auto dw = weight_of(tangent, shape);
        Mat a = z * w.transpose();
        Mat da = z * dw.transpose() + dz * w.transpose();
        if (shape.bias_offset >= 0) {
            a.rowwise() += BiasMap(theta.data() + shape.bias_offset, shape.out).transpose();
            da.rowwise() += BiasMap(tangent.data() + shape.bias_offset, shape.out).transpose();
        }
        if (l < last) {
            const ActivationKind act = spec_.activations[size_t(l)];
            da.array() *= activation_deriv(act, a).array();
            apply_activation(act, a);
        }
        z = std::move(a);
        dz = std::move(da);
    }
    return dz;
}

Vec Network::jvp(const Vec& theta, const Vec& x, const Vec& tangent) const {
    check_input(x);
    return jvp_batch(theta, x.transpose(), tangent).row(0);
}

Vec Network::vjp_batch_sum(const Vec& theta, const Mat& inputs, const Mat& cotangents) const {
    check_params(theta);
    if (inputs.cols() != spec_.input_dim) throw ShapeError("batch input dimension mismatch");
    if (cotangents.rows() != inputs.rows() || cotangents.cols() != spec_.output_dim)
        throw ShapeError("cotangent batch shape mismatch");

    const int last = spec_.layer_count() - 1;
    // Forward pass, keeping each layer's input and hidden preactivations.
    std::vector<Mat> layer_inputs(size_t(last) + 1);
    std::vector<Mat> preacts(static_cast<size_t>(last));  // hidden layers only
    Mat z = inputs;
    for (int l = 0; l <= last; ++l) {
        const LayerShape& shape = layers_[size_t(l)];
        layer_inputs[size_t(l)] = z;
        Mat a = z * weight_of(theta, shape).transpose();
        if (shape.bias_offset >= 0)
            a.rowwise() += BiasMap(theta.data() + shape.bias_offset, shape.out).transpose();
        if (l < last) {
            preacts[size_t(l)] = a;
            apply_activation(spec_.activations[size_t(l)], a);
        }
        z = std::move(a);
    }

    Vec grad = Vec::Zero(param_count_);
    Mat g = cotangents;
    for (int l = last; l >= 0; --l) {
        const LayerShape& shape = layers_[size_t(l)];
        using RowMajorMap = Eigen::Map<RowMajorMat>;
        RowMajorMap(grad.data() + shape.weight_offset, shape.out, shape.in).noalias() +=
            g.transpose() * layer_inputs[size_t(l)];
        if (shape.bias_offset >= 0)
            Eigen::Map<Vec>(grad.data() + shape.bias_offset, shape.out) += g.colwise().sum().transpose();
        if (l > 0) {
            Mat gp = g * weight_of(theta, shape);
            gp.array() *= activation_deriv(spec_.activations[size_t(l - 1)], preacts[size_t(l - 1)]).array();
            g = std::move(gp);
        }
    }
    return grad;
}

Vec Network::vjp(const Vec& theta, const Vec& x, const Vec& cotangent) const {
    check_input(x);
    if (cotangent.size() != spec_.output_dim) throw ShapeError("cotangent dimension mismatch");
    return vjp_batch_sum(theta, x.transpose(), cotangent.transpose());
}

Mat Network::dense_jacobian(const Vec& theta, const Vec& x, std::ptrdiff_t entry_budget) const {
    check_params(theta);
    check_input(x);
    const std::ptrdiff_t entries = std::ptrdiff_t(spec_.output_dim) * param_count_;
    if (entries > entry_budget) {
        std::ostringstream os;
        os << "dense Jacobian needs " << entries << " entries, budget is " << entry_budget;
        throw BudgetError(os.str());
    }
    Mat jac(spec_.output_dim, param_count_);
    Vec basis = Vec::Zero(spec_.output_dim);
    for (int o = 0; o < spec_.output_dim; ++o) {
        basis[o] = 1.0;
        jac.row(o) = vjp(theta, x, basis);
        basis[o] = 0.0;
    }
    return jac;
}

Vec Network::linearized_predict(const Vec& theta_map, const Vec& theta, const Vec& x) const {
    check_params(theta_map);
    check_params(theta);
    return forward(theta_map, x) + jvp(theta_map, x, theta - theta_map);
}

double mse_loss(const Vec& y, const Vec& target) {
    if (y.size() != target.size()) throw ShapeError("mse target dimension mismatch");
    return 0.5 * (y - target).squaredNorm();
}

Vec softmax(const Vec& logits) {
    const double m = logits.maxCoeff();
    Vec e = (logits.array() - m).exp();
    return e / e.sum();
}

double cross_entropy_loss(const Vec& logits, int label) {
    if (label < 0 || label >= logits.size()) throw ConfigError("class index out of range");
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    return lse - logits[label];
}

Vec mse_output_grad(const Vec& y, const Vec& target) {
    if (y.size() != target.size()) throw ShapeError("mse target dimension mismatch");
    return y - target;
}

Vec cross_entropy_output_grad(const Vec& logits, int label) {
    if (label < 0 || label >= logits.size()) throw ConfigError("class index out of range");
    Vec g = softmax(logits);
    g[label] -= 1.0;
    return g;
}

Vec loss_grad_params(const Network& net, const Vec& theta, const Vec& x, const Vec& target) {
    return net.vjp(theta, x, mse_output_grad(net.forward(theta, x), target));
}

Vec loss_grad_params(const Network& net, const Vec& theta, const Vec& x, int label) {
    return net.vjp(theta, x, cross_entropy_output_grad(net.forward(theta, x), label));
}

}  // namespace projpost
