#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"

namespace projpost {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class ActivationKind { Tanh, Relu, Identity };
enum class LossKind { Mse, CrossEntropySoftmax };

ActivationKind activation_from_string(const std::string& s);
const char* to_string(ActivationKind a);

// Feedforward architecture: affine layers with an elementwise activation
// after each hidden layer. The output layer is always affine.
struct ArchitectureSpec {
    int input_dim = 0;
    std::vector<int> hidden_widths;
    int output_dim = 0;
    std::vector<ActivationKind> activations;  // one per hidden layer
    std::vector<bool> bias;                   // one per affine layer

    int layer_count() const { return int(hidden_widths.size()) + 1; }
    void validate() const;

    static ArchitectureSpec mlp(int input_dim, std::vector<int> hidden, int output_dim,
                                ActivationKind activation = ActivationKind::Tanh,
                                bool with_bias = true);
};

struct LayerShape {
    int in = 0;
    int out = 0;
    std::ptrdiff_t weight_offset = 0;  // row-major out x in block in the flat vector
    std::ptrdiff_t bias_offset = -1;   // -1 when the layer has no bias
};

// Immutable network: owns the architecture and the parameter layout.
// Parameters themselves travel as flat Eigen vectors of length param_count().
// All evaluation methods are pure and safe to call concurrently.
class Network {
public:
    explicit Network(ArchitectureSpec spec);

    const ArchitectureSpec& spec() const { return spec_; }
    const std::vector<LayerShape>& layers() const { return layers_; }
    std::ptrdiff_t param_count() const { return param_count_; }
    int input_dim() const { return spec_.input_dim; }
    int output_dim() const { return spec_.output_dim; }

    // Scaled-uniform init, scale 1/sqrt(fan_in) per layer. Same seed gives a
    // bitwise identical vector.
    Vec init_params(std::uint64_t seed) const;

    void check_params(const Vec& theta) const;
    void check_input(const Vec& x) const;

    Vec forward(const Vec& theta, const Vec& x) const;
    // Batched evaluation; inputs and outputs are row-per-datum.
    Mat forward_batch(const Vec& theta, const Mat& inputs) const;

    // Jacobian-vector product J(x) * tangent, tangent in parameter space.
    Vec jvp(const Vec& theta, const Vec& x, const Vec& tangent) const;
    Mat jvp_batch(const Vec& theta, const Mat& inputs, const Vec& tangent) const;

    // Vector-Jacobian product J(x)^T * cotangent, cotangent in output space.
    Vec vjp(const Vec& theta, const Vec& x, const Vec& cotangent) const;
    // Sum over the batch of per-datum vjps, with one cotangent row per datum.
    Vec vjp_batch_sum(const Vec& theta, const Mat& inputs, const Mat& cotangents) const;

    // O x P Jacobian, row o computed as vjp(e_o). Oracle-sized only.
    Mat dense_jacobian(const Vec& theta, const Vec& x,
                       std::ptrdiff_t entry_budget = kDefaultDenseBudget) const;

    // f(theta_map, x) + J_{theta_map}(x) (theta - theta_map)
    Vec linearized_predict(const Vec& theta_map, const Vec& theta, const Vec& x) const;

    static constexpr std::ptrdiff_t kDefaultDenseBudget = 10'000'000;

private:
    ArchitectureSpec spec_;
    std::vector<LayerShape> layers_;
    std::ptrdiff_t param_count_ = 0;
};

// Losses. MSE is 0.5 * ||y - t||^2 (Gaussian likelihood, unit noise);
// cross-entropy is -log softmax(y)[label].
double mse_loss(const Vec& y, const Vec& target);
double cross_entropy_loss(const Vec& logits, int label);
Vec softmax(const Vec& logits);

Vec mse_output_grad(const Vec& y, const Vec& target);                  // y - t
Vec cross_entropy_output_grad(const Vec& logits, int label);           // softmax - onehot

// Per-datum loss gradient in parameter space: vjp with the output-space
// loss gradient, i.e. one row of the stacked loss Jacobian.
Vec loss_grad_params(const Network& net, const Vec& theta, const Vec& x, const Vec& target);
Vec loss_grad_params(const Network& net, const Vec& theta, const Vec& x, int label);

}  // namespace projpost
