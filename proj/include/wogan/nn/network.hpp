#pragma once

#include "wogan/nn/autodiff.hpp"
#include "wogan/rng.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace wogan::nn {

enum class LayerKind { Dense, Conv1d, MaxPool, BatchNorm, Activation, Flatten };
enum class Activation { LeakyRelu, Sigmoid, Tanh, None };

struct Layer {
    LayerKind kind = LayerKind::Flatten;
    std::size_t width = 0;    // dense output width, conv feature maps
    std::size_t kernel = 0;   // conv kernel, pool window
    std::size_t stride = 1;
    std::size_t padding = 0;
    Activation activation = Activation::None;
    double slope = 0.01;
};

Layer dense(std::size_t width);
Layer conv1d(std::size_t feature_maps, std::size_t kernel, std::size_t stride, std::size_t padding);
Layer maxpool(std::size_t window, std::size_t stride);
Layer batchnorm();
Layer activation(Activation a, double slope = 0.01);
Layer flatten();

/// Input shape is per sample: {D} for vectors, {channels, length} for signals.
struct NetworkSpec {
    Shape input_shape;
    std::vector<Layer> layers;

    /// Per-sample shape after each layer (front = input). Throws ShapeError
    /// when consecutive layers do not fit.
    std::vector<Shape> shapes() const;
    Shape output_shape() const { return shapes().back(); }
    bool has_batchnorm() const;
};

struct Parameter {
    std::string name;
    Var value;  // leaf
    Tensor m;   // Adam first moment
    Tensor v;   // Adam second moment
};

struct ParamSet {
    std::vector<Parameter> params;
    std::uint64_t step = 0;

    std::vector<Var> vars() const;
    Parameter& at(const std::string& name);
    const Parameter& at(const std::string& name) const;
    /// Replaces a parameter value (shape must match); resets nothing else.
    void set(const std::string& name, Tensor value);
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update. grads[i] belongs to params.params[i].
void adam_step(ParamSet& params, const std::vector<Tensor>& grads, const AdamConfig& config);
void adam_step(ParamSet& params, const std::vector<Var>& grads, const AdamConfig& config);

enum class Mode { Train, Eval };

inline constexpr double kBatchNormEps = 1e-8;
inline constexpr double kBatchNormMomentum = 0.1;

class Network {
public:
    Network() = default;
    Network(NetworkSpec spec, Rng& rng);

    const NetworkSpec& spec() const noexcept { return spec_; }
    ParamSet& params() noexcept { return params_; }
    const ParamSet& params() const noexcept { return params_; }
    std::size_t input_size() const { return shape_size(spec_.input_shape); }
    std::size_t output_size() const { return shape_size(spec_.output_shape()); }

    /// x has shape [N, input_size] (or [N, input_shape...]). Returns
    /// [N, output_size]. Train mode updates batchnorm running statistics.
    Var forward(const Var& x, Mode mode);
    /// Eval-mode forward without recording gradients.
    Tensor predict(const Tensor& x) const;

    const Tensor& running_mean(std::size_t layer) const { return running_.at(layer).mean; }
    const Tensor& running_var(std::size_t layer) const { return running_.at(layer).var; }

    nlohmann::json to_json() const;
    static Network from_json(const nlohmann::json& j);

private:
    struct Running {
        Tensor mean;
        Tensor var;
    };

    Var run(const Var& x, Mode mode, bool update_stats);

    NetworkSpec spec_;
    std::vector<Shape> shapes_;
    ParamSet params_;
    std::vector<Running> running_;  // one slot per layer; only batchnorm slots are filled
};

/// Per-sample ‖∇_x f(x)‖₂ as an [N,1] variable that stays on the tape, so it
/// can itself be differentiated with respect to the critic parameters.
Var input_gradient_norm(Network& critic, const Tensor& x);

inline constexpr const char* kCheckpointFormat = "wogan-nn/1";

nlohmann::json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const nlohmann::json& j);

}  // namespace wogan::nn
