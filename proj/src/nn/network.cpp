#include "wogan/nn/network.hpp"

#include "wogan/error.hpp"

#include <cmath>

namespace wogan::nn {

using nlohmann::json;

Layer dense(std::size_t width) {
    Layer l;
    l.kind = LayerKind::Dense;
    l.width = width;
    return l;
}

Layer conv1d(std::size_t feature_maps, std::size_t kernel, std::size_t stride, std::size_t padding) {
    Layer l;
    l.kind = LayerKind::Conv1d;
    l.width = feature_maps;
    l.kernel = kernel;
    l.stride = stride;
    l.padding = padding;
    return l;
}

Layer maxpool(std::size_t window, std::size_t stride) {
    Layer l;
    l.kind = LayerKind::MaxPool;
    l.kernel = window;
    l.stride = stride;
    return l;
}

Layer batchnorm() {
    Layer l;
    l.kind = LayerKind::BatchNorm;
    return l;
}

Layer activation(Activation a, double slope) {
    Layer l;
    l.kind = LayerKind::Activation;
    l.activation = a;
    l.slope = slope;
    return l;
}

Layer flatten() { return Layer{}; }

std::vector<Shape> NetworkSpec::shapes() const {
    if (input_shape.empty() || input_shape.size() > 2 || shape_size(input_shape) == 0) {
        throw ShapeError("network input shape must be {D} or {C, L}, got " + shape_string(input_shape));
    }
    std::vector<Shape> out{input_shape};
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const Layer& l = layers[i];
        const Shape& s = out.back();
        const std::string where = "layer " + std::to_string(i) + ": ";
        switch (l.kind) {
            case LayerKind::Dense:
            case LayerKind::BatchNorm:
                if (s.size() != 1) throw ShapeError(where + "needs a flat input, got " + shape_string(s));
                if (l.kind == LayerKind::Dense) {
                    if (l.width == 0) throw ShapeError(where + "dense width must be positive");
                    out.push_back({l.width});
                } else {
                    out.push_back(s);
                }
                break;
            case LayerKind::Conv1d: {
                if (s.size() != 2) throw ShapeError(where + "conv1d needs a {C, L} input, got " + shape_string(s));
                if (l.width == 0 || l.kernel == 0 || l.stride == 0) throw ShapeError(where + "bad conv1d parameters");
                const std::size_t padded = s[1] + 2 * l.padding;
                if (padded < l.kernel) throw ShapeError(where + "input shorter than kernel");
                out.push_back({l.width, (padded - l.kernel) / l.stride + 1});
                break;
            }
            case LayerKind::MaxPool:
                if (s.size() != 2) throw ShapeError(where + "maxpool needs a {C, L} input, got " + shape_string(s));
                if (l.kernel == 0 || l.stride == 0) throw ShapeError(where + "bad maxpool parameters");
                if (s[1] < l.kernel) throw ShapeError(where + "input shorter than pooling window");
                out.push_back({s[0], (s[1] - l.kernel) / l.stride + 1});
                break;
            case LayerKind::Activation:
                if (l.activation == Activation::LeakyRelu && !(l.slope > 0.0)) {
                    throw ShapeError(where + "leaky ReLU slope must be positive");
                }
                out.push_back(s);
                break;
            case LayerKind::Flatten:
                out.push_back({shape_size(s)});
                break;
        }
    }
    return out;
}

bool NetworkSpec::has_batchnorm() const {
    for (const auto& l : layers) {
        if (l.kind == LayerKind::BatchNorm) return true;
    }
    return false;
}

// ------------------------------------------------------------ ParamSet / Adam

std::vector<Var> ParamSet::vars() const {
    std::vector<Var> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p.value);
    return out;
}

Parameter& ParamSet::at(const std::string& name) {
    for (auto& p : params) {
        if (p.name == name) return p;
    }
    throw PreconditionError("no parameter named " + name);
}

const Parameter& ParamSet::at(const std::string& name) const {
    return const_cast<ParamSet*>(this)->at(name);
}

void ParamSet::set(const std::string& name, Tensor value) {
    Parameter& p = at(name);
    if (value.shape() != p.value.shape()) {
        throw ShapeError("parameter " + name + " expects " + shape_string(p.value.shape()) + ", got " +
                         shape_string(value.shape()));
    }
    p.value = Var::leaf(std::move(value));
}

void adam_step(ParamSet& params, const std::vector<Tensor>& grads, const AdamConfig& config) {
    if (grads.size() != params.params.size()) throw ShapeError("adam_step: one gradient per parameter expected");
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (grads[i].shape() != params.params[i].value.shape()) {
            throw ShapeError("adam_step: gradient shape mismatch for " + params.params[i].name);
        }
    }
    params.step += 1;
    const double t = static_cast<double>(params.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t i = 0; i < grads.size(); ++i) {
        Parameter& p = params.params[i];
        const Tensor& g = grads[i];
        Tensor next = p.value.value();
        for (std::size_t k = 0; k < g.size(); ++k) {
            p.m[k] = config.beta1 * p.m[k] + (1.0 - config.beta1) * g[k];
            p.v[k] = config.beta2 * p.v[k] + (1.0 - config.beta2) * g[k] * g[k];
            const double mhat = p.m[k] / c1;
            const double vhat = p.v[k] / c2;
            next[k] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
        }
        if (!next.all_finite()) throw NonFiniteError("adam_step produced a non-finite value in " + p.name);
        p.value = Var::leaf(std::move(next));
    }
}

void adam_step(ParamSet& params, const std::vector<Var>& grads, const AdamConfig& config) {
    std::vector<Tensor> values;
    values.reserve(grads.size());
    for (const auto& g : grads) values.push_back(g.value());
    adam_step(params, values, config);
}

// ------------------------------------------------------------ Network

namespace {

std::string param_name(std::size_t layer, const char* what) { return "L" + std::to_string(layer) + "." + what; }

void add_param(ParamSet& ps, std::string name, Tensor value) {
    Tensor zeros(value.shape());
    ps.params.push_back({std::move(name), Var::leaf(std::move(value)), zeros, zeros});
}

Tensor glorot(Rng& rng, Shape shape, std::size_t fan_in, std::size_t fan_out) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = uniform(rng, -a, a);
    return t;
}

using Index = std::vector<std::ptrdiff_t>;

Var apply_activation(const Var& x, const Layer& l) {
    switch (l.activation) {
        case Activation::LeakyRelu: return leaky_relu(x, l.slope);
        case Activation::Sigmoid: return sigmoid(x);
        case Activation::Tanh: return tanh(x);
        case Activation::None: return x;
    }
    return x;
}

// x: [N, C*L] channel-major per sample. Output [N, F*L'].
Var conv_forward(const Var& x, const Shape& in, const Shape& out, const Layer& l, const Var& w, const Var& b) {
    const std::size_t n = x.value().rows();
    const std::size_t c = in[0], len = in[1], f = out[0], len_out = out[1], k = l.kernel;
    auto cols = std::make_shared<Index>(n * len_out * c * k);
    std::size_t pos = 0;
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t j = 0; j < len_out; ++j) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t q = 0; q < k; ++q) {
                    const std::ptrdiff_t at = static_cast<std::ptrdiff_t>(j * l.stride + q) -
                                              static_cast<std::ptrdiff_t>(l.padding);
                    (*cols)[pos++] = (at < 0 || at >= static_cast<std::ptrdiff_t>(len))
                                         ? -1
                                         : static_cast<std::ptrdiff_t>(s * c * len + ch * len) + at;
                }
            }
        }
    }
    Var patches = gather(x, cols, {n * len_out, c * k});
    Var y = add_row(matmul(patches, w), b);  // [N*L', F]
    auto perm = std::make_shared<Index>(n * f * len_out);
    pos = 0;
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t ff = 0; ff < f; ++ff) {
            for (std::size_t j = 0; j < len_out; ++j) {
                (*perm)[pos++] = static_cast<std::ptrdiff_t>((s * len_out + j) * f + ff);
            }
        }
    }
    return gather(y, perm, {n, f * len_out});
}

Var pool_forward(const Var& x, const Shape& in, const Shape& out, const Layer& l) {
    const Tensor& v = x.value();
    const std::size_t n = v.rows();
    const std::size_t c = in[0], len = in[1], len_out = out[1];
    auto idx = std::make_shared<Index>(n * c * len_out);
    std::size_t pos = 0;
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = s * c * len + ch * len;
            for (std::size_t j = 0; j < len_out; ++j) {
                std::size_t best = base + j * l.stride;
                for (std::size_t q = 1; q < l.kernel; ++q) {
                    const std::size_t cand = base + j * l.stride + q;
                    if (v[cand] > v[best]) best = cand;  // ties keep the first
                }
                (*idx)[pos++] = static_cast<std::ptrdiff_t>(best);
            }
        }
    }
    return gather(x, idx, {n, c * len_out});
}

}  // namespace

Network::Network(NetworkSpec spec, Rng& rng) : spec_(std::move(spec)) {
    shapes_ = spec_.shapes();
    running_.resize(spec_.layers.size());
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const Layer& l = spec_.layers[i];
        const Shape& in = shapes_[i];
        const Shape& out = shapes_[i + 1];
        switch (l.kind) {
            case LayerKind::Dense:
                add_param(params_, param_name(i, "weight"), glorot(rng, {in[0], out[0]}, in[0], out[0]));
                add_param(params_, param_name(i, "bias"), Tensor({1, out[0]}));
                break;
            case LayerKind::Conv1d:
                add_param(params_, param_name(i, "weight"),
                          glorot(rng, {in[0] * l.kernel, l.width}, in[0] * l.kernel, l.width * l.kernel));
                add_param(params_, param_name(i, "bias"), Tensor({1, l.width}));
                break;
            case LayerKind::BatchNorm:
                add_param(params_, param_name(i, "gamma"), Tensor({1, in[0]}, 1.0));
                add_param(params_, param_name(i, "beta"), Tensor({1, in[0]}));
                running_[i] = {Tensor({1, in[0]}), Tensor({1, in[0]}, 1.0)};
                break;
            default:
                break;
        }
    }
}

Var Network::forward(const Var& x, Mode mode) { return run(x, mode, mode == Mode::Train); }

Tensor Network::predict(const Tensor& x) const {
    return const_cast<Network*>(this)->run(Var::constant(x), Mode::Eval, false).value();
}

Var Network::run(const Var& input, Mode mode, bool update_stats) {
    const std::size_t width = input_size();
    if (input.value().rows() == 0 || input.value().cols() != width) {
        throw ShapeError("network input must be [N, " + std::to_string(width) + "], got " + shape_string(input.shape()));
    }
    const std::size_t n = input.value().rows();
    Var x = reshape(input, {n, width});
    std::size_t p = 0;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const Layer& l = spec_.layers[i];
        switch (l.kind) {
            case LayerKind::Dense: {
                const Var& w = params_.params[p++].value;
                const Var& b = params_.params[p++].value;
                x = add_row(matmul(x, w), b);
                break;
            }
            case LayerKind::Conv1d: {
                const Var& w = params_.params[p++].value;
                const Var& b = params_.params[p++].value;
                x = conv_forward(x, shapes_[i], shapes_[i + 1], l, w, b);
                break;
            }
            case LayerKind::MaxPool:
                x = pool_forward(x, shapes_[i], shapes_[i + 1], l);
                break;
            case LayerKind::BatchNorm: {
                const Var& gamma = params_.params[p++].value;
                const Var& beta = params_.params[p++].value;
                Var normalized;
                if (mode == Mode::Train) {
                    if (n < 2) throw PreconditionError("batchnorm in train mode needs a batch of at least 2");
                    const double inv_n = 1.0 / static_cast<double>(n);
                    Var mu = scale(sum_rows(x), inv_n);
                    Var centered = sub(x, broadcast_rows(mu, n));
                    Var var = scale(sum_rows(mul(centered, centered)), inv_n);
                    Var inv_std = reciprocal(sqrt(add_scalar(var, kBatchNormEps)));
                    normalized = mul_row(centered, inv_std);
                    if (update_stats) {
                        Running& r = running_[i];
                        const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
                        for (std::size_t k = 0; k < r.mean.size(); ++k) {
                            r.mean[k] = (1.0 - kBatchNormMomentum) * r.mean[k] + kBatchNormMomentum * mu.value()[k];
                            r.var[k] = (1.0 - kBatchNormMomentum) * r.var[k] +
                                       kBatchNormMomentum * var.value()[k] * unbias;
                        }
                    }
                } else {
                    const Running& r = running_[i];
                    Tensor inv_std(r.var.shape());
                    Tensor neg_mean(r.mean.shape());
                    for (std::size_t k = 0; k < inv_std.size(); ++k) {
                        inv_std[k] = 1.0 / std::sqrt(r.var[k] + kBatchNormEps);
                        neg_mean[k] = -r.mean[k];
                    }
                    normalized = mul_row(add_row(x, Var::constant(neg_mean)), Var::constant(inv_std));
                }
                x = add_row(mul_row(normalized, gamma), beta);
                break;
            }
            case LayerKind::Activation:
                x = apply_activation(x, l);
                break;
            case LayerKind::Flatten:
                break;
        }
    }
    return x;
}

Var input_gradient_norm(Network& critic, const Tensor& x) {
    if (critic.spec().has_batchnorm()) {
        throw PreconditionError("input gradient norm is per-sample; the critic must not use batchnorm");
    }
    Var input = Var::leaf(x);
    Var out = critic.forward(input, Mode::Train);
    Var g = grad(sum(out), {input}, true)[0];
    return sqrt(sum_cols(mul(g, g)));
}

// ------------------------------------------------------------ serialization

json tensor_to_json(const Tensor& t) { return json{{"shape", t.shape()}, {"data", t.buffer()}}; }

Tensor tensor_from_json(const json& j) {
    try {
        return Tensor(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad tensor record: ") + e.what());
    }
}

namespace {

const char* kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Dense: return "dense";
        case LayerKind::Conv1d: return "conv1d";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::BatchNorm: return "batchnorm";
        case LayerKind::Activation: return "activation";
        case LayerKind::Flatten: return "flatten";
    }
    return "?";
}

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::LeakyRelu: return "leaky_relu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Tanh: return "tanh";
        case Activation::None: return "none";
    }
    return "?";
}

json layer_to_json(const Layer& l) {
    json j{{"kind", kind_name(l.kind)}};
    switch (l.kind) {
        case LayerKind::Dense: j["width"] = l.width; break;
        case LayerKind::Conv1d:
            j["feature_maps"] = l.width;
            j["kernel"] = l.kernel;
            j["stride"] = l.stride;
            j["padding"] = l.padding;
            break;
        case LayerKind::MaxPool:
            j["window"] = l.kernel;
            j["stride"] = l.stride;
            break;
        case LayerKind::Activation:
            j["function"] = activation_name(l.activation);
            if (l.activation == Activation::LeakyRelu) j["slope"] = l.slope;
            break;
        default: break;
    }
    return j;
}

Layer layer_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "dense") return dense(j.at("width").get<std::size_t>());
    if (kind == "conv1d") {
        return conv1d(j.at("feature_maps").get<std::size_t>(), j.at("kernel").get<std::size_t>(),
                      j.at("stride").get<std::size_t>(), j.at("padding").get<std::size_t>());
    }
    if (kind == "maxpool") return maxpool(j.at("window").get<std::size_t>(), j.at("stride").get<std::size_t>());
    if (kind == "batchnorm") return batchnorm();
    if (kind == "flatten") return flatten();
    if (kind == "activation") {
        const std::string f = j.at("function").get<std::string>();
        if (f == "leaky_relu") return activation(Activation::LeakyRelu, j.at("slope").get<double>());
        if (f == "sigmoid") return activation(Activation::Sigmoid);
        if (f == "tanh") return activation(Activation::Tanh);
        if (f == "none") return activation(Activation::None);
        throw FormatError("unknown activation " + f);
    }
    throw FormatError("unknown layer kind " + kind);
}

}  // namespace

json Network::to_json() const {
    json layers = json::array();
    for (const auto& l : spec_.layers) layers.push_back(layer_to_json(l));
    json params = json::array();
    for (const auto& p : params_.params) {
        params.push_back({{"name", p.name},
                          {"value", tensor_to_json(p.value.value())},
                          {"m", tensor_to_json(p.m)},
                          {"v", tensor_to_json(p.v)}});
    }
    json running = json::array();
    for (std::size_t i = 0; i < running_.size(); ++i) {
        if (spec_.layers[i].kind != LayerKind::BatchNorm) continue;
        running.push_back({{"layer", i}, {"mean", tensor_to_json(running_[i].mean)}, {"var", tensor_to_json(running_[i].var)}});
    }
    return json{{"format", kCheckpointFormat},
                {"input_shape", spec_.input_shape},
                {"layers", layers},
                {"adam_step", params_.step},
                {"params", params},
                {"running", running}};
}

Network Network::from_json(const json& j) {
    try {
        if (j.at("format").get<std::string>() != kCheckpointFormat) {
            throw FormatError("unsupported checkpoint format " + j.at("format").dump());
        }
        NetworkSpec spec;
        spec.input_shape = j.at("input_shape").get<Shape>();
        for (const auto& l : j.at("layers")) spec.layers.push_back(layer_from_json(l));
        Rng scratch(0);
        Network net(std::move(spec), scratch);
        const auto& params = j.at("params");
        if (params.size() != net.params_.params.size()) throw FormatError("checkpoint parameter count mismatch");
        for (std::size_t i = 0; i < params.size(); ++i) {
            Parameter& p = net.params_.params[i];
            if (params[i].at("name").get<std::string>() != p.name) throw FormatError("checkpoint parameter order mismatch");
            Tensor value = tensor_from_json(params[i].at("value"));
            Tensor m = tensor_from_json(params[i].at("m"));
            Tensor v = tensor_from_json(params[i].at("v"));
            if (value.shape() != p.value.shape() || m.shape() != value.shape() || v.shape() != value.shape()) {
                throw FormatError("checkpoint tensor shape mismatch for " + p.name);
            }
            p.value = Var::leaf(std::move(value));
            p.m = std::move(m);
            p.v = std::move(v);
        }
        net.params_.step = j.at("adam_step").get<std::uint64_t>();
        for (const auto& r : j.at("running")) {
            const std::size_t layer = r.at("layer").get<std::size_t>();
            if (layer >= net.running_.size() || net.spec_.layers[layer].kind != LayerKind::BatchNorm) {
                throw FormatError("running statistics for a non-batchnorm layer");
            }
            net.running_[layer] = {tensor_from_json(r.at("mean")), tensor_from_json(r.at("var"))};
        }
        return net;
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad checkpoint: ") + e.what());
    } catch (const ShapeError& e) {
        throw FormatError(std::string("bad checkpoint: ") + e.what());
    }
}

}  // namespace wogan::nn
