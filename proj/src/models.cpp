#include "wogan/models.hpp"

#include "wogan/error.hpp"

#include <algorithm>
#include <cmath>

namespace wogan {

using namespace nn;

void TrainHyper::validate() const {
    if (!(lambda_gp > 0.0) || n_critic < 1 || batch_size < 1 || wgan_epochs < 1 || analyzer_epochs < 1 ||
        !(analyzer_lambda > 0.0) || !(adam.lr > 0.0) || !(adam.beta1 > 0.0 && adam.beta1 < 1.0) ||
        !(adam.beta2 > 0.0 && adam.beta2 < 1.0) || !(adam.eps > 0.0)) {
        throw PreconditionError("training hyperparameters must be positive (betas in (0,1))");
    }
}

NetworkSpec generator_spec(std::size_t latent_dim, std::size_t dim) {
    return {{latent_dim},
            {dense(kHiddenWidth), batchnorm(), activation(Activation::LeakyRelu, kLeakySlope), dense(kHiddenWidth),
             batchnorm(), activation(Activation::LeakyRelu, kLeakySlope), dense(dim), activation(Activation::Tanh)}};
}

NetworkSpec critic_spec(std::size_t dim) {
    return {{dim},
            {dense(kHiddenWidth), activation(Activation::LeakyRelu, kLeakySlope), dense(kHiddenWidth),
             activation(Activation::LeakyRelu, kLeakySlope), dense(1)}};
}

NetworkSpec analyzer_spec(std::size_t dim, bool signal_input) {
    if (signal_input) {
        return {{1, dim},
                {conv1d(16, 2, 1, 1), activation(Activation::LeakyRelu, kLeakySlope), maxpool(2, 2),
                 conv1d(16, 2, 1, 1), activation(Activation::LeakyRelu, kLeakySlope), maxpool(2, 2), flatten(),
                 dense(kHiddenWidth), dense(1), activation(Activation::Sigmoid)}};
    }
    return {{dim},
            {dense(kHiddenWidth), activation(Activation::LeakyRelu, kLeakySlope), dense(kHiddenWidth),
             activation(Activation::LeakyRelu, kLeakySlope), dense(1), activation(Activation::Sigmoid)}};
}

ModelBundle::ModelBundle(std::size_t dim_, std::size_t latent_dim_, bool signal_input_, Rng& rng)
    : dim(dim_), latent_dim(latent_dim_), signal_input(signal_input_) {
    if (dim == 0 || latent_dim == 0) throw PreconditionError("model dimensions must be positive");
    generator = Network(generator_spec(latent_dim, dim), rng);
    critic = Network(critic_spec(dim), rng);
    analyzer = Network(analyzer_spec(dim, signal_input), rng);
}

nlohmann::json ModelBundle::to_json() const {
    return {{"format", "wogan-bundle/1"},
            {"dim", dim},
            {"latent_dim", latent_dim},
            {"signal_input", signal_input},
            {"generator", generator.to_json()},
            {"critic", critic.to_json()},
            {"analyzer", analyzer.to_json()}};
}

ModelBundle ModelBundle::from_json(const nlohmann::json& j) {
    try {
        if (j.at("format") != "wogan-bundle/1") throw FormatError("unsupported bundle format");
        ModelBundle b;
        b.dim = j.at("dim").get<std::size_t>();
        b.latent_dim = j.at("latent_dim").get<std::size_t>();
        b.signal_input = j.at("signal_input").get<bool>();
        b.generator = Network::from_json(j.at("generator"));
        b.critic = Network::from_json(j.at("critic"));
        b.analyzer = Network::from_json(j.at("analyzer"));
        return b;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad bundle: ") + e.what());
    }
}

Tensor latent_batch(Rng& rng, std::size_t n, std::size_t latent_dim) {
    Tensor z({n, latent_dim});
    for (auto& v : z.values()) v = uniform(rng, -1.0, 1.0);
    return z;
}

Tensor tests_to_tensor(const std::vector<Test>& tests, std::size_t dim) {
    if (tests.empty()) throw PreconditionError("no tests given");
    Tensor t({tests.size(), dim});
    for (std::size_t i = 0; i < tests.size(); ++i) {
        if (tests[i].size() != dim) {
            throw DimensionError("test has dimension " + std::to_string(tests[i].size()) + ", expected " +
                                 std::to_string(dim));
        }
        for (std::size_t j = 0; j < dim; ++j) t(i, j) = tests[i][j];
    }
    return t;
}

std::vector<Test> sample_generator(const ModelBundle& bundle, std::size_t n, Rng& rng) {
    if (n == 0) throw PreconditionError("sample_generator needs n >= 1");
    const Tensor out = bundle.generator.predict(latent_batch(rng, n, bundle.latent_dim));
    std::vector<Test> tests(n);
    for (std::size_t i = 0; i < n; ++i) tests[i].assign(out.row(i).begin(), out.row(i).end());
    return tests;
}

WganDiagnostics wgan_step(ModelBundle& bundle, const Tensor& real, const TrainHyper& hyper, Rng& rng) {
    const std::size_t m = real.rows();
    if (m < 2) throw PreconditionError("wgan_step needs a real batch of at least 2 tests");
    if (real.cols() != bundle.dim) throw DimensionError("real batch has the wrong test dimension");

    WganDiagnostics diag;
    const Var x = Var::constant(real);
    for (std::size_t it = 0; it < hyper.n_critic; ++it) {
        const Tensor fake = bundle.generator.forward(Var::constant(latent_batch(rng, m, bundle.latent_dim)), Mode::Train).value();
        Tensor mix(real.shape());
        for (std::size_t i = 0; i < m; ++i) {
            const double eps = uniform01(rng);
            for (std::size_t j = 0; j < bundle.dim; ++j) mix(i, j) = eps * real(i, j) + (1.0 - eps) * fake(i, j);
        }
        const Var f_real = mean(bundle.critic.forward(x, Mode::Train));
        const Var f_fake = mean(bundle.critic.forward(Var::constant(fake), Mode::Train));
        const Var gap = add_scalar(input_gradient_norm(bundle.critic, mix), -1.0);
        const Var penalty = scale(mean(mul(gap, gap)), hyper.lambda_gp);
        const Var loss = add(sub(f_fake, f_real), penalty);
        adam_step(bundle.critic.params(), grad(loss, bundle.critic.params().vars()), hyper.adam);
        diag.critic_loss = loss.value().item();
        diag.penalty = penalty.value().item();
        diag.wasserstein = f_real.value().item() - f_fake.value().item();
    }

    const Var fake = bundle.generator.forward(Var::constant(latent_batch(rng, m, bundle.latent_dim)), Mode::Train);
    const Var gen_loss = neg(mean(bundle.critic.forward(fake, Mode::Train)));
    adam_step(bundle.generator.params(), grad(gen_loss, bundle.generator.params().vars()), hyper.adam);
    diag.generator_loss = gen_loss.value().item();
    return diag;
}

double analyzer_transform(double x) {
    const double p = 0.98 * x + 0.01;
    return std::log(p) - std::log1p(-p);
}

double analyzer_loss(double estimate, double label, double lambda) {
    if (!(estimate > 0.0 && estimate < 1.0)) throw RangeError("analyzer estimate must lie in (0,1)");
    if (!(label >= 0.0 && label <= 1.0)) throw RangeError("analyzer label must lie in [0,1]");
    const double y = std::clamp(label, kLabelClamp, 1.0 - kLabelClamp);
    const double a = analyzer_transform(estimate) - analyzer_transform(y);
    const double b = analyzer_transform(0.5 - (estimate - y) / 2.0) - analyzer_transform(0.5);
    return a * a + lambda * b * b;
}

namespace {

Var transform(const Var& x) {
    const Var p = add_scalar(scale(x, 0.98), 0.01);
    return sub(log(p), log(add_scalar(neg(p), 1.0)));
}

}  // namespace

Var analyzer_loss(const Var& estimate, const std::vector<double>& labels, double lambda) {
    const std::size_t n = labels.size();
    if (estimate.value().rows() != n || estimate.value().cols() != 1) {
        throw ShapeError("analyzer_loss: estimate must be [N,1] matching the labels");
    }
    Tensor y({n, 1});
    Tensor fy({n, 1});
    for (std::size_t i = 0; i < n; ++i) {
        if (!(labels[i] >= 0.0 && labels[i] <= 1.0)) throw RangeError("analyzer label must lie in [0,1]");
        y[i] = std::clamp(labels[i], kLabelClamp, 1.0 - kLabelClamp);
        fy[i] = analyzer_transform(y[i]);
    }
    const Var a = sub(transform(estimate), Var::constant(fy));
    // ½ - (ŷ - y)/2 = (1 + y)/2 - ŷ/2 ; F(½) = 0
    Tensor half_shift({n, 1});
    for (std::size_t i = 0; i < n; ++i) half_shift[i] = 0.5 + y[i] / 2.0;
    const Var b = transform(add(scale(estimate, -0.5), Var::constant(half_shift)));
    return mean(add(mul(a, a), scale(mul(b, b), lambda)));
}

std::vector<double> analyzer_train(ModelBundle& bundle, const std::vector<Test>& tests,
                                   const std::vector<double>& labels, const TrainHyper& hyper) {
    if (tests.empty()) throw PreconditionError("analyzer training needs a non-empty repository");
    if (tests.size() != labels.size()) throw PreconditionError("one label per test expected");
    const Var x = Var::constant(tests_to_tensor(tests, bundle.dim));
    std::vector<double> losses;
    for (std::size_t e = 0; e < hyper.analyzer_epochs; ++e) {
        const Var loss = analyzer_loss(bundle.analyzer.forward(x, Mode::Train), labels, hyper.analyzer_lambda);
        losses.push_back(loss.value().item());
        adam_step(bundle.analyzer.params(), grad(loss, bundle.analyzer.params().vars()), hyper.adam);
    }
    return losses;
}

std::vector<double> analyzer_estimate(const ModelBundle& bundle, const std::vector<Test>& tests) {
    const Tensor out = bundle.analyzer.predict(tests_to_tensor(tests, bundle.dim));
    return {out.values().begin(), out.values().end()};
}

double analyzer_estimate(const ModelBundle& bundle, const Test& test) { return analyzer_estimate(bundle, std::vector<Test>{test})[0]; }

}  // namespace wogan
