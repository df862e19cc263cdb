#pragma once

// Generator, critic and analyzer networks together with their training steps.

#include "wogan/nn/network.hpp"

#include <vector>

namespace wogan {

using Test = std::vector<double>;

struct TrainHyper {
    double lambda_gp = 10.0;
    std::size_t n_critic = 5;
    std::size_t batch_size = 32;
    std::size_t wgan_epochs = 2;
    std::size_t analyzer_epochs = 10;
    double analyzer_lambda = 0.001;
    nn::AdamConfig adam{};

    void validate() const;
};

inline constexpr std::size_t kHiddenWidth = 128;
inline constexpr double kLeakySlope = 0.01;
inline constexpr double kLabelClamp = 1e-6;

nn::NetworkSpec generator_spec(std::size_t latent_dim, std::size_t dim);
nn::NetworkSpec critic_spec(std::size_t dim);
/// Convolutional analyzer for tests that parametrize a signal, dense otherwise.
nn::NetworkSpec analyzer_spec(std::size_t dim, bool signal_input);

struct ModelBundle {
    std::size_t dim = 0;
    std::size_t latent_dim = 10;
    bool signal_input = false;
    nn::Network generator;
    nn::Network critic;
    nn::Network analyzer;

    ModelBundle() = default;
    ModelBundle(std::size_t dim, std::size_t latent_dim, bool signal_input, Rng& rng);

    nlohmann::json to_json() const;
    static ModelBundle from_json(const nlohmann::json& j);
};

/// Latent batch uniform on [-1,1]^latent_dim.
nn::Tensor latent_batch(Rng& rng, std::size_t n, std::size_t latent_dim);

/// n eval-mode generator draws; each lies in [-1,1]^D.
std::vector<Test> sample_generator(const ModelBundle& bundle, std::size_t n, Rng& rng);

struct WganDiagnostics {
    double critic_loss = 0.0;  // last critic iteration, penalty included
    double penalty = 0.0;
    double wasserstein = 0.0;  // mean f(real) - mean f(fake)
    double generator_loss = 0.0;
};

/// n_critic critic updates on the real batch X (rows are tests), then one
/// generator update.
WganDiagnostics wgan_step(ModelBundle& bundle, const nn::Tensor& real, const TrainHyper& hyper, Rng& rng);

/// F(x) = logit(0.98 x + 0.01).
double analyzer_transform(double x);
/// (F(ŷ) - F(y))² + λ (F(½ - (ŷ - y)/2) - F(½))² with y clamped into [1e-6, 1-1e-6].
double analyzer_loss(double estimate, double label, double lambda = 0.001);
/// Batch mean of analyzer_loss, on the tape. estimate is [N,1].
nn::Var analyzer_loss(const nn::Var& estimate, const std::vector<double>& labels, double lambda);

/// analyzer_epochs full-batch Adam steps. Returns the loss before each step.
std::vector<double> analyzer_train(ModelBundle& bundle, const std::vector<Test>& tests,
                                   const std::vector<double>& labels, const TrainHyper& hyper);

double analyzer_estimate(const ModelBundle& bundle, const Test& test);
std::vector<double> analyzer_estimate(const ModelBundle& bundle, const std::vector<Test>& tests);

nn::Tensor tests_to_tensor(const std::vector<Test>& tests, std::size_t dim);

}  // namespace wogan
