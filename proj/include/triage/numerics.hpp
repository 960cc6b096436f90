#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "triage/rng.hpp"

namespace triage {

using Vec = std::vector<double>;

// Row-major dense matrix.
struct Mat {
    std::size_t rows = 0, cols = 0;
    Vec data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }
    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

namespace numerics {

struct DenseParams {
    Mat weight;  // out x in
    Vec bias;    // out
};

// weight * x + bias
Vec affine(const DenseParams& p, std::span<const double> x);

double sigmoid(double x);
double tanh_(double x);

// Mean binary cross-entropy; p clamped to [1e-7, 1 - 1e-7].
double bce_loss(std::span<const double> p, std::span<const double> y);

// Named view over one parameter (or gradient) block.
struct ParamView {
    std::string name;
    double* data = nullptr;
    std::size_t size = 0;
};
struct ConstParamView {
    std::string name;
    const double* data = nullptr;
    std::size_t size = 0;

    ConstParamView() = default;
    ConstParamView(std::string n, const double* d, std::size_t s)
        : name(std::move(n)), data(d), size(s) {}
    ConstParamView(const ParamView& v) : name(v.name), data(v.data), size(v.size) {}
};

Vec pack(std::span<const ConstParamView> views);
void unpack(std::span<const ParamView> views, const Vec& flat);

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long long t = 0;
    std::vector<Vec> m, v;  // sized lazily to match the parameter blocks
};

// Bias-corrected Adam update in place; throws on non-finite gradients,
// naming the offending block.
void adam_step(AdamState& state, std::span<const ParamView> params,
               std::span<const ConstParamView> grads);

struct PlateauScheduler {
    int patience = 3;
    double factor = 0.1;
    double min_lr = 1e-6;
    double best = std::numeric_limits<double>::infinity();
    int stale = 0;
};

// Returns the (possibly reduced) learning rate after observing `monitored`.
double plateau_update(PlateauScheduler& sched, double monitored, double lr);

// Central finite differences of a scalar function, one coordinate at a time.
Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& theta,
                     double h = 1e-5);

// Feed-forward stack: tanh on hidden layers, linear output layer.
struct DenseStack {
    std::vector<DenseParams> layers;

    static DenseStack make(std::size_t in, std::span<const std::size_t> hidden, std::size_t out,
                           rng::Random& rng);

    std::size_t input_dim() const { return layers.front().weight.cols; }
    std::size_t output_dim() const { return layers.back().weight.rows; }
    Vec forward(std::span<const double> x) const;  // logits

    std::vector<ParamView> param_views();
    std::vector<ConstParamView> const_param_views() const;
};

// Gradient buffers shaped like a DenseStack.
DenseStack zero_like(const DenseStack& s);

// Mean BCE over a batch of sigmoid(stack(x)) outputs; accumulates parameter
// gradients into *grads when non-null. X is batch x in, Y is batch x out.
double bce_sigmoid_batch(const DenseStack& stack, const Mat& X, const Mat& Y, DenseStack* grads);

struct TrainConfig {
    double lr = 1e-3;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 100;
    int early_stop_patience = 10;
    int plateau_patience = 3;
    double plateau_factor = 0.1;
    double min_lr = 1e-6;
    std::vector<std::size_t> hidden;  // hidden layer widths; empty = single affine layer
};

struct TrainLog {
    double final_train_loss = 0.0;
    double best_val_loss = 0.0;
    std::size_t epochs_run = 0;
};

// Mini-batch Adam training of a sigmoid-output stack against 0/1 targets.
// Returns the parameters with the best validation loss (train loss is the
// monitor when the validation set is empty). Deterministic given the seed.
DenseStack train_dense_sigmoid(const Mat& X_train, const Mat& Y_train, const Mat& X_val,
                               const Mat& Y_val, const TrainConfig& cfg, std::uint64_t seed,
                               TrainLog* log = nullptr);

}  // namespace numerics
}  // namespace triage
