#include "triage/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "triage/kernels.hpp"

namespace triage::numerics {

Vec affine(const DenseParams& p, std::span<const double> x) {
    if (x.size() != p.weight.cols)
        throw std::invalid_argument("affine: input has " + std::to_string(x.size()) +
                                    " entries, weight expects " + std::to_string(p.weight.cols));
    Vec y(p.bias);
    for (std::size_t r = 0; r < p.weight.rows; ++r)
        y[r] += kernels::dot(p.weight.row(r), x.data(), p.weight.cols);
    return y;
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double tanh_(double x) { return std::tanh(x); }

double bce_loss(std::span<const double> p, std::span<const double> y) {
    if (p.size() != y.size()) throw std::invalid_argument("bce_loss: length mismatch");
    if (p.empty()) throw std::invalid_argument("bce_loss: empty input");
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pi = std::clamp(p[i], 1e-7, 1.0 - 1e-7);
        total -= y[i] * std::log(pi) + (1.0 - y[i]) * std::log(1.0 - pi);
    }
    return total / static_cast<double>(p.size());
}

Vec pack(std::span<const ConstParamView> views) {
    std::size_t total = 0;
    for (const auto& v : views) total += v.size;
    Vec flat;
    flat.reserve(total);
    for (const auto& v : views) flat.insert(flat.end(), v.data, v.data + v.size);
    return flat;
}

void unpack(std::span<const ParamView> views, const Vec& flat) {
    std::size_t off = 0;
    for (const auto& v : views) {
        if (off + v.size > flat.size()) throw std::invalid_argument("unpack: flat vector too short");
        std::copy(flat.begin() + off, flat.begin() + off + v.size, v.data);
        off += v.size;
    }
    if (off != flat.size()) throw std::invalid_argument("unpack: flat vector too long");
}

void adam_step(AdamState& state, std::span<const ParamView> params,
               std::span<const ConstParamView> grads) {
    if (params.size() != grads.size())
        throw std::invalid_argument("adam_step: parameter/gradient block counts differ");
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t b = 0; b < params.size(); ++b) {
            state.m[b].assign(params[b].size, 0.0);
            state.v[b].assign(params[b].size, 0.0);
        }
    }
    if (state.m.size() != params.size())
        throw std::invalid_argument("adam_step: state does not match parameter blocks");

    for (std::size_t b = 0; b < params.size(); ++b) {
        if (params[b].size != grads[b].size)
            throw std::invalid_argument("adam_step: block size mismatch at " + params[b].name);
        for (std::size_t i = 0; i < grads[b].size; ++i)
            if (!std::isfinite(grads[b].data[i]))
                throw std::runtime_error("adam_step: non-finite gradient in " + grads[b].name);
    }

    ++state.t;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t b = 0; b < params.size(); ++b) {
        Vec& m = state.m[b];
        Vec& v = state.v[b];
        double* w = params[b].data;
        const double* g = grads[b].data;
        for (std::size_t i = 0; i < params[b].size; ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

double plateau_update(PlateauScheduler& sched, double monitored, double lr) {
    if (monitored < sched.best) {
        sched.best = monitored;
        sched.stale = 0;
        return lr;
    }
    if (++sched.stale >= sched.patience) {
        sched.stale = 0;
        return std::max(lr * sched.factor, sched.min_lr);
    }
    return lr;
}

Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& theta, double h) {
    Vec grad(theta.size(), 0.0);
    Vec probe = theta;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        probe[i] = theta[i] + h;
        const double fp = f(probe);
        probe[i] = theta[i] - h;
        const double fm = f(probe);
        probe[i] = theta[i];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("finite_diff_grad: non-finite function value");
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

DenseStack DenseStack::make(std::size_t in, std::span<const std::size_t> hidden, std::size_t out,
                            rng::Random& rng) {
    DenseStack s;
    std::vector<std::size_t> dims;
    dims.push_back(in);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(out);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        DenseParams p;
        p.weight = Mat(dims[l + 1], dims[l]);
        p.bias.assign(dims[l + 1], 0.0);
        const double scale =
            std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
        for (double& w : p.weight.data) w = rng.uniform(-scale, scale);
        s.layers.push_back(std::move(p));
    }
    return s;
}

Vec DenseStack::forward(std::span<const double> x) const {
    Vec a(x.begin(), x.end());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Vec z = affine(layers[l], a);
        if (l + 1 < layers.size())
            for (double& v : z) v = std::tanh(v);
        a = std::move(z);
    }
    return a;
}

std::vector<ParamView> DenseStack::param_views() {
    std::vector<ParamView> views;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string prefix = "layer" + std::to_string(l);
        views.push_back({prefix + ".weight", layers[l].weight.data.data(),
                         layers[l].weight.data.size()});
        views.push_back({prefix + ".bias", layers[l].bias.data(), layers[l].bias.size()});
    }
    return views;
}

std::vector<ConstParamView> DenseStack::const_param_views() const {
    std::vector<ConstParamView> views;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string prefix = "layer" + std::to_string(l);
        views.emplace_back(prefix + ".weight", layers[l].weight.data.data(),
                           layers[l].weight.data.size());
        views.emplace_back(prefix + ".bias", layers[l].bias.data(), layers[l].bias.size());
    }
    return views;
}

DenseStack zero_like(const DenseStack& s) {
    DenseStack z;
    for (const DenseParams& p : s.layers) {
        DenseParams q;
        q.weight = Mat(p.weight.rows, p.weight.cols);
        q.bias.assign(p.bias.size(), 0.0);
        z.layers.push_back(std::move(q));
    }
    return z;
}

double bce_sigmoid_batch(const DenseStack& stack, const Mat& X, const Mat& Y, DenseStack* grads) {
    if (X.rows != Y.rows) throw std::invalid_argument("bce_sigmoid_batch: batch size mismatch");
    if (X.rows == 0) throw std::invalid_argument("bce_sigmoid_batch: empty batch");
    const std::size_t batch = X.rows;
    const std::size_t out = stack.output_dim();
    const std::size_t depth = stack.layers.size();
    const double denom = static_cast<double>(batch * out);

    double total = 0.0;
    std::vector<Vec> acts(depth + 1);  // activations per layer (acts[0] = input)
    for (std::size_t s = 0; s < batch; ++s) {
        acts[0].assign(X.row(s), X.row(s) + X.cols);
        for (std::size_t l = 0; l < depth; ++l) {
            acts[l + 1] = affine(stack.layers[l], acts[l]);
            if (l + 1 < depth)
                for (double& v : acts[l + 1]) v = std::tanh(v);
        }
        Vec& logits = acts[depth];
        Vec delta(out);
        for (std::size_t j = 0; j < out; ++j) {
            const double p = sigmoid(logits[j]);
            const double pc = std::clamp(p, 1e-7, 1.0 - 1e-7);
            const double y = Y(s, j);
            total -= y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc);
            delta[j] = (p - y) / denom;
        }
        if (grads == nullptr) continue;
        for (std::size_t l = depth; l-- > 0;) {
            DenseParams& g = grads->layers[l];
            const Vec& a_in = acts[l];
            for (std::size_t r = 0; r < g.weight.rows; ++r) {
                kernels::axpy(delta[r], a_in.data(), g.weight.row(r), g.weight.cols);
                g.bias[r] += delta[r];
            }
            if (l == 0) break;
            Vec prev(stack.layers[l].weight.cols, 0.0);
            kernels::matvec_t_accum(stack.layers[l].weight.data.data(),
                                    stack.layers[l].weight.rows, stack.layers[l].weight.cols,
                                    delta.data(), prev.data());
            for (std::size_t i = 0; i < prev.size(); ++i)
                prev[i] *= 1.0 - a_in[i] * a_in[i];  // tanh'
            delta = std::move(prev);
        }
    }
    return total / denom;
}

DenseStack train_dense_sigmoid(const Mat& X_train, const Mat& Y_train, const Mat& X_val,
                               const Mat& Y_val, const TrainConfig& cfg, std::uint64_t seed,
                               TrainLog* log) {
    if (X_train.rows == 0) throw std::invalid_argument("train_dense_sigmoid: empty training set");
    rng::Random rng(seed);
    DenseStack stack = DenseStack::make(X_train.cols, cfg.hidden, Y_train.cols, rng);
    DenseStack best = stack;

    AdamState adam;
    adam.lr = cfg.lr;
    PlateauScheduler plateau{cfg.plateau_patience, cfg.plateau_factor, cfg.min_lr};

    const bool has_val = X_val.rows > 0;
    double best_monitor = std::numeric_limits<double>::infinity();
    int since_best = 0;
    double train_loss = 0.0;
    std::size_t epochs_run = 0;

    std::vector<std::size_t> order(X_train.rows);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        ++epochs_run;
        rng.shuffle(order);
        train_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            Mat xb(stop - start, X_train.cols), yb(stop - start, Y_train.cols);
            for (std::size_t i = start; i < stop; ++i) {
                std::copy(X_train.row(order[i]), X_train.row(order[i]) + X_train.cols,
                          xb.row(i - start));
                std::copy(Y_train.row(order[i]), Y_train.row(order[i]) + Y_train.cols,
                          yb.row(i - start));
            }
            DenseStack grads = zero_like(stack);
            train_loss += bce_sigmoid_batch(stack, xb, yb, &grads);
            ++batches;
            auto pv = stack.param_views();
            auto gv = grads.const_param_views();
            adam_step(adam, pv, gv);
        }
        train_loss /= static_cast<double>(batches);

        double monitor = train_loss;
        if (has_val) monitor = bce_sigmoid_batch(stack, X_val, Y_val, nullptr);
        adam.lr = plateau_update(plateau, monitor, adam.lr);

        if (monitor < best_monitor) {
            best_monitor = monitor;
            best = stack;
            since_best = 0;
        } else if (++since_best >= cfg.early_stop_patience) {
            break;
        }
    }
    if (log != nullptr) {
        log->final_train_loss = train_loss;
        log->best_val_loss = best_monitor;
        log->epochs_run = epochs_run;
    }
    return best;
}

}  // namespace triage::numerics
