#include "ttnmtl/nn.hpp"

#include "ttnmtl/errors.hpp"
#include "ttnmtl/random.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

namespace ttnmtl {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::atomic<std::uint64_t> next_network_id{1};

std::string layer_name(std::size_t index) { return "layer " + std::to_string(index + 1); }

Dims output_shape(const LayerSpec& spec, const Dims& in, std::size_t index) {
    return std::visit(
        Overloaded{
            [&](const Conv2d& c) -> Dims {
                if (in.size() != 3) throw InvalidArgument(layer_name(index) + ": convolution needs HxWxC input");
                if (c.kernel_h == 0 || c.kernel_w == 0 || c.out_channels == 0 || c.in_channels == 0)
                    throw InvalidArgument(layer_name(index) + ": convolution extents must be positive");
                if (c.in_channels != in[2])
                    throw InvalidArgument(layer_name(index) + ": convolution expects " +
                                          std::to_string(c.in_channels) + " channels, input has " +
                                          std::to_string(in[2]));
                if (c.kernel_h > in[0] || c.kernel_w > in[1])
                    throw InvalidArgument(layer_name(index) + ": kernel larger than input");
                return {in[0] - c.kernel_h + 1, in[1] - c.kernel_w + 1, c.out_channels};
            },
            [&](const Dense& d) -> Dims {
                if (in.size() != 1) throw InvalidArgument(layer_name(index) + ": dense layer needs flat input");
                if (d.in_features == 0 || d.out_features == 0)
                    throw InvalidArgument(layer_name(index) + ": dense extents must be positive");
                if (d.in_features != in[0])
                    throw InvalidArgument(layer_name(index) + ": dense expects " + std::to_string(d.in_features) +
                                          " features, input has " + std::to_string(in[0]));
                return {d.out_features};
            },
            [&](const MaxPool2x2&) -> Dims {
                if (in.size() != 3) throw InvalidArgument(layer_name(index) + ": pooling needs HxWxC input");
                if (in[0] < 2 || in[1] < 2) throw InvalidArgument(layer_name(index) + ": input too small to pool");
                return {in[0] / 2, in[1] / 2, in[2]};
            },
            [&](const TanhActivation&) -> Dims { return in; },
            [&](const Flatten&) -> Dims { return {dims_product(in)}; },
        },
        spec);
}

Tensor conv_forward(const Conv2d& c, const LayerParams& p, const Tensor& in) {
    const std::size_t b_n = in.dim(0), h = in.dim(1), w = in.dim(2), cin = in.dim(3);
    const std::size_t oh = h - c.kernel_h + 1, ow = w - c.kernel_w + 1, cout = c.out_channels;
    Tensor out({b_n, oh, ow, cout});
    auto src = in.data();
    auto k = p.weight.data();
    auto bias = p.bias.data();
    auto dst = out.mutable_data();
    for (std::size_t b = 0; b < b_n; ++b)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                double* o = &dst[((b * oh + y) * ow + x) * cout];
                for (std::size_t q = 0; q < cout; ++q) o[q] = bias[q];
                for (std::size_t i = 0; i < c.kernel_h; ++i)
                    for (std::size_t j = 0; j < c.kernel_w; ++j) {
                        const double* s = &src[((b * h + y + i) * w + x + j) * cin];
                        const double* kk = &k[(i * c.kernel_w + j) * cin * cout];
                        for (std::size_t ch = 0; ch < cin; ++ch) {
                            const double v = s[ch];
                            const double* kr = kk + ch * cout;
                            for (std::size_t q = 0; q < cout; ++q) o[q] += v * kr[q];
                        }
                    }
            }
    return out;
}

// Accumulates kernel/bias gradients; returns d(input) when wanted.
Tensor conv_backward(const Conv2d& c, const LayerParams& p, const Tensor& in, const Tensor& dout,
                     LayerParams& grad, bool want_input_grad) {
    const std::size_t b_n = in.dim(0), h = in.dim(1), w = in.dim(2), cin = in.dim(3);
    const std::size_t oh = dout.dim(1), ow = dout.dim(2), cout = c.out_channels;
    Tensor din = want_input_grad ? Tensor(in.dims()) : Tensor();
    auto src = in.data();
    auto k = p.weight.data();
    auto g = dout.data();
    auto dk = grad.weight.mutable_data();
    auto db = grad.bias.mutable_data();
    for (std::size_t b = 0; b < b_n; ++b)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                const double* go = &g[((b * oh + y) * ow + x) * cout];
                for (std::size_t q = 0; q < cout; ++q) db[q] += go[q];
                for (std::size_t i = 0; i < c.kernel_h; ++i)
                    for (std::size_t j = 0; j < c.kernel_w; ++j) {
                        const std::size_t in_off = ((b * h + y + i) * w + x + j) * cin;
                        const std::size_t k_off = (i * c.kernel_w + j) * cin * cout;
                        for (std::size_t ch = 0; ch < cin; ++ch) {
                            const double v = src[in_off + ch];
                            double* dkr = &dk[k_off + ch * cout];
                            const double* kr = &k[k_off + ch * cout];
                            double acc = 0.0;
                            for (std::size_t q = 0; q < cout; ++q) {
                                dkr[q] += v * go[q];
                                acc += kr[q] * go[q];
                            }
                            if (want_input_grad) din[in_off + ch] += acc;
                        }
                    }
            }
    return din;
}

Tensor pool_forward(const Tensor& in, std::vector<std::size_t>& argmax) {
    const std::size_t b_n = in.dim(0), h = in.dim(1), w = in.dim(2), ch = in.dim(3);
    const std::size_t oh = h / 2, ow = w / 2;
    Tensor out({b_n, oh, ow, ch});
    argmax.assign(out.size(), 0);
    auto src = in.data();
    auto dst = out.mutable_data();
    for (std::size_t b = 0; b < b_n; ++b)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x)
                for (std::size_t c = 0; c < ch; ++c) {
                    std::size_t best = ((b * h + 2 * y) * w + 2 * x) * ch + c;
                    for (std::size_t i = 0; i < 2; ++i)
                        for (std::size_t j = 0; j < 2; ++j) {
                            const std::size_t idx = ((b * h + 2 * y + i) * w + 2 * x + j) * ch + c;
                            if (src[idx] > src[best]) best = idx;
                        }
                    const std::size_t o = ((b * oh + y) * ow + x) * ch + c;
                    dst[o] = src[best];
                    argmax[o] = best;
                }
    return out;
}

Tensor dense_forward(const LayerParams& p, const Tensor& in) {
    const std::size_t b_n = in.dim(0), n_in = in.dim(1), n_out = p.weight.dim(1);
    Tensor out({b_n, n_out});
    auto src = in.data();
    auto wt = p.weight.data();
    auto bias = p.bias.data();
    auto dst = out.mutable_data();
    for (std::size_t b = 0; b < b_n; ++b) {
        double* o = &dst[b * n_out];
        for (std::size_t q = 0; q < n_out; ++q) o[q] = bias[q];
        for (std::size_t i = 0; i < n_in; ++i) {
            const double v = src[b * n_in + i];
            const double* wr = &wt[i * n_out];
            for (std::size_t q = 0; q < n_out; ++q) o[q] += v * wr[q];
        }
    }
    return out;
}

Tensor dense_backward(const LayerParams& p, const Tensor& in, const Tensor& dout, LayerParams& grad,
                      bool want_input_grad) {
    const std::size_t b_n = in.dim(0), n_in = in.dim(1), n_out = p.weight.dim(1);
    Tensor din = want_input_grad ? Tensor(in.dims()) : Tensor();
    auto src = in.data();
    auto wt = p.weight.data();
    auto g = dout.data();
    auto dw = grad.weight.mutable_data();
    auto db = grad.bias.mutable_data();
    for (std::size_t b = 0; b < b_n; ++b) {
        const double* go = &g[b * n_out];
        for (std::size_t q = 0; q < n_out; ++q) db[q] += go[q];
        for (std::size_t i = 0; i < n_in; ++i) {
            const double v = src[b * n_in + i];
            double* dwr = &dw[i * n_out];
            const double* wr = &wt[i * n_out];
            double acc = 0.0;
            for (std::size_t q = 0; q < n_out; ++q) {
                dwr[q] += v * go[q];
                acc += wr[q] * go[q];
            }
            if (want_input_grad) din[b * n_in + i] = acc;
        }
    }
    return din;
}

// Runs the layers; when `cache` is null only the final output is kept.
Tensor run_layers(const Network& net, const Tensor& images, ForwardCache* cache) {
    if (images.order() != 4 || !std::equal(net.input_shape().begin(), net.input_shape().end(),
                                           images.dims().begin() + 1))
        throw InvalidArgument("input batch shape does not match the network input");
    Tensor current = images;
    if (cache) {
        cache->activations.clear();
        cache->activations.push_back(current);
        cache->pool_argmax.assign(net.layers().size(), {});
    }
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
        const auto& spec = net.layers()[l];
        const auto& p = net.params()[l];
        std::vector<std::size_t> argmax;
        Tensor next = std::visit(
            Overloaded{
                [&](const Conv2d& c) { return conv_forward(c, p, current); },
                [&](const Dense&) { return dense_forward(p, current); },
                [&](const MaxPool2x2&) { return pool_forward(current, argmax); },
                [&](const TanhActivation&) {
                    Tensor out = current;
                    for (auto& v : out.mutable_data()) v = std::tanh(v);
                    return out;
                },
                [&](const Flatten&) {
                    const std::size_t b = current.dim(0);
                    return reshape(current, {b, current.size() / b});
                },
            },
            spec);
        current = std::move(next);
        if (cache) {
            cache->activations.push_back(current);
            cache->pool_argmax[l] = std::move(argmax);
        }
    }
    return current;
}

} // namespace

bool has_parameters(const LayerSpec& spec) {
    return std::holds_alternative<Conv2d>(spec) || std::holds_alternative<Dense>(spec);
}

std::vector<Dims> infer_shapes(std::span<const LayerSpec> layers, const Dims& input_shape) {
    if (input_shape.size() != 3 || dims_product(input_shape) == 0)
        throw InvalidArgument("network input shape must be HxWxC with positive extents");
    std::vector<Dims> shapes;
    Dims current = input_shape;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        current = output_shape(layers[l], current, l);
        shapes.push_back(current);
    }
    return shapes;
}

std::vector<LayerSpec> resolve_architecture(std::span<const LayerSpec> body, const Dims& input_shape,
                                            std::size_t classes) {
    if (classes == 0) throw InvalidArgument("class count must be positive");
    std::vector<LayerSpec> out;
    Dims current = input_shape;
    auto resolve = [&](LayerSpec spec) {
        if (auto* c = std::get_if<Conv2d>(&spec); c && current.size() == 3 && c->in_channels == 0)
            c->in_channels = current[2];
        if (auto* d = std::get_if<Dense>(&spec); d && current.size() == 1 && d->in_features == 0)
            d->in_features = current[0];
        current = output_shape(spec, current, out.size());
        out.push_back(spec);
    };
    for (const auto& spec : body) resolve(spec);
    if (current.size() != 1) resolve(Flatten{});
    resolve(Dense{0, classes});
    return out;
}

std::vector<LayerSpec> omniglot_body() {
    return {Conv2d{5, 5, 0, 8},  MaxPool2x2{}, TanhActivation{}, Conv2d{3, 3, 0, 12}, MaxPool2x2{},
            TanhActivation{},    Conv2d{3, 3, 0, 16}, MaxPool2x2{}, TanhActivation{}, Flatten{},
            Dense{0, 64},        TanhActivation{}};
}

std::vector<LayerSpec> small_body() {
    return {Conv2d{3, 3, 0, 4}, MaxPool2x2{}, TanhActivation{}, Conv2d{3, 3, 0, 8}, MaxPool2x2{},
            TanhActivation{},   Flatten{},    Dense{0, 16},     TanhActivation{}};
}

Params init_params(std::span<const LayerSpec> layers, std::uint64_t seed) {
    Rng rng(seed);
    Params params;
    for (const auto& spec : layers) {
        LayerParams p;
        std::size_t fan_in = 0, fan_out = 0;
        if (const auto* c = std::get_if<Conv2d>(&spec)) {
            p.weight = Tensor({c->kernel_h, c->kernel_w, c->in_channels, c->out_channels});
            p.bias = Tensor({c->out_channels});
            fan_in = c->kernel_h * c->kernel_w * c->in_channels;
            fan_out = c->kernel_h * c->kernel_w * c->out_channels;
        } else if (const auto* d = std::get_if<Dense>(&spec)) {
            p.weight = Tensor({d->in_features, d->out_features});
            p.bias = Tensor({d->out_features});
            fan_in = d->in_features;
            fan_out = d->out_features;
        }
        if (!p.empty()) {
            const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            for (auto& v : p.weight.mutable_data()) v = rng.uniform(-a, a);
        }
        params.push_back(std::move(p));
    }
    return params;
}

Params zeros_like(const Params& params) {
    Params out;
    for (const auto& p : params) {
        LayerParams z;
        if (!p.empty()) {
            z.weight = Tensor(p.weight.dims());
            z.bias = Tensor(p.bias.dims());
        }
        out.push_back(std::move(z));
    }
    return out;
}

Network::Network(std::vector<LayerSpec> layers, Dims input_shape, Params params)
    : layers_(std::move(layers)), input_shape_(std::move(input_shape)), params_(std::move(params)),
      id_(next_network_id.fetch_add(1)) {
    const auto shapes = infer_shapes(layers_, input_shape_);
    if (shapes.empty() || shapes.back().size() != 1)
        throw InvalidArgument("network must end in a flat (dense) output");
    output_features_ = shapes.back()[0];
    if (params_.size() != layers_.size()) throw InvalidArgument("one parameter entry per layer required");
    const Params expected = init_params(layers_, 0);
    for (std::size_t l = 0; l < layers_.size(); ++l)
        if (params_[l].weight.dims() != expected[l].weight.dims() ||
            params_[l].bias.dims() != expected[l].bias.dims())
            throw InvalidArgument(layer_name(l) + ": parameter shape does not match its spec");
}

Network Network::initialized(std::vector<LayerSpec> layers, Dims input_shape, std::uint64_t seed) {
    Params params = init_params(layers, seed);
    return Network(std::move(layers), std::move(input_shape), std::move(params));
}

void Network::apply_update(const Params& grads, double learning_rate) {
    if (grads.size() != params_.size()) throw InvalidArgument("gradient layer count mismatch");
    for (std::size_t l = 0; l < params_.size(); ++l) {
        if (params_[l].empty()) continue;
        axpy(-learning_rate, grads[l].weight, params_[l].weight);
        axpy(-learning_rate, grads[l].bias, params_[l].bias);
    }
    ++version_;
}

ForwardResult forward(const Network& net, const Tensor& images) {
    ForwardResult r;
    r.cache.network_id = net.id();
    r.cache.version = net.version();
    Tensor out = run_layers(net, images, &r.cache);
    r.logits = to_matrix(out);
    return r;
}

Matrix predict_logits(const Network& net, const Tensor& images) {
    return to_matrix(run_layers(net, images, nullptr));
}

LossResult softmax_cross_entropy(const Matrix& logits, std::span<const std::size_t> labels) {
    const std::size_t b_n = logits.rows(), k = logits.cols();
    if (labels.size() != b_n) throw InvalidArgument("label count does not match logits rows");
    if (b_n == 0) throw InvalidArgument("empty batch");
    LossResult r{0.0, Matrix(b_n, k)};
    const double inv_b = 1.0 / static_cast<double>(b_n);
    for (std::size_t b = 0; b < b_n; ++b) {
        if (labels[b] >= k) throw InvalidArgument("label out of range for logits width");
        double mx = logits(b, 0);
        for (std::size_t q = 1; q < k; ++q) mx = std::max(mx, logits(b, q));
        double sum = 0.0;
        for (std::size_t q = 0; q < k; ++q) sum += std::exp(logits(b, q) - mx);
        const double log_sum = std::log(sum);
        r.loss += (log_sum - (logits(b, labels[b]) - mx)) * inv_b;
        for (std::size_t q = 0; q < k; ++q) {
            const double prob = std::exp(logits(b, q) - mx - log_sum);
            r.dlogits(b, q) = (prob - (q == labels[b] ? 1.0 : 0.0)) * inv_b;
        }
    }
    return r;
}

Params backward(const Network& net, const ForwardCache& cache, const Matrix& dlogits) {
    if (cache.network_id != net.id() || cache.version != net.version())
        throw InvalidState("forward cache is stale: network parameters changed since the forward pass");
    const std::size_t n_layers = net.layers().size();
    if (cache.activations.size() != n_layers + 1) throw InvalidState("forward cache is incomplete");
    const Tensor& out = cache.activations.back();
    if (dlogits.rows() != out.dim(0) || dlogits.cols() != out.dim(1))
        throw InvalidArgument("dlogits shape does not match the cached logits");

    Params grads = zeros_like(net.params());
    Tensor upstream = to_tensor(dlogits);
    for (std::size_t l = n_layers; l-- > 0;) {
        const Tensor& in = cache.activations[l];
        const bool want_input = l > 0;
        const auto& spec = net.layers()[l];
        const auto& p = net.params()[l];
        Tensor down = std::visit(
            Overloaded{
                [&](const Conv2d& c) { return conv_backward(c, p, in, upstream, grads[l], want_input); },
                [&](const Dense&) { return dense_backward(p, in, upstream, grads[l], want_input); },
                [&](const MaxPool2x2&) {
                    Tensor d(in.dims());
                    const auto& argmax = cache.pool_argmax[l];
                    for (std::size_t o = 0; o < argmax.size(); ++o) d[argmax[o]] += upstream[o];
                    return d;
                },
                [&](const TanhActivation&) {
                    const Tensor& y = cache.activations[l + 1];
                    Tensor d = upstream;
                    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 1.0 - y[i] * y[i];
                    return d;
                },
                [&](const Flatten&) { return reshape(upstream, in.dims()); },
            },
            spec);
        upstream = std::move(down);
    }
    return grads;
}

std::vector<std::size_t> argmax_rows(const Matrix& logits) {
    std::vector<std::size_t> out(logits.rows(), 0);
    for (std::size_t b = 0; b < logits.rows(); ++b)
        for (std::size_t q = 1; q < logits.cols(); ++q)
            if (logits(b, q) > logits(b, out[b])) out[b] = q;
    return out;
}

} // namespace ttnmtl
