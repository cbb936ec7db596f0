#pragma once

#include "ttnmtl/tensor.hpp"

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

namespace ttnmtl {

/// Valid (unpadded) stride-1 convolution; kernel stored kh x kw x cin x cout.
struct Conv2d {
    std::size_t kernel_h = 0, kernel_w = 0, in_channels = 0, out_channels = 0;
    bool operator==(const Conv2d&) const = default;
};

/// Affine map; weight stored in x out.
struct Dense {
    std::size_t in_features = 0, out_features = 0;
    bool operator==(const Dense&) const = default;
};

/// 2x2 window, stride 2, odd trailing row/column dropped. Ties go to the
/// first element in row-major window order.
struct MaxPool2x2 {
    bool operator==(const MaxPool2x2&) const = default;
};

struct TanhActivation {
    bool operator==(const TanhActivation&) const = default;
};

struct Flatten {
    bool operator==(const Flatten&) const = default;
};

using LayerSpec = std::variant<Conv2d, Dense, MaxPool2x2, TanhActivation, Flatten>;

bool has_parameters(const LayerSpec& spec);

/// Per-example output shape of every layer ({H,W,C} or {F}) for an input of
/// shape {H,W,C}. Throws InvalidArgument when the sequence does not type-check.
std::vector<Dims> infer_shapes(std::span<const LayerSpec> layers, const Dims& input_shape);

/// Fills in the input extents of a layer list (Conv2d::in_channels,
/// Dense::in_features may be left 0) and appends a Dense head with
/// `classes` outputs.
std::vector<LayerSpec> resolve_architecture(std::span<const LayerSpec> body, const Dims& input_shape,
                                            std::size_t classes);

/// Network body for 105x105 monochrome characters: three conv+pool+tanh
/// stages (8 5x5, 12 3x3, 16 3x3 filters) and a 64-unit tanh layer.
std::vector<LayerSpec> omniglot_body();

/// Scaled-down body for 16x16 synthetic images.
std::vector<LayerSpec> small_body();

/// Weight and bias of one layer. Both are empty (order 0) for layers
/// without parameters.
struct LayerParams {
    Tensor weight;
    Tensor bias;
    bool empty() const noexcept { return weight.order() == 0; }
    bool operator==(const LayerParams&) const = default;
};

using Params = std::vector<LayerParams>;

/// Glorot-uniform weights, a = sqrt(6 / (fan_in + fan_out)), zero biases.
/// Conv fans are kh*kw*cin and kh*kw*cout.
Params init_params(std::span<const LayerSpec> layers, std::uint64_t seed);

/// Zero tensors shaped like params.
Params zeros_like(const Params& params);

/// Images B x H x W x C in [0,1] with one class index per image.
struct Batch {
    Tensor images;
    std::vector<std::size_t> labels;
};

class Network;

/// Intermediates recorded by forward(); valid only for the network state it
/// was produced from.
struct ForwardCache {
    std::uint64_t network_id = 0;
    std::uint64_t version = 0;
    std::vector<Tensor> activations;                    // [0] input, [l+1] output of layer l
    std::vector<std::vector<std::size_t>> pool_argmax;  // per layer; empty unless pooling
};

class Network {
public:
    Network(std::vector<LayerSpec> layers, Dims input_shape, Params params);

    static Network initialized(std::vector<LayerSpec> layers, Dims input_shape, std::uint64_t seed);

    const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
    const Dims& input_shape() const noexcept { return input_shape_; }
    const Params& params() const noexcept { return params_; }
    std::size_t output_features() const noexcept { return output_features_; }

    /// Any mutation invalidates outstanding forward caches.
    Params& mutable_params() noexcept {
        ++version_;
        return params_;
    }

    /// params -= learning_rate * grads
    void apply_update(const Params& grads, double learning_rate);

    std::uint64_t id() const noexcept { return id_; }
    std::uint64_t version() const noexcept { return version_; }

private:
    std::vector<LayerSpec> layers_;
    Dims input_shape_;
    Params params_;
    std::size_t output_features_ = 0;
    std::uint64_t id_;
    std::uint64_t version_ = 0;
};

struct ForwardResult {
    Matrix logits;  // B x K
    ForwardCache cache;
};

ForwardResult forward(const Network& net, const Tensor& images);

/// Logits only, no cache retained.
Matrix predict_logits(const Network& net, const Tensor& images);

struct LossResult {
    double loss;      // mean over the batch of -log softmax(logits)[label]
    Matrix dlogits;   // (softmax - onehot) / B
};

LossResult softmax_cross_entropy(const Matrix& logits, std::span<const std::size_t> labels);

/// Parameter gradients given d(loss)/d(logits). Throws InvalidState if the
/// cache was not produced by this network at its current version.
Params backward(const Network& net, const ForwardCache& cache, const Matrix& dlogits);

/// Row-wise argmax (first maximum wins).
std::vector<std::size_t> argmax_rows(const Matrix& logits);

} // namespace ttnmtl
