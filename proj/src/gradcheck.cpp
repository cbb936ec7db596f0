#include "ttnmtl/gradcheck.hpp"

#include "ttnmtl/linalg.hpp"
#include "ttnmtl/random.hpp"
#include "ttnmtl/regularizer.hpp"

#include <algorithm>
#include <cmath>

namespace ttnmtl {

std::vector<double> finite_differences(std::span<double> x, const std::function<double()>& f, double h) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double up = f();
        x[i] = saved - h;
        const double down = f();
        x[i] = saved;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

double scaled_error(std::span<const double> analytic, std::span<const double> numeric) {
    double scale = 1e-8, worst = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
        scale = std::max(scale, std::abs(numeric[i]));
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]));
    }
    return worst / scale;
}

namespace {

Tensor gaussian(Dims dims, Rng& rng) {
    Tensor t(std::move(dims));
    for (auto& v : t.mutable_data()) v = rng.normal();
    return t;
}

Tensor unit_images(Dims dims, Rng& rng) {
    Tensor t(std::move(dims));
    for (auto& v : t.mutable_data()) v = rng.uniform();
    return t;
}

std::vector<std::size_t> random_labels(std::size_t n, std::size_t classes, Rng& rng) {
    std::vector<std::size_t> labels(n);
    for (auto& l : labels) l = rng.below(classes);
    return labels;
}

// Full-rank matrix with every singular value above 0.1, found by redrawing.
Matrix well_conditioned(std::size_t rows, std::size_t cols, Rng& rng) {
    for (;;) {
        Matrix m(rows, cols);
        for (auto& v : m.mutable_data()) v = rng.normal();
        const auto s = svd(m).sigma;
        if (s.back() > 0.1) return m;
    }
}

std::vector<CheckResult> check_linalg(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 1));
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const std::size_t rows = 2 + rng.below(5), cols = 2 + rng.below(5);
        Matrix m = well_conditioned(rows, cols, rng);
        const Matrix g = trace_norm_subgrad(m);
        const auto fd = finite_differences(m.mutable_data(), [&] { return trace_norm(m); });
        for (std::size_t k = 0; k < fd.size(); ++k) worst = std::max(worst, std::abs(g.data()[k] - fd[k]));
    }
    return {{"linalg", "trace_norm_subgrad, 20 matrices, max abs error", worst, 1e-5}};
}

std::vector<CheckResult> check_regularizer(std::uint64_t seed) {
    std::vector<CheckResult> out;
    Rng rng(derive_seed(seed, 2));
    for (auto kind : kAllNormKinds) {
        Tensor w = gaussian({3, 4, 2}, rng);
        NormSpec spec = NormSpec::uniform(kind, 3, 1.0);
        for (auto& g : spec.gammas) g = rng.uniform(0.5, 1.5);
        const Tensor g = norm_grad(w, spec);
        const auto fd = finite_differences(w.mutable_data(), [&] { return tensor_norm(w, spec).total; });
        out.push_back({"regularizer", std::string(to_string(kind)) + " norm_grad on 3x4x2", scaled_error(g.data(), fd),
                       1e-4});
    }
    return out;
}

std::vector<CheckResult> check_nn(std::uint64_t seed) {
    std::vector<CheckResult> out;
    Rng rng(derive_seed(seed, 3));

    Matrix logits(4, 3);
    for (auto& v : logits.mutable_data()) v = 3.0 * rng.normal();
    const auto labels3 = random_labels(4, 3, rng);
    const auto ce = softmax_cross_entropy(logits, labels3);
    const auto fd_logits =
        finite_differences(logits.mutable_data(), [&] { return softmax_cross_entropy(logits, labels3).loss; });
    out.push_back({"nn", "softmax_cross_entropy logits", scaled_error(ce.dlogits.data(), fd_logits), 1e-6});

    Network net = tiny_cnn(derive_seed(seed, 4));
    const Tensor images = unit_images({3, 8, 8, 1}, rng);
    const auto labels = random_labels(3, 2, rng);
    const auto fwd = forward(net, images);
    const Params grads = backward(net, fwd.cache, softmax_cross_entropy(fwd.logits, labels).dlogits);
    auto loss = [&] { return softmax_cross_entropy(forward(net, images).logits, labels).loss; };

    for (std::size_t l = 0; l < grads.size(); ++l) {
        if (grads[l].empty()) continue;
        const std::string layer = "tiny CNN layer " + std::to_string(l + 1);
        auto fd_w = finite_differences(net.mutable_params()[l].weight.mutable_data(), loss);
        out.push_back({"nn", layer + " weight", scaled_error(grads[l].weight.data(), fd_w), 1e-4});
        auto fd_b = finite_differences(net.mutable_params()[l].bias.mutable_data(), loss);
        out.push_back({"nn", layer + " bias", scaled_error(grads[l].bias.data(), fd_b), 1e-4});
    }
    return out;
}

std::vector<CheckResult> check_trainer(std::uint64_t seed) {
    std::vector<CheckResult> out;
    for (auto method : kAllMethods) {
        ToyProblem toy = toy_two_task_problem(derive_seed(seed, 5));
        TrainConfig cfg;
        cfg.method = method;
        cfg.gamma_default = 0.5;
        const auto obj = total_objective(toy.nets, toy.batches, cfg);
        auto f = [&] { return total_objective(toy.nets, toy.batches, cfg).objective; };

        std::vector<double> analytic, numeric;
        for (std::size_t t = 0; t < toy.nets.size(); ++t)
            for (std::size_t l = 0; l < obj.grads[t].size(); ++l) {
                if (obj.grads[t][l].empty()) continue;
                for (Tensor* p : {&toy.nets[t].mutable_params()[l].weight, &toy.nets[t].mutable_params()[l].bias}) {
                    const auto fd = finite_differences(p->mutable_data(), f);
                    numeric.insert(numeric.end(), fd.begin(), fd.end());
                }
                const auto& g = obj.grads[t][l];
                analytic.insert(analytic.end(), g.weight.data().begin(), g.weight.data().end());
                analytic.insert(analytic.end(), g.bias.data().begin(), g.bias.data().end());
            }
        out.push_back({"trainer", std::string(to_string(method)) + " total_objective on two-task toy",
                       scaled_error(analytic, numeric), 1e-4});
    }
    return out;
}

} // namespace

ToyProblem toy_two_task_problem(std::uint64_t seed) {
    const std::vector<LayerSpec> body{Flatten{}, Dense{4, 3}, TanhActivation{}};
    const Dims shape{2, 2, 1};
    const std::size_t classes[2] = {2, 3};
    Rng rng(seed);
    ToyProblem toy;
    for (std::size_t t = 0; t < 2; ++t) {
        toy.nets.push_back(Network::initialized(resolve_architecture(body, shape, classes[t]), shape,
                                                derive_seed(seed, 10 + t)));
        toy.batches.push_back({unit_images({5, 2, 2, 1}, rng), random_labels(5, classes[t], rng)});
    }
    return toy;
}

Network tiny_cnn(std::uint64_t seed) {
    const Dims shape{8, 8, 1};
    std::vector<LayerSpec> layers{Conv2d{3, 3, 1, 2}, MaxPool2x2{}, TanhActivation{}, Flatten{}, Dense{18, 2}};
    Network net = Network::initialized(layers, shape, seed);
    // Nonzero biases so their gradients are exercised away from the origin.
    Rng rng(derive_seed(seed, 1));
    for (auto& p : net.mutable_params())
        if (!p.empty())
            for (auto& b : p.bias.mutable_data()) b = 0.1 * rng.normal();
    return net;
}

std::vector<CheckResult> run_gradcheck(std::uint64_t seed, std::span<const std::string> only) {
    for (const auto& name : only)
        if (std::find(gradcheck_suites().begin(), gradcheck_suites().end(), name) == gradcheck_suites().end())
            throw InvalidArgument("unknown gradcheck suite '" + name + "' (expected linalg, regularizer, nn or trainer)");
    auto wanted = [&](const std::string& name) {
        return only.empty() || std::find(only.begin(), only.end(), name) != only.end();
    };
    std::vector<CheckResult> out;
    auto append = [&](std::vector<CheckResult> r) { out.insert(out.end(), r.begin(), r.end()); };
    if (wanted("linalg")) append(check_linalg(seed));
    if (wanted("regularizer")) append(check_regularizer(seed));
    if (wanted("nn")) append(check_nn(seed));
    if (wanted("trainer")) append(check_trainer(seed));
    return out;
}

} // namespace ttnmtl
