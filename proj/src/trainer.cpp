#include "ttnmtl/trainer.hpp"

#include "ttnmtl/random.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <string>

namespace ttnmtl {

std::string_view to_string(Method method) {
    switch (method) {
    case Method::Stl: return "STL";
    case Method::Laf: return "LAF";
    case Method::Tucker: return "TUCKER";
    case Method::Tt: return "TT";
    }
    return "?";
}

Method parse_method(std::string_view name) {
    std::string upper(name);
    std::transform(upper.begin(), upper.end(), upper.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    for (auto m : kAllMethods)
        if (upper == to_string(m)) return m;
    throw InvalidArgument("unknown method '" + std::string(name) + "' (expected STL, LAF, TUCKER or TT)");
}

std::optional<NormKind> norm_kind(Method method) {
    switch (method) {
    case Method::Stl: return std::nullopt;
    case Method::Laf: return NormKind::Laf;
    case Method::Tucker: return NormKind::Tucker;
    case Method::Tt: return NormKind::Tt;
    }
    return std::nullopt;
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw InvalidArgument("learning rate must be finite and nonnegative");
    if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
    if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
    if (!(gamma_default >= 0.0)) throw InvalidArgument("gamma must be nonnegative");
    for (const auto& o : overrides)
        if (o.gammas)
            for (double g : *o.gammas)
                if (!(g >= 0.0)) throw InvalidArgument("layer " + std::to_string(o.layer + 1) + ": gamma must be nonnegative");
}

std::vector<Network> build_networks(const MultiTaskDataset& ds, const TrainConfig& cfg) {
    ds.validate();
    const Dims shape = ds.image_shape();
    std::vector<Network> nets;
    for (std::size_t t = 0; t < ds.task_count(); ++t) {
        auto layers = resolve_architecture(cfg.body, shape, ds.tasks[t].class_count);
        nets.push_back(Network::initialized(std::move(layers), shape, derive_seed(cfg.seed, 100 + t)));
    }
    return nets;
}

std::vector<std::size_t> shareable_layers(std::span<const Network> nets, std::span<const LayerOverride> overrides) {
    if (nets.empty()) throw InvalidArgument("no networks");
    const std::size_t n_layers = nets.front().layers().size();
    for (const auto& n : nets)
        if (n.layers().size() != n_layers || n.input_shape() != nets.front().input_shape())
            throw InvalidArgument("task networks do not share an architecture");
    for (std::size_t l = 0; l < n_layers; ++l)
        for (const auto& n : nets)
            if (n.layers()[l].index() != nets.front().layers()[l].index())
                throw InvalidArgument("task networks differ in the type of layer " + std::to_string(l + 1));

    auto same_shape = [&](std::size_t l) {
        if (nets.front().params()[l].empty()) return false;
        return std::all_of(nets.begin(), nets.end(), [&](const Network& n) {
            return n.params()[l].weight.dims() == nets.front().params()[l].weight.dims();
        });
    };
    std::vector<std::size_t> out;
    for (std::size_t l = 0; l < n_layers; ++l) {
        bool shared = same_shape(l);
        for (const auto& o : overrides)
            if (o.layer == l && o.shareable) {
                if (*o.shareable && !same_shape(l))
                    throw InvalidArgument("layer " + std::to_string(l + 1) +
                                          " cannot be shared: weight shapes differ across tasks");
                shared = *o.shareable;
            }
        if (shared) out.push_back(l);
    }
    for (const auto& o : overrides)
        if (o.layer >= n_layers) throw InvalidArgument("override names layer " + std::to_string(o.layer + 1) +
                                                       " but the network has " + std::to_string(n_layers));
    return out;
}

Tensor stacked_weights(std::span<const Network> nets, std::size_t layer) {
    std::vector<Tensor> ws;
    for (const auto& n : nets) ws.push_back(n.params().at(layer).weight);
    return stack_last(ws);
}

std::optional<NormSpec> layer_norm_spec(const TrainConfig& cfg, std::size_t layer, std::size_t stacked_order) {
    const auto kind = norm_kind(cfg.method);
    if (!kind) return std::nullopt;
    NormSpec spec = NormSpec::uniform(*kind, stacked_order, cfg.gamma_default);
    for (const auto& o : cfg.overrides)
        if (o.layer == layer && o.gammas) {
            if (o.gammas->size() != spec.gammas.size())
                throw InvalidArgument("layer " + std::to_string(layer + 1) + ": " + std::string(to_string(*kind)) +
                                      " needs " + std::to_string(spec.gammas.size()) + " gammas, got " +
                                      std::to_string(o.gammas->size()));
            spec.gammas = *o.gammas;
        }
    return spec;
}

ObjectiveResult total_objective(std::span<const Network> nets, std::span<const Batch> batches,
                                const TrainConfig& cfg) {
    if (nets.size() != batches.size()) throw InvalidArgument("one batch per task network required");
    const auto shared = shareable_layers(nets, cfg.overrides);

    ObjectiveResult r;
    double ce_sum = 0.0;
    for (std::size_t t = 0; t < nets.size(); ++t) {
        auto fwd = forward(nets[t], batches[t].images);
        auto loss = softmax_cross_entropy(fwd.logits, batches[t].labels);
        r.task_ce.push_back(loss.loss);
        ce_sum += loss.loss;
        r.grads.push_back(backward(nets[t], fwd.cache, loss.dlogits));
    }

    for (auto l : shared) {
        const Tensor stacked = stacked_weights(nets, l);
        const auto spec = layer_norm_spec(cfg, l, stacked.order());
        if (!spec) continue;
        if (std::all_of(spec->gammas.begin(), spec->gammas.end(), [](double g) { return g == 0.0; })) continue;
        const auto eval = norm_value_and_grad(stacked, *spec);
        r.regularizer += eval.report.total;
        for (std::size_t t = 0; t < nets.size(); ++t) axpy(1.0, slice_last(eval.grad, t), r.grads[t][l].weight);
    }
    r.objective = ce_sum + r.regularizer;
    return r;
}

std::array<double, 3> unit_norms(const Tensor& stacked) {
    std::array<double, 3> out{};
    for (std::size_t k = 0; k < kAllNormKinds.size(); ++k)
        out[k] = tensor_norm(stacked, NormSpec::uniform(kAllNormKinds[k], stacked.order(), 1.0)).total;
    return out;
}

namespace {

constexpr std::size_t kEvalChunk = 256;

template <typename Fn>
void for_each_chunk(const TaskData& task, Fn&& fn) {
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < task.size(); start += kEvalChunk) {
        idx.resize(std::min(kEvalChunk, task.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        fn(idx);
    }
}

} // namespace

Accuracy evaluate(std::span<const Network> nets, const MultiTaskDataset& test) {
    if (nets.size() != test.task_count()) throw InvalidArgument("one network per test task required");
    Accuracy acc;
    for (std::size_t t = 0; t < nets.size(); ++t) {
        std::size_t correct = 0;
        for_each_chunk(test.tasks[t], [&](std::span<const std::size_t> idx) {
            const auto pred = argmax_rows(predict_logits(nets[t], test.tasks[t].images(idx)));
            for (std::size_t b = 0; b < idx.size(); ++b) correct += pred[b] == test.tasks[t].labels[idx[b]];
        });
        const std::size_t n = test.tasks[t].size();
        acc.per_task.push_back(n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0);
    }
    if (!acc.per_task.empty())
        acc.macro = std::accumulate(acc.per_task.begin(), acc.per_task.end(), 0.0) /
                    static_cast<double>(acc.per_task.size());
    return acc;
}

std::vector<double> dataset_ce(std::span<const Network> nets, const MultiTaskDataset& data) {
    if (nets.size() != data.task_count()) throw InvalidArgument("one network per task required");
    std::vector<double> out;
    for (std::size_t t = 0; t < nets.size(); ++t) {
        double sum = 0.0;
        for_each_chunk(data.tasks[t], [&](std::span<const std::size_t> idx) {
            const auto loss = softmax_cross_entropy(predict_logits(nets[t], data.tasks[t].images(idx)),
                                                    data.tasks[t].labels_at(idx));
            sum += loss.loss * static_cast<double>(idx.size());
        });
        out.push_back(sum / static_cast<double>(data.tasks[t].size()));
    }
    return out;
}

namespace {

EvalRecord evaluate_state(std::span<const Network> nets, const std::vector<std::size_t>& shared,
                          const MultiTaskDataset& train_set, const MultiTaskDataset& test_set, std::size_t step,
                          std::size_t epoch) {
    EvalRecord e;
    e.step = step;
    e.epoch = epoch;
    e.train_ce = dataset_ce(nets, train_set);
    e.test_acc = evaluate(nets, test_set).per_task;
    for (auto l : shared) {
        const auto norms = unit_norms(stacked_weights(nets, l));
        e.layer_norms.push_back(norms);
        for (std::size_t k = 0; k < 3; ++k) e.norm_totals[k] += norms[k];
    }
    return e;
}

bool params_finite(const Network& net) {
    auto finite = [](double v) { return std::isfinite(v); };
    for (const auto& p : net.params())
        if (!std::all_of(p.weight.data().begin(), p.weight.data().end(), finite) ||
            !std::all_of(p.bias.data().begin(), p.bias.data().end(), finite))
            return false;
    return true;
}

} // namespace

TrainResult train(const MultiTaskDataset& train_set, const MultiTaskDataset& test_set, const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.task_count() < 1) throw InvalidArgument("training needs at least one task");
    if (test_set.task_count() != train_set.task_count())
        throw InvalidArgument("train and test sets have different task counts");

    TrainResult result;
    result.nets = build_networks(train_set, cfg);
    auto& nets = result.nets;
    MetricsLog& log = result.log;
    log.task_count = nets.size();
    log.shared_layers = shareable_layers(nets, cfg.overrides);
    log.evals.push_back(evaluate_state(nets, log.shared_layers, train_set, test_set, 0, 0));

    const std::size_t T = nets.size();
    std::vector<std::size_t> batches_per_task(T);
    std::size_t steps_per_epoch = 0;
    for (std::size_t t = 0; t < T; ++t) {
        batches_per_task[t] = (train_set.tasks[t].size() + cfg.batch_size - 1) / cfg.batch_size;
        steps_per_epoch = std::max(steps_per_epoch, batches_per_task[t]);
    }

    std::size_t step = 0;
    std::vector<std::vector<std::size_t>> order(T);
    std::vector<Batch> batches(T);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t t = 0; t < T; ++t) {
            order[t].resize(train_set.tasks[t].size());
            std::iota(order[t].begin(), order[t].end(), 0);
            Rng rng(derive_seed(cfg.seed, 1'000'000 + epoch * T + t));
            rng.shuffle(std::span(order[t]));
        }
        for (std::size_t k = 0; k < steps_per_epoch; ++k) {
            for (std::size_t t = 0; t < T; ++t) {
                const std::size_t b = k % batches_per_task[t];
                const std::size_t begin = b * cfg.batch_size;
                const std::size_t end = std::min(begin + cfg.batch_size, order[t].size());
                std::span<const std::size_t> idx(order[t].data() + begin, end - begin);
                batches[t] = Batch{train_set.tasks[t].images(idx), train_set.tasks[t].labels_at(idx)};
            }
            ObjectiveResult obj;
            try {
                obj = total_objective(nets, batches, cfg);
            } catch (const TrainingDiverged&) {
                throw;
            } catch (const NumericalFailure& e) {
                throw TrainingDiverged("objective became non-finite at step " + std::to_string(step + 1) + " (" +
                                           e.what() + ")",
                                       log);
            }
            if (!std::isfinite(obj.objective))
                throw TrainingDiverged("objective became non-finite at step " + std::to_string(step + 1), log);
            for (std::size_t t = 0; t < T; ++t) {
                nets[t].apply_update(obj.grads[t], cfg.learning_rate);
                if (!params_finite(nets[t]))
                    throw TrainingDiverged("parameters became non-finite at step " + std::to_string(step + 1), log);
            }
            ++step;
            log.steps.push_back({step, obj.task_ce, obj.regularizer});
        }
        try {
            log.evals.push_back(evaluate_state(nets, log.shared_layers, train_set, test_set, step, epoch));
        } catch (const NumericalFailure& e) {
            throw TrainingDiverged("evaluation failed after epoch " + std::to_string(epoch) + " (" + e.what() + ")",
                                   log);
        }
    }
    return result;
}

double sharing_strength(const MetricsLog& log, std::size_t shared_index, NormKind kind) {
    if (log.evals.empty()) throw InvalidState("metrics log has no evaluations");
    if (shared_index >= log.shared_layers.size()) throw InvalidArgument("shared layer index out of range");
    const auto k = static_cast<std::size_t>(std::find(kAllNormKinds.begin(), kAllNormKinds.end(), kind) -
                                            kAllNormKinds.begin());
    const double initial = log.evals.front().layer_norms.at(shared_index)[k];
    const double final_norm = log.evals.back().layer_norms.at(shared_index)[k];
    if (initial == 0.0) throw InvalidState("initial norm is zero; sharing strength undefined");
    return 1.0 - final_norm / initial;
}

} // namespace ttnmtl
