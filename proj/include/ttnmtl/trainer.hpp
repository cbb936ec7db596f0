#pragma once

#include "ttnmtl/data.hpp"
#include "ttnmtl/errors.hpp"
#include "ttnmtl/nn.hpp"
#include "ttnmtl/regularizer.hpp"

#include <array>
#include <optional>
#include <string_view>
#include <vector>

namespace ttnmtl {

/// STL trains every task independently; the others add the matching tensor
/// trace norm over each stacked shareable layer.
enum class Method { Stl, Laf, Tucker, Tt };

inline constexpr std::array<Method, 4> kAllMethods{Method::Stl, Method::Laf, Method::Tucker, Method::Tt};

std::string_view to_string(Method method);
Method parse_method(std::string_view name);
std::optional<NormKind> norm_kind(Method method);

/// Per-layer adjustments, keyed by 0-based index into the resolved layer list.
struct LayerOverride {
    std::size_t layer = 0;
    std::optional<bool> shareable;
    std::optional<std::vector<double>> gammas;  // one weight per norm term
};

struct TrainConfig {
    Method method = Method::Stl;
    double gamma_default = 0.01;
    double learning_rate = 0.05;
    std::size_t batch_size = 16;
    std::size_t epochs = 100;
    std::uint64_t seed = 0;
    std::vector<LayerSpec> body = small_body();
    std::vector<LayerOverride> overrides;

    void validate() const;
};

/// Builds one network per task (shared body, per-task head sized to the
/// task's class count), each initialized from its own seed stream.
std::vector<Network> build_networks(const MultiTaskDataset& ds, const TrainConfig& cfg);

/// Layers whose weight shapes agree across all tasks, after overrides.
std::vector<std::size_t> shareable_layers(std::span<const Network> nets, std::span<const LayerOverride> overrides);

/// Stacked weights of one layer across tasks, dims weight_dims x T.
Tensor stacked_weights(std::span<const Network> nets, std::size_t layer);

/// The norm applied to a shared layer under cfg.method (empty for STL).
std::optional<NormSpec> layer_norm_spec(const TrainConfig& cfg, std::size_t layer, std::size_t stacked_order);

struct ObjectiveResult {
    double objective = 0.0;           // sum of task CEs + regularizer
    std::vector<double> task_ce;      // mean CE per task on its batch
    double regularizer = 0.0;         // sum over shared layers of the weighted norm total
    std::vector<Params> grads;        // per task
};

/// Objective and gradient of one joint step. Biases receive CE gradients only.
ObjectiveResult total_objective(std::span<const Network> nets, std::span<const Batch> batches,
                                const TrainConfig& cfg);

/// Unit-weight norm of every kind for one stacked tensor, ordered as kAllNormKinds.
std::array<double, 3> unit_norms(const Tensor& stacked);

struct StepRecord {
    std::size_t step = 0;
    std::vector<double> train_ce;  // per task, minibatch CE before the update
    double regularizer = 0.0;
    bool operator==(const StepRecord&) const = default;
};

/// State evaluated after `step` updates (step 0 is the initialization).
struct EvalRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    std::vector<double> train_ce;                   // per task, full training set
    std::vector<double> test_acc;                   // per task
    std::vector<std::array<double, 3>> layer_norms; // per shared layer, unit weights
    std::array<double, 3> norm_totals{};            // summed over shared layers
    bool operator==(const EvalRecord&) const = default;
};

struct MetricsLog {
    std::size_t task_count = 0;
    std::vector<std::size_t> shared_layers;
    std::vector<StepRecord> steps;
    std::vector<EvalRecord> evals;
    bool operator==(const MetricsLog&) const = default;
};

struct Accuracy {
    std::vector<double> per_task;
    double macro = 0.0;
};

Accuracy evaluate(std::span<const Network> nets, const MultiTaskDataset& test);

/// Mean CE of every task on the given data.
std::vector<double> dataset_ce(std::span<const Network> nets, const MultiTaskDataset& data);

struct TrainResult {
    std::vector<Network> nets;
    MetricsLog log;
};

/// Thrown when the objective or a parameter becomes non-finite. Carries the
/// metrics recorded up to the last finite step.
class TrainingDiverged : public NumericalFailure {
public:
    TrainingDiverged(const std::string& what, MetricsLog log)
        : NumericalFailure(what), log_(std::move(log)) {}
    const MetricsLog& log() const noexcept { return log_; }

private:
    MetricsLog log_;
};

/// Plain SGD on total_objective, one minibatch per task per step, evaluated
/// at initialization and after every epoch.
TrainResult train(const MultiTaskDataset& train_set, const MultiTaskDataset& test_set, const TrainConfig& cfg);

/// 1 - final/initial of the unit-weight `kind` norm of the shared layer at
/// position `shared_index` in log.shared_layers. InvalidState if the initial
/// norm is zero or the log has no evaluations.
double sharing_strength(const MetricsLog& log, std::size_t shared_index, NormKind kind);

} // namespace ttnmtl
