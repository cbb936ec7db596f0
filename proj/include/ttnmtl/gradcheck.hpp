#pragma once

#include "ttnmtl/nn.hpp"
#include "ttnmtl/trainer.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ttnmtl {

/// Central differences of f with respect to every entry of x (x is restored).
std::vector<double> finite_differences(std::span<double> x, const std::function<double()>& f, double h = 1e-5);

/// max |a - n| / max(1e-8, max |n|)
double scaled_error(std::span<const double> analytic, std::span<const double> numeric);

struct CheckResult {
    std::string suite;
    std::string name;
    double error = 0.0;
    double threshold = 0.0;
    bool passed() const { return error < threshold; }
};

/// Two tasks with a stacked Dense 4x3 layer and heads of different widths
/// (2 and 3 classes), plus one small random batch per task.
struct ToyProblem {
    std::vector<Network> nets;
    std::vector<Batch> batches;
};
ToyProblem toy_two_task_problem(std::uint64_t seed);

/// The 8x8 single-channel CNN used for backprop checks: conv 3x3x1x2, pool,
/// tanh, dense to 2 classes.
Network tiny_cnn(std::uint64_t seed);

inline const std::vector<std::string>& gradcheck_suites() {
    static const std::vector<std::string> names{"linalg", "regularizer", "nn", "trainer"};
    return names;
}

/// Runs the named suites (all of them when `only` is empty). Unknown names
/// throw InvalidArgument.
std::vector<CheckResult> run_gradcheck(std::uint64_t seed, std::span<const std::string> only = {});

} // namespace ttnmtl
