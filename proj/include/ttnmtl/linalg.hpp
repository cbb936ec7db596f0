#pragma once

#include "ttnmtl/tensor.hpp"

#include <vector>

namespace ttnmtl {

/// Iteration controls for svd(). A sweep visits every column pair once; a
/// pair is rotated while |<a_p,a_q>| > tolerance * |a_p| |a_q|.
struct SvdOptions {
    int max_sweeps = 100;
    double tolerance = 1e-12;
};

/// Thin SVD m = u * diag(sigma) * v^T with r = min(rows, cols):
/// u is rows x r, v is cols x r, sigma descending and nonnegative.
struct SvdResult {
    Matrix u;
    std::vector<double> sigma;
    Matrix v;
};

/// One-sided Jacobi SVD. Throws InvalidArgument on non-finite input and
/// NumericalFailure (with the residual pair ratio) when the sweep cap is hit.
SvdResult svd(const Matrix& m, const SvdOptions& options = {});

/// Nuclear norm: sum of singular values.
double trace_norm(const Matrix& m, const SvdOptions& options = {});

/// Relative cutoff below which singular directions are dropped from the
/// subgradient: sigma <= kSubgradRankTolerance * sigma_max.
inline constexpr double kSubgradRankTolerance = 1e-10;

/// Subgradient U V^T of the trace norm, built from the singular pairs above
/// the rank cutoff. The zero matrix maps to zero. Its spectral norm is <= 1.
Matrix trace_norm_subgrad(const Matrix& m, const SvdOptions& options = {});

} // namespace ttnmtl
