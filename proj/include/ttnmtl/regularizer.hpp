#pragma once

#include "ttnmtl/linalg.hpp"
#include "ttnmtl/tensor.hpp"

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace ttnmtl {

/// Tensor trace norm families. For an N-way tensor W whose last axis indexes tasks:
///   LAF     gamma * ||W_(N)||_*                        (1 term)
///   Tucker  sum_i gamma_i ||W_(i)||_*,   i = 1..N     (mode flattenings)
///   TT      sum_i gamma_i ||W_[i]||_*,   i = 1..N-1   (prefix flattenings)
enum class NormKind { Laf, Tucker, Tt };

inline constexpr std::array<NormKind, 3> kAllNormKinds{NormKind::Laf, NormKind::Tucker, NormKind::Tt};

std::string_view to_string(NormKind kind);
/// Accepts LAF/TUCKER/TT in any case. Throws InvalidArgument otherwise.
NormKind parse_norm_kind(std::string_view name);

/// Number of terms the kind has on a tensor of the given order.
std::size_t term_count(NormKind kind, std::size_t order);

struct NormSpec {
    NormKind kind = NormKind::Laf;
    std::vector<double> gammas;

    /// Every term weighted by `gamma`, sized for a tensor of `order` axes.
    static NormSpec uniform(NormKind kind, std::size_t order, double gamma);
};

struct NormTerm {
    std::size_t index;  // 1-based mode (LAF/Tucker) or split point (TT)
    double gamma;
    double value;  // unweighted trace norm of the flattening
};

struct NormReport {
    std::vector<NormTerm> terms;
    double total = 0.0;  // sum of gamma * value
};

NormReport laf_norm(const Tensor& w, const NormSpec& spec, const SvdOptions& options = {});
NormReport tucker_norm(const Tensor& w, const NormSpec& spec, const SvdOptions& options = {});
NormReport tt_norm(const Tensor& w, const NormSpec& spec, const SvdOptions& options = {});

/// Dispatches on spec.kind.
NormReport tensor_norm(const Tensor& w, const NormSpec& spec, const SvdOptions& options = {});

/// Subgradient of tensor_norm(w, spec).total with respect to w. Each term's
/// matrix subgradient is folded back through the inverse of its flattening.
/// Terms with gamma = 0 are skipped.
Tensor norm_grad(const Tensor& w, const NormSpec& spec, const SvdOptions& options = {});

struct NormValueAndGrad {
    NormReport report;
    Tensor grad;
};

/// tensor_norm and norm_grad from a single SVD per term.
NormValueAndGrad norm_value_and_grad(const Tensor& w, const NormSpec& spec, const SvdOptions& options = {});

} // namespace ttnmtl
