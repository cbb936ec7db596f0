#include "ttnmtl/regularizer.hpp"

#include "ttnmtl/errors.hpp"

#include <algorithm>
#include <cctype>
#include <string>

namespace ttnmtl {

namespace {

void validate(const Tensor& w, const NormSpec& spec, NormKind expected) {
    if (spec.kind != expected)
        throw InvalidArgument("norm spec kind " + std::string(to_string(spec.kind)) + " passed to " +
                              std::string(to_string(expected)) + " norm");
    if (w.order() < 2) throw InvalidArgument("tensor norms need a tensor of order >= 2");
    const std::size_t want = term_count(spec.kind, w.order());
    if (spec.gammas.size() != want)
        throw InvalidArgument(std::string(to_string(spec.kind)) + " norm on an order-" +
                              std::to_string(w.order()) + " tensor needs " + std::to_string(want) +
                              " gammas, got " + std::to_string(spec.gammas.size()));
    for (double g : spec.gammas)
        if (!(g >= 0.0)) throw InvalidArgument("norm weights must be nonnegative");
}

// Flattening used by term k (0-based) of the given kind.
Matrix flatten_term(const Tensor& w, NormKind kind, std::size_t k) {
    switch (kind) {
    case NormKind::Laf: return mode_flatten(w, w.order() - 1);
    case NormKind::Tucker: return mode_flatten(w, k);
    case NormKind::Tt: return prefix_flatten(w, k + 1);
    }
    throw InvalidArgument("unknown norm kind");
}

Tensor fold_term(const Matrix& m, NormKind kind, std::size_t k, const Dims& dims) {
    switch (kind) {
    case NormKind::Laf: return fold_mode(m, dims.size() - 1, dims);
    case NormKind::Tucker: return fold_mode(m, k, dims);
    case NormKind::Tt: return fold_prefix(m, dims);
    }
    throw InvalidArgument("unknown norm kind");
}

std::size_t term_label(const Tensor& w, NormKind kind, std::size_t k) {
    return kind == NormKind::Laf ? w.order() : k + 1;
}

NormReport evaluate(const Tensor& w, const NormSpec& spec, NormKind expected, const SvdOptions& options) {
    validate(w, spec, expected);
    NormReport report;
    for (std::size_t k = 0; k < spec.gammas.size(); ++k) {
        const double value = trace_norm(flatten_term(w, spec.kind, k), options);
        report.terms.push_back({term_label(w, spec.kind, k), spec.gammas[k], value});
    }
    // reduce in index order so totals are reproducible
    for (const auto& t : report.terms) report.total += t.gamma * t.value;
    return report;
}

} // namespace

std::string_view to_string(NormKind kind) {
    switch (kind) {
    case NormKind::Laf: return "LAF";
    case NormKind::Tucker: return "TUCKER";
    case NormKind::Tt: return "TT";
    }
    return "?";
}

NormKind parse_norm_kind(std::string_view name) {
    std::string upper(name);
    std::transform(upper.begin(), upper.end(), upper.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    for (auto kind : kAllNormKinds)
        if (upper == to_string(kind)) return kind;
    throw InvalidArgument("unknown norm kind '" + std::string(name) + "' (expected LAF, TUCKER or TT)");
}

std::size_t term_count(NormKind kind, std::size_t order) {
    switch (kind) {
    case NormKind::Laf: return 1;
    case NormKind::Tucker: return order;
    case NormKind::Tt: return order == 0 ? 0 : order - 1;
    }
    return 0;
}

NormSpec NormSpec::uniform(NormKind kind, std::size_t order, double gamma) {
    return NormSpec{kind, std::vector<double>(term_count(kind, order), gamma)};
}

NormReport laf_norm(const Tensor& w, const NormSpec& spec, const SvdOptions& options) {
    return evaluate(w, spec, NormKind::Laf, options);
}

NormReport tucker_norm(const Tensor& w, const NormSpec& spec, const SvdOptions& options) {
    return evaluate(w, spec, NormKind::Tucker, options);
}

NormReport tt_norm(const Tensor& w, const NormSpec& spec, const SvdOptions& options) {
    return evaluate(w, spec, NormKind::Tt, options);
}

NormReport tensor_norm(const Tensor& w, const NormSpec& spec, const SvdOptions& options) {
    return evaluate(w, spec, spec.kind, options);
}

NormValueAndGrad norm_value_and_grad(const Tensor& w, const NormSpec& spec, const SvdOptions& options) {
    validate(w, spec, spec.kind);
    NormValueAndGrad out{{}, Tensor(w.dims())};
    for (std::size_t k = 0; k < spec.gammas.size(); ++k) {
        const Matrix flat = flatten_term(w, spec.kind, k);
        const SvdResult f = svd(flat, options);
        double value = 0.0;
        for (double s : f.sigma) value += s;
        out.report.terms.push_back({term_label(w, spec.kind, k), spec.gammas[k], value});
        if (spec.gammas[k] == 0.0 || f.sigma.front() == 0.0) continue;
        Matrix g(flat.rows(), flat.cols());
        const double cutoff = kSubgradRankTolerance * f.sigma.front();
        for (std::size_t r = 0; r < f.sigma.size() && f.sigma[r] > cutoff; ++r)
            for (std::size_t i = 0; i < g.rows(); ++i) {
                const double uir = f.u(i, r);
                for (std::size_t j = 0; j < g.cols(); ++j) g(i, j) += uir * f.v(j, r);
            }
        axpy(spec.gammas[k], fold_term(g, spec.kind, k, w.dims()), out.grad);
    }
    for (const auto& t : out.report.terms) out.report.total += t.gamma * t.value;
    return out;
}

Tensor norm_grad(const Tensor& w, const NormSpec& spec, const SvdOptions& options) {
    validate(w, spec, spec.kind);
    Tensor grad(w.dims());
    for (std::size_t k = 0; k < spec.gammas.size(); ++k) {
        if (spec.gammas[k] == 0.0) continue;
        const Matrix g = trace_norm_subgrad(flatten_term(w, spec.kind, k), options);
        axpy(spec.gammas[k], fold_term(g, spec.kind, k, w.dims()), grad);
    }
    return grad;
}

} // namespace ttnmtl
