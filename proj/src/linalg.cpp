#include "ttnmtl/linalg.hpp"

#include "ttnmtl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ttnmtl {

namespace {

using Column = std::vector<double>;

double dot(const Column& a, const Column& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void rotate(Column& p, Column& q, double c, double s) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double xp = p[i];
        const double xq = q[i];
        p[i] = c * xp - s * xq;
        q[i] = s * xp + c * xq;
    }
}

// Gram-Schmidt completion: fills the columns flagged in `missing` with unit
// vectors orthogonal to every other column.
void complete_basis(std::vector<Column>& cols, const std::vector<bool>& missing) {
    const std::size_t m = cols.empty() ? 0 : cols.front().size();
    std::size_t candidate = 0;
    for (std::size_t k = 0; k < cols.size(); ++k) {
        if (!missing[k]) continue;
        for (; candidate < m; ++candidate) {
            Column e(m, 0.0);
            e[candidate] = 1.0;
            for (int pass = 0; pass < 2; ++pass)
                for (std::size_t j = 0; j < cols.size(); ++j) {
                    if (j == k || (missing[j] && j > k)) continue;
                    const double proj = dot(e, cols[j]);
                    for (std::size_t i = 0; i < m; ++i) e[i] -= proj * cols[j][i];
                }
            const double norm = std::sqrt(dot(e, e));
            if (norm > 1e-6) {
                for (auto& v : e) v /= norm;
                cols[k] = std::move(e);
                ++candidate;
                break;
            }
        }
    }
}

// Jacobi SVD of a matrix with rows >= cols.
SvdResult svd_tall(const Matrix& a, const SvdOptions& options) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();

    std::vector<Column> work(n, Column(m));
    std::vector<Column> right(n, Column(n, 0.0));
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < m; ++i) work[j][i] = a(i, j);
        right[j][j] = 1.0;
    }

    bool converged = n < 2;
    double worst_ratio = 0.0;
    int sweep = 0;
    std::vector<double> sq(n);
    for (; sweep < options.max_sweeps && !converged; ++sweep) {
        bool rotated = false;
        worst_ratio = 0.0;
        for (std::size_t j = 0; j < n; ++j) sq[j] = dot(work[j], work[j]);
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const double alpha = sq[p];
                const double beta = sq[q];
                if (alpha == 0.0 || beta == 0.0) continue;
                const double gamma = dot(work[p], work[q]);
                if (gamma == 0.0) continue;
                const double ratio = std::abs(gamma) / std::sqrt(alpha * beta);
                worst_ratio = std::max(worst_ratio, ratio);
                if (ratio <= options.tolerance) continue;

                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
                const double c = 1.0 / std::hypot(1.0, t);
                const double s = c * t;
                rotate(work[p], work[q], c, s);
                rotate(right[p], right[q], c, s);
                sq[p] = std::max(alpha - t * gamma, 0.0);
                sq[q] = beta + t * gamma;
                rotated = true;
            }
        converged = !rotated;
    }
    if (!converged) {
        std::ostringstream msg;
        msg << "svd did not converge after " << sweep << " sweeps on a " << m << "x" << n
            << " matrix (largest column-pair cosine " << worst_ratio << ", tolerance " << options.tolerance
            << ")";
        throw NumericalFailure(msg.str());
    }

    std::vector<double> norms(n);
    for (std::size_t j = 0; j < n; ++j) norms[j] = std::sqrt(dot(work[j], work[j]));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return norms[x] > norms[y]; });

    std::vector<Column> ucols(n);
    std::vector<bool> missing(n, false);
    SvdResult out{Matrix(m, n), std::vector<double>(n), Matrix(n, n)};
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        out.sigma[k] = norms[j];
        if (norms[j] > 0.0) {
            ucols[k] = work[j];
            for (auto& v : ucols[k]) v /= norms[j];
        } else {
            ucols[k] = Column(m, 0.0);
            missing[k] = true;
        }
        for (std::size_t i = 0; i < n; ++i) out.v(i, k) = right[j][i];
    }
    if (std::find(missing.begin(), missing.end(), true) != missing.end()) complete_basis(ucols, missing);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < m; ++i) out.u(i, k) = ucols[k][i];
    return out;
}

} // namespace

SvdResult svd(const Matrix& m, const SvdOptions& options) {
    double biggest = 0.0;
    for (double v : m.data()) {
        if (!std::isfinite(v)) throw InvalidArgument("svd input contains a non-finite entry");
        biggest = std::max(biggest, std::abs(v));
    }
    // Squared column norms overflow (or underflow) for extreme magnitudes, so
    // such inputs are rescaled by a power of two, which is exact.
    int exponent = 0;
    if (biggest > 0.0) std::frexp(biggest, &exponent);
    const int shift = std::abs(exponent) > 400 ? -exponent : 0;
    Matrix scaled;
    if (shift) {
        scaled = m;
        for (auto& v : scaled.mutable_data()) v = std::ldexp(v, shift);
    }
    const Matrix& a = shift ? scaled : m;

    SvdResult t = a.rows() >= a.cols() ? svd_tall(a, options) : svd_tall(a.transposed(), options);
    if (a.rows() < a.cols()) std::swap(t.u, t.v);
    for (auto& s : t.sigma) s = std::ldexp(s, -shift);
    return t;
}

double trace_norm(const Matrix& m, const SvdOptions& options) {
    const auto sigma = svd(m, options).sigma;
    return std::accumulate(sigma.begin(), sigma.end(), 0.0);
}

Matrix trace_norm_subgrad(const Matrix& m, const SvdOptions& options) {
    const SvdResult f = svd(m, options);
    Matrix g(m.rows(), m.cols());
    if (f.sigma.empty() || f.sigma.front() == 0.0) return g;
    const double cutoff = kSubgradRankTolerance * f.sigma.front();
    for (std::size_t k = 0; k < f.sigma.size() && f.sigma[k] > cutoff; ++k)
        for (std::size_t i = 0; i < m.rows(); ++i) {
            const double uik = f.u(i, k);
            for (std::size_t j = 0; j < m.cols(); ++j) g(i, j) += uik * f.v(j, k);
        }
    return g;
}

} // namespace ttnmtl
