#pragma once

#include <lkca/error.hpp>
#include <lkca/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace lkca {

/// Thin singular value decomposition m = u * diag(sigma) * vt with p = min(rows, cols).
struct SvdResult {
    Tensor<double>      u;     ///< rows x p, orthonormal columns
    std::vector<double> sigma; ///< nonincreasing, nonnegative
    Tensor<double>      vt;    ///< p x cols, orthonormal rows
};

struct SvdOptions {
    std::size_t max_sweeps      = 60;
    bool        compute_vectors = true;
};

namespace detail {

// Column-major dense buffer used by the Jacobi kernel.
struct ColMajor {
    std::size_t         rows = 0, cols = 0;
    std::vector<double> a;

    ColMajor(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
    double*       col(std::size_t j) { return a.data() + j * rows; }
    const double* col(std::size_t j) const { return a.data() + j * rows; }
    double&       at(std::size_t i, std::size_t j) { return a[j * rows + i]; }
};

inline double dot(const double* x, const double* y, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        s += x[i] * y[i];
    }
    return s;
}

inline void rotate(double* x, double* y, std::size_t n, double c, double s) {
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = x[i], yi = y[i];
        x[i]            = c * xi - s * yi;
        y[i]            = s * xi + c * yi;
    }
}

// Householder QR of a tall column-major matrix: returns R (cols x cols) and, if asked,
// the thin Q (rows x cols).
inline void householder_qr(ColMajor& a, ColMajor& r, ColMajor* q) {
    const std::size_t                m = a.rows, n = a.cols;
    std::vector<std::vector<double>> reflectors(n);
    for (std::size_t k = 0; k < n; ++k) {
        double* ck   = a.col(k);
        double  norm = std::sqrt(dot(ck + k, ck + k, m - k));
        auto&   v    = reflectors[k];
        v.assign(ck + k, ck + m);
        if (norm == 0.0) {
            v.clear();
            continue;
        }
        const double alpha = ck[k] > 0 ? -norm : norm;
        v[0] -= alpha;
        const double vnorm = std::sqrt(dot(v.data(), v.data(), v.size()));
        if (vnorm == 0.0) {
            v.clear();
            continue;
        }
        for (auto& e : v) {
            e /= vnorm;
        }
        for (std::size_t j = k; j < n; ++j) {
            double*      cj = a.col(j) + k;
            const double f  = 2.0 * dot(v.data(), cj, v.size());
            for (std::size_t i = 0; i < v.size(); ++i) {
                cj[i] -= f * v[i];
            }
        }
    }
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i <= j; ++i) {
            r.at(i, j) = a.at(i, j);
        }
    }
    if (q == nullptr) {
        return;
    }
    for (std::size_t j = 0; j < n; ++j) {
        q->at(j, j) = 1.0;
    }
    for (std::size_t kk = n; kk-- > 0;) {
        const auto& v = reflectors[kk];
        if (v.empty()) {
            continue;
        }
        for (std::size_t j = 0; j < n; ++j) {
            double*      cj = q->col(j) + kk;
            const double f  = 2.0 * dot(v.data(), cj, v.size());
            for (std::size_t i = 0; i < v.size(); ++i) {
                cj[i] -= f * v[i];
            }
        }
    }
}

// One-sided Jacobi on a square (or tall) column-major matrix. On return the columns of w are
// mutually orthogonal and w = input * v.
inline void jacobi_orthogonalize(ColMajor& w, ColMajor* v, std::size_t max_sweeps) {
    const std::size_t   n   = w.cols;
    const double        tol = 4.0 * std::numeric_limits<double>::epsilon();
    std::vector<double> norms(n);
    for (std::size_t sweep = 0;; ++sweep) {
        if (sweep == max_sweeps) {
            fail_numeric("svd: one-sided Jacobi did not converge within the cap of " + std::to_string(max_sweeps) +
                         " sweeps");
        }
        for (std::size_t j = 0; j < n; ++j) {
            norms[j] = dot(w.col(j), w.col(j), w.rows);
        }
        bool rotated = false;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double alpha = norms[i], beta = norms[j];
                if (alpha == 0.0 || beta == 0.0) {
                    continue;
                }
                const double gamma = dot(w.col(i), w.col(j), w.rows);
                if (std::abs(gamma) <= tol * std::sqrt(alpha * beta)) {
                    continue;
                }
                rotated          = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t    = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c    = 1.0 / std::sqrt(1.0 + t * t);
                const double s    = c * t;
                rotate(w.col(i), w.col(j), w.rows, c, s);
                if (v != nullptr) {
                    rotate(v->col(i), v->col(j), v->rows, c, s);
                }
                norms[i] = alpha - t * gamma;
                norms[j] = beta + t * gamma;
            }
        }
        if (!rotated) {
            return;
        }
    }
}

// Fills column k of u (column-major, rows x p) with a unit vector orthogonal to the given columns.
inline void complete_basis(ColMajor& u, std::size_t k, const std::vector<std::size_t>& filled) {
    const std::size_t   m = u.rows;
    std::vector<double> cand(m);
    for (std::size_t e = 0; e < m; ++e) {
        std::fill(cand.begin(), cand.end(), 0.0);
        cand[e] = 1.0;
        for (int pass = 0; pass < 2; ++pass) {
            for (auto j : filled) {
                const double f = dot(u.col(j), cand.data(), m);
                for (std::size_t i = 0; i < m; ++i) {
                    cand[i] -= f * u.col(j)[i];
                }
            }
        }
        const double nrm = std::sqrt(dot(cand.data(), cand.data(), m));
        if (nrm > 0.5) {
            for (std::size_t i = 0; i < m; ++i) {
                u.col(k)[i] = cand[i] / nrm;
            }
            return;
        }
    }
    fail_numeric("svd: could not complete an orthonormal basis");
}

// Decomposition of a tall matrix (rows >= cols) given column-major.
inline void svd_tall(ColMajor a, const SvdOptions& opt, ColMajor& u_out, std::vector<double>& sigma,
                     ColMajor& v_out) {
    const std::size_t m = a.rows, n = a.cols;
    ColMajor          q(0, 0);
    ColMajor          w(0, 0);
    bool              used_qr = false;
    if (m > n) {
        ColMajor r(n, n);
        if (opt.compute_vectors) {
            q = ColMajor(m, n);
            householder_qr(a, r, &q);
        } else {
            householder_qr(a, r, nullptr);
        }
        w       = std::move(r);
        used_qr = true;
    } else {
        w = std::move(a);
    }
    ColMajor v(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        v.at(j, j) = 1.0;
    }
    jacobi_orthogonalize(w, opt.compute_vectors ? &v : nullptr, opt.max_sweeps);

    std::vector<double> raw(n);
    for (std::size_t j = 0; j < n; ++j) {
        raw[j] = std::sqrt(dot(w.col(j), w.col(j), w.rows));
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return raw[x] > raw[y]; });
    sigma.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        sigma[k] = raw[order[k]];
    }
    if (!opt.compute_vectors) {
        return;
    }

    const double smax   = sigma.empty() ? 0.0 : sigma.front();
    const double thresh = smax * static_cast<double>(std::max(m, n)) * std::numeric_limits<double>::epsilon();
    ColMajor     ur(w.rows, n);
    v_out = ColMajor(n, n);
    std::vector<std::size_t> filled;
    std::vector<std::size_t> null_cols;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t src = order[k];
        std::copy_n(v.col(src), n, v_out.col(k));
        if (sigma[k] > thresh && sigma[k] > 0.0) {
            for (std::size_t i = 0; i < w.rows; ++i) {
                ur.col(k)[i] = w.col(src)[i] / sigma[k];
            }
            filled.push_back(k);
        } else {
            null_cols.push_back(k);
        }
    }
    for (auto k : null_cols) {
        complete_basis(ur, k, filled);
        filled.push_back(k);
    }
    if (used_qr) {
        u_out = ColMajor(m, n);
        for (std::size_t k = 0; k < n; ++k) {
            for (std::size_t j = 0; j < n; ++j) {
                const double f = ur.col(k)[j];
                if (f == 0.0) {
                    continue;
                }
                const double* qj = q.col(j);
                double*       uk = u_out.col(k);
                for (std::size_t i = 0; i < m; ++i) {
                    uk[i] += f * qj[i];
                }
            }
        }
    } else {
        u_out = std::move(ur);
    }
}

} // namespace detail

/// Singular value decomposition by Householder QR preconditioning and one-sided Jacobi.
/// Each left singular vector is signed so its largest-magnitude entry is nonnegative.
inline SvdResult svd(const Tensor<double>& m, const SvdOptions& opt = {}) {
    require_rank(m, 2, "svd");
    if (!m.all_finite()) {
        fail_validation("svd: input matrix contains non-finite entries");
    }
    const std::size_t rows = m.extent(0), cols = m.extent(1);
    const bool        transposed = rows < cols;
    const std::size_t a_rows = transposed ? cols : rows, a_cols = transposed ? rows : cols;

    detail::ColMajor a(a_rows, a_cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            if (transposed) {
                a.at(j, i) = m(i, j);
            } else {
                a.at(i, j) = m(i, j);
            }
        }
    }
    detail::ColMajor    ua(0, 0), va(0, 0);
    SvdResult           res;
    detail::svd_tall(std::move(a), opt, ua, res.sigma, va);
    const std::size_t p = a_cols;
    if (!opt.compute_vectors) {
        return res;
    }

    // Left vectors of m are ua (no transpose) or va (transposed case).
    const detail::ColMajor& left  = transposed ? va : ua;
    detail::ColMajor        right = transposed ? ua : va;
    detail::ColMajor        leftc = left;
    for (std::size_t k = 0; k < p; ++k) {
        double*     uk   = leftc.col(k);
        std::size_t best = 0;
        for (std::size_t i = 1; i < rows; ++i) {
            if (std::abs(uk[i]) > std::abs(uk[best])) {
                best = i;
            }
        }
        if (uk[best] < 0) {
            for (std::size_t i = 0; i < rows; ++i) {
                uk[i] = -uk[i];
            }
            double* vk = right.col(k);
            for (std::size_t i = 0; i < cols; ++i) {
                vk[i] = -vk[i];
            }
        }
    }
    res.u  = Tensor<double>({rows, p});
    res.vt = Tensor<double>({p, cols});
    for (std::size_t k = 0; k < p; ++k) {
        for (std::size_t i = 0; i < rows; ++i) {
            res.u(i, k) = leftc.col(k)[i];
        }
        for (std::size_t j = 0; j < cols; ++j) {
            res.vt(k, j) = right.col(k)[j];
        }
    }
    return res;
}

inline std::vector<double> singular_values(const Tensor<double>& m) {
    return svd(m, SvdOptions{.compute_vectors = false}).sigma;
}

/// c[i] = (sigma_1 + .. + sigma_{i+1}) / sum(sigma). The last entry is exactly 1.
inline std::vector<double> cumulative_energy(const std::vector<double>& sigma) {
    require(!sigma.empty(), "cumulative_energy: empty singular value vector");
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        require(std::isfinite(sigma[i]) && sigma[i] >= 0.0, "cumulative_energy: singular values must be nonnegative");
        require(i == 0 || sigma[i] <= sigma[i - 1], "cumulative_energy: singular values must be nonincreasing");
    }
    const double total = std::accumulate(sigma.begin(), sigma.end(), 0.0);
    require(total > 0.0, "cumulative_energy: all singular values are zero (degenerate matrix)");
    std::vector<double> c(sigma.size());
    double              run = 0.0;
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        run += sigma[i];
        c[i] = std::min(1.0, run / total);
    }
    c.back() = 1.0;
    return c;
}

/// Smallest k such that the first k singular values carry at least `threshold` of the sum.
/// Comparisons allow 1e-12 slack for accumulation rounding.
inline std::size_t rank_at_energy(const std::vector<double>& sigma, double threshold) {
    require(threshold > 0.0 && threshold <= 1.0, "rank_at_energy: threshold must lie in (0, 1]");
    const auto c = cumulative_energy(sigma);
    for (std::size_t k = 0; k < c.size(); ++k) {
        if (c[k] >= threshold - 1e-12) {
            return k + 1;
        }
    }
    return c.size();
}

} // namespace lkca
