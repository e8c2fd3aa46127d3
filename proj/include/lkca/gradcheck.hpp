#pragma once

#include <lkca/tensor.hpp>

#include <cmath>
#include <cstddef>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace lkca {

struct GradCheckOptions {
    double      tolerance = 1e-6; ///< on |analytic - fd| / max(1, |fd|)
    double      step      = 1e-5; ///< central difference half-width
    std::size_t max_per_tensor = 0; ///< 0 checks every element, else an evenly spaced subset
};

struct GradCheckReport {
    std::string op;
    bool        passed        = true;
    double      max_rel_error = 0.0;
    std::string worst_tensor;
    std::size_t worst_index = 0;
    double      worst_analytic = 0.0, worst_numeric = 0.0;
    std::size_t checked = 0;

    [[nodiscard]] std::string summary() const {
        std::ostringstream os;
        os << op << ": " << (passed ? "pass" : "FAIL") << " max_rel_error=" << max_rel_error << " over " << checked
           << " elements";
        if (!worst_tensor.empty()) {
            os << " (worst " << worst_tensor << "[" << worst_index << "] analytic=" << worst_analytic
               << " numeric=" << worst_numeric << ")";
        }
        return os.str();
    }
};

struct GradCheckTarget {
    std::string     name;
    Tensor<double>* value;
};

/// Compares analytic gradients of a scalar function against central finite differences.
/// `loss` re-evaluates the scalar from the current tensor values; `analytic` returns one gradient
/// per target, in order, evaluated at the unperturbed point.
inline GradCheckReport grad_check(const std::string& op, const std::vector<GradCheckTarget>& targets,
                                  const std::function<double()>&                      loss,
                                  const std::function<std::vector<Tensor<double>>()>& analytic,
                                  const GradCheckOptions&                             opt = {}) {
    GradCheckReport rep;
    rep.op           = op;
    const auto grads = analytic();
    if (grads.size() != targets.size()) {
        rep.passed       = false;
        rep.worst_tensor = "<gradient count mismatch>";
        return rep;
    }
    for (std::size_t t = 0; t < targets.size(); ++t) {
        Tensor<double>& v = *targets[t].value;
        if (grads[t].shape() != v.shape()) {
            rep.passed       = false;
            rep.worst_tensor = targets[t].name + " <shape mismatch>";
            return rep;
        }
        const std::size_t n    = v.size();
        const std::size_t step = (opt.max_per_tensor == 0 || n <= opt.max_per_tensor) ? 1 : n / opt.max_per_tensor;
        for (std::size_t i = 0; i < n; i += step) {
            const double orig = v[i];
            v[i]              = orig + opt.step;
            const double fp   = loss();
            v[i]              = orig - opt.step;
            const double fm   = loss();
            v[i]              = orig;
            const double fd   = (fp - fm) / (2.0 * opt.step);
            double       rel  = std::abs(grads[t][i] - fd) / std::max(1.0, std::abs(fd));
            if (std::isnan(rel)) {
                rel = INFINITY;
            }
            ++rep.checked;
            if (rep.checked == 1 || rel > rep.max_rel_error) {
                rep.max_rel_error  = rel;
                rep.worst_tensor   = targets[t].name;
                rep.worst_index    = i;
                rep.worst_analytic = grads[t][i];
                rep.worst_numeric  = fd;
            }
        }
    }
    rep.passed = rep.max_rel_error <= opt.tolerance;
    return rep;
}

/// Deterministic probe loss sum(out * probe) used to reduce tensor-valued ops to a scalar.
inline double probe_dot(const Tensor<double>& out, const Tensor<double>& probe) {
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        s += out[i] * probe[i];
    }
    return s;
}

} // namespace lkca
