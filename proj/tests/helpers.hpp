#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "fairlm/tensor.hpp"

namespace testutil {

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline std::vector<fairlm::real> random_values(std::size_t n, std::mt19937_64& rng,
                                               double scale = 1.0) {
    std::normal_distribution<double> dist(0.0, scale);
    std::vector<fairlm::real> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

// Central finite differences against the analytic gradient. `build` must
// construct a fresh scalar loss from the current parameter values each call.
struct FdReport {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
};

inline FdReport fd_check(const std::function<fairlm::Tensor()>& build,
                         const std::vector<fairlm::Tensor>& params, std::mt19937_64& rng,
                         double h = 1e-4, std::size_t max_per_param = 16) {
    using fairlm::Tensor;
    for (const auto& p : params) p.node().grad.clear();
    Tensor loss = build();
    fairlm::backward(loss);

    FdReport rep;
    for (const auto& p : params) {
        const std::vector<fairlm::real> analytic =
            p.has_grad() ? p.grad() : std::vector<fairlm::real>(p.size(), 0.0);
        std::vector<std::size_t> idx(p.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        if (idx.size() > max_per_param) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(max_per_param);
        }
        for (std::size_t i : idx) {
            auto& v = p.node().value;
            const double orig = v[i];
            fairlm::NoGradGuard ng;
            v[i] = orig + h;
            const double f1 = build().item();
            v[i] = orig - h;
            const double f0 = build().item();
            v[i] = orig;
            const double fd = (f1 - f0) / (2.0 * h);
            rep.max_rel_err = std::max(rep.max_rel_err, rel_err(analytic[i], fd));
            ++rep.checked;
        }
    }
    return rep;
}

}  // namespace testutil
