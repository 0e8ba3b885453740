#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rainsar/dataset.hpp"
#include "rainsar/ops.hpp"
#include "rainsar/rng.hpp"
#include "rainsar/tensor.hpp"

namespace rainsar::testing {

using nn::Buffer;
using nn::Shape;
using nn::Tensor;

template <typename Scalar = double>
Tensor<Scalar> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                             bool requires_grad = true) {
    Buffer<Scalar> v(nn::numel(shape));
    for (auto& x : v) x = static_cast<Scalar>(rng.uniform(lo, hi));
    return Tensor<Scalar>(shape, std::move(v), requires_grad);
}

/// Values with magnitude in [lo, hi] and random sign, so kinks at zero are
/// further away than any finite-difference step.
inline Tensor<double> away_from_zero(const Shape& shape, Rng& rng, double lo = 0.05, double hi = 1.0) {
    Buffer<double> v(nn::numel(shape));
    for (auto& x : v) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(lo, hi);
    return Tensor<double>(shape, std::move(v), true);
}

/// A random permutation of evenly spaced values: every pair differs by at
/// least `gap`, so max selections are stable under small perturbations.
inline Tensor<double> distinct_values(const Shape& shape, Rng& rng, double gap = 0.01) {
    const auto n = nn::numel(shape);
    Buffer<double> v(n);
    for (nn::Index i = 0; i < n; ++i) v[i] = gap * static_cast<double>(i) - gap * static_cast<double>(n) / 2.0;
    rng.shuffle(v.data(), v.data() + n);
    return Tensor<double>(shape, std::move(v), true);
}

inline Buffer<double> random_mask(nn::Index n, Rng& rng, double keep = 0.7) {
    Buffer<double> m(n);
    for (auto& x : m) x = rng.uniform() < keep ? 1.0 : 0.0;
    return m;
}

inline double relative_error(double a, double b, double floor = 1e-2) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct GradCheck {
    double max_error = 0.0;
    std::size_t checked = 0;
    std::size_t kinks = 0;  ///< elements within one step of a non-differentiable point
};

/// Compares the analytic gradient of `loss` with central differences for
/// every element of every input. `loss` must rebuild its graph from the
/// current input values on each call.
///
/// An element whose central difference disagrees is re-examined with the
/// one-sided differences: if they differ from each other while the analytic
/// value matches one of them, a ReLU, max or abs switch lies inside the step
/// and the element is counted in `kinks` instead of `max_error`.
inline GradCheck check_gradients(const std::function<Tensor<double>()>& loss, std::vector<Tensor<double>> inputs,
                                 double h = 1e-4, double tolerance = 1e-4) {
    for (auto& t : inputs) t.zero_grad();
    const double f0 = loss().item();
    loss().backward();
    std::vector<Buffer<double>> analytic;
    for (auto& t : inputs) analytic.push_back(t.grad());

    GradCheck out;
    nn::NoGradGuard guard;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto& v = inputs[k].value();
        for (nn::Index i = 0; i < v.size(); ++i) {
            const double saved = v[i];
            v[i] = saved + h;
            const double up = loss().item();
            v[i] = saved - h;
            const double down = loss().item();
            v[i] = saved;
            ++out.checked;
            const double a = analytic[k][i];
            const double err = relative_error(a, (up - down) / (2.0 * h));
            if (err >= tolerance) {
                const double right = (up - f0) / h, left = (f0 - down) / h;
                const bool one_sided_match = relative_error(a, right) < 1e-3 || relative_error(a, left) < 1e-3;
                if (one_sided_match && relative_error(right, left) > 1e-3) {
                    ++out.kinks;
                    continue;
                }
            }
            out.max_error = std::max(out.max_error, err);
        }
    }
    return out;
}

/// Weighted sum with fixed random weights, turning any tensor into a scalar
/// whose gradient exercises every output element differently.
inline Tensor<double> probe(const Tensor<double>& y, const Buffer<double>& weights) {
    return nn::sum(nn::mul(y, Tensor<double>(y.shape(), weights)));
}

/// Minimal in-memory record for sampler and partition tests.
inline dataset::PatchRecord make_record(const std::string& iw, int class_id) {
    dataset::PatchRecord r;
    r.iw_id = iw;
    const auto l = dataset::decompose(class_id);
    r.rain_flag = l.rain_flag;
    r.wind_class = l.wind_class;
    r.class_id = class_id;
    return r;
}

/// In-memory manifest with pixels: `per_class` patches of every class in
/// each of ten IWs, seven for training, one for validation, two for test.
/// Rain patches carry a Gaussian cell that brightens both channels.
inline dataset::Manifest toy_manifest(int per_class, Eigen::Index px, std::uint64_t seed) {
    dataset::Manifest m;
    Rng rng(seed);
    for (int iw = 0; iw < 10; ++iw) {
        const std::string id = "IW" + std::to_string(iw);
        m.split[id] = iw < 7 ? dataset::Subset::Train : iw < 8 ? dataset::Subset::Validation : dataset::Subset::Test;
        for (int c = 0; c < dataset::kClassCount; ++c)
            for (int k = 0; k < per_class; ++k) {
                auto r = make_record(id, c);
                r.size_px = px;
                r.incidence = rng.uniform(30, 45);
                r.nesz = rng.uniform(-28, -22);
                const double winds[] = {1.0, 4.0, 8.0, 12.0, 17.0};
                r.wind_prior = r.wind_max = winds[r.wind_class];
                r.station_distance_km = rng.uniform(10, 120);
                r.land_mask = FieldF::Ones(px, px);
                r.rain = FieldF::Zero(px, px);
                r.ssr_vv = FieldF(px, px);
                r.ssr_vh = FieldF(px, px);
                const double cy = rng.uniform(0, px), cx = rng.uniform(0, px), amp = rng.uniform(8, 30),
                             sigma = rng.uniform(0.15, 0.3) * px;
                for (Eigen::Index i = 0; i < px; ++i)
                    for (Eigen::Index j = 0; j < px; ++j) {
                        const double rain =
                            r.rain_flag ? amp * std::exp(-((i - cy) * (i - cy) + (j - cx) * (j - cx)) / (2 * sigma * sigma)) : 0.0;
                        r.rain(i, j) = static_cast<float>(rain);
                        r.ssr_vv(i, j) = static_cast<float>(1.0 + 0.5 * std::tanh(rain / 10.0) + rng.normal(0, 0.05));
                        r.ssr_vh(i, j) = static_cast<float>(1.0 + 2.0 * std::tanh(rain / 10.0) + rng.normal(0, 0.05));
                    }
                m.records.push_back(std::move(r));
            }
    }
    return m;
}

/// Regularized upper incomplete gamma Q(a, x), for chi-square p-values.
inline double gamma_q(double a, double x) {
    if (x <= 0.0) return 1.0;
    const double lg = std::lgamma(a);
    if (x < a + 1.0) {
        double sum = 1.0 / a, term = sum;
        for (int n = 1; n < 100000; ++n) {
            term *= x / (a + n);
            sum += term;
            if (std::abs(term) < std::abs(sum) * 1e-15) break;
        }
        return 1.0 - sum * std::exp(-x + a * std::log(x) - lg);
    }
    // Lentz continued fraction
    double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, f = d;
    for (int i = 1; i < 100000; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::abs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        const double delta = d * c;
        f *= delta;
        if (std::abs(delta - 1.0) < 1e-15) break;
    }
    return std::exp(-x + a * std::log(x) - lg) * f;
}

inline double chi_square_p(const std::vector<double>& observed, double expected) {
    double stat = 0.0;
    for (double o : observed) stat += (o - expected) * (o - expected) / expected;
    return gamma_q(0.5 * static_cast<double>(observed.size() - 1), 0.5 * stat);
}

}  // namespace rainsar::testing
