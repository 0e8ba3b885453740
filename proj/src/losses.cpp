#include "rainsar/losses.hpp"

#include <cmath>
#include <sstream>

#include "rainsar/error.hpp"

namespace rainsar::training {

namespace {

double parse_number(const std::string& s) {
    const auto slash = s.find('/');
    try {
        if (slash == std::string::npos) return std::stod(s);
        return std::stod(s.substr(0, slash)) / std::stod(s.substr(slash + 1));
    } catch (const std::logic_error&) {
        throw ConfigError("cannot parse loss weight '" + s + "'");
    }
}

}  // namespace

LossWeights LossWeights::parse(const std::string& text) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) v.push_back(parse_number(item));
    if (v.size() != 5) throw ConfigError("loss weights need five values a,b,c,d,e; got '" + text + "'");
    LossWeights w{v[0], v[1], v[2], v[3], v[4]};
    w.validate();
    return w;
}

nlohmann::json LossWeights::to_json() const { return {{"a", a}, {"b", b}, {"c", c}, {"d", d}, {"e", e}}; }

LossWeights LossWeights::from_json(const nlohmann::json& j) {
    if (j.is_string()) return parse(j.get<std::string>());
    LossWeights w;
    w.a = j.value("a", w.a);
    w.b = j.value("b", w.b);
    w.c = j.value("c", w.c);
    w.d = j.value("d", w.d);
    w.e = j.value("e", w.e);
    w.validate();
    return w;
}

void LossWeights::validate() const {
    for (double x : {a, b, c, d, e})
        if (!(x >= 0) || !std::isfinite(x)) throw ConfigError("loss weights must be finite and >= 0");
}

std::vector<std::pair<std::string, LossWeights>> LossWeights::ablations() {
    const LossWeights full;
    std::vector<std::pair<std::string, LossWeights>> out{{"full", full}};
    auto without = [&](const char* name, double LossWeights::*field) {
        LossWeights w = full;
        w.*field = 0.0;
        out.emplace_back(name, w);
    };
    without("no_rr", &LossWeights::a);
    without("no_seg", &LossWeights::b);
    without("no_max", &LossWeights::c);
    without("no_mean", &LossWeights::d);
    without("no_d", &LossWeights::e);
    return out;
}

std::string to_string(TargetTransform t) { return t == TargetTransform::Log1p ? "log1p" : "identity"; }

TargetTransform target_transform_from_string(const std::string& s) {
    if (s == "log1p") return TargetTransform::Log1p;
    if (s == "identity") return TargetTransform::Identity;
    throw ConfigError("unknown target transform '" + s + "'");
}

double to_model_space(double rate, TargetTransform t) { return t == TargetTransform::Log1p ? std::log1p(rate) : rate; }
double to_rate(double v, TargetTransform t) { return t == TargetTransform::Log1p ? std::expm1(v) : v; }

template <typename Scalar>
LossComponents<Scalar> loss_components(const Buffer<Scalar>& target, const Buffer<Scalar>& seg_target,
                                       const Buffer<Scalar>& mask, const Tensor<Scalar>& seg_logits,
                                       const Tensor<Scalar>& y_rr, const Tensor<Scalar>& d_score,
                                       const LossOptions& options) {
    const Index total = y_rr.numel();
    if (target.size() != total || seg_target.size() != total || mask.size() != total || seg_logits.numel() != total)
        throw ShapeMismatch("loss inputs disagree in size with prediction " + nn::to_string(y_rr.shape()));
    const Index n = y_rr.dim(0), p = total / n;

    Buffer<Scalar> valid(n), target_max(n);
    for (Index i = 0; i < n; ++i) {
        const auto m = mask.segment(i * p, p);
        valid(i) = m.sum() > Scalar(0) ? Scalar(1) : Scalar(0);
        Scalar best = 0;
        bool any = false;
        for (Index k = 0; k < p; ++k)
            if (m(k) > Scalar(0) && (!any || target(i * p + k) > best)) {
                best = target(i * p + k);
                any = true;
            }
        target_max(i) = best;
    }
    const Tensor<Scalar> y(y_rr.shape(), target);
    const Tensor<Scalar> t(seg_logits.shape(), seg_target);

    LossComponents<Scalar> c;
    // softplus(z) - t*z is the cross-entropy of sigmoid(z) against t
    c.seg = nn::weighted_mean(nn::masked_mean(nn::softplus(seg_logits) - t * seg_logits, mask), valid);
    const Tensor<Scalar> diff = y - y_rr;
    c.rr = nn::sqrt(nn::weighted_mean(nn::masked_mean(nn::square(diff), mask), valid));
    c.max = nn::weighted_mean(nn::square(Tensor<Scalar>({n}, target_max) - nn::masked_max(y_rr, mask)), valid);
    const Tensor<Scalar> mean_diff = nn::masked_mean(diff, mask);
    c.mean = nn::weighted_mean(options.signed_mean ? mean_diff : nn::abs(mean_diff), valid);
    if (d_score.defined()) {
        if (d_score.numel() != n) throw ShapeMismatch("discriminator score must be [N]");
        c.d = nn::weighted_mean(d_score, valid);
    }
    return c;
}

template <typename Scalar>
Tensor<Scalar> loss_total(const LossComponents<Scalar>& c, const LossWeights& w) {
    auto s = [](double k) { return static_cast<Scalar>(k); };
    Tensor<Scalar> total = s(w.a) * c.rr + s(w.b) * c.seg + s(w.c) * c.max + s(w.d) * c.mean;
    if (c.d.defined() && w.e != 0.0) total = total + s(w.e) * c.d;
    return total;
}

double loss_total(const LossValues& v, const LossWeights& w) {
    return w.a * v.rr + w.b * v.seg + w.c * v.max + w.d * v.mean + w.e * v.d;
}

template <typename Scalar>
LossValues values_of(const LossComponents<Scalar>& c, const LossWeights& w, const std::string& context) {
    LossValues v;
    const std::pair<const char*, const Tensor<Scalar>*> parts[] = {
        {"L_rr", &c.rr}, {"L_seg", &c.seg}, {"L_max", &c.max}, {"L_mean", &c.mean}, {"L_D", &c.d}};
    double* slots[] = {&v.rr, &v.seg, &v.max, &v.mean, &v.d};
    for (int i = 0; i < 5; ++i) {
        if (!parts[i].second->defined()) continue;
        const double x = static_cast<double>(parts[i].second->item());
        if (!std::isfinite(x)) throw NonFiniteLoss(std::string(parts[i].first) + " is not finite (" + context + ")");
        *slots[i] = x;
    }
    v.total = loss_total(v, w);
    return v;
}

template <typename Scalar>
Tensor<Scalar> discriminator_loss(const Tensor<Scalar>& real_score, const Tensor<Scalar>& fake_score) {
    return nn::mean(nn::relu(nn::add_scalar(real_score, Scalar(1)))) +
           nn::mean(nn::relu(nn::add_scalar(nn::scale(fake_score, Scalar(-1)), Scalar(1))));
}

template <typename Scalar>
std::string Batch<Scalar>::provenance() const {
    std::ostringstream os;
    os << "batch of " << records.size() << " patches:";
    for (const auto* r : records) os << ' ' << r->iw_id << '@' << r->row0 << ',' << r->col0;
    return os.str();
}

template <typename Scalar>
Batch<Scalar> make_batch(const std::vector<const dataset::PatchRecord*>& records, TargetTransform transform,
                         double rain_threshold) {
    if (records.empty()) throw InvalidArgument("empty batch");
    const Index n = static_cast<Index>(records.size());
    const Index h = records[0]->ssr_vv.rows(), w = records[0]->ssr_vv.cols(), p = h * w;
    Buffer<Scalar> image(n * 3 * p), scalars(n * 3);
    Batch<Scalar> b;
    b.target.resize(n * p);
    b.seg_target.resize(n * p);
    b.mask.resize(n * p);
    for (Index i = 0; i < n; ++i) {
        const auto& r = *records[i];
        if (!r.has_pixels()) throw InvalidArgument("patch of " + r.iw_id + " has no pixels loaded");
        if (r.ssr_vv.rows() != h || r.ssr_vv.cols() != w)
            throw ShapeMismatch("batch patches differ in size");
        const FieldF* channels[] = {&r.ssr_vv, &r.ssr_vh, &r.land_mask};
        for (int c = 0; c < 3; ++c)
            image.segment((i * 3 + c) * p, p) = Eigen::Map<const Buffer<float>>(channels[c]->data(), p).template cast<Scalar>();
        scalars(i * 3 + 0) = static_cast<Scalar>(r.incidence);
        scalars(i * 3 + 1) = static_cast<Scalar>(r.nesz);
        scalars(i * 3 + 2) = static_cast<Scalar>(r.wind_prior);
        for (Index k = 0; k < p; ++k) {
            const double rate = r.rain.data()[k];
            const bool ok = r.land_mask.data()[k] > 0.5f && rate >= 0.0;
            b.mask(i * p + k) = ok ? Scalar(1) : Scalar(0);
            b.target(i * p + k) = ok ? static_cast<Scalar>(to_model_space(rate, transform)) : Scalar(0);
            b.seg_target(i * p + k) = ok && rate > rain_threshold ? Scalar(1) : Scalar(0);
        }
    }
    b.image = Tensor<Scalar>({n, 3, h, w}, std::move(image));
    b.scalars = Tensor<Scalar>({n, 3}, std::move(scalars));
    b.real_map = Tensor<Scalar>({n, 1, h, w}, b.target * b.mask);
    b.records = records;
    return b;
}

#define RAINSAR_INSTANTIATE_LOSSES(S)                                                                              \
    template LossComponents<S> loss_components(const Buffer<S>&, const Buffer<S>&, const Buffer<S>&,              \
                                               const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,               \
                                               const LossOptions&);                                                \
    template Tensor<S> loss_total(const LossComponents<S>&, const LossWeights&);                                  \
    template LossValues values_of(const LossComponents<S>&, const LossWeights&, const std::string&);              \
    template Tensor<S> discriminator_loss(const Tensor<S>&, const Tensor<S>&);                                    \
    template struct Batch<S>;                                                                                      \
    template Batch<S> make_batch(const std::vector<const dataset::PatchRecord*>&, TargetTransform, double);

RAINSAR_INSTANTIATE_LOSSES(float)
RAINSAR_INSTANTIATE_LOSSES(double)

}  // namespace rainsar::training
