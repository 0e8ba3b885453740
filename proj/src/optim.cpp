#include "rainsar/optim.hpp"

#include <cmath>

#include "rainsar/error.hpp"

namespace rainsar::nn {

std::string to_string(ClipMode m) {
    switch (m) {
        case ClipMode::GlobalNorm: return "global_norm";
        case ClipMode::Value: return "value";
        case ClipMode::None: return "none";
    }
    return "?";
}

ClipMode clip_mode_from_string(const std::string& s) {
    if (s == "global_norm") return ClipMode::GlobalNorm;
    if (s == "value") return ClipMode::Value;
    if (s == "none") return ClipMode::None;
    throw ConfigError("unknown clip mode '" + s + "'");
}

nlohmann::json RmsPropOptions::to_json() const {
    return {{"learning_rate", learning_rate}, {"decay", decay}, {"epsilon", epsilon}, {"clip", clip},
            {"clip_mode", nn::to_string(clip_mode)}};
}

RmsPropOptions RmsPropOptions::from_json(const nlohmann::json& j) {
    RmsPropOptions o;
    o.learning_rate = j.value("learning_rate", o.learning_rate);
    o.decay = j.value("decay", o.decay);
    o.epsilon = j.value("epsilon", o.epsilon);
    o.clip = j.value("clip", o.clip);
    o.clip_mode = clip_mode_from_string(j.value("clip_mode", std::string("global_norm")));
    if (!(o.learning_rate > 0) || !(o.decay >= 0 && o.decay < 1) || !(o.epsilon > 0) || !(o.clip > 0))
        throw ConfigError("invalid RMSProp hyperparameters " + o.to_json().dump());
    return o;
}

template <typename Scalar>
RmsProp<Scalar>::RmsProp(std::vector<Parameter<Scalar>> params, RmsPropOptions options)
    : params_(std::move(params)), options_(options) {
    for (const auto& p : params_) acc_.push_back(Buffer<Scalar>::Zero(p.tensor.numel()));
}

template <typename Scalar>
double RmsProp<Scalar>::step() {
    double sq = 0.0;
    for (const auto& p : params_) {
        if (!p.tensor.has_grad()) continue;
        const auto& g = p.tensor.node()->grad;
        if (!g.allFinite()) throw NonFiniteGradient("gradient of " + p.name + " is not finite");
        sq += g.template cast<double>().square().sum();
    }
    const double norm = std::sqrt(sq);
    Scalar factor = 1;
    if (options_.clip_mode == ClipMode::GlobalNorm && norm > options_.clip)
        factor = static_cast<Scalar>(options_.clip / norm);

    const Scalar decay = static_cast<Scalar>(options_.decay);
    const Scalar lr = static_cast<Scalar>(options_.learning_rate);
    const Scalar eps = static_cast<Scalar>(options_.epsilon);
    const Scalar clip = static_cast<Scalar>(options_.clip);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& node = *params_[i].tensor.node();
        Buffer<Scalar> g = node.grad.size() == node.value.size() ? Buffer<Scalar>(node.grad) : Buffer<Scalar>::Zero(node.value.size());
        if (options_.clip_mode == ClipMode::GlobalNorm) g *= factor;
        else if (options_.clip_mode == ClipMode::Value) g = g.max(-clip).min(clip);
        acc_[i] = decay * acc_[i] + (Scalar(1) - decay) * g.square();
        node.value -= lr * g / (acc_[i].sqrt() + eps);
    }
    return norm;
}

template <typename Scalar>
void RmsProp<Scalar>::zero_grad() {
    for (auto& p : params_) p.tensor.node()->grad.resize(0);
}

template class RmsProp<float>;
template class RmsProp<double>;

namespace {

template <typename Scalar>
void put(Container& c, const std::string& name, const Buffer<Scalar>& b) {
    c.add(name, std::vector<Scalar>(b.data(), b.data() + b.size()));
}

template <typename Scalar>
void get(const Container& c, const std::string& name, Buffer<Scalar>& out) {
    if constexpr (std::is_same_v<Scalar, float>) {
        const auto& v = c.has(name) ? c.f32(name) : throw FormatError("checkpoint lacks block " + name);
        if (static_cast<Index>(v.size()) != out.size()) throw FormatError("checkpoint block " + name + " has wrong size");
        out = Eigen::Map<const Buffer<float>>(v.data(), out.size());
    } else {
        const auto& v = c.has(name) ? c.f64(name) : throw FormatError("checkpoint lacks block " + name);
        if (static_cast<Index>(v.size()) != out.size()) throw FormatError("checkpoint block " + name + " has wrong size");
        out = Eigen::Map<const Buffer<double>>(v.data(), out.size());
    }
}

}  // namespace

template <typename Scalar>
void store_parameters(Container& c, const std::vector<Parameter<Scalar>>& params, const RmsProp<Scalar>* optimizer,
                      const std::string& table_key) {
    auto& table = c.meta[table_key];
    table = nlohmann::json::array();
    for (std::size_t i = 0; i < params.size(); ++i) {
        table.push_back({{"name", params[i].name}, {"shape", params[i].tensor.shape()}});
        put(c, "param:" + params[i].name, params[i].tensor.value());
        if (optimizer) put(c, "acc:" + params[i].name, optimizer->accumulators()[i]);
    }
    c.meta["precision"] = std::is_same_v<Scalar, float> ? "float32" : "float64";
    if (optimizer) c.meta[table_key + "_optimizer"] = optimizer->options().to_json();
}

template <typename Scalar>
void load_parameters(const Container& c, const std::vector<Parameter<Scalar>>& params, RmsProp<Scalar>* optimizer,
                     const std::string& table_key) {
    if (!c.meta.contains(table_key)) throw FormatError("checkpoint has no parameter table '" + table_key + "'");
    const auto& table = c.meta.at(table_key);
    if (table.size() != params.size())
        throw ShapeMismatch("checkpoint holds " + std::to_string(table.size()) + " parameters, model has " +
                            std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto name = table[i].at("name").get<std::string>();
        const auto shape = table[i].at("shape").get<Shape>();
        if (name != params[i].name || shape != params[i].tensor.shape())
            throw ShapeMismatch("checkpoint parameter " + name + " " + to_string(shape) + " does not match " +
                                params[i].name + " " + to_string(params[i].tensor.shape()));
        Buffer<Scalar> v(params[i].tensor.numel());
        get(c, "param:" + name, v);
        params[i].tensor.node()->value = v;
        if (optimizer && c.has("acc:" + name)) get(c, "acc:" + name, optimizer->accumulators()[i]);
    }
}

template void store_parameters<float>(Container&, const std::vector<Parameter<float>>&, const RmsProp<float>*,
                                   const std::string&);
template void store_parameters<double>(Container&, const std::vector<Parameter<double>>&, const RmsProp<double>*,
                                   const std::string&);
template void load_parameters<float>(const Container&, const std::vector<Parameter<float>>&, RmsProp<float>*,
                                  const std::string&);
template void load_parameters<double>(const Container&, const std::vector<Parameter<double>>&, RmsProp<double>*,
                                  const std::string&);

}  // namespace rainsar::nn
