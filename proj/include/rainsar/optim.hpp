#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "rainsar/container.hpp"
#include "rainsar/tensor.hpp"

namespace rainsar::nn {

template <typename Scalar>
struct Parameter {
    std::string name;
    Tensor<Scalar> tensor;
};

enum class ClipMode { GlobalNorm, Value, None };
std::string to_string(ClipMode m);
ClipMode clip_mode_from_string(const std::string& s);

struct RmsPropOptions {
    double learning_rate = 1e-5;
    double decay = 0.9;
    double epsilon = 1e-8;
    double clip = 1.0;
    ClipMode clip_mode = ClipMode::GlobalNorm;

    nlohmann::json to_json() const;
    static RmsPropOptions from_json(const nlohmann::json& j);
};

/// RMSProp over a fixed parameter list. Gradients are clipped first, then
///   acc <- decay * acc + (1 - decay) * g^2
///   p   <- p - lr * g / (sqrt(acc) + eps)
template <typename Scalar>
class RmsProp {
public:
    RmsProp(std::vector<Parameter<Scalar>> params, RmsPropOptions options);

    /// Applies one update from the accumulated gradients and returns the
    /// global gradient norm before clipping. Parameters without a gradient
    /// are treated as having a zero gradient.
    double step();
    void zero_grad();

    const std::vector<Parameter<Scalar>>& parameters() const { return params_; }
    std::vector<Buffer<Scalar>>& accumulators() { return acc_; }
    const std::vector<Buffer<Scalar>>& accumulators() const { return acc_; }
    const RmsPropOptions& options() const { return options_; }
    RmsPropOptions& options() { return options_; }

private:
    std::vector<Parameter<Scalar>> params_;
    std::vector<Buffer<Scalar>> acc_;
    RmsPropOptions options_;
};

extern template class RmsProp<float>;
extern template class RmsProp<double>;

/// Parameter blocks "param:NAME" and, when an optimizer is given,
/// accumulator blocks "acc:NAME". Block precision follows Scalar.
/// The parameter table is recorded in the metadata under `table`.
template <typename Scalar>
void store_parameters(Container& c, const std::vector<Parameter<Scalar>>& params, const RmsProp<Scalar>* optimizer,
                      const std::string& table = "parameters");

/// Inverse of store_parameters; shapes are checked against the metadata.
template <typename Scalar>
void load_parameters(const Container& c, const std::vector<Parameter<Scalar>>& params, RmsProp<Scalar>* optimizer,
                     const std::string& table = "parameters");

}  // namespace rainsar::nn
