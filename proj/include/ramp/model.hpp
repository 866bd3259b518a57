#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ramp/tensor.hpp"

namespace ramp {

enum class Activation { Relu, Identity };

struct Layer {
    std::string name;
    Tensor weight;  // [out, in]
    Tensor bias;    // [out]
    Activation act = Activation::Relu;
};

/// Fully connected classifier. Hidden layers are relu, the final layer emits
/// raw logits. Layer names are unique and consecutive dimensions chain.
class MlpModel {
public:
    MlpModel() = default;

    /// dims = {input, hidden..., classes}. He-uniform init on relu layers,
    /// Glorot-uniform on the identity output layer, zero biases.
    static MlpModel init(const std::vector<std::size_t>& dims, std::uint64_t seed);

    static MlpModel from_layers(std::vector<Layer> layers);

    std::size_t input_dim() const { return input_dim_; }
    std::size_t num_classes() const { return num_classes_; }
    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers_mut() { return layers_; }

    /// Full graph: gradients reach both parameters and the input.
    Tensor forward(const Tensor& batch) const;
    /// Graph through the input only; parameters enter as constants.
    Tensor forward_input_grad(const Tensor& batch) const;
    /// No graph at all.
    std::vector<double> forward_values(const Tensor& batch) const;

    std::vector<Tensor> parameters() const;
    std::size_t parameter_count() const;
    void zero_grad() const;

    /// Concatenated parameter gradients in layer order (weight then bias).
    std::vector<double> flat_grad() const;

    MlpModel clone() const;
    bool same_architecture(const MlpModel& other) const;

private:
    std::vector<Layer> layers_;
    std::size_t input_dim_ = 0;
    std::size_t num_classes_ = 0;

    void check_batch(const Tensor& batch) const;
    Tensor forward_impl(const Tensor& batch, bool params_in_graph) const;
};

struct SgdConfig {
    double learning_rate = 0.1;
    double momentum = 0.0;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
};

/// Heavy-ball SGD: v <- momentum*v + g + weight_decay*theta; theta -= lr*v.
class SgdOptimizer {
public:
    explicit SgdOptimizer(SgdConfig cfg);

    void step(MlpModel& model);
    void set_learning_rate(double lr) { cfg_.learning_rate = lr; }
    const SgdConfig& config() const { return cfg_; }

private:
    SgdConfig cfg_;
    std::vector<std::vector<double>> velocity_;  // one buffer per parameter tensor
};

/// One-epoch model update as named flat vectors, two entries per layer
/// ("<name>.weight", "<name>.bias") in model order.
struct ModelDelta {
    std::vector<std::pair<std::string, std::vector<double>>> entries;

    bool same_layout(const ModelDelta& other) const;
    std::size_t total_size() const;
};

ModelDelta model_delta(const MlpModel& after, const MlpModel& before);
MlpModel apply_delta(const MlpModel& base, const ModelDelta& delta);

// Versioned binary checkpoint; round-trips bit-exact.
void save_checkpoint(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_checkpoint(const std::filesystem::path& path);

}  // namespace ramp
