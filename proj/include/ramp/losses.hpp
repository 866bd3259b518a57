#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ramp/attacks.hpp"
#include "ramp/lp.hpp"
#include "ramp/model.hpp"
#include "ramp/tensor.hpp"

namespace ramp {

/// Rows of the batch whose argmax prediction under the q-attack equals the
/// label. Indices unique and sorted; argmax ties resolve to the lowest class.
struct CorrectIndexSet {
    std::vector<std::size_t> gamma;
    std::size_t n_c = 0;
    std::size_t batch_size = 0;
};

enum class PairingKind { Kl, Mse, Cosine };

std::string to_string(PairingKind kind);
PairingKind pairing_kind_from_string(const std::string& s);

struct PairingLossConfig {
    double lambda = 2.0;
    PairingKind kind = PairingKind::Kl;
    bool bidirectional_kl = false;  // off by default; the target stays detached
};

CorrectIndexSet correct_subset(const Tensor& p_q, const std::vector<int>& labels);

/// Pairing losses over the gamma subset. `p_q` is a detached target: only the
/// p_r argument carries graph. All return 0 for an empty subset.
Tensor kl_pairing_loss(const Tensor& p_q, const Tensor& p_r, const CorrectIndexSet& gamma,
                       bool bidirectional = false);
Tensor mse_pairing_loss(const Tensor& p_q, const Tensor& p_r, const CorrectIndexSet& gamma);
Tensor cosine_pairing_loss(const Tensor& p_q, const Tensor& p_r, const CorrectIndexSet& gamma);
Tensor pairing_loss(const PairingLossConfig& cfg, const Tensor& p_q, const Tensor& p_r,
                    const CorrectIndexSet& gamma);

struct MaxLossResult {
    Tensor loss;              // scalar, graph through the re-evaluated selection
    Tensor x_selected;        // [N, d], detached
    std::vector<int> chosen;  // 0 = first attack, 1 = second (ties keep first)
};

/// Per-sample worst example between two attacks, then mean cross-entropy over
/// the selected examples.
MaxLossResult max_loss(const MlpModel& model, const AdvBatch& adv_q, const AdvBatch& adv_r,
                       const std::vector<int>& labels);

struct RampLossResult {
    Tensor total;        // L_max + lambda * L_pairing
    double max_value;    // detached components, for logging
    double pairing_value;
    CorrectIndexSet gamma;
    AdvBatch adv_q;
    AdvBatch adv_r;
};

/// Combined objective from already-generated adversarial batches. With
/// lambda == 0 the pairing term is skipped entirely and the graph equals the
/// plain worst-case objective.
RampLossResult ramp_loss_from_batches(const MlpModel& model, AdvBatch adv_q, AdvBatch adv_r,
                                      const std::vector<int>& labels, const PairingLossConfig& cfg);

/// Runs the q and r attacks, then combines.
RampLossResult ramp_loss(const MlpModel& model, const Tensor& batch, const std::vector<int>& labels,
                         const BallSpec& ball_q, const BallSpec& ball_r, const AttackSpec& spec_q,
                         const AttackSpec& spec_r, const PairingLossConfig& cfg,
                         std::uint64_t salt = 0);

}  // namespace ramp
