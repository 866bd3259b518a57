#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ramp/attacks.hpp"
#include "ramp/dataset.hpp"
#include "ramp/gp.hpp"
#include "ramp/model.hpp"

namespace ramp {

struct SampleFlags {
    bool clean = false;
    bool l1 = false;
    bool l2 = false;
    bool linf = false;
};

/// Robust flags require a correct clean prediction first: an attack never
/// repairs a misclassification.
struct RobustReport {
    double clean_acc = 0.0;
    double l1_acc = 0.0;
    double l2_acc = 0.0;
    double linf_acc = 0.0;
    double union_acc = 0.0;
    std::vector<SampleFlags> per_sample;

    double acc_for(AttackNorm norm) const;
};

/// Throws unless union <= each per-norm accuracy <= clean accuracy and the
/// aggregate numbers match the per-sample flags.
void validate(const RobustReport& report);

RobustReport evaluate_robustness(const MlpModel& model, const Dataset& eval_set,
                                 const std::array<AttackSpec, 3>& specs, double box_lo = 0.0,
                                 double box_hi = 1.0, std::uint64_t salt = 0,
                                 std::size_t eval_batch = 256);

struct DeltaErrorReport {
    double variance = 0.0;    // E ||g_a - g_hat_a||^2 over snapshots and draws
    double bias = 0.0;        // E ||g_a - g_hat_n||^2
    double tau_bar_sq = 0.0;  // E sin^2(angle(g_hat_n, g_a - g_hat_n))
    double predicted_diff = 0.0;
    double beta = 0.5;
    std::size_t m = 0;  // parameter count
};

struct SnapshotDeltaTerms {
    int index = 0;
    double variance = 0.0;
    double bias = 0.0;
    double tau_sq = 0.0;
    double predicted_diff = 0.0;
};

struct DeltaAnalysis {
    DeltaErrorReport report;
    std::vector<SnapshotDeltaTerms> per_snapshot;
};

struct DeltaEstimatorSettings {
    std::size_t minibatch_size = 32;
    int minibatch_draws = 4;
    std::uint64_t seed = 0;
    double beta = 0.5;
    double box_lo = 0.0;
    double box_hi = 1.0;
};

/// Estimates the error-decomposition terms along a training trajectory. The
/// population adversarial gradient is approximated by the full held-out
/// adversarial gradient; minibatch gradients subsample the same adversarial
/// set; clean minibatch gradients stand in for the natural update.
DeltaAnalysis estimate_delta_terms(const std::vector<MlpModel>& snapshots, const Dataset& heldout,
                                   const std::vector<AttackSpec>& specs,
                                   const DeltaEstimatorSettings& settings);

/// beta(2-beta)*variance - beta^2*tau_bar_sq*bias; with finite_m, the variance
/// coefficient picks up the (1 + 1/m) factor.
double predicted_error_difference(const DeltaErrorReport& report, double beta,
                                  bool finite_m = false);

/// ((1-beta)^2 + (2*beta - beta^2)/m) * variance + beta^2 * tau_bar_sq * bias.
double predicted_delta_gp(double variance, double bias, double tau_bar_sq, double beta,
                          std::size_t m);

/// Draws (g_hat_a, g_hat_n) into the two preallocated buffers.
using PairSampler = std::function<void(std::vector<double>&, std::vector<double>&)>;

/// Direct estimate of E ||g_a - [beta*gp(g_hat_n, g_hat_a) + (1-beta)*g_hat_a]||^2
/// over sampler draws, treating the whole vector as one layer.
double monte_carlo_delta(std::span<const double> g_a, const PairSampler& sampler, double beta,
                         GpVariant variant, int trials);

}  // namespace ramp
