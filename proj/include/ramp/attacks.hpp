#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ramp/lp.hpp"
#include "ramp/rng.hpp"
#include "ramp/model.hpp"
#include "ramp/tensor.hpp"

namespace ramp {

enum class AttackKind { Pgd, ApgdLite };

std::string to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& s);

struct AttackSpec {
    AttackNorm norm = AttackNorm::Linf;
    double eps = 8.0 / 255.0;
    int steps = 10;
    AttackKind kind = AttackKind::Pgd;
    double step_size = 0.0;              // 0 -> 2*eps/steps (PGD only)
    double l1_sparsity_fraction = 0.05;  // top-k fraction for the L1 direction
    std::uint64_t seed = 0;
};

struct AdvBatch {
    Tensor x_adv;                        // [N, d], detached
    Tensor logits;                       // [N, k], detached
    std::vector<double> per_sample_loss;
};

/// Per-norm ascent direction of the given length. Linf: sign; L2: normalized
/// gradient; L1: sign on the top ceil(sparsity*d) coordinates by magnitude,
/// rescaled so the step has l1 length step_size.
std::vector<double> steepest_step(std::span<const double> grad, AttackNorm norm, double step_size,
                                  double sparsity);

/// Uniform random point of the ball centered at zero (box applied later).
std::vector<double> random_ball_point(AttackNorm norm, double eps, std::size_t d, Rng& rng);

/// Step-halving iterations for the fixed-checkpoint schedule.
std::vector<int> apgd_halving_checkpoints(int steps);

/// Iterated steepest ascent on the cross-entropy, projected after every step,
/// from a random start inside the ball; returns the best-loss iterate per
/// sample. `salt` decorrelates calls sharing one spec seed.
AdvBatch pgd_attack(const MlpModel& model, const Tensor& batch, const std::vector<int>& labels,
                    const BallSpec& ball, const AttackSpec& spec, std::uint64_t salt = 0);

/// PGD with momentum 0.75, initial step 2*eps, and step halving at fixed
/// checkpoint fractions; each halving restarts from the best point so far.
AdvBatch apgd_lite_attack(const MlpModel& model, const Tensor& batch, const std::vector<int>& labels,
                          const BallSpec& ball, const AttackSpec& spec, std::uint64_t salt = 0);

/// Dispatch on spec.kind.
AdvBatch run_attack(const MlpModel& model, const Tensor& batch, const std::vector<int>& labels,
                    const BallSpec& ball, const AttackSpec& spec, std::uint64_t salt = 0);

/// Runs every spec and keeps, per sample, the example with the highest
/// cross-entropy; ties go to the earliest spec.
AdvBatch worst_case_batch(const MlpModel& model, const Tensor& batch, const std::vector<int>& labels,
                          const std::vector<AttackSpec>& specs, double box_lo = 0.0,
                          double box_hi = 1.0, std::uint64_t salt = 0);

}  // namespace ramp
