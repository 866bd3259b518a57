#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ramp/tensor.hpp"

namespace ramp {

enum class AttackNorm { L1, L2, Linf };

std::string to_string(AttackNorm norm);
AttackNorm attack_norm_from_string(const std::string& s);

/// One per-sample adversarial region: rows of `center` are the clean points,
/// each with its own lp ball of radius eps intersected with the coordinate box.
struct BallSpec {
    AttackNorm norm = AttackNorm::Linf;
    double eps = 0.0;
    Tensor center;
    double box_lo = 0.0;
    double box_hi = 1.0;
};

double lp_norm(std::span<const double> v, AttackNorm norm);

// Euclidean projections of a single vector onto the lp ball of radius eps.
std::vector<double> project_l2(std::vector<double> v, double eps);
std::vector<double> project_linf(std::vector<double> v, double eps);
// Sort-based simplex reduction (soft-threshold by the critical theta).
std::vector<double> project_l1(std::vector<double> v, double eps);

std::vector<double> project_norm(std::vector<double> v, AttackNorm norm, double eps);

/// Per-row feasibility: delta = project_p(row - center_row, eps), then clamp
/// to the box. Exact for Linf; for L1/L2 the ball/box pair is alternated a
/// fixed 10 rounds.
Tensor project_ball_box(const Tensor& x_adv, const BallSpec& ball);

/// ln of the lp-ball volume in d dimensions via log-gamma.
double log_ball_volume(AttackNorm norm, std::size_t d, double eps);

/// The two norms with the largest ball volumes, larger volume first.
/// Equal volumes break by the fixed order Linf > L2 > L1. An explicit
/// override wins unconditionally.
std::pair<AttackNorm, AttackNorm> select_key_pair(
    double eps1, double eps2, double epsinf, std::size_t d,
    std::optional<std::pair<AttackNorm, AttackNorm>> override_pair = std::nullopt);

}  // namespace ramp
