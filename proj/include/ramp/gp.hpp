#pragma once

#include <span>
#include <string>
#include <vector>

#include "ramp/model.hpp"

namespace ramp {

/// The two projection rules differ by a factor ||g_a||/||g_n|| per layer; both
/// are kept selectable.
enum class GpVariant { MainTextEq2, AppendixProjPlus };

std::string to_string(GpVariant v);
GpVariant gp_variant_from_string(const std::string& s);

struct GpConfig {
    double beta = 0.5;
    GpVariant variant = GpVariant::MainTextEq2;
};

/// a.b / (|a||b|); 0 when either norm is below 1e-15.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Filtered share of the natural update for one layer.
/// MainTextEq2:      cos(g_n, g_a) * g_n when cos > 0, else 0.
/// AppendixProjPlus: max(<g_a, g_n>, 0) * g_n / |g_n|^2   (0 on dead g_n).
std::vector<double> gp_layer(std::span<const double> g_n, std::span<const double> g_a,
                             GpVariant variant);

/// Layer-wise gp_layer over matching deltas.
ModelDelta project_delta(const ModelDelta& g_n, const ModelDelta& g_a, GpVariant variant);

/// f_r + beta * g_p + (1 - beta) * g_a. beta == 0 applies g_a alone so the
/// collapse to the plain adversarial update is exact.
MlpModel blended_update(const MlpModel& f_r, const ModelDelta& g_p, const ModelDelta& g_a,
                        double beta);

}  // namespace ramp
