#include "ramp/gp.hpp"

#include <cmath>
#include <stdexcept>

#include "ramp/errors.hpp"

namespace ramp {

namespace {
constexpr double kNormFloor = 1e-15;
}

std::string to_string(GpVariant v) {
    return v == GpVariant::MainTextEq2 ? "cosine_scaled" : "orthogonal_projection";
}

GpVariant gp_variant_from_string(const std::string& s) {
    if (s == "cosine_scaled" || s == "cos") return GpVariant::MainTextEq2;
    if (s == "orthogonal_projection" || s == "proj") return GpVariant::AppendixProjPlus;
    throw std::invalid_argument("unknown gp variant: " + s);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ShapeError("cosine_similarity: lengths " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
    }
    double aa = 0.0, bb = 0.0, ab = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa += a[i] * a[i];
        bb += b[i] * b[i];
        ab += a[i] * b[i];
    }
    const double na = std::sqrt(aa), nb = std::sqrt(bb);
    if (na < kNormFloor || nb < kNormFloor) return 0.0;
    return ab / (na * nb);
}

std::vector<double> gp_layer(std::span<const double> g_n, std::span<const double> g_a,
                             GpVariant variant) {
    if (g_n.size() != g_a.size()) {
        throw ShapeError("gp_layer: lengths " + std::to_string(g_n.size()) + " vs " +
                         std::to_string(g_a.size()));
    }
    std::vector<double> out(g_n.size(), 0.0);
    if (variant == GpVariant::MainTextEq2) {
        const double c = cosine_similarity(g_n, g_a);
        if (c <= 0.0) return out;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * g_n[i];
        return out;
    }
    double nn = 0.0, an = 0.0;
    for (std::size_t i = 0; i < g_n.size(); ++i) {
        nn += g_n[i] * g_n[i];
        an += g_a[i] * g_n[i];
    }
    if (std::sqrt(nn) < kNormFloor || an <= 0.0) return out;
    const double c = an / nn;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * g_n[i];
    return out;
}

ModelDelta project_delta(const ModelDelta& g_n, const ModelDelta& g_a, GpVariant variant) {
    if (!g_n.same_layout(g_a)) throw ShapeError("project_delta: delta layouts differ");
    ModelDelta out;
    out.entries.reserve(g_n.entries.size());
    for (std::size_t l = 0; l < g_n.entries.size(); ++l) {
        out.entries.emplace_back(g_n.entries[l].first,
                                 gp_layer(g_n.entries[l].second, g_a.entries[l].second, variant));
    }
    return out;
}

MlpModel blended_update(const MlpModel& f_r, const ModelDelta& g_p, const ModelDelta& g_a,
                        double beta) {
    if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("beta must be in [0, 1]");
    if (!g_p.same_layout(g_a)) throw ShapeError("blended_update: delta layouts differ");
    if (beta == 0.0) return apply_delta(f_r, g_a);

    ModelDelta blend;
    blend.entries.reserve(g_a.entries.size());
    for (std::size_t l = 0; l < g_a.entries.size(); ++l) {
        const auto& p = g_p.entries[l].second;
        const auto& a = g_a.entries[l].second;
        std::vector<double> v(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) v[i] = beta * p[i] + (1.0 - beta) * a[i];
        blend.entries.emplace_back(g_a.entries[l].first, std::move(v));
    }
    return apply_delta(f_r, blend);
}

}  // namespace ramp
