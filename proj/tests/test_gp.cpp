#include <doctest.h>

#include <cmath>
#include <vector>

#include "ramp/gp.hpp"
#include "ramp/rng.hpp"

using namespace ramp;

namespace {

ModelDelta delta_like(const MlpModel& m, double fill) {
    ModelDelta d;
    for (const Layer& l : m.layers()) {
        d.entries.emplace_back(l.name + ".weight", std::vector<double>(l.weight.size(), fill));
        d.entries.emplace_back(l.name + ".bias", std::vector<double>(l.bias.size(), fill));
    }
    return d;
}

ModelDelta random_delta(const MlpModel& m, Rng& rng, double scale = 0.1) {
    ModelDelta d = delta_like(m, 0.0);
    for (auto& [name, v] : d.entries) {
        for (double& x : v) x = scale * rng.normal();
    }
    return d;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TEST_CASE("cosine similarity spot values") {
    CHECK(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
    CHECK(cosine_similarity(std::vector<double>{1, 1}, std::vector<double>{2, 2}) ==
          doctest::Approx(1.0));
    CHECK(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{1, 1}) ==
          doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 1}) == 0.0);
}

TEST_CASE("gp layer: cosine-scaled rule") {
    const std::vector<double> g_n = {1.0, 0.0};
    const std::vector<double> g_a = {1.0, 1.0};
    const auto out = gp_layer(g_n, g_a, GpVariant::MainTextEq2);
    CHECK(out[0] == doctest::Approx(1.0 / std::sqrt(2.0)));  // cos * g_n
    CHECK(out[1] == 0.0);

    // negative similarity is filtered to zero
    const auto zero = gp_layer(g_n, std::vector<double>{-1.0, 0.0}, GpVariant::MainTextEq2);
    CHECK(zero == std::vector<double>{0.0, 0.0});
}

TEST_CASE("gp layer: positive-part projection rule") {
    const std::vector<double> g_n = {1.0, 0.0};
    const std::vector<double> g_a = {1.0, 1.0};
    const auto out = gp_layer(g_n, g_a, GpVariant::AppendixProjPlus);
    CHECK(out[0] == doctest::Approx(1.0));  // <g_a, g_n>/||g_n||^2 = 1
    CHECK(out[1] == 0.0);

    const auto zero = gp_layer(g_n, std::vector<double>{-1.0, 0.0}, GpVariant::AppendixProjPlus);
    CHECK(zero == std::vector<double>{0.0, 0.0});

    const auto dead = gp_layer(std::vector<double>{0.0, 0.0}, g_a, GpVariant::AppendixProjPlus);
    CHECK(dead == std::vector<double>{0.0, 0.0});
}

TEST_CASE("gp output never has an anti-natural component") {
    Rng rng(55);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t d = 2 + rng.index(6);
        std::vector<double> g_n(d), g_a(d);
        for (double& v : g_n) v = rng.normal();
        for (double& v : g_a) v = rng.normal();
        for (GpVariant variant : {GpVariant::MainTextEq2, GpVariant::AppendixProjPlus}) {
            const auto out = gp_layer(g_n, g_a, variant);
            CHECK(dot(out, g_n) >= -1e-12);
        }
    }
}

TEST_CASE("scaling g_a leaves the cosine rule unchanged and scales the projection rule") {
    Rng rng(56);
    const std::size_t d = 5;
    std::vector<double> g_n(d), g_a(d);
    for (double& v : g_n) v = rng.normal();
    for (double& v : g_a) v = rng.normal();
    if (cosine_similarity(g_n, g_a) <= 0.0) {
        for (std::size_t i = 0; i < d; ++i) g_a[i] = g_n[i] + 0.1 * g_a[i];
    }
    const double c = 3.7;
    std::vector<double> g_a_scaled(d);
    for (std::size_t i = 0; i < d; ++i) g_a_scaled[i] = c * g_a[i];

    const auto eq2 = gp_layer(g_n, g_a, GpVariant::MainTextEq2);
    const auto eq2s = gp_layer(g_n, g_a_scaled, GpVariant::MainTextEq2);
    for (std::size_t i = 0; i < d; ++i) CHECK(eq2s[i] == doctest::Approx(eq2[i]).epsilon(1e-12));

    const auto proj = gp_layer(g_n, g_a, GpVariant::AppendixProjPlus);
    const auto projs = gp_layer(g_n, g_a_scaled, GpVariant::AppendixProjPlus);
    for (std::size_t i = 0; i < d; ++i) {
        CHECK(projs[i] == doctest::Approx(c * proj[i]).epsilon(1e-12));
    }
}

TEST_CASE("project_delta works layer-wise") {
    MlpModel m = MlpModel::init({2, 3, 2}, 3);
    Rng rng(57);

    SUBCASE("identical deltas pass through under the cosine rule") {
        const ModelDelta g = random_delta(m, rng);
        const ModelDelta p = project_delta(g, g, GpVariant::MainTextEq2);
        for (std::size_t l = 0; l < g.entries.size(); ++l) {
            for (std::size_t i = 0; i < g.entries[l].second.size(); ++i) {
                CHECK(p.entries[l].second[i] ==
                      doctest::Approx(g.entries[l].second[i]).epsilon(1e-12));
            }
        }
    }

    SUBCASE("orthogonal layers yield zero; mixed-sign layers keep only positive-cos layers") {
        // layer 0: g_a aligned; layer 1+: g_a opposed
        ModelDelta g_n = random_delta(m, rng);
        ModelDelta g_a = g_n;
        for (std::size_t l = 2; l < g_a.entries.size(); ++l) {
            for (double& v : g_a.entries[l].second) v = -v;
        }
        const ModelDelta p = project_delta(g_n, g_a, GpVariant::MainTextEq2);
        for (std::size_t l = 0; l < 2; ++l) {
            for (std::size_t i = 0; i < p.entries[l].second.size(); ++i) {
                CHECK(p.entries[l].second[i] ==
                      doctest::Approx(g_n.entries[l].second[i]).epsilon(1e-12));
            }
        }
        for (std::size_t l = 2; l < p.entries.size(); ++l) {
            for (double v : p.entries[l].second) CHECK(v == 0.0);
        }
    }
}

TEST_CASE("blended update") {
    MlpModel f_r = MlpModel::init({2, 3, 2}, 9);
    Rng rng(58);
    const ModelDelta g_a = random_delta(f_r, rng);
    const ModelDelta g_p = random_delta(f_r, rng);

    SUBCASE("beta=0 applies g_a alone, bit-identical") {
        const MlpModel direct = apply_delta(f_r, g_a);
        const MlpModel blended = blended_update(f_r, g_p, g_a, 0.0);
        for (std::size_t l = 0; l < direct.layers().size(); ++l) {
            CHECK(blended.layers()[l].weight.values() == direct.layers()[l].weight.values());
            CHECK(blended.layers()[l].bias.values() == direct.layers()[l].bias.values());
        }
    }

    SUBCASE("beta=1 with g_p == g_a is the plain adversarial update") {
        const MlpModel blended = blended_update(f_r, g_a, g_a, 1.0);
        const MlpModel direct = apply_delta(f_r, g_a);
        for (std::size_t l = 0; l < direct.layers().size(); ++l) {
            for (std::size_t i = 0; i < direct.layers()[l].weight.size(); ++i) {
                CHECK(blended.layers()[l].weight.values()[i] ==
                      doctest::Approx(direct.layers()[l].weight.values()[i]).epsilon(1e-15));
            }
        }
    }

    SUBCASE("beta=0.5 mixes the deltas linearly") {
        ModelDelta gp_unit = delta_like(f_r, 0.0);
        ModelDelta ga_unit = delta_like(f_r, 0.0);
        gp_unit.entries[0].second[0] = 1.0;
        ga_unit.entries[0].second[1] = 1.0;
        const MlpModel blended = blended_update(f_r, gp_unit, ga_unit, 0.5);
        CHECK(blended.layers()[0].weight.values()[0] ==
              doctest::Approx(f_r.layers()[0].weight.values()[0] + 0.5).epsilon(1e-15));
        CHECK(blended.layers()[0].weight.values()[1] ==
              doctest::Approx(f_r.layers()[0].weight.values()[1] + 0.5).epsilon(1e-15));
    }

    SUBCASE("with g_n == g_a both variants reduce to the plain update for any beta") {
        for (GpVariant variant : {GpVariant::MainTextEq2, GpVariant::AppendixProjPlus}) {
            const ModelDelta p = project_delta(g_a, g_a, variant);
            for (double beta : {0.0, 0.3, 1.0}) {
                const MlpModel blended = blended_update(f_r, p, g_a, beta);
                const MlpModel direct = apply_delta(f_r, g_a);
                for (std::size_t l = 0; l < direct.layers().size(); ++l) {
                    for (std::size_t i = 0; i < direct.layers()[l].weight.size(); ++i) {
                        CHECK(blended.layers()[l].weight.values()[i] ==
                              doctest::Approx(direct.layers()[l].weight.values()[i])
                                  .epsilon(1e-12));
                    }
                }
            }
        }
    }
}
