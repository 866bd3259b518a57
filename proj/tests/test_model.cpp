#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ramp/errors.hpp"
#include "ramp/model.hpp"
#include "ramp/rng.hpp"

using namespace ramp;

namespace {

MlpModel tiny_model(std::uint64_t seed = 3) { return MlpModel::init({2, 4, 2}, seed); }

void fake_unit_grads(const MlpModel& m) {
    for (Tensor p : m.parameters()) {
        p.accumulate_grad(std::vector<double>(p.size(), 0.0));
    }
}

std::filesystem::path temp_path(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("sgd step without momentum or decay") {
    Layer l;
    l.name = "fc1";
    l.weight = Tensor::from_data({1, 1}, {1.0}, true);
    l.bias = Tensor::zeros({1}, true);
    l.act = Activation::Identity;
    MlpModel m = MlpModel::from_layers({l});
    m.layers()[0].weight.accumulate_grad(std::vector<double>{2.0});
    m.layers()[0].bias.accumulate_grad(std::vector<double>{0.0});

    SgdOptimizer opt({0.1, 0.0, 0.0, 0});
    opt.step(m);
    CHECK(m.layers()[0].weight.values()[0] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("zero gradient leaves parameters unchanged") {
    MlpModel m = tiny_model();
    const std::vector<double> before = m.layers()[0].weight.values();
    fake_unit_grads(m);
    SgdOptimizer opt({0.5, 0.0, 0.0, 0});
    opt.step(m);
    CHECK(m.layers()[0].weight.values() == before);
}

TEST_CASE("sgd with momentum matches the hand-unrolled recurrence") {
    Layer l;
    l.name = "fc1";
    l.weight = Tensor::from_data({1, 1}, {1.0}, true);
    l.bias = Tensor::from_data({1}, {2.0}, true);
    l.act = Activation::Identity;
    MlpModel m = MlpModel::from_layers({l});

    const double mu = 0.1, mom = 0.9, wd = 0.01;
    SgdOptimizer opt({mu, mom, wd, 0});

    // oracle: explicit v/theta recurrence over three steps
    double theta_w = 1.0, v_w = 0.0;
    double theta_b = 2.0, v_b = 0.0;
    const double grads[3] = {1.0, -0.5, 0.25};
    for (int s = 0; s < 3; ++s) {
        m.zero_grad();
        m.layers()[0].weight.accumulate_grad(std::vector<double>{grads[s]});
        m.layers()[0].bias.accumulate_grad(std::vector<double>{-grads[s]});
        opt.step(m);

        v_w = mom * v_w + grads[s] + wd * theta_w;
        theta_w -= mu * v_w;
        v_b = mom * v_b + (-grads[s]) + wd * theta_b;
        theta_b -= mu * v_b;
        CHECK(m.layers()[0].weight.values()[0] == doctest::Approx(theta_w).epsilon(1e-15));
        CHECK(m.layers()[0].bias.values()[0] == doctest::Approx(theta_b).epsilon(1e-15));
    }
}

TEST_CASE("sgd refuses to step without gradients") {
    MlpModel m = tiny_model();
    SgdOptimizer opt({0.1, 0.0, 0.0, 0});
    CHECK_THROWS_AS(opt.step(m), std::runtime_error);
}

TEST_CASE("model init is deterministic per seed") {
    MlpModel a = MlpModel::init({3, 5, 2}, 42);
    MlpModel b = MlpModel::init({3, 5, 2}, 42);
    MlpModel c = MlpModel::init({3, 5, 2}, 43);
    CHECK(a.layers()[0].weight.values() == b.layers()[0].weight.values());
    CHECK(a.layers()[0].weight.values() != c.layers()[0].weight.values());
}

TEST_CASE("model delta: zero, single-entry, inverse pair") {
    MlpModel before = tiny_model(11);

    SUBCASE("identical models give an all-zero delta") {
        const ModelDelta d = model_delta(before, before);
        for (const auto& [name, v] : d.entries) {
            for (double x : v) CHECK(x == 0.0);
        }
    }

    SUBCASE("single perturbed entry shows up alone") {
        MlpModel after = before.clone();
        after.layers_mut()[0].weight.values_mut()[3] += 0.5;
        const ModelDelta d = model_delta(after, before);
        CHECK(d.entries[0].second[3] == doctest::Approx(0.5));
        double total = 0.0;
        for (const auto& [name, v] : d.entries) {
            for (double x : v) total += std::fabs(x);
        }
        CHECK(total == doctest::Approx(0.5));
    }

    SUBCASE("apply_delta inverts model_delta bit-exactly") {
        Rng rng(77);
        MlpModel after = before.clone();
        for (Tensor p : after.parameters()) {
            for (double& v : p.values_mut()) v += 0.01 * rng.normal();
        }
        const MlpModel rebuilt = apply_delta(before, model_delta(after, before));
        for (std::size_t l = 0; l < after.layers().size(); ++l) {
            CHECK(rebuilt.layers()[l].weight.values() == after.layers()[l].weight.values());
            CHECK(rebuilt.layers()[l].bias.values() == after.layers()[l].bias.values());
        }
    }
}

TEST_CASE("model delta rejects architecture mismatch") {
    MlpModel a = MlpModel::init({2, 4, 2}, 1);
    MlpModel b = MlpModel::init({2, 5, 2}, 1);
    CHECK_THROWS_AS(model_delta(a, b), ShapeError);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    MlpModel m = MlpModel::init({3, 7, 4}, 1234);
    const auto path = temp_path("ramp_test_roundtrip.ckpt");
    save_checkpoint(m, path);
    const MlpModel loaded = load_checkpoint(path);

    REQUIRE(loaded.same_architecture(m));
    for (std::size_t l = 0; l < m.layers().size(); ++l) {
        CHECK(loaded.layers()[l].weight.values() == m.layers()[l].weight.values());
        CHECK(loaded.layers()[l].bias.values() == m.layers()[l].bias.values());
        CHECK(loaded.layers()[l].name == m.layers()[l].name);
    }
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint loader rejects bad magic and truncation") {
    const auto path = temp_path("ramp_test_bad.ckpt");
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOTMAGIC";
    }
    CHECK_THROWS_AS(load_checkpoint(path), ParseError);

    MlpModel m = tiny_model();
    save_checkpoint(m, path);
    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 9);
    CHECK_THROWS_AS(load_checkpoint(path), ParseError);
    std::filesystem::remove(path);
}
