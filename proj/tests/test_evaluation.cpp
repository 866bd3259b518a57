#include <doctest.h>

#include <cmath>
#include <vector>

#include "ramp/dataset.hpp"
#include "ramp/evaluation.hpp"
#include "ramp/rng.hpp"
#include "ramp/training.hpp"

using namespace ramp;

namespace {

AttackSpec spec_of(AttackNorm norm, double eps, int steps = 4) {
    AttackSpec s;
    s.norm = norm;
    s.eps = eps;
    s.steps = steps;
    s.kind = AttackKind::Pgd;
    s.seed = 3;
    return s;
}

std::array<AttackSpec, 3> eval_specs(double e1 = 0.3, double e2 = 0.15, double ei = 0.08) {
    return {spec_of(AttackNorm::L1, e1), spec_of(AttackNorm::L2, e2), spec_of(AttackNorm::Linf, ei)};
}

}  // namespace

TEST_CASE("robust report flag arithmetic") {
    RobustReport r;
    r.per_sample = {{true, true, true, true}, {true, true, false, true}};
    r.clean_acc = 1.0;
    r.l1_acc = 1.0;
    r.l2_acc = 0.5;
    r.linf_acc = 1.0;
    r.union_acc = 0.5;  // only the first sample holds everywhere
    CHECK_NOTHROW(validate(r));

    SUBCASE("aggregate mismatch is rejected") {
        r.union_acc = 1.0;
        CHECK_THROWS_AS(validate(r), std::logic_error);
    }
    SUBCASE("robust flag without clean correctness is rejected") {
        r.per_sample[1].clean = false;
        CHECK_THROWS_AS(validate(r), std::logic_error);
    }
}

TEST_CASE("union accuracy is the conjunction of per-norm flags") {
    const Dataset data = make_synthetic_dataset(SyntheticKind::Moons, 40, 2, 0.1, 17);
    MlpModel m = MlpModel::init({2, 12, 2}, 5);
    SgdOptimizer opt({0.2, 0.9, 0.0, 0});
    EpochContext ctx;
    ctx.run_seed = 1;
    ctx.batch_size = 16;
    for (int e = 0; e < 10; ++e) {
        ctx.epoch_index = e;
        nt_epoch(m, data, opt, ctx);
    }

    const RobustReport rep = evaluate_robustness(m, data, eval_specs(), 0.0, 1.0, 8);
    double u = 0.0;
    for (const SampleFlags& f : rep.per_sample) u += (f.l1 && f.l2 && f.linf) ? 1.0 : 0.0;
    u /= static_cast<double>(rep.per_sample.size());
    CHECK(rep.union_acc == doctest::Approx(u));
    CHECK(rep.union_acc <= std::min({rep.l1_acc, rep.l2_acc, rep.linf_acc}) + 1e-12);
    CHECK(std::min({rep.l1_acc, rep.l2_acc, rep.linf_acc}) <= rep.clean_acc + 1e-12);
}

TEST_CASE("per-norm robust accuracy never exceeds clean accuracy") {
    // attacks only flip correct predictions; they never repair one
    const Dataset data = make_synthetic_dataset(SyntheticKind::Blobs, 60, 3, 0.15, 23, 3);
    MlpModel m = MlpModel::init({3, 10, 3}, 29);
    const RobustReport rep = evaluate_robustness(m, data, eval_specs(0.4, 0.2, 0.1), 0.0, 1.0, 4);
    CHECK(rep.l1_acc <= rep.clean_acc + 1e-12);
    CHECK(rep.l2_acc <= rep.clean_acc + 1e-12);
    CHECK(rep.linf_acc <= rep.clean_acc + 1e-12);
}

TEST_CASE("predicted error difference formula") {
    DeltaErrorReport r;
    r.variance = 4.6017e-08;
    r.bias = 7e-04;
    r.tau_bar_sq = 0.0071 * 0.0071;
    r.m = 100000;

    SUBCASE("beta=0 gives zero") { CHECK(predicted_error_difference(r, 0.0) == 0.0); }
    SUBCASE("beta=1 with no angle term gives the variance") {
        DeltaErrorReport s = r;
        s.tau_bar_sq = 0.0;
        CHECK(predicted_error_difference(s, 1.0) == doctest::Approx(s.variance));
    }
    SUBCASE("beta=0.5 reproduces the frozen decomposition value") {
        // 0.75 * 4.6017e-08 - 0.25 * 5.041e-05 * 7e-04 = 2.569e-08
        const double expect = 0.75 * 4.6017e-08 - 0.25 * (0.0071 * 0.0071) * 7e-04;
        CHECK(predicted_error_difference(r, 0.5) == doctest::Approx(expect).epsilon(1e-12));
        CHECK(expect == doctest::Approx(2.57e-08).epsilon(0.01));
    }
    SUBCASE("finite-m correction scales the variance term") {
        const double inf_m = predicted_error_difference(r, 0.5, false);
        const double fin_m = predicted_error_difference(r, 0.5, true);
        const double var_part = 0.75 * r.variance;
        CHECK(fin_m - inf_m == doctest::Approx(var_part / static_cast<double>(r.m)).epsilon(1e-9));
    }
}

TEST_CASE("predicted delta gp formula substitutions") {
    SUBCASE("beta=0 gives (1+1/m) variance") {
        CHECK(predicted_delta_gp(2.0, 5.0, 0.3, 0.0, 4) == doctest::Approx(2.0));
    }
    SUBCASE("beta=1 with no angle gives variance/m") {
        CHECK(predicted_delta_gp(2.0, 5.0, 0.0, 1.0, 4) == doctest::Approx(0.5));
    }
}

TEST_CASE("monte carlo delta basics") {
    const std::size_t m = 50;
    std::vector<double> g_a(m, 0.5);

    SUBCASE("exact estimator and beta=0 give zero") {
        PairSampler exact = [&](std::vector<double>& a, std::vector<double>& n) {
            a = g_a;
            n = g_a;
        };
        CHECK(monte_carlo_delta(g_a, exact, 0.0, GpVariant::AppendixProjPlus, 10) == 0.0);
    }

    SUBCASE("beta=0 estimates the plain squared error") {
        Rng rng(5);
        const double sigma = 0.01;
        PairSampler noisy = [&](std::vector<double>& a, std::vector<double>& n) {
            a.resize(m);
            n.resize(m);
            for (std::size_t i = 0; i < m; ++i) {
                a[i] = g_a[i] + sigma * rng.normal();
                n[i] = g_a[i];
            }
        };
        const double est = monte_carlo_delta(g_a, noisy, 0.0, GpVariant::AppendixProjPlus, 4000);
        CHECK(est == doctest::Approx(sigma * sigma * m).epsilon(0.05));
    }
}

TEST_CASE("lemma prediction matches direct monte carlo on a gaussian ensemble") {
    // known g_a; noisy adversarial estimate; biased+noisy natural estimate
    const std::size_t m = 2000;
    Rng setup(11);
    std::vector<double> g_a(m), bias_vec(m);
    for (double& v : g_a) v = setup.normal() / std::sqrt(static_cast<double>(m));
    for (double& v : bias_vec) v = 0.3 * setup.normal() / std::sqrt(static_cast<double>(m));
    const double sigma_a = 0.001, sigma_n = 0.0005;

    Rng noise(13);
    PairSampler sampler = [&](std::vector<double>& a, std::vector<double>& n) {
        a.resize(m);
        n.resize(m);
        for (std::size_t i = 0; i < m; ++i) {
            a[i] = g_a[i] + sigma_a * noise.normal();
            n[i] = g_a[i] + bias_vec[i] + sigma_n * noise.normal();
        }
    };

    // measure the ensemble terms with an independent pass
    Rng probe(13);
    double variance = 0.0, bias = 0.0, tau_sq = 0.0;
    const int probe_trials = 3000;
    std::vector<double> a(m), n(m);
    for (int t = 0; t < probe_trials; ++t) {
        double v = 0.0, b = 0.0;
        std::vector<double> diff(m);
        for (std::size_t i = 0; i < m; ++i) {
            a[i] = g_a[i] + sigma_a * probe.normal();
            n[i] = g_a[i] + bias_vec[i] + sigma_n * probe.normal();
            v += (g_a[i] - a[i]) * (g_a[i] - a[i]);
            diff[i] = g_a[i] - n[i];
            b += diff[i] * diff[i];
        }
        variance += v;
        bias += b;
        double nn = 0.0, dd = 0.0, nd = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            nn += n[i] * n[i];
            dd += diff[i] * diff[i];
            nd += n[i] * diff[i];
        }
        tau_sq += (nn > 0 && dd > 0) ? std::max(0.0, 1.0 - nd * nd / (nn * dd)) : 0.0;
    }
    variance /= probe_trials;
    bias /= probe_trials;
    tau_sq /= probe_trials;

    const double beta = 0.5;
    const double lemma = predicted_delta_gp(variance, bias, tau_sq, beta, m);
    const double direct = monte_carlo_delta(g_a, sampler, beta, GpVariant::AppendixProjPlus, 3000);
    CHECK(direct == doctest::Approx(lemma).epsilon(0.05));
}

TEST_CASE("delta term estimation along a training trajectory") {
    const Dataset data = make_synthetic_dataset(SyntheticKind::Moons, 64, 2, 0.1, 37);
    MlpModel m0 = MlpModel::init({2, 8, 2}, 41);
    MlpModel m1 = m0.clone();
    SgdOptimizer opt({0.2, 0.9, 0.0, 0});
    EpochContext ctx;
    ctx.run_seed = 2;
    ctx.batch_size = 16;
    for (int e = 0; e < 3; ++e) {
        ctx.epoch_index = e;
        nt_epoch(m1, data, opt, ctx);
    }
    const std::vector<MlpModel> snapshots = {m0, m1};
    const std::vector<AttackSpec> specs = {spec_of(AttackNorm::Linf, 0.05, 3)};

    SUBCASE("minibatch == full set gives zero variance") {
        DeltaEstimatorSettings s;
        s.minibatch_size = data.size();
        s.minibatch_draws = 2;
        s.seed = 7;
        const DeltaAnalysis out = estimate_delta_terms(snapshots, data, specs, s);
        CHECK(out.report.variance == doctest::Approx(0.0).epsilon(1e-15));
        CHECK(out.report.bias >= 0.0);
        CHECK(out.report.m == m0.parameter_count());
        CHECK(out.per_snapshot.size() == 2);
    }

    SUBCASE("terms are finite and tau in [0, 1]") {
        DeltaEstimatorSettings s;
        s.minibatch_size = 16;
        s.minibatch_draws = 3;
        s.seed = 9;
        const DeltaAnalysis out = estimate_delta_terms(snapshots, data, specs, s);
        CHECK(std::isfinite(out.report.variance));
        CHECK(out.report.variance >= 0.0);
        CHECK(std::isfinite(out.report.bias));
        CHECK(out.report.tau_bar_sq >= 0.0);
        CHECK(out.report.tau_bar_sq <= 1.0);
    }

    SUBCASE("fewer than two snapshots is an error") {
        DeltaEstimatorSettings s;
        CHECK_THROWS_AS(estimate_delta_terms({m0}, data, specs, s), std::invalid_argument);
    }
}
