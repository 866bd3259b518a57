#include <doctest.h>

#include <cmath>
#include <vector>

#include "ramp/losses.hpp"
#include "ramp/rng.hpp"

using namespace ramp;

namespace {

Tensor probs(const std::vector<double>& rows, std::size_t n, std::size_t k,
             bool requires_grad = false) {
    return Tensor::from_data({n, k}, rows, requires_grad);
}

CorrectIndexSet full_gamma(std::size_t n) {
    CorrectIndexSet g;
    g.batch_size = n;
    for (std::size_t i = 0; i < n; ++i) g.gamma.push_back(i);
    g.n_c = n;
    return g;
}

// plain re-evaluations of the three pairing formulas, used as oracles
double oracle_kl(const std::vector<double>& q, const std::vector<double>& r,
                 const std::vector<std::size_t>& gamma, std::size_t k) {
    double acc = 0.0;
    for (std::size_t i : gamma) {
        for (std::size_t j = 0; j < k; ++j) {
            const double qi = std::max(q[i * k + j], 1e-12);
            const double ri = std::max(r[i * k + j], 1e-12);
            acc += q[i * k + j] * (std::log(qi) - std::log(ri));
        }
    }
    return acc / static_cast<double>(gamma.size());
}

double oracle_mse(const std::vector<double>& q, const std::vector<double>& r,
                  const std::vector<std::size_t>& gamma, std::size_t k) {
    double acc = 0.0;
    for (std::size_t i : gamma) {
        for (std::size_t j = 0; j < k; ++j) {
            const double d = q[i * k + j] - r[i * k + j];
            acc += 0.5 * d * d;
        }
    }
    return acc / static_cast<double>(gamma.size());
}

double oracle_cos(const std::vector<double>& q, const std::vector<double>& r,
                  const std::vector<std::size_t>& gamma, std::size_t k) {
    double acc = 0.0;
    for (std::size_t i : gamma) {
        double qq = 0, rr = 0, qr = 0;
        for (std::size_t j = 0; j < k; ++j) {
            qq += q[i * k + j] * q[i * k + j];
            rr += r[i * k + j] * r[i * k + j];
            qr += q[i * k + j] * r[i * k + j];
        }
        const double c = (qq == 0 || rr == 0) ? 0.0 : qr / (std::sqrt(qq) * std::sqrt(rr));
        acc += 1.0 - c;
    }
    return acc / static_cast<double>(gamma.size());
}

std::vector<double> random_prob_rows(Rng& rng, std::size_t n, std::size_t k) {
    std::vector<double> out(n * k);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            out[i * k + j] = rng.uniform(0.01, 1.0);
            s += out[i * k + j];
        }
        for (std::size_t j = 0; j < k; ++j) out[i * k + j] /= s;
    }
    return out;
}

}  // namespace

TEST_CASE("cross entropy matches an independent softmax+log evaluation") {
    Rng rng(66);
    const std::size_t n = 7, k = 5;
    std::vector<double> logits(n * k);
    for (double& v : logits) v = rng.uniform(-3.0, 3.0);
    std::vector<int> y(n);
    for (int& v : y) v = static_cast<int>(rng.index(k));

    const CrossEntropyResult ce = cross_entropy(Tensor::from_data({n, k}, logits, false), y);

    double expect_mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) z += std::exp(logits[i * k + j]);
        const double p = std::exp(logits[i * k + static_cast<std::size_t>(y[i])]) / z;
        const double li = -std::log(p);
        CHECK(ce.per_sample[i] == doctest::Approx(li).epsilon(1e-12));
        expect_mean += li;
    }
    CHECK(ce.mean_loss.item() == doctest::Approx(expect_mean / n).epsilon(1e-12));
}

TEST_CASE("correct subset selection") {
    SUBCASE("all rows correct") {
        Tensor p = probs({0.9, 0.1, 0.2, 0.8}, 2, 2);
        const CorrectIndexSet g = correct_subset(p, {0, 1});
        CHECK(g.n_c == 2);
        CHECK(g.gamma == std::vector<std::size_t>{0, 1});
    }
    SUBCASE("none correct") {
        Tensor p = probs({0.9, 0.1, 0.2, 0.8}, 2, 2);
        const CorrectIndexSet g = correct_subset(p, {1, 0});
        CHECK(g.n_c == 0);
        CHECK(g.gamma.empty());
    }
    SUBCASE("mixed rows select exactly the matches") {
        Tensor p = probs({0.9, 0.1, 0.9, 0.1, 0.2, 0.8}, 3, 2);
        const CorrectIndexSet g = correct_subset(p, {0, 1, 1});
        CHECK(g.gamma == std::vector<std::size_t>{0, 2});
    }
    SUBCASE("argmax ties break to the lowest class index") {
        Tensor p = probs({0.5, 0.5}, 1, 2);
        CHECK(correct_subset(p, {0}).n_c == 1);
        CHECK(correct_subset(p, {1}).n_c == 0);
    }
}

TEST_CASE("kl pairing loss values") {
    SUBCASE("identical rows give zero") {
        Tensor p = probs({0.3, 0.7}, 1, 2);
        CHECK(kl_pairing_loss(p, p, full_gamma(1)).item() == doctest::Approx(0.0));
    }
    SUBCASE("empty subset gives zero") {
        Tensor q = probs({0.3, 0.7}, 1, 2);
        Tensor r = probs({0.6, 0.4}, 1, 2);
        CorrectIndexSet g;
        g.batch_size = 1;
        CHECK(kl_pairing_loss(q, r, g).item() == 0.0);
    }
    SUBCASE("frozen spot value 0.75/0.25 vs 0.5/0.5") {
        Tensor q = probs({0.75, 0.25}, 1, 2);
        Tensor r = probs({0.5, 0.5}, 1, 2);
        // direct summation: 0.75 ln 1.5 + 0.25 ln 0.5
        CHECK(kl_pairing_loss(q, r, full_gamma(1)).item() ==
              doctest::Approx(0.1308120359411370).epsilon(1e-12));
    }
    SUBCASE("random rows match the duplicate-formula oracle") {
        Rng rng(8);
        const std::size_t n = 6, k = 4;
        const auto qv = random_prob_rows(rng, n, k);
        const auto rv = random_prob_rows(rng, n, k);
        const std::vector<std::size_t> gamma = {0, 2, 5};
        CorrectIndexSet g{gamma, gamma.size(), n};
        const double got = kl_pairing_loss(probs(qv, n, k), probs(rv, n, k), g).item();
        CHECK(got == doctest::Approx(oracle_kl(qv, rv, gamma, k)).epsilon(1e-12));
        CHECK(got >= 0.0);
    }
}

TEST_CASE("mse pairing loss values") {
    SUBCASE("identical rows give zero") {
        Tensor p = probs({0.2, 0.8}, 1, 2);
        CHECK(mse_pairing_loss(p, p, full_gamma(1)).item() == 0.0);
    }
    SUBCASE("opposite one-hot rows give 1") {
        Tensor q = probs({1.0, 0.0}, 1, 2);
        Tensor r = probs({0.0, 1.0}, 1, 2);
        CHECK(mse_pairing_loss(q, r, full_gamma(1)).item() == doctest::Approx(1.0));
    }
    SUBCASE("random rows match the oracle") {
        Rng rng(9);
        const std::size_t n = 5, k = 3;
        const auto qv = random_prob_rows(rng, n, k);
        const auto rv = random_prob_rows(rng, n, k);
        const std::vector<std::size_t> gamma = {1, 3};
        CorrectIndexSet g{gamma, gamma.size(), n};
        CHECK(mse_pairing_loss(probs(qv, n, k), probs(rv, n, k), g).item() ==
              doctest::Approx(oracle_mse(qv, rv, gamma, k)).epsilon(1e-12));
    }
}

TEST_CASE("cosine pairing loss values") {
    SUBCASE("identical nonzero rows give zero") {
        Tensor p = probs({0.5, 0.5}, 1, 2);
        CHECK(cosine_pairing_loss(p, p, full_gamma(1)).item() == doctest::Approx(0.0));
    }
    SUBCASE("orthogonal rows give one") {
        Tensor q = probs({1.0, 0.0}, 1, 2);
        Tensor r = probs({0.0, 1.0}, 1, 2);
        CHECK(cosine_pairing_loss(q, r, full_gamma(1)).item() == doctest::Approx(1.0));
    }
    SUBCASE("random rows match the oracle") {
        Rng rng(10);
        const std::size_t n = 4, k = 6;
        const auto qv = random_prob_rows(rng, n, k);
        const auto rv = random_prob_rows(rng, n, k);
        const std::vector<std::size_t> gamma = {0, 1, 3};
        CorrectIndexSet g{gamma, gamma.size(), n};
        CHECK(cosine_pairing_loss(probs(qv, n, k), probs(rv, n, k), g).item() ==
              doctest::Approx(oracle_cos(qv, rv, gamma, k)).epsilon(1e-12));
    }
}

TEST_CASE("pairing losses are nonnegative and vanish on equal rows") {
    Rng rng(11);
    const std::size_t n = 8, k = 5;
    const auto qv = random_prob_rows(rng, n, k);
    Tensor q = probs(qv, n, k);
    const CorrectIndexSet g = full_gamma(n);
    for (PairingKind kind : {PairingKind::Kl, PairingKind::Mse, PairingKind::Cosine}) {
        PairingLossConfig cfg{1.0, kind, false};
        CHECK(pairing_loss(cfg, q, q, g).item() == doctest::Approx(0.0).epsilon(1e-12));
        const auto rv = random_prob_rows(rng, n, k);
        CHECK(pairing_loss(cfg, q, probs(rv, n, k), g).item() >= -1e-12);
    }
}

TEST_CASE("pairing gradient flows into p_r only and matches finite differences") {
    // p_q frozen as values; p_r produced by softmax of a graph tensor
    Rng rng(12);
    const std::size_t n = 4, k = 3;
    const auto qv = random_prob_rows(rng, n, k);
    std::vector<double> logits(n * k);
    for (double& v : logits) v = rng.uniform(-1.0, 1.0);
    const std::vector<std::size_t> gamma = {0, 2};
    CorrectIndexSet g{gamma, gamma.size(), n};

    for (PairingKind kind : {PairingKind::Kl, PairingKind::Mse, PairingKind::Cosine}) {
        PairingLossConfig cfg{1.0, kind, false};
        Tensor z = Tensor::from_data({n, k}, logits, true);
        Tensor p_r = softmax_rows(z);
        Tensor loss = pairing_loss(cfg, probs(qv, n, k), p_r, g);
        loss.backward();

        const double h = 1e-6;
        for (std::size_t i = 0; i < logits.size(); ++i) {
            auto eval = [&](double delta) {
                std::vector<double> pert = logits;
                pert[i] += delta;
                Tensor zz = Tensor::from_data({n, k}, pert, false);
                const auto pv = softmax_rows_values({n, k}, zz.values());
                switch (kind) {
                    case PairingKind::Kl: return oracle_kl(qv, pv, gamma, k);
                    case PairingKind::Mse: return oracle_mse(qv, pv, gamma, k);
                    case PairingKind::Cosine: return oracle_cos(qv, pv, gamma, k);
                }
                return 0.0;
            };
            const double fd = (eval(h) - eval(-h)) / (2.0 * h);
            CHECK(z.grad()[i] == doctest::Approx(fd).epsilon(1e-5));
        }
    }
}

TEST_CASE("kl target carries no gradient: frozen-target finite differences agree") {
    // moving the target distribution must not contribute gradient through the
    // loss node; autodiff grads equal FD with the target held fixed
    Rng rng(13);
    MlpModel m = MlpModel::init({3, 5, 3}, 321);
    std::vector<double> x_q(2 * 3), x_r(2 * 3);
    for (double& v : x_q) v = rng.uniform();
    for (double& v : x_r) v = rng.uniform();
    Tensor tq = Tensor::from_data({2, 3}, x_q, false);
    Tensor tr = Tensor::from_data({2, 3}, x_r, false);
    const std::vector<std::size_t> gamma = {0, 1};
    CorrectIndexSet g{gamma, gamma.size(), 2};

    // p_q from the same model, detached by construction
    auto p_q_values = [&] { return softmax_rows_values({2, 3}, m.forward_values(tq)); };

    m.zero_grad();
    Tensor p_r = softmax_rows(m.forward(tr));
    Tensor loss = kl_pairing_loss(Tensor::from_data({2, 3}, p_q_values(), false), p_r, g);
    loss.backward();

    // FD with p_q FROZEN at the base parameters
    const std::vector<double> frozen_q = p_q_values();
    const double h = 1e-6;
    for (Tensor p : m.parameters()) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            auto eval = [&](double delta) {
                p.values_mut()[i] += delta;
                const auto pv = softmax_rows_values({2, 3}, m.forward_values(tr));
                p.values_mut()[i] -= delta;
                return oracle_kl(frozen_q, pv, gamma, 3);
            };
            const double fd = (eval(h) - eval(-h)) / (2.0 * h);
            const double ad = p.grad()[i];
            CHECK(std::fabs(ad - fd) <= 1e-6 * std::max(1.0, std::fabs(fd)));
        }
    }
}

TEST_CASE("max loss selects the higher-loss example and re-evaluates it") {
    MlpModel m = MlpModel::init({2, 4, 2}, 17);
    AdvBatch a, b;
    a.x_adv = Tensor::from_data({2, 2}, {0.1, 0.2, 0.3, 0.4}, false);
    b.x_adv = Tensor::from_data({2, 2}, {0.9, 0.8, 0.7, 0.6}, false);
    a.per_sample_loss = {0.3, 0.9};
    b.per_sample_loss = {0.7, 0.2};
    const std::vector<int> y = {0, 1};

    const MaxLossResult r = max_loss(m, a, b, y);
    CHECK(r.chosen == std::vector<int>{1, 0});
    CHECK(r.x_selected.values()[0] == doctest::Approx(0.9));
    CHECK(r.x_selected.values()[2] == doctest::Approx(0.3));

    // value equals the mean CE of the selected rows
    const CrossEntropyResult ce = cross_entropy(
        Tensor::from_data({2, 2}, m.forward_values(r.x_selected), false), y);
    CHECK(r.loss.item() == doctest::Approx(ce.mean_loss.item()).epsilon(1e-12));

    SUBCASE("ties keep the first attack") {
        b.per_sample_loss = a.per_sample_loss;
        const MaxLossResult tie = max_loss(m, a, b, y);
        CHECK(tie.chosen == std::vector<int>{0, 0});
    }
}

TEST_CASE("ramp loss composition") {
    MlpModel m = MlpModel::init({2, 6, 2}, 18);
    Rng rng(14);
    std::vector<double> xs(4 * 2);
    for (double& v : xs) v = rng.uniform();
    Tensor batch = Tensor::from_data({4, 2}, xs, false);
    const std::vector<int> y = {0, 1, 0, 1};

    AttackSpec sq{AttackNorm::Linf, 0.05, 5, AttackKind::Pgd, 0.0, 0.05, 3};
    AttackSpec sr{AttackNorm::L1, 0.2, 5, AttackKind::Pgd, 0.0, 0.05, 3};
    BallSpec bq{sq.norm, sq.eps, batch, 0.0, 1.0};
    BallSpec br{sr.norm, sr.eps, batch, 0.0, 1.0};

    SUBCASE("lambda=0 equals the pure worst-case objective") {
        PairingLossConfig cfg{0.0, PairingKind::Kl, false};
        const RampLossResult r = ramp_loss(m, batch, y, bq, br, sq, sr, cfg, 5);
        CHECK(r.total.item() == doctest::Approx(r.max_value).epsilon(1e-15));
        CHECK(r.pairing_value == 0.0);
    }

    SUBCASE("lambda=2 with known parts is the linear combination") {
        PairingLossConfig cfg{2.0, PairingKind::Kl, false};
        const RampLossResult r = ramp_loss(m, batch, y, bq, br, sq, sr, cfg, 5);
        CHECK(r.total.item() ==
              doctest::Approx(r.max_value + 2.0 * r.pairing_value).epsilon(1e-12));
    }

    SUBCASE("monotone non-decreasing in lambda for fixed attack outputs") {
        const AdvBatch adv_q = run_attack(m, batch, y, bq, sq, 1);
        const AdvBatch adv_r = run_attack(m, batch, y, br, sr, 2);
        double prev = -1.0;
        for (double lambda : {0.0, 0.5, 1.0, 2.0, 5.0}) {
            PairingLossConfig cfg{lambda, PairingKind::Kl, false};
            const RampLossResult r = ramp_loss_from_batches(m, adv_q, adv_r, y, cfg);
            CHECK(r.total.item() >= prev - 1e-12);
            prev = r.total.item();
        }
    }

    SUBCASE("empty gamma degenerates to the max objective") {
        // labels that the q attack certainly misclassifies: flip all labels
        PairingLossConfig cfg{3.0, PairingKind::Kl, false};
        AdvBatch adv_q = run_attack(m, batch, y, bq, sq, 1);
        AdvBatch adv_r = run_attack(m, batch, y, br, sr, 2);
        // force wrong predictions by remapping labels to the argmin logit
        std::vector<int> anti(y.size());
        for (std::size_t i = 0; i < anti.size(); ++i) {
            const double* row = adv_q.logits.values().data() + i * 2;
            anti[i] = row[0] < row[1] ? 0 : 1;
        }
        const RampLossResult r = ramp_loss_from_batches(m, adv_q, adv_r, anti, cfg);
        CHECK(r.gamma.n_c == 0);
        CHECK(r.total.item() == doctest::Approx(r.max_value).epsilon(1e-15));
    }
}
