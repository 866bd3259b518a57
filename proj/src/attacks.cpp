#include "ramp/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ramp/errors.hpp"
#include "ramp/rng.hpp"

namespace ramp {

std::string to_string(AttackKind kind) {
    return kind == AttackKind::Pgd ? "pgd" : "apgd_lite";
}

AttackKind attack_kind_from_string(const std::string& s) {
    if (s == "pgd") return AttackKind::Pgd;
    if (s == "apgd_lite" || s == "apgd-lite" || s == "apgd") return AttackKind::ApgdLite;
    throw std::invalid_argument("unknown attack kind: " + s);
}

std::vector<double> steepest_step(std::span<const double> grad, AttackNorm norm, double step_size,
                                  double sparsity) {
    const std::size_t d = grad.size();
    std::vector<double> out(d, 0.0);
    switch (norm) {
        case AttackNorm::Linf: {
            for (std::size_t i = 0; i < d; ++i) {
                out[i] = grad[i] > 0.0 ? step_size : (grad[i] < 0.0 ? -step_size : 0.0);
            }
            return out;
        }
        case AttackNorm::L2: {
            const double n = lp_norm(grad, AttackNorm::L2);
            if (n == 0.0) return out;
            for (std::size_t i = 0; i < d; ++i) out[i] = step_size * grad[i] / n;
            return out;
        }
        case AttackNorm::L1: {
            if (sparsity <= 0.0 || sparsity > 1.0) {
                throw std::invalid_argument("l1 sparsity fraction must be in (0, 1]");
            }
            const std::size_t k =
                std::min(d, static_cast<std::size_t>(std::ceil(sparsity * static_cast<double>(d))));
            std::vector<std::size_t> idx(d);
            std::iota(idx.begin(), idx.end(), 0);
            std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
                const double ma = std::fabs(grad[a]), mb = std::fabs(grad[b]);
                if (ma != mb) return ma > mb;
                return a < b;
            });
            std::size_t nonzero = 0;
            for (std::size_t j = 0; j < k; ++j) {
                if (grad[idx[j]] != 0.0) ++nonzero;
            }
            if (nonzero == 0) return out;
            const double per = step_size / static_cast<double>(nonzero);
            for (std::size_t j = 0; j < k; ++j) {
                const double g = grad[idx[j]];
                if (g > 0.0) out[idx[j]] = per;
                else if (g < 0.0) out[idx[j]] = -per;
            }
            return out;
        }
    }
    return out;
}

std::vector<double> random_ball_point(AttackNorm norm, double eps, std::size_t d, Rng& rng) {
    std::vector<double> v(d, 0.0);
    switch (norm) {
        case AttackNorm::Linf: {
            for (double& x : v) x = rng.uniform(-eps, eps);
            return v;
        }
        case AttackNorm::L2: {
            double n2 = 0.0;
            for (double& x : v) {
                x = rng.normal();
                n2 += x * x;
            }
            const double n = std::sqrt(n2);
            if (n == 0.0) return std::vector<double>(d, 0.0);
            const double r = eps * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
            for (double& x : v) x *= r / n;
            return v;
        }
        case AttackNorm::L1: {
            // Dirichlet(1,...,1) weights with random signs, radius scaled for
            // a near-uniform interior point
            double sum = 0.0;
            for (double& x : v) {
                double u = rng.uniform();
                while (u <= 0.0) u = rng.uniform();
                x = -std::log(u);
                sum += x;
            }
            const double r = eps * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
            for (double& x : v) {
                x *= r / sum;
                if (rng.coin()) x = -x;
            }
            return v;
        }
    }
    return v;
}

std::vector<int> apgd_halving_checkpoints(int steps) {
    static constexpr double kFractions[] = {0.22, 0.41, 0.56, 0.67, 0.75, 0.82, 0.88, 0.94};
    std::vector<int> out;
    for (double c : kFractions) {
        const int it = static_cast<int>(std::ceil(c * steps));
        if (it >= 1 && it <= steps && (out.empty() || out.back() != it)) out.push_back(it);
    }
    return out;
}

namespace {

std::vector<double> per_sample_ce(const Shape& shape, std::span<const double> logits,
                                  const std::vector<int>& labels) {
    const std::size_t n = shape[0], k = shape[1];
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = logits.data() + i * k;
        double m = row[0];
        for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - m);
        out[i] = m + std::log(z) - row[static_cast<std::size_t>(labels[i])];
    }
    return out;
}

std::vector<double> eval_losses(const MlpModel& model, const Shape& shape,
                                const std::vector<double>& x_values,
                                const std::vector<int>& labels) {
    const Tensor x = Tensor::from_data(shape, x_values, false);
    const std::vector<double> logits = model.forward_values(x);
    return per_sample_ce({shape[0], model.num_classes()}, logits, labels);
}

// d(mean CE)/dx at the given points; per-row direction is what matters, the
// 1/N factor cancels in every steepest-step rule
std::vector<double> input_gradient(const MlpModel& model, const Shape& shape,
                                   const std::vector<double>& x_values,
                                   const std::vector<int>& labels) {
    Tensor x = Tensor::from_data(shape, x_values, true);
    Tensor logits = model.forward_input_grad(x);
    CrossEntropyResult ce = cross_entropy(logits, labels);
    ce.mean_loss.backward();
    return x.grad();
}

struct BestTracker {
    std::vector<double> x;     // [n*d]
    std::vector<double> loss;  // [n]

    void update(const std::vector<double>& cand_x, const std::vector<double>& cand_loss,
                std::size_t d) {
        for (std::size_t i = 0; i < cand_loss.size(); ++i) {
            if (cand_loss[i] > loss[i]) {
                loss[i] = cand_loss[i];
                std::copy(cand_x.begin() + static_cast<std::ptrdiff_t>(i * d),
                          cand_x.begin() + static_cast<std::ptrdiff_t>((i + 1) * d),
                          x.begin() + static_cast<std::ptrdiff_t>(i * d));
            }
        }
    }
};

void check_attack_inputs(const Tensor& batch, const std::vector<int>& labels, const BallSpec& ball,
                         const AttackSpec& spec) {
    if (spec.eps <= 0.0) throw std::invalid_argument("attack eps must be > 0");
    if (spec.steps < 1) throw std::invalid_argument("attack steps must be >= 1");
    if (batch.rows() != labels.size()) {
        throw ShapeError("attack: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(batch.rows()) + " rows");
    }
    if (!ball.center.defined() || ball.center.shape() != batch.shape()) {
        throw ShapeError("attack: ball center does not match batch shape");
    }
    if (ball.norm != spec.norm || ball.eps != spec.eps) {
        throw std::invalid_argument("attack: ball and spec disagree on norm or eps");
    }
}

std::vector<double> random_start(const Tensor& batch, const BallSpec& ball, Rng& rng) {
    const std::size_t n = batch.rows(), d = batch.cols();
    std::vector<double> x = batch.values();
    for (std::size_t i = 0; i < n; ++i) {
        const std::vector<double> delta = random_ball_point(ball.norm, ball.eps, d, rng);
        for (std::size_t j = 0; j < d; ++j) x[i * d + j] += delta[j];
    }
    Tensor t = Tensor::from_data(batch.shape(), std::move(x), false);
    return project_ball_box(t, ball).values();
}

AdvBatch finish(const MlpModel& model, const Shape& shape, BestTracker&& best) {
    Tensor x = Tensor::from_data(shape, std::move(best.x), false);
    std::vector<double> logits = model.forward_values(x);
    AdvBatch out;
    out.x_adv = std::move(x);
    out.logits = Tensor::from_data({shape[0], model.num_classes()}, std::move(logits), false);
    out.per_sample_loss = std::move(best.loss);
    return out;
}

}  // namespace

AdvBatch pgd_attack(const MlpModel& model, const Tensor& batch, const std::vector<int>& labels,
                    const BallSpec& ball, const AttackSpec& spec, std::uint64_t salt) {
    if (spec.kind != AttackKind::Pgd) throw std::invalid_argument("pgd_attack: spec.kind must be pgd");
    check_attack_inputs(batch, labels, ball, spec);
    const std::size_t n = batch.rows(), d = batch.cols();
    Rng rng(mix64(spec.seed, salt, 0x70676433ull));

    const double step = spec.step_size > 0.0 ? spec.step_size : 2.0 * spec.eps / spec.steps;

    std::vector<double> x_cur = random_start(batch, ball, rng);
    BestTracker best{x_cur, eval_losses(model, batch.shape(), x_cur, labels)};

    for (int t = 0; t < spec.steps; ++t) {
        const std::vector<double> g = input_gradient(model, batch.shape(), x_cur, labels);
        for (std::size_t i = 0; i < n; ++i) {
            const std::vector<double> s = steepest_step(
                std::span<const double>(g.data() + i * d, d), spec.norm, step,
                spec.l1_sparsity_fraction);
            for (std::size_t j = 0; j < d; ++j) x_cur[i * d + j] += s[j];
        }
        x_cur = project_ball_box(Tensor::from_data(batch.shape(), x_cur, false), ball).values();
        best.update(x_cur, eval_losses(model, batch.shape(), x_cur, labels), d);
    }
    return finish(model, batch.shape(), std::move(best));
}

AdvBatch apgd_lite_attack(const MlpModel& model, const Tensor& batch, const std::vector<int>& labels,
                          const BallSpec& ball, const AttackSpec& spec, std::uint64_t salt) {
    if (spec.kind != AttackKind::ApgdLite) {
        throw std::invalid_argument("apgd_lite_attack: spec.kind must be apgd_lite");
    }
    check_attack_inputs(batch, labels, ball, spec);
    const std::size_t n = batch.rows(), d = batch.cols();
    Rng rng(mix64(spec.seed, salt, 0x61706764ull));

    constexpr double kAlpha = 0.75;
    double step = 2.0 * spec.eps;
    const std::vector<int> checkpoints = apgd_halving_checkpoints(spec.steps);
    std::size_t next_cp = 0;

    std::vector<double> x_cur = random_start(batch, ball, rng);
    std::vector<double> x_prev = x_cur;
    BestTracker best{x_cur, eval_losses(model, batch.shape(), x_cur, labels)};

    for (int t = 1; t <= spec.steps; ++t) {
        const std::vector<double> g = input_gradient(model, batch.shape(), x_cur, labels);
        std::vector<double> x_next(n * d);
        for (std::size_t i = 0; i < n; ++i) {
            const std::vector<double> s = steepest_step(
                std::span<const double>(g.data() + i * d, d), spec.norm, step,
                spec.l1_sparsity_fraction);
            for (std::size_t j = 0; j < d; ++j) {
                const std::size_t a = i * d + j;
                x_next[a] = x_cur[a] + kAlpha * s[j] + (1.0 - kAlpha) * (x_cur[a] - x_prev[a]);
            }
        }
        x_next = project_ball_box(Tensor::from_data(batch.shape(), std::move(x_next), false), ball)
                     .values();
        best.update(x_next, eval_losses(model, batch.shape(), x_next, labels), d);
        x_prev = std::move(x_cur);
        x_cur = std::move(x_next);
        if (next_cp < checkpoints.size() && t == checkpoints[next_cp]) {
            step *= 0.5;
            x_cur = best.x;  // restart from the best point so far
            x_prev = best.x;
            ++next_cp;
        }
    }
    return finish(model, batch.shape(), std::move(best));
}

AdvBatch run_attack(const MlpModel& model, const Tensor& batch, const std::vector<int>& labels,
                    const BallSpec& ball, const AttackSpec& spec, std::uint64_t salt) {
    return spec.kind == AttackKind::Pgd ? pgd_attack(model, batch, labels, ball, spec, salt)
                                        : apgd_lite_attack(model, batch, labels, ball, spec, salt);
}

AdvBatch worst_case_batch(const MlpModel& model, const Tensor& batch, const std::vector<int>& labels,
                          const std::vector<AttackSpec>& specs, double box_lo, double box_hi,
                          std::uint64_t salt) {
    if (specs.empty()) throw std::invalid_argument("worst_case_batch: need at least one spec");
    const std::size_t n = batch.rows(), d = batch.cols();

    AdvBatch best;
    for (std::size_t s = 0; s < specs.size(); ++s) {
        BallSpec ball{specs[s].norm, specs[s].eps, batch, box_lo, box_hi};
        AdvBatch cand = run_attack(model, batch, labels, ball, specs[s], mix64(salt, s));
        if (s == 0) {
            best = std::move(cand);
            continue;
        }
        auto& bx = best.x_adv.values_mut();
        auto& bl = best.logits.values_mut();
        const std::size_t k = best.logits.cols();
        for (std::size_t i = 0; i < n; ++i) {
            if (cand.per_sample_loss[i] > best.per_sample_loss[i]) {  // ties keep the earlier spec
                best.per_sample_loss[i] = cand.per_sample_loss[i];
                std::copy_n(cand.x_adv.values().begin() + static_cast<std::ptrdiff_t>(i * d), d,
                            bx.begin() + static_cast<std::ptrdiff_t>(i * d));
                std::copy_n(cand.logits.values().begin() + static_cast<std::ptrdiff_t>(i * k), k,
                            bl.begin() + static_cast<std::ptrdiff_t>(i * k));
            }
        }
    }
    return best;
}

}  // namespace ramp
