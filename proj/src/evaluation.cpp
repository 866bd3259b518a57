#include "ramp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ramp/errors.hpp"
#include "ramp/rng.hpp"
#include "ramp/tensor.hpp"

namespace ramp {

double RobustReport::acc_for(AttackNorm norm) const {
    switch (norm) {
        case AttackNorm::L1: return l1_acc;
        case AttackNorm::L2: return l2_acc;
        case AttackNorm::Linf: return linf_acc;
    }
    return 0.0;
}

void validate(const RobustReport& report) {
    const double n = static_cast<double>(report.per_sample.size());
    if (n == 0.0) return;
    std::size_t c = 0, a1 = 0, a2 = 0, ai = 0, u = 0;
    for (const SampleFlags& f : report.per_sample) {
        if ((f.l1 || f.l2 || f.linf) && !f.clean) {
            throw std::logic_error("robust flag set on a clean-misclassified sample");
        }
        c += f.clean;
        a1 += f.l1;
        a2 += f.l2;
        ai += f.linf;
        u += (f.l1 && f.l2 && f.linf);
    }
    auto close = [](double a, double b) { return std::fabs(a - b) <= 1e-12; };
    if (!close(report.clean_acc, c / n) || !close(report.l1_acc, a1 / n) ||
        !close(report.l2_acc, a2 / n) || !close(report.linf_acc, ai / n) ||
        !close(report.union_acc, u / n)) {
        throw std::logic_error("robust report aggregates do not match per-sample flags");
    }
    const double min_norm = std::min({report.l1_acc, report.l2_acc, report.linf_acc});
    if (report.union_acc > min_norm + 1e-12 || min_norm > report.clean_acc + 1e-12) {
        throw std::logic_error("robust report violates union <= per-norm <= clean");
    }
}

RobustReport evaluate_robustness(const MlpModel& model, const Dataset& eval_set,
                                 const std::array<AttackSpec, 3>& specs, double box_lo,
                                 double box_hi, std::uint64_t salt, std::size_t eval_batch) {
    RobustReport report;
    const std::size_t n = eval_set.size();
    report.per_sample.resize(n);
    if (n == 0) return report;

    for (std::size_t start = 0; start < n; start += eval_batch) {
        const std::size_t end = std::min(n, start + eval_batch);
        std::vector<std::size_t> idx(end - start);
        std::iota(idx.begin(), idx.end(), start);
        const Tensor x = eval_set.batch_features(idx);
        const std::vector<int> y = eval_set.batch_labels(idx);

        const std::vector<double> clean_logits = model.forward_values(x);
        const std::vector<int> clean_pred =
            argmax_rows({idx.size(), model.num_classes()}, clean_logits);

        for (std::size_t i = 0; i < idx.size(); ++i) {
            report.per_sample[start + i].clean = (clean_pred[i] == y[i]);
        }

        for (const AttackSpec& spec : specs) {
            BallSpec ball{spec.norm, spec.eps, x, box_lo, box_hi};
            const AdvBatch adv =
                run_attack(model, x, y, ball, spec, mix64(salt, static_cast<std::uint64_t>(spec.norm), start));
            const std::vector<int> adv_pred = argmax_rows(adv.logits.shape(), adv.logits.values());
            for (std::size_t i = 0; i < idx.size(); ++i) {
                SampleFlags& f = report.per_sample[start + i];
                const bool held = f.clean && adv_pred[i] == y[i];
                switch (spec.norm) {
                    case AttackNorm::L1: f.l1 = held; break;
                    case AttackNorm::L2: f.l2 = held; break;
                    case AttackNorm::Linf: f.linf = held; break;
                }
            }
        }
    }

    std::size_t c = 0, a1 = 0, a2 = 0, ai = 0, u = 0;
    for (const SampleFlags& f : report.per_sample) {
        c += f.clean;
        a1 += f.l1;
        a2 += f.l2;
        ai += f.linf;
        u += (f.l1 && f.l2 && f.linf);
    }
    const double dn = static_cast<double>(n);
    report.clean_acc = c / dn;
    report.l1_acc = a1 / dn;
    report.l2_acc = a2 / dn;
    report.linf_acc = ai / dn;
    report.union_acc = u / dn;
    validate(report);
    return report;
}

namespace {

// mean-CE parameter gradient over precomputed examples, flattened
std::vector<double> model_gradient(const MlpModel& model, const Tensor& x,
                                   const std::vector<int>& y) {
    model.zero_grad();
    Tensor logits = model.forward(x);
    CrossEntropyResult ce = cross_entropy(logits, y);
    ce.mean_loss.backward();
    std::vector<double> g = model.flat_grad();
    model.zero_grad();
    return g;
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double sin_sq_angle(std::span<const double> a, std::span<const double> b) {
    double aa = 0.0, bb = 0.0, ab = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa += a[i] * a[i];
        bb += b[i] * b[i];
        ab += a[i] * b[i];
    }
    if (std::sqrt(aa) < 1e-15 || std::sqrt(bb) < 1e-15) return 0.0;  // degenerate -> 0
    const double cos2 = (ab * ab) / (aa * bb);
    return std::max(0.0, 1.0 - cos2);
}

}  // namespace

DeltaAnalysis estimate_delta_terms(const std::vector<MlpModel>& snapshots, const Dataset& heldout,
                                   const std::vector<AttackSpec>& specs,
                                   const DeltaEstimatorSettings& settings) {
    if (snapshots.size() < 2) {
        throw std::invalid_argument("delta estimation needs at least 2 trajectory snapshots");
    }
    if (specs.empty()) throw std::invalid_argument("delta estimation needs an attack spec");
    if (settings.minibatch_draws < 1) throw std::invalid_argument("minibatch_draws must be >= 1");
    const std::size_t n = heldout.size();
    const std::size_t mb = std::min(settings.minibatch_size, n);
    if (mb == 0) throw std::invalid_argument("empty held-out set");

    DeltaAnalysis out;
    out.report.m = snapshots.front().parameter_count();
    out.report.beta = settings.beta;

    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    const Tensor x_full = heldout.all_features();
    const std::vector<int> y_full = heldout.labels;

    for (std::size_t t = 0; t < snapshots.size(); ++t) {
        const MlpModel& model = snapshots[t];
        // one adversarial version of the held-out set per snapshot; minibatch
        // gradients subsample it so that minibatch == full set gives variance 0
        const AdvBatch adv = worst_case_batch(model, x_full, y_full, specs, settings.box_lo,
                                              settings.box_hi, mix64(settings.seed, t, 0xadull));
        const std::vector<double> g_a = model_gradient(model, adv.x_adv, y_full);

        double var_t = 0.0, bias_t = 0.0, tau_t = 0.0;
        for (int draw = 0; draw < settings.minibatch_draws; ++draw) {
            Rng rng(mix64(settings.seed, t, static_cast<std::uint64_t>(draw), 0x6d62ull));
            std::vector<std::size_t> idx;
            if (mb == n) {
                idx = all;
            } else {
                std::vector<std::size_t> pool = all;
                rng.shuffle(pool);
                idx.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(mb));
            }
            std::vector<double> adv_rows(idx.size() * heldout.dim);
            for (std::size_t r = 0; r < idx.size(); ++r) {
                std::copy_n(
                    adv.x_adv.values().begin() + static_cast<std::ptrdiff_t>(idx[r] * heldout.dim),
                    heldout.dim, adv_rows.begin() + static_cast<std::ptrdiff_t>(r * heldout.dim));
            }
            const Tensor x_adv_mb =
                Tensor::from_data({idx.size(), heldout.dim}, std::move(adv_rows), false);
            const Tensor x_clean_mb = heldout.batch_features(idx);
            const std::vector<int> y_mb = heldout.batch_labels(idx);

            const std::vector<double> g_hat_a = model_gradient(model, x_adv_mb, y_mb);
            const std::vector<double> g_hat_n = model_gradient(model, x_clean_mb, y_mb);

            var_t += sq_dist(g_a, g_hat_a);
            bias_t += sq_dist(g_a, g_hat_n);
            std::vector<double> diff(g_a.size());
            for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = g_a[i] - g_hat_n[i];
            tau_t += sin_sq_angle(g_hat_n, diff);
        }
        const double inv = 1.0 / settings.minibatch_draws;
        SnapshotDeltaTerms terms;
        terms.index = static_cast<int>(t);
        terms.variance = var_t * inv;
        terms.bias = bias_t * inv;
        terms.tau_sq = tau_t * inv;
        DeltaErrorReport snap;
        snap.variance = terms.variance;
        snap.bias = terms.bias;
        snap.tau_bar_sq = terms.tau_sq;
        snap.m = out.report.m;
        terms.predicted_diff = predicted_error_difference(snap, settings.beta);
        out.per_snapshot.push_back(terms);

        out.report.variance += terms.variance;
        out.report.bias += terms.bias;
        out.report.tau_bar_sq += terms.tau_sq;
    }

    const double inv_t = 1.0 / static_cast<double>(snapshots.size());
    out.report.variance *= inv_t;
    out.report.bias *= inv_t;
    out.report.tau_bar_sq *= inv_t;
    out.report.predicted_diff = predicted_error_difference(out.report, settings.beta);
    return out;
}

double predicted_error_difference(const DeltaErrorReport& report, double beta, bool finite_m) {
    if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("beta must be in [0, 1]");
    double var_coeff = beta * (2.0 - beta);
    if (finite_m) {
        if (report.m == 0) throw std::invalid_argument("finite-m correction needs m >= 1");
        var_coeff *= 1.0 + 1.0 / static_cast<double>(report.m);
    }
    return var_coeff * report.variance - beta * beta * report.tau_bar_sq * report.bias;
}

double predicted_delta_gp(double variance, double bias, double tau_bar_sq, double beta,
                          std::size_t m) {
    if (m < 1) throw std::invalid_argument("m must be >= 1");
    if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("beta must be in [0, 1]");
    const double md = static_cast<double>(m);
    const double var_coeff = (1.0 - beta) * (1.0 - beta) + (2.0 * beta - beta * beta) / md;
    return var_coeff * variance + beta * beta * tau_bar_sq * bias;
}

double monte_carlo_delta(std::span<const double> g_a, const PairSampler& sampler, double beta,
                         GpVariant variant, int trials) {
    if (trials < 1) throw std::invalid_argument("trials must be >= 1");
    if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("beta must be in [0, 1]");
    const std::size_t m = g_a.size();
    std::vector<double> g_hat_a(m), g_hat_n(m);
    double acc = 0.0;
    for (int t = 0; t < trials; ++t) {
        sampler(g_hat_a, g_hat_n);
        const std::vector<double> gp = gp_layer(g_hat_n, g_hat_a, variant);
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double agg = beta * gp[i] + (1.0 - beta) * g_hat_a[i];
            const double d = g_a[i] - agg;
            s += d * d;
        }
        acc += s;
    }
    return acc / static_cast<double>(trials);
}

}  // namespace ramp
