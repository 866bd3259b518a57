#include "ramp/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ramp/errors.hpp"
#include "ramp/rng.hpp"

namespace ramp {

namespace {

constexpr double kProbFloor = 1e-12;  // clamp before logs
constexpr double kNormFloor = 1e-15;

void check_prob_pair(const Tensor& p_q, const Tensor& p_r) {
    if (p_q.shape() != p_r.shape() || p_q.shape().size() != 2) {
        throw ShapeError("pairing loss: probability shapes " + shape_str(p_q.shape()) + " vs " +
                         shape_str(p_r.shape()));
    }
}

void check_gamma(const CorrectIndexSet& gamma, std::size_t n) {
    if (gamma.batch_size != n || gamma.n_c != gamma.gamma.size()) {
        throw std::invalid_argument("pairing loss: index set inconsistent with batch");
    }
    for (std::size_t i : gamma.gamma) {
        if (i >= n) throw std::invalid_argument("pairing loss: index out of range");
    }
}

}  // namespace

std::string to_string(PairingKind kind) {
    switch (kind) {
        case PairingKind::Kl: return "kl";
        case PairingKind::Mse: return "mse";
        case PairingKind::Cosine: return "cosine";
    }
    return "?";
}

PairingKind pairing_kind_from_string(const std::string& s) {
    if (s == "kl") return PairingKind::Kl;
    if (s == "mse") return PairingKind::Mse;
    if (s == "cosine" || s == "cos") return PairingKind::Cosine;
    throw std::invalid_argument("unknown pairing kind: " + s);
}

CorrectIndexSet correct_subset(const Tensor& p_q, const std::vector<int>& labels) {
    if (p_q.shape().size() != 2 || p_q.rows() != labels.size()) {
        throw ShapeError("correct_subset: " + std::to_string(labels.size()) + " labels for " +
                         shape_str(p_q.shape()));
    }
    const std::vector<int> pred = argmax_rows(p_q.shape(), p_q.values());
    CorrectIndexSet out;
    out.batch_size = p_q.rows();
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == labels[i]) out.gamma.push_back(i);
    }
    out.n_c = out.gamma.size();
    return out;
}

Tensor kl_pairing_loss(const Tensor& p_q, const Tensor& p_r, const CorrectIndexSet& gamma,
                       bool bidirectional) {
    check_prob_pair(p_q, p_r);
    check_gamma(gamma, p_q.rows());
    if (gamma.n_c == 0) return Tensor::scalar(0.0);

    const std::size_t k = p_q.cols();
    const double inv_nc = 1.0 / static_cast<double>(gamma.n_c);
    const std::vector<double> q = p_q.values();  // detached copy; target carries no graph
    const auto& r = p_r.values();

    double acc = 0.0;
    for (std::size_t i : gamma.gamma) {
        for (std::size_t j = 0; j < k; ++j) {
            const double qi = q[i * k + j];
            const double ri = r[i * k + j];
            const double lq = std::log(std::max(qi, kProbFloor));
            const double lr = std::log(std::max(ri, kProbFloor));
            if (qi > 0.0) acc += qi * (lq - lr);
            if (bidirectional && ri > 0.0) acc += ri * (lr - lq);
        }
    }
    const double value = (bidirectional ? 0.5 : 1.0) * inv_nc * acc;

    Tensor rc = p_r;
    std::vector<std::size_t> idx = gamma.gamma;
    const double scale = (bidirectional ? 0.5 : 1.0) * inv_nc;
    return Tensor::make_op(
        Shape{1}, {value}, {p_r},
        [rc, q, idx, k, scale, bidirectional](const std::vector<double>& gy) {
            if (!rc.requires_grad()) return;
            const auto& r = rc.values();
            std::vector<double> gr(r.size(), 0.0);
            for (std::size_t i : idx) {
                for (std::size_t j = 0; j < k; ++j) {
                    const double qi = q[i * k + j];
                    const double ri = r[i * k + j];
                    double g = 0.0;
                    if (ri > kProbFloor && qi > 0.0) g += -qi / ri;  // forward direction
                    if (bidirectional && ri > 0.0) {
                        const double lq = std::log(std::max(qi, kProbFloor));
                        const double lr = std::log(std::max(ri, kProbFloor));
                        g += (lr - lq) + (ri > kProbFloor ? 1.0 : 0.0);
                    }
                    gr[i * k + j] = gy[0] * scale * g;
                }
            }
            rc.accumulate_grad(gr);
        });
}

Tensor mse_pairing_loss(const Tensor& p_q, const Tensor& p_r, const CorrectIndexSet& gamma) {
    check_prob_pair(p_q, p_r);
    check_gamma(gamma, p_q.rows());
    if (gamma.n_c == 0) return Tensor::scalar(0.0);

    const std::size_t k = p_q.cols();
    const double inv_nc = 1.0 / static_cast<double>(gamma.n_c);
    const std::vector<double> q = p_q.values();
    const auto& r = p_r.values();

    double acc = 0.0;
    for (std::size_t i : gamma.gamma) {
        for (std::size_t j = 0; j < k; ++j) {
            const double d = q[i * k + j] - r[i * k + j];
            acc += 0.5 * d * d;
        }
    }

    Tensor rc = p_r;
    std::vector<std::size_t> idx = gamma.gamma;
    return Tensor::make_op(Shape{1}, {inv_nc * acc}, {p_r},
                           [rc, q, idx, k, inv_nc](const std::vector<double>& gy) {
                               if (!rc.requires_grad()) return;
                               const auto& r = rc.values();
                               std::vector<double> gr(r.size(), 0.0);
                               for (std::size_t i : idx) {
                                   for (std::size_t j = 0; j < k; ++j) {
                                       gr[i * k + j] =
                                           gy[0] * inv_nc * (r[i * k + j] - q[i * k + j]);
                                   }
                               }
                               rc.accumulate_grad(gr);
                           });
}

Tensor cosine_pairing_loss(const Tensor& p_q, const Tensor& p_r, const CorrectIndexSet& gamma) {
    check_prob_pair(p_q, p_r);
    check_gamma(gamma, p_q.rows());
    if (gamma.n_c == 0) return Tensor::scalar(0.0);

    const std::size_t k = p_q.cols();
    const double inv_nc = 1.0 / static_cast<double>(gamma.n_c);
    const std::vector<double> q = p_q.values();
    const auto& r = p_r.values();

    double acc = 0.0;
    for (std::size_t i : gamma.gamma) {
        double qq = 0.0, rr = 0.0, qr = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            qq += q[i * k + j] * q[i * k + j];
            rr += r[i * k + j] * r[i * k + j];
            qr += q[i * k + j] * r[i * k + j];
        }
        const double nq = std::sqrt(qq), nr = std::sqrt(rr);
        const double cosv = (nq < kNormFloor || nr < kNormFloor) ? 0.0 : qr / (nq * nr);
        acc += 1.0 - cosv;
    }

    Tensor rc = p_r;
    std::vector<std::size_t> idx = gamma.gamma;
    return Tensor::make_op(
        Shape{1}, {inv_nc * acc}, {p_r}, [rc, q, idx, k, inv_nc](const std::vector<double>& gy) {
            if (!rc.requires_grad()) return;
            const auto& r = rc.values();
            std::vector<double> gr(r.size(), 0.0);
            for (std::size_t i : idx) {
                double qq = 0.0, rr = 0.0, qr = 0.0;
                for (std::size_t j = 0; j < k; ++j) {
                    qq += q[i * k + j] * q[i * k + j];
                    rr += r[i * k + j] * r[i * k + j];
                    qr += q[i * k + j] * r[i * k + j];
                }
                const double nq = std::sqrt(qq), nr = std::sqrt(rr);
                if (nq < kNormFloor || nr < kNormFloor) continue;  // cos treated as constant 0
                const double cosv = qr / (nq * nr);
                for (std::size_t j = 0; j < k; ++j) {
                    const double dcos =
                        q[i * k + j] / (nq * nr) - cosv * r[i * k + j] / (nr * nr);
                    gr[i * k + j] = gy[0] * inv_nc * (-dcos);
                }
            }
            rc.accumulate_grad(gr);
        });
}

Tensor pairing_loss(const PairingLossConfig& cfg, const Tensor& p_q, const Tensor& p_r,
                    const CorrectIndexSet& gamma) {
    switch (cfg.kind) {
        case PairingKind::Kl: return kl_pairing_loss(p_q, p_r, gamma, cfg.bidirectional_kl);
        case PairingKind::Mse: return mse_pairing_loss(p_q, p_r, gamma);
        case PairingKind::Cosine: return cosine_pairing_loss(p_q, p_r, gamma);
    }
    throw std::logic_error("unreachable");
}

MaxLossResult max_loss(const MlpModel& model, const AdvBatch& adv_q, const AdvBatch& adv_r,
                       const std::vector<int>& labels) {
    if (adv_q.x_adv.shape() != adv_r.x_adv.shape()) {
        throw ShapeError("max_loss: adversarial batch shapes differ");
    }
    const std::size_t n = adv_q.x_adv.rows(), d = adv_q.x_adv.cols();
    if (adv_q.per_sample_loss.size() != n || adv_r.per_sample_loss.size() != n ||
        labels.size() != n) {
        throw std::invalid_argument("max_loss: per-sample arrays do not match the batch");
    }

    MaxLossResult out;
    out.chosen.resize(n);
    std::vector<double> sel(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        const bool take_r = adv_r.per_sample_loss[i] > adv_q.per_sample_loss[i];
        out.chosen[i] = take_r ? 1 : 0;
        const auto& src = take_r ? adv_r.x_adv.values() : adv_q.x_adv.values();
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(i * d), d,
                    sel.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    out.x_selected = Tensor::from_data(adv_q.x_adv.shape(), std::move(sel), false);
    Tensor logits = model.forward(out.x_selected);
    out.loss = cross_entropy(logits, labels).mean_loss;
    return out;
}

RampLossResult ramp_loss_from_batches(const MlpModel& model, AdvBatch adv_q, AdvBatch adv_r,
                                      const std::vector<int>& labels,
                                      const PairingLossConfig& cfg) {
    if (cfg.lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");

    RampLossResult out;
    MaxLossResult max_part = max_loss(model, adv_q, adv_r, labels);
    out.max_value = max_part.loss.item();

    if (cfg.lambda == 0.0) {
        // pure worst-case objective; no pairing node enters the graph
        out.total = std::move(max_part.loss);
        out.pairing_value = 0.0;
        Tensor p_q = Tensor::from_data(adv_q.logits.shape(),
                                       softmax_rows_values(adv_q.logits.shape(), adv_q.logits.values()),
                                       false);
        out.gamma = correct_subset(p_q, labels);
        out.adv_q = std::move(adv_q);
        out.adv_r = std::move(adv_r);
        return out;
    }

    Tensor p_q = Tensor::from_data(adv_q.logits.shape(),
                                   softmax_rows_values(adv_q.logits.shape(), adv_q.logits.values()),
                                   false);
    out.gamma = correct_subset(p_q, labels);

    Tensor logits_r = model.forward(adv_r.x_adv);
    Tensor p_r = softmax_rows(logits_r);
    Tensor pair = pairing_loss(cfg, p_q, p_r, out.gamma);
    out.pairing_value = pair.item();
    out.total = add(max_part.loss, scale(pair, cfg.lambda));
    out.adv_q = std::move(adv_q);
    out.adv_r = std::move(adv_r);
    return out;
}

RampLossResult ramp_loss(const MlpModel& model, const Tensor& batch, const std::vector<int>& labels,
                         const BallSpec& ball_q, const BallSpec& ball_r, const AttackSpec& spec_q,
                         const AttackSpec& spec_r, const PairingLossConfig& cfg,
                         std::uint64_t salt) {
    AdvBatch adv_q = run_attack(model, batch, labels, ball_q, spec_q, mix64(salt, 0));
    AdvBatch adv_r = run_attack(model, batch, labels, ball_r, spec_r, mix64(salt, 1));
    return ramp_loss_from_batches(model, std::move(adv_q), std::move(adv_r), labels, cfg);
}

}  // namespace ramp
