#include "ramp/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ramp/evaluation.hpp"
#include "ramp/rng.hpp"

namespace ramp {

namespace {

// stream tags so batch order, attack noise, and sampler draws never collide
constexpr std::uint64_t kBatchStream = 0x626174636864ull;
constexpr std::uint64_t kAttackStream = 0x6174746bull;
constexpr std::uint64_t kRandPickStream = 0x72616e64ull;

std::uint64_t attack_salt(const EpochContext& ctx, std::size_t batch_index) {
    return mix64(ctx.run_seed, kAttackStream, static_cast<std::uint64_t>(ctx.epoch_index),
                 batch_index);
}

double clean_ce_step(MlpModel& model, const Tensor& x, const std::vector<int>& y,
                     SgdOptimizer& opt) {
    model.zero_grad();
    Tensor logits = model.forward(x);
    CrossEntropyResult ce = cross_entropy(logits, y);
    ce.mean_loss.backward();
    opt.step(model);
    return ce.mean_loss.item();
}

double worst_case_ce_step(MlpModel& model, const Tensor& x, const std::vector<int>& y,
                          const std::vector<AttackSpec>& specs, SgdOptimizer& opt,
                          const EpochContext& ctx, std::size_t batch_index) {
    AdvBatch adv =
        worst_case_batch(model, x, y, specs, ctx.box_lo, ctx.box_hi, attack_salt(ctx, batch_index));
    model.zero_grad();
    Tensor logits = model.forward(adv.x_adv);
    CrossEntropyResult ce = cross_entropy(logits, y);
    ce.mean_loss.backward();
    opt.step(model);
    return ce.mean_loss.item();
}

double avg_ce_step(MlpModel& model, const Tensor& x, const std::vector<int>& y,
                   const std::vector<AttackSpec>& specs, SgdOptimizer& opt,
                   const EpochContext& ctx, std::size_t batch_index) {
    const std::uint64_t salt = attack_salt(ctx, batch_index);
    std::vector<AdvBatch> advs;
    advs.reserve(specs.size());
    for (std::size_t s = 0; s < specs.size(); ++s) {
        BallSpec ball{specs[s].norm, specs[s].eps, x, ctx.box_lo, ctx.box_hi};
        advs.push_back(run_attack(model, x, y, ball, specs[s], mix64(salt, s)));
    }
    model.zero_grad();
    Tensor total;
    for (const AdvBatch& adv : advs) {
        Tensor ce = cross_entropy(model.forward(adv.x_adv), y).mean_loss;
        total = total.defined() ? add(total, ce) : ce;
    }
    Tensor loss = scale(total, 1.0 / static_cast<double>(advs.size()));
    loss.backward();
    opt.step(model);
    return loss.item();
}

double ramp_objective_step(MlpModel& model, const Tensor& x, const std::vector<int>& y,
                           const AttackSpec& spec_q, const AttackSpec& spec_r,
                           const PairingLossConfig& pairing, SgdOptimizer& opt,
                           const EpochContext& ctx, std::size_t batch_index) {
    BallSpec ball_q{spec_q.norm, spec_q.eps, x, ctx.box_lo, ctx.box_hi};
    BallSpec ball_r{spec_r.norm, spec_r.eps, x, ctx.box_lo, ctx.box_hi};
    model.zero_grad();
    RampLossResult loss =
        ramp_loss(model, x, y, ball_q, ball_r, spec_q, spec_r, pairing, attack_salt(ctx, batch_index));
    loss.total.backward();
    opt.step(model);
    return loss.total.item();
}

}  // namespace

std::string to_string(TrainMethod m) {
    switch (m) {
        case TrainMethod::Nt: return "nt";
        case TrainMethod::At: return "at";
        case TrainMethod::AtGp: return "at_gp";
        case TrainMethod::RampFinetune: return "ramp_finetune";
        case TrainMethod::RampFull: return "ramp_full";
        case TrainMethod::Max: return "max";
        case TrainMethod::Avg: return "avg";
        case TrainMethod::Rand: return "rand";
    }
    return "?";
}

TrainMethod train_method_from_string(const std::string& s) {
    if (s == "nt") return TrainMethod::Nt;
    if (s == "at") return TrainMethod::At;
    if (s == "at_gp") return TrainMethod::AtGp;
    if (s == "ramp_finetune") return TrainMethod::RampFinetune;
    if (s == "ramp_full") return TrainMethod::RampFull;
    if (s == "max") return TrainMethod::Max;
    if (s == "avg") return TrainMethod::Avg;
    if (s == "rand") return TrainMethod::Rand;
    throw std::invalid_argument("unknown train method: " + s);
}

double LrSchedule::lr_at(int epoch, int total_epochs) const {
    const int drop_epoch = static_cast<int>(std::ceil(drop_at_fraction * total_epochs));
    return (epoch >= drop_epoch && total_epochs > 0) ? base_lr * drop_factor : base_lr;
}

const AttackSpec& find_spec(const std::vector<AttackSpec>& specs, AttackNorm norm) {
    for (const AttackSpec& s : specs) {
        if (s.norm == norm) return s;
    }
    throw std::invalid_argument("no attack spec configured for norm " + to_string(norm));
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   std::uint64_t run_seed, int epoch_index) {
    if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix64(run_seed, kBatchStream, static_cast<std::uint64_t>(epoch_index)));
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

double nt_epoch(MlpModel& model, const Dataset& data, SgdOptimizer& opt, const EpochContext& ctx) {
    const auto batches = make_batches(data.size(), ctx.batch_size, ctx.run_seed, ctx.epoch_index);
    double loss_sum = 0.0;
    for (const auto& batch : batches) {
        loss_sum += clean_ce_step(model, data.batch_features(batch), data.batch_labels(batch), opt);
    }
    return batches.empty() ? 0.0 : loss_sum / static_cast<double>(batches.size());
}

double at_epoch(MlpModel& model, const Dataset& data, const AttackSpec& spec, SgdOptimizer& opt,
                const EpochContext& ctx) {
    const auto batches = make_batches(data.size(), ctx.batch_size, ctx.run_seed, ctx.epoch_index);
    const std::vector<AttackSpec> specs{spec};
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
        loss_sum += worst_case_ce_step(model, data.batch_features(batches[b]),
                                       data.batch_labels(batches[b]), specs, opt, ctx, b);
    }
    return batches.empty() ? 0.0 : loss_sum / static_cast<double>(batches.size());
}

double at_gp_epoch(MlpModel& model, const Dataset& data, const AttackSpec& spec,
                   SgdOptimizer& nt_opt, SgdOptimizer& at_opt, const GpConfig& gp,
                   const EpochContext& ctx) {
    MlpModel snapshot = model.clone();
    MlpModel f_n = snapshot.clone();
    nt_epoch(f_n, data, nt_opt, ctx);
    MlpModel f_a = snapshot.clone();
    const double at_loss = at_epoch(f_a, data, spec, at_opt, ctx);

    if (gp.beta == 0.0) {
        model = std::move(f_a);  // exact collapse to the adversarial branch
        return at_loss;
    }
    const ModelDelta g_n = model_delta(f_n, snapshot);
    const ModelDelta g_a = model_delta(f_a, snapshot);
    const ModelDelta g_p = project_delta(g_n, g_a, gp.variant);
    model = blended_update(snapshot, g_p, g_a, gp.beta);
    return at_loss;
}

double ramp_finetune_epoch(MlpModel& model, const Dataset& data, const AttackSpec& spec_q,
                           const AttackSpec& spec_r, const PairingLossConfig& pairing,
                           SgdOptimizer& opt, const EpochContext& ctx) {
    const auto batches = make_batches(data.size(), ctx.batch_size, ctx.run_seed, ctx.epoch_index);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
        loss_sum += ramp_objective_step(model, data.batch_features(batches[b]),
                                        data.batch_labels(batches[b]), spec_q, spec_r, pairing, opt,
                                        ctx, b);
    }
    return batches.empty() ? 0.0 : loss_sum / static_cast<double>(batches.size());
}

double ramp_full_epoch(MlpModel& model, const Dataset& data, const AttackSpec& spec_q,
                       const AttackSpec& spec_r, const RampConfig& ramp, SgdOptimizer& nt_opt,
                       SgdOptimizer& branch_opt, const EpochContext& ctx) {
    MlpModel snapshot = model.clone();
    MlpModel f_n = snapshot.clone();
    nt_epoch(f_n, data, nt_opt, ctx);
    MlpModel f_b = snapshot.clone();
    PairingLossConfig pairing{ramp.lambda, ramp.pairing, ramp.bidirectional_kl};
    const double branch_loss =
        ramp_finetune_epoch(f_b, data, spec_q, spec_r, pairing, branch_opt, ctx);

    if (ramp.beta == 0.0) {
        model = std::move(f_b);
        return branch_loss;
    }
    const ModelDelta g_n = model_delta(f_n, snapshot);
    const ModelDelta g_b = model_delta(f_b, snapshot);
    const ModelDelta g_p = project_delta(g_n, g_b, ramp.gp_variant);
    model = blended_update(snapshot, g_p, g_b, ramp.beta);
    return branch_loss;
}

double baseline_epoch(MlpModel& model, const Dataset& data, const std::vector<AttackSpec>& specs,
                      BaselineKind kind, RandMode mode, SgdOptimizer& opt, const EpochContext& ctx) {
    if (specs.empty()) throw std::invalid_argument("baseline_epoch: need at least one attack spec");
    const auto batches = make_batches(data.size(), ctx.batch_size, ctx.run_seed, ctx.epoch_index);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
        const Tensor x = data.batch_features(batches[b]);
        const std::vector<int> y = data.batch_labels(batches[b]);
        switch (kind) {
            case BaselineKind::Max:
                loss_sum += worst_case_ce_step(model, x, y, specs, opt, ctx, b);
                break;
            case BaselineKind::Avg:
                loss_sum += avg_ce_step(model, x, y, specs, opt, ctx, b);
                break;
            case BaselineKind::Rand: {
                std::vector<AttackSpec> pool;
                if (mode == RandMode::ExtremePair) {
                    for (const AttackSpec& s : specs) {
                        if (s.norm == AttackNorm::L1 || s.norm == AttackNorm::Linf) pool.push_back(s);
                    }
                }
                if (pool.empty()) pool = specs;
                Rng pick(mix64(ctx.run_seed, kRandPickStream,
                               static_cast<std::uint64_t>(ctx.epoch_index), b));
                const AttackSpec& chosen = pool[pick.index(pool.size())];
                loss_sum += worst_case_ce_step(model, x, y, {chosen}, opt, ctx, b);
                break;
            }
        }
    }
    return batches.empty() ? 0.0 : loss_sum / static_cast<double>(batches.size());
}

std::pair<MlpModel, std::vector<EpochRecord>> run_plan(const MlpModel& initial,
                                                       const TrainPlan& plan,
                                                       const Dataset& train_set,
                                                       const Dataset& probe_set,
                                                       const EvalSettings& eval,
                                                       const RunPlanHooks& hooks) {
    if (plan.epochs < 0 || plan.nt_warmup_epochs < 0) {
        throw std::invalid_argument("epoch counts must be >= 0");
    }
    MlpModel model = initial.clone();
    std::vector<EpochRecord> records;
    int global_epoch = 0;

    auto probe = [&](double train_loss, const std::string& phase, double seconds) {
        RobustReport rep = evaluate_robustness(model, probe_set, eval.specs, plan.box_lo,
                                               plan.box_hi, mix64(eval.salt, global_epoch));
        EpochRecord rec;
        rec.epoch = global_epoch;
        rec.phase = phase;
        rec.train_loss = train_loss;
        rec.clean_acc = rep.clean_acc;
        rec.l1_acc = rep.l1_acc;
        rec.l2_acc = rep.l2_acc;
        rec.linf_acc = rep.linf_acc;
        rec.union_acc = rep.union_acc;
        rec.seconds = seconds;
        records.push_back(rec);
        if (hooks.on_epoch) hooks.on_epoch(rec, model);
    };

    EpochContext ctx;
    ctx.run_seed = plan.sgd.seed;
    ctx.batch_size = plan.batch_size;
    ctx.box_lo = plan.box_lo;
    ctx.box_hi = plan.box_hi;

    if (plan.nt_warmup_epochs > 0) {
        SgdOptimizer warm_opt(plan.sgd);
        for (int e = 0; e < plan.nt_warmup_epochs; ++e) {
            const auto t0 = std::chrono::steady_clock::now();
            ctx.epoch_index = global_epoch;
            const double loss = nt_epoch(model, train_set, warm_opt, ctx);
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            probe(loss, "warmup", secs);
            ++global_epoch;
        }
    }

    SgdOptimizer opt(plan.sgd);
    SgdOptimizer branch_opt(plan.sgd);  // adversarial / pairing branch of split methods
    const GpConfig gp{plan.ramp.beta, plan.ramp.gp_variant};
    const PairingLossConfig pairing{plan.ramp.lambda, plan.ramp.pairing, plan.ramp.bidirectional_kl};

    for (int e = 0; e < plan.epochs; ++e) {
        const double lr = plan.lr.lr_at(e, plan.epochs);
        opt.set_learning_rate(lr);
        branch_opt.set_learning_rate(lr);
        ctx.epoch_index = global_epoch;

        const auto t0 = std::chrono::steady_clock::now();
        double loss = 0.0;
        switch (plan.method) {
            case TrainMethod::Nt:
                loss = nt_epoch(model, train_set, opt, ctx);
                break;
            case TrainMethod::At:
                loss = at_epoch(model, train_set, find_spec(plan.train_specs, plan.ramp.key_q), opt,
                                ctx);
                break;
            case TrainMethod::AtGp:
                loss = at_gp_epoch(model, train_set, find_spec(plan.train_specs, plan.ramp.key_q),
                                   opt, branch_opt, gp, ctx);
                break;
            case TrainMethod::RampFinetune:
                loss = ramp_finetune_epoch(model, train_set,
                                           find_spec(plan.train_specs, plan.ramp.key_q),
                                           find_spec(plan.train_specs, plan.ramp.key_r), pairing,
                                           branch_opt, ctx);
                break;
            case TrainMethod::RampFull:
                loss = ramp_full_epoch(model, train_set,
                                       find_spec(plan.train_specs, plan.ramp.key_q),
                                       find_spec(plan.train_specs, plan.ramp.key_r), plan.ramp, opt,
                                       branch_opt, ctx);
                break;
            case TrainMethod::Max:
                loss = baseline_epoch(model, train_set, plan.train_specs, BaselineKind::Max,
                                      plan.rand_mode, opt, ctx);
                break;
            case TrainMethod::Avg:
                loss = baseline_epoch(model, train_set, plan.train_specs, BaselineKind::Avg,
                                      plan.rand_mode, opt, ctx);
                break;
            case TrainMethod::Rand:
                loss = baseline_epoch(model, train_set, plan.train_specs, BaselineKind::Rand,
                                      plan.rand_mode, opt, ctx);
                break;
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        probe(loss, "train", secs);
        ++global_epoch;
    }

    return {std::move(model), std::move(records)};
}

}  // namespace ramp
