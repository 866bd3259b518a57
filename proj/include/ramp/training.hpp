#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ramp/attacks.hpp"
#include "ramp/dataset.hpp"
#include "ramp/gp.hpp"
#include "ramp/losses.hpp"
#include "ramp/model.hpp"

namespace ramp {

enum class TrainMethod { Nt, At, AtGp, RampFinetune, RampFull, Max, Avg, Rand };
enum class RandMode { ThreeNorms, ExtremePair };  // sample all norms vs {l1, linf}
enum class BaselineKind { Max, Avg, Rand };

std::string to_string(TrainMethod m);
TrainMethod train_method_from_string(const std::string& s);

struct RampConfig {
    double lambda = 2.0;
    double beta = 0.5;
    AttackNorm key_q = AttackNorm::Linf;
    AttackNorm key_r = AttackNorm::L1;
    PairingKind pairing = PairingKind::Kl;
    bool bidirectional_kl = false;
    GpVariant gp_variant = GpVariant::MainTextEq2;
};

struct LrSchedule {
    double base_lr = 0.1;
    double drop_factor = 0.1;
    double drop_at_fraction = 0.875;  // single late drop

    double lr_at(int epoch, int total_epochs) const;
};

struct TrainPlan {
    TrainMethod method = TrainMethod::At;
    int epochs = 10;
    int nt_warmup_epochs = 0;
    std::size_t batch_size = 64;
    std::vector<AttackSpec> train_specs;  // one per norm in use
    RampConfig ramp;
    SgdConfig sgd;
    LrSchedule lr;
    RandMode rand_mode = RandMode::ThreeNorms;
    double box_lo = 0.0;
    double box_hi = 1.0;
};

struct EpochRecord {
    int epoch = 0;
    std::string phase;  // "warmup" or "train"
    double train_loss = 0.0;
    double clean_acc = 0.0;
    double l1_acc = 0.0;
    double l2_acc = 0.0;
    double linf_acc = 0.0;
    double union_acc = 0.0;
    double seconds = 0.0;  // wall clock; excluded from deterministic outputs
};

/// Shared state that pins batch order and attack randomness: both derive only
/// from (run_seed, epoch), so branch epochs replay identical streams.
struct EpochContext {
    std::uint64_t run_seed = 0;
    int epoch_index = 0;
    std::size_t batch_size = 64;
    double box_lo = 0.0;
    double box_hi = 1.0;
};

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   std::uint64_t run_seed, int epoch_index);

// Epoch trainers mutate the model in place and return the mean train loss.
double nt_epoch(MlpModel& model, const Dataset& data, SgdOptimizer& opt, const EpochContext& ctx);

double at_epoch(MlpModel& model, const Dataset& data, const AttackSpec& spec, SgdOptimizer& opt,
                const EpochContext& ctx);

/// Natural and adversarial branch epochs from the same snapshot over identical
/// batch orderings, combined by the filtered-projection blend. beta == 0
/// yields the adversarial branch model unchanged.
double at_gp_epoch(MlpModel& model, const Dataset& data, const AttackSpec& spec,
                   SgdOptimizer& nt_opt, SgdOptimizer& at_opt, const GpConfig& gp,
                   const EpochContext& ctx);

double ramp_finetune_epoch(MlpModel& model, const Dataset& data, const AttackSpec& spec_q,
                           const AttackSpec& spec_r, const PairingLossConfig& pairing,
                           SgdOptimizer& opt, const EpochContext& ctx);

/// at_gp_epoch with the adversarial branch replaced by the pairing objective.
double ramp_full_epoch(MlpModel& model, const Dataset& data, const AttackSpec& spec_q,
                       const AttackSpec& spec_r, const RampConfig& ramp, SgdOptimizer& nt_opt,
                       SgdOptimizer& branch_opt, const EpochContext& ctx);

double baseline_epoch(MlpModel& model, const Dataset& data, const std::vector<AttackSpec>& specs,
                      BaselineKind kind, RandMode mode, SgdOptimizer& opt, const EpochContext& ctx);

struct EvalSettings {
    std::array<AttackSpec, 3> specs;  // order: l1, l2, linf
    std::uint64_t salt = 0;
};

struct RunPlanHooks {
    std::function<void(const EpochRecord&, const MlpModel&)> on_epoch;
};

/// Warm-up epochs, then the plan's method epochs under the lr schedule, with a
/// probe-set robustness record per epoch.
std::pair<MlpModel, std::vector<EpochRecord>> run_plan(const MlpModel& initial,
                                                       const TrainPlan& plan,
                                                       const Dataset& train_set,
                                                       const Dataset& probe_set,
                                                       const EvalSettings& eval,
                                                       const RunPlanHooks& hooks = {});

const AttackSpec& find_spec(const std::vector<AttackSpec>& specs, AttackNorm norm);

}  // namespace ramp
