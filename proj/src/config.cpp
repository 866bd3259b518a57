#include "ramp/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ramp/errors.hpp"

namespace ramp {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys = {
        "dataset.kind", "dataset.size", "dataset.dim", "dataset.noise", "dataset.seed",
        "dataset.classes", "dataset.images", "dataset.labels", "dataset.limit",
        "dataset.train_fraction",
        "model.hidden", "model.seed",
        "train.method", "train.epochs", "train.warmup_epochs", "train.batch_size", "train.lr",
        "train.lr_drop_factor", "train.lr_drop_fraction", "train.momentum", "train.weight_decay",
        "train.seed", "train.lambda", "train.beta", "train.pairing", "train.bidirectional_kl",
        "train.rand_mode", "train.gp_variant", "train.at_norm",
        "attack.eps1", "attack.eps2", "attack.epsinf", "attack.steps1", "attack.steps2",
        "attack.stepsinf", "attack.kind", "attack.l1_sparsity",
        "keypair.mode", "keypair.q", "keypair.r", "keypair.volume_dim",
        "eval.eps1", "eval.eps2", "eval.epsinf", "eval.steps1", "eval.steps2", "eval.stepsinf",
        "eval.kind", "eval.salt",
        "delta.minibatch_size", "delta.minibatch_draws", "delta.seed", "delta.beta",
        "output.dir", "output.checkpoint_every",
    };
    return keys;
}

void check_known(const std::string& key) {
    const auto& keys = known_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
        throw ConfigError("unknown config key: " + key);
    }
}

}  // namespace

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

ExperimentConfig ExperimentConfig::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str());
}

ExperimentConfig ExperimentConfig::parse_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + " has no '=': " + stripped);
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.find('.') == std::string::npos) {
            throw ConfigError("config key '" + key + "' is missing its section prefix");
        }
        check_known(key);
        if (cfg.kv_.count(key)) throw ConfigError("duplicate config key: " + key);
        cfg.kv_[key] = value;
    }
    return cfg;
}

std::string ExperimentConfig::canonical_text() const {
    std::string out;
    for (const auto& [k, v] : kv_) {  // std::map iterates sorted
        out += k;
        out += " = ";
        out += v;
        out += "\n";
    }
    return out;
}

std::uint64_t ExperimentConfig::config_hash() const { return fnv1a64(canonical_text()); }

bool ExperimentConfig::has(const std::string& key) const { return kv_.count(key) != 0; }

std::string ExperimentConfig::get_string(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) {
        const std::size_t dot = key.find('.');
        throw ConfigError("missing required key '" + key.substr(dot + 1) + "' in section [" +
                          key.substr(0, dot) + "]");
    }
    return it->second;
}

std::string ExperimentConfig::get_string_or(const std::string& key,
                                            const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

double ExperimentConfig::get_double(const std::string& key) const {
    const std::string raw = get_string(key);
    const std::size_t slash = raw.find('/');
    try {
        if (slash != std::string::npos) {
            const double num = std::stod(trim(raw.substr(0, slash)));
            const double den = std::stod(trim(raw.substr(slash + 1)));
            if (den == 0.0) throw ConfigError("zero denominator in " + key);
            return num / den;
        }
        return std::stod(raw);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' is not a number: " + raw);
    }
}

double ExperimentConfig::get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

std::int64_t ExperimentConfig::get_int(const std::string& key) const {
    const std::string raw = get_string(key);
    try {
        return std::stoll(raw);
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' is not an integer: " + raw);
    }
}

std::int64_t ExperimentConfig::get_int_or(const std::string& key, std::int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
}

bool ExperimentConfig::get_bool_or(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string raw = get_string(key);
    if (raw == "true" || raw == "1" || raw == "yes") return true;
    if (raw == "false" || raw == "0" || raw == "no") return false;
    throw ConfigError("key '" + key + "' is not a boolean: " + raw);
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    check_known(key);
    kv_[key] = value;
}

void ExperimentConfig::apply_seed_override_from_env() {
    const char* env = std::getenv("RAMP_KIT_SEED");
    if (!env || !*env) return;
    const std::string seed(env);
    try {
        (void)std::stoull(seed);
    } catch (const std::exception&) {
        throw ConfigError("RAMP_KIT_SEED is not an unsigned integer: " + seed);
    }
    for (const char* key : {"dataset.seed", "model.seed", "train.seed", "delta.seed", "eval.salt"}) {
        if (has(key)) kv_[key] = seed;
    }
    kv_["dataset.seed"] = seed;
    kv_["model.seed"] = seed;
    kv_["train.seed"] = seed;
}

Dataset ExperimentConfig::build_dataset() const {
    const std::string kind = get_string("dataset.kind");
    if (kind == "idx") {
        return load_idx_dataset(get_string("dataset.images"), get_string("dataset.labels"),
                                static_cast<std::size_t>(get_int_or("dataset.limit", 0)));
    }
    return make_synthetic_dataset(
        synthetic_kind_from_string(kind), static_cast<std::size_t>(get_int("dataset.size")),
        static_cast<std::size_t>(get_int_or("dataset.dim", 2)), get_double_or("dataset.noise", 0.1),
        static_cast<std::uint64_t>(get_int("dataset.seed")),
        static_cast<std::size_t>(get_int_or("dataset.classes", 2)));
}

std::pair<Dataset, Dataset> ExperimentConfig::build_train_probe_split() const {
    const Dataset full = build_dataset();
    const double frac = get_double_or("dataset.train_fraction", 0.8);
    return split_dataset(full, frac, static_cast<std::uint64_t>(get_int("dataset.seed")));
}

std::vector<std::size_t> ExperimentConfig::model_dims(const Dataset& data) const {
    std::vector<std::size_t> dims{data.dim};
    const std::string hidden = get_string_or("model.hidden", "16");
    std::stringstream ss(hidden);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        const long v = std::stol(tok);
        if (v <= 0) throw ConfigError("model.hidden entries must be positive: " + hidden);
        dims.push_back(static_cast<std::size_t>(v));
    }
    dims.push_back(data.num_classes);
    return dims;
}

std::uint64_t ExperimentConfig::model_seed() const {
    return static_cast<std::uint64_t>(get_int("model.seed"));
}

AttackSpec ExperimentConfig::attack_spec_for(AttackNorm norm, const std::string& prefix) const {
    AttackSpec spec;
    spec.norm = norm;
    spec.seed = static_cast<std::uint64_t>(get_int_or("train.seed", 0));
    spec.kind = attack_kind_from_string(get_string_or(prefix + ".kind", "pgd"));
    spec.l1_sparsity_fraction = get_double_or("attack.l1_sparsity", 0.05);
    switch (norm) {
        case AttackNorm::L1:
            spec.eps = get_double(prefix + ".eps1");
            spec.steps = static_cast<int>(get_int_or(prefix + ".steps1", 15));
            break;
        case AttackNorm::L2:
            spec.eps = get_double(prefix + ".eps2");
            spec.steps = static_cast<int>(get_int_or(prefix + ".steps2", 5));
            break;
        case AttackNorm::Linf:
            spec.eps = get_double(prefix + ".epsinf");
            spec.steps = static_cast<int>(get_int_or(prefix + ".stepsinf", 5));
            break;
    }
    if (spec.eps <= 0.0) throw ConfigError(prefix + " eps values must be positive");
    return spec;
}

TrainPlan ExperimentConfig::build_train_plan(const Dataset& data) const {
    TrainPlan plan;
    plan.method = train_method_from_string(get_string("train.method"));
    plan.epochs = static_cast<int>(get_int("train.epochs"));
    plan.nt_warmup_epochs = static_cast<int>(get_int_or("train.warmup_epochs", 0));
    plan.batch_size = static_cast<std::size_t>(get_int_or("train.batch_size", 64));

    plan.sgd.learning_rate = get_double_or("train.lr", 0.1);
    plan.sgd.momentum = get_double_or("train.momentum", 0.9);
    plan.sgd.weight_decay = get_double_or("train.weight_decay", 5e-4);
    plan.sgd.seed = static_cast<std::uint64_t>(get_int("train.seed"));

    plan.lr.base_lr = plan.sgd.learning_rate;
    plan.lr.drop_factor = get_double_or("train.lr_drop_factor", 0.1);
    plan.lr.drop_at_fraction = get_double_or("train.lr_drop_fraction", 0.875);

    plan.train_specs = {attack_spec_for(AttackNorm::L1, "attack"),
                        attack_spec_for(AttackNorm::L2, "attack"),
                        attack_spec_for(AttackNorm::Linf, "attack")};

    plan.ramp.lambda = get_double_or("train.lambda", 2.0);
    plan.ramp.beta = get_double_or("train.beta", 0.5);
    plan.ramp.pairing = pairing_kind_from_string(get_string_or("train.pairing", "kl"));
    plan.ramp.bidirectional_kl = get_bool_or("train.bidirectional_kl", false);
    plan.ramp.gp_variant = gp_variant_from_string(get_string_or("train.gp_variant", "cos"));

    const std::string kp_mode = get_string_or("keypair.mode", "override");
    if (kp_mode == "override") {
        plan.ramp.key_q = attack_norm_from_string(get_string_or("keypair.q", "linf"));
        plan.ramp.key_r = attack_norm_from_string(get_string_or("keypair.r", "l1"));
    } else if (kp_mode == "heuristic") {
        const std::size_t d =
            static_cast<std::size_t>(get_int_or("keypair.volume_dim", static_cast<std::int64_t>(data.dim)));
        const auto pair = select_key_pair(get_double("attack.eps1"), get_double("attack.eps2"),
                                          get_double("attack.epsinf"), d);
        plan.ramp.key_q = pair.first;
        plan.ramp.key_r = pair.second;
    } else {
        throw ConfigError("keypair.mode must be 'heuristic' or 'override', got " + kp_mode);
    }

    if (has("train.at_norm")) {
        // single-norm methods train on this norm; stored in the q slot
        plan.ramp.key_q = attack_norm_from_string(get_string("train.at_norm"));
    }

    const std::string rand_mode = get_string_or("train.rand_mode", "three");
    if (rand_mode == "three") plan.rand_mode = RandMode::ThreeNorms;
    else if (rand_mode == "extreme") plan.rand_mode = RandMode::ExtremePair;
    else throw ConfigError("train.rand_mode must be 'three' or 'extreme', got " + rand_mode);
    return plan;
}

EvalSettings ExperimentConfig::build_eval_settings() const {
    EvalSettings eval;
    eval.specs = {attack_spec_for(AttackNorm::L1, "eval"), attack_spec_for(AttackNorm::L2, "eval"),
                  attack_spec_for(AttackNorm::Linf, "eval")};
    const std::string kind = get_string_or("eval.kind", "apgd_lite");
    for (AttackSpec& s : eval.specs) s.kind = attack_kind_from_string(kind);
    eval.salt = static_cast<std::uint64_t>(get_int_or("eval.salt", 0));
    return eval;
}

DeltaEstimatorSettings ExperimentConfig::build_delta_settings() const {
    DeltaEstimatorSettings s;
    s.minibatch_size = static_cast<std::size_t>(get_int_or("delta.minibatch_size", 32));
    s.minibatch_draws = static_cast<int>(get_int_or("delta.minibatch_draws", 4));
    s.seed = static_cast<std::uint64_t>(get_int_or("delta.seed", 0));
    s.beta = get_double_or("delta.beta", get_double_or("train.beta", 0.5));
    return s;
}

std::string ExperimentConfig::output_dir() const { return get_string("output.dir"); }

int ExperimentConfig::checkpoint_every() const {
    return static_cast<int>(get_int_or("output.checkpoint_every", 0));
}

std::string RunManifest::to_json() const {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["seeds"] = {{"dataset", dataset_seed}, {"model", model_seed}, {"train", train_seed}};
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    j["artifacts"] = {{"config", config_path},
                      {"metrics", metrics_path},
                      {"timings", timings_path},
                      {"report", report_path},
                      {"checkpoints", checkpoint_paths}};
    return j.dump(2);
}

}  // namespace ramp
