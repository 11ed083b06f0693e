#include "pocadapt/config.hpp"

#include <cstdlib>
#include <fstream>

namespace pocadapt {

void EngineConfig::validate() const {
    rewards.validate();
    trainer.validate();
    budget.validate();
    if (vocab.k_cwe < 1 || vocab.k_tool < 1 || vocab.k_err < 1 || vocab.t_max < 1)
        throw ConfigError("vocab sizes must be positive");
}

namespace {

template <typename T>
void take(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void warn_unknown(const nlohmann::json& j, std::initializer_list<const char*> known,
                  const std::string& scope, std::vector<std::string>* warnings) {
    if (!warnings || !j.is_object()) return;
    for (const auto& [key, _] : j.items()) {
        bool found = false;
        for (const char* k : known) found = found || key == k;
        if (!found) warnings->push_back("unknown config key: " + scope + key);
    }
}

}  // namespace

EngineConfig config_from_json(const nlohmann::json& j, std::vector<std::string>* warnings) {
    EngineConfig cfg;
    warn_unknown(j, {"seed", "vocab", "rewards", "trainer", "budget", "prices", "workspace_dir"},
                 "", warnings);
    take(j, "seed", cfg.seed);
    take(j, "workspace_dir", cfg.workspace_dir);

    if (j.contains("vocab")) {
        const auto& v = j["vocab"];
        warn_unknown(v, {"k_cwe", "k_tool", "k_err", "t_max"}, "vocab.", warnings);
        take(v, "k_cwe", cfg.vocab.k_cwe);
        take(v, "k_tool", cfg.vocab.k_tool);
        take(v, "k_err", cfg.vocab.k_err);
        take(v, "t_max", cfg.vocab.t_max);
    }
    if (j.contains("rewards")) {
        const auto& r = j["rewards"];
        warn_unknown(r, {"terminal_success", "terminal_failure", "gamma", "success_weights",
                         "failure_weights"},
                     "rewards.", warnings);
        take(r, "terminal_success", cfg.rewards.terminal_success);
        take(r, "terminal_failure", cfg.rewards.terminal_failure);
        take(r, "gamma", cfg.rewards.gamma);
        if (r.contains("success_weights"))
            for (const auto& [key, value] : r["success_weights"].items())
                cfg.rewards.success_weights[std::stoi(key)] = value.get<double>();
        if (r.contains("failure_weights"))
            for (const auto& [key, value] : r["failure_weights"].items())
                cfg.rewards.failure_weights[std::stoi(key)] = value.get<double>();
    }
    if (j.contains("trainer")) {
        const auto& t = j["trainer"];
        warn_unknown(t, {"learning_rate", "batch_size", "gamma", "huber_delta", "epochs",
                         "target_sync_interval", "hidden_dim", "seed"},
                     "trainer.", warnings);
        take(t, "learning_rate", cfg.trainer.learning_rate);
        take(t, "batch_size", cfg.trainer.batch_size);
        take(t, "gamma", cfg.trainer.gamma);
        take(t, "huber_delta", cfg.trainer.huber_delta);
        take(t, "epochs", cfg.trainer.epochs);
        take(t, "target_sync_interval", cfg.trainer.target_sync_interval);
        take(t, "hidden_dim", cfg.trainer.hidden_dim);
        take(t, "seed", cfg.trainer.seed);
    }
    if (j.contains("budget")) {
        const auto& b = j["budget"];
        warn_unknown(b, {"wall_clock_limit_min", "token_limit", "refinement_budget", "step_limit"},
                     "budget.", warnings);
        take(b, "wall_clock_limit_min", cfg.budget.wall_clock_limit_min);
        take(b, "token_limit", cfg.budget.token_limit);
        take(b, "refinement_budget", cfg.budget.refinement_budget);
        take(b, "step_limit", cfg.budget.step_limit);
    }
    if (j.contains("prices")) {
        const auto& p = j["prices"];
        warn_unknown(p, {"backend", "input_per_1k", "output_per_1k"}, "prices.", warnings);
        take(p, "backend", cfg.prices.backend);
        take(p, "input_per_1k", cfg.prices.input_per_1k);
        take(p, "output_per_1k", cfg.prices.output_per_1k);
    }
    cfg.validate();
    return cfg;
}

EngineConfig load_config(const std::string& path, std::vector<std::string>* warnings) {
    std::ifstream in(path);
    if (!in) throw UnreadableFile("cannot read config file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError("config file " + path + " is not valid JSON: " + ex.what());
    }
    return config_from_json(j, warnings);
}

nlohmann::json config_to_json(const EngineConfig& cfg) {
    nlohmann::json sw = nlohmann::json::object(), fw = nlohmann::json::object();
    for (const auto& [id, w] : cfg.rewards.success_weights) sw[std::to_string(id)] = w;
    for (const auto& [id, w] : cfg.rewards.failure_weights) fw[std::to_string(id)] = w;
    return {
        {"seed", cfg.seed},
        {"workspace_dir", cfg.workspace_dir},
        {"vocab",
         {{"k_cwe", cfg.vocab.k_cwe},
          {"k_tool", cfg.vocab.k_tool},
          {"k_err", cfg.vocab.k_err},
          {"t_max", cfg.vocab.t_max}}},
        {"rewards",
         {{"terminal_success", cfg.rewards.terminal_success},
          {"terminal_failure", cfg.rewards.terminal_failure},
          {"gamma", cfg.rewards.gamma},
          {"success_weights", std::move(sw)},
          {"failure_weights", std::move(fw)}}},
        {"trainer",
         {{"learning_rate", cfg.trainer.learning_rate},
          {"batch_size", cfg.trainer.batch_size},
          {"gamma", cfg.trainer.gamma},
          {"huber_delta", cfg.trainer.huber_delta},
          {"epochs", cfg.trainer.epochs},
          {"target_sync_interval", cfg.trainer.target_sync_interval},
          {"hidden_dim", cfg.trainer.hidden_dim},
          {"seed", cfg.trainer.seed}}},
        {"budget",
         {{"wall_clock_limit_min", cfg.budget.wall_clock_limit_min},
          {"token_limit", cfg.budget.token_limit},
          {"refinement_budget", cfg.budget.refinement_budget},
          {"step_limit", cfg.budget.step_limit}}},
        {"prices",
         {{"backend", cfg.prices.backend},
          {"input_per_1k", cfg.prices.input_per_1k},
          {"output_per_1k", cfg.prices.output_per_1k}}},
    };
}

void apply_env_overrides(EngineConfig& cfg) {
    auto get = [](const char* name) -> const char* { return std::getenv(name); };
    if (const char* v = get("POCADAPT_SEED")) cfg.seed = std::stoull(v);
    if (const char* v = get("POCADAPT_GAMMA")) {
        cfg.trainer.gamma = std::stod(v);
        cfg.rewards.gamma = cfg.trainer.gamma;
    }
    if (const char* v = get("POCADAPT_LEARNING_RATE")) cfg.trainer.learning_rate = std::stod(v);
    if (const char* v = get("POCADAPT_EPOCHS")) cfg.trainer.epochs = std::stoi(v);
    if (const char* v = get("POCADAPT_BATCH_SIZE")) cfg.trainer.batch_size = std::stoi(v);
    if (const char* v = get("POCADAPT_T_MAX")) cfg.vocab.t_max = std::stoi(v);
    if (const char* v = get("POCADAPT_STEP_LIMIT")) cfg.budget.step_limit = std::stoi(v);
    if (const char* v = get("POCADAPT_TOKEN_LIMIT")) cfg.budget.token_limit = std::stol(v);
    if (const char* v = get("POCADAPT_REFINEMENT_BUDGET"))
        cfg.budget.refinement_budget = std::stoi(v);
    if (const char* v = get("POCADAPT_WORKSPACE_DIR")) cfg.workspace_dir = v;
    cfg.validate();
}

}  // namespace pocadapt
