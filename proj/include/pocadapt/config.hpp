#pragma once

// Engine configuration: JSON file plus POCADAPT_-prefixed environment
// overrides. Unknown keys warn instead of failing.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pocadapt/mdp.hpp"
#include "pocadapt/metrics.hpp"
#include "pocadapt/orchestrator.hpp"
#include "pocadapt/trainer.hpp"

namespace pocadapt {

struct EngineConfig {
    std::uint64_t seed = 0;
    EncodingVocab vocab;
    RewardConfig rewards = RewardConfig::defaults();
    TrainerConfig trainer;
    RunBudget budget;
    PriceTable prices;
    std::string workspace_dir = ".";

    void validate() const;
};

// Parses a config document; unrecognized keys are reported through
// `warnings` (when given) and otherwise ignored.
EngineConfig config_from_json(const nlohmann::json& j, std::vector<std::string>* warnings = nullptr);
EngineConfig load_config(const std::string& path, std::vector<std::string>* warnings = nullptr);
nlohmann::json config_to_json(const EngineConfig& cfg);

// POCADAPT_SEED, POCADAPT_GAMMA, POCADAPT_LEARNING_RATE, POCADAPT_EPOCHS,
// POCADAPT_BATCH_SIZE, POCADAPT_T_MAX, POCADAPT_STEP_LIMIT,
// POCADAPT_TOKEN_LIMIT, POCADAPT_REFINEMENT_BUDGET, POCADAPT_WORKSPACE_DIR.
void apply_env_overrides(EngineConfig& cfg);

}  // namespace pocadapt
