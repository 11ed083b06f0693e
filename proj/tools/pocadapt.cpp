// pocadapt: trajectory-log ingestion, offline policy training, simulator
// rollouts, end-to-end pipeline runs, and metric reports.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pocadapt/config.hpp"
#include "pocadapt/log_store.hpp"
#include "pocadapt/metrics.hpp"
#include "pocadapt/orchestrator.hpp"
#include "pocadapt/sim.hpp"
#include "pocadapt/trainer.hpp"

namespace {

using namespace pocadapt;

void write_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw UnreadableFile("cannot write " + tmp);
        out << content;
    }
    std::rename(tmp.c_str(), path.c_str());
}

EngineConfig resolve_config(const std::string& config_path) {
    EngineConfig cfg;
    if (!config_path.empty()) {
        std::vector<std::string> warnings;
        cfg = load_config(config_path, &warnings);
        for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    }
    apply_env_overrides(cfg);
    return cfg;
}

std::vector<SimScenario> resolve_scenarios(const std::string& path) {
    return path.empty() ? benchmark_scenarios() : load_scenarios(path);
}

int cmd_ingest(const std::string& log_path, const std::string& buffer_out,
               const std::string& config_path, double split_fraction, std::uint64_t split_seed) {
    const EngineConfig cfg = resolve_config(config_path);
    const IngestResult result = ingest_log(log_path, cfg.rewards);
    ReplayBuffer buf;
    const size_t pushed = fill_buffer(result.trajectories, buf);
    std::cout << "episodes: " << result.trajectories.size() << "\n"
              << "transitions: " << pushed << "\n"
              << "skipped lines: " << result.skipped_lines << " of " << result.total_lines << "\n";
    if (split_fraction > 0) {
        const SplitSpec split = split_by_cve(result.trajectories, split_fraction, split_seed);
        std::cout << "split: " << split.train_cves.size() << " train / "
                  << split.test_cves.size() << " test CVEs\n";
    }
    if (!buffer_out.empty()) {
        save_buffer(buf, buffer_out);
        std::cout << "buffer written to " << buffer_out << "\n";
    }
    return 0;
}

int cmd_train(const std::string& log_path, const std::string& buffer_path,
              const std::string& out_path, const std::string& config_path, std::uint64_t seed,
              bool seed_set) {
    EngineConfig cfg = resolve_config(config_path);
    if (seed_set) cfg.trainer.seed = seed;

    ReplayBuffer buf;
    if (!buffer_path.empty()) {
        buf = load_buffer(buffer_path);
    } else {
        const IngestResult result = ingest_log(log_path, cfg.rewards);
        fill_buffer(result.trajectories, buf);
    }
    TrainingReport report;
    const Checkpoint ckpt = train(buf, cfg.trainer, cfg.vocab, &report);
    save_checkpoint(ckpt, out_path);
    std::cout << "gradient steps: " << report.gradient_steps << "\n";
    if (!report.epoch_mean_loss.empty())
        std::cout << "first epoch loss: " << report.epoch_mean_loss.front()
                  << "  last epoch loss: " << report.epoch_mean_loss.back() << "\n";
    std::cout << "checkpoint written to " << out_path << "\n";
    return 0;
}

void print_eval(const std::string& label, const PolicyEval& eval) {
    std::cout << label << ": SR " << eval.sr_mean << " +- " << eval.sr_std << "  TTE "
              << eval.tte_mean << " +- " << eval.tte_std << "  EE " << eval.ee_mean << " +- "
              << eval.ee_std << "\n";
}

int cmd_eval(const std::string& ckpt_path, const std::string& scenarios_path, int episodes,
             int n_seeds, std::uint64_t base_seed, bool with_random,
             const std::string& config_path) {
    const EngineConfig cfg = resolve_config(config_path);
    const auto scenarios = resolve_scenarios(scenarios_path);
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < n_seeds; ++i) seeds.push_back(base_seed + static_cast<std::uint64_t>(i));

    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    print_eval("trained",
               evaluate_policy(make_greedy_policy(ckpt.online, cfg.vocab), scenarios, episodes,
                               seeds, cfg.rewards));
    if (with_random)
        print_eval("random",
                   evaluate_policy(make_random_policy(), scenarios, episodes, seeds, cfg.rewards));
    return 0;
}

int cmd_simulate(const std::string& scenarios_path, const std::string& out_path, int episodes,
                 std::uint64_t seed, const std::string& policy_name, double epsilon,
                 const std::string& ckpt_path, const std::string& config_path) {
    const EngineConfig cfg = resolve_config(config_path);
    const auto scenarios = resolve_scenarios(scenarios_path);

    GenerateOptions opts;
    opts.episodes = episodes;
    opts.seed = seed;
    opts.epsilon = epsilon;
    if (policy_name == "random") {
        opts.policy = PolicyKind::Random;
    } else if (policy_name == "scripted") {
        opts.policy = PolicyKind::Scripted;
    } else if (policy_name == "eps-scripted") {
        opts.policy = PolicyKind::EpsilonScripted;
    } else if (policy_name == "checkpoint") {
        opts.policy = PolicyKind::Checkpoint;
        opts.checkpoint_net = load_checkpoint(ckpt_path).online;
    } else {
        throw ConfigError("unknown policy: " + policy_name);
    }
    generate_logs(scenarios, opts, out_path, cfg.rewards);
    std::cout << episodes << " episodes written to " << out_path << "\n";
    return 0;
}

int cmd_run(const std::string& advisory_path, const std::string& fixture_dir,
            const std::string& workdir, const std::string& trajectory_out,
            const std::string& audit_out, const std::string& ckpt_path, int topk,
            const std::string& config_path) {
    const EngineConfig cfg = resolve_config(config_path);

    std::ifstream in(advisory_path);
    if (!in) throw UnreadableFile("cannot read advisory " + advisory_path);
    nlohmann::json advisory;
    in >> advisory;
    const BugContext context = parse_advisory_record(advisory);

    LocalDirExecutor executor(workdir, {}, fixture_dir);
    executor.reset();
    const ToolRegistry registry = make_default_registry(executor);
    RuleBasedJudge judge;

    RecommendCallback policy;
    if (!ckpt_path.empty()) {
        const Checkpoint ckpt = load_checkpoint(ckpt_path);
        const EncodingVocab vocab = cfg.vocab;
        policy = [net = ckpt.online, vocab, topk](const ExploitState& s) {
            std::vector<int> ids;
            for (const auto& rec : recommend(net, s, topk, std::nullopt, vocab))
                ids.push_back(rec.action.id);
            return ids;
        };
    }

    auto rca = make_scripted_rca_agent();
    auto planner = make_scripted_planner_agent();
    auto exploiter = make_scripted_exploiter_agent();
    PipelineAgents agents{*rca, *planner, *exploiter};
    PipelineDeps deps{executor, registry, judge, policy, cfg.vocab};

    const PipelineRun run = run_pipeline(context, agents, deps, cfg.budget);
    if (!trajectory_out.empty()) write_trajectory_log(run, trajectory_out);
    if (!audit_out.empty()) write_audit_log(run, audit_out);

    if (run.verdict.status == VerdictStatus::VALIDATED) {
        std::cout << "VALIDATED after " << run.validator_iterations << " validator iteration(s)\n";
    } else {
        const auto& d = *run.verdict.diagnostic;
        std::cout << "NOT_VALIDATED at " << to_string(d.stage) << ": " << d.category << " ("
                  << d.detail << ")\n";
    }
    std::cout << "exploiter steps: " << run.trajectory.transitions.size()
              << "  tokens: " << run.accounting.input_tokens + run.accounting.output_tokens << "\n";
    return run.verdict.status == VerdictStatus::VALIDATED ? 0 : 1;
}

int cmd_report(const std::string& log_path, const std::string& out_path, bool as_json,
               const std::string& config_path) {
    const EngineConfig cfg = resolve_config(config_path);
    const IngestResult result = ingest_log(log_path, cfg.rewards);

    std::vector<RunRecord> records;
    std::map<int, std::string> cwe_names = {
        {0, "path-traversal"}, {1, "command-injection"}, {2, "xss"}, {3, "code-injection"}};
    for (const auto& traj : result.trajectories) {
        RunRecord rec;
        rec.id = traj.episode_id;
        rec.success = traj.outcome == EpisodeOutcome::VERIFIED;
        rec.steps = static_cast<long>(traj.transitions.size());
        if (!traj.transitions.empty()) {
            const int cwe = traj.transitions.front().state.cwe_type;
            rec.cwe_group = cwe_names.count(cwe) ? cwe_names[cwe] : std::to_string(cwe);
        }
        records.push_back(std::move(rec));
    }
    const MetricsReport report = emit_report(records, cfg.prices);
    const std::string rendered =
        as_json ? report_to_json(report).dump(2) + "\n" : render_report_table(report);
    if (out_path.empty())
        std::cout << rendered;
    else
        write_atomic(out_path, rendered);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vulnerability-reproduction engine"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "engine config JSON");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "parse a trajectory log into a replay buffer");
    std::string ingest_log_path, ingest_buffer_out;
    double ingest_split = 0;
    std::uint64_t ingest_split_seed = 0;
    ingest->add_option("--log", ingest_log_path, "JSONL trajectory log")->required();
    ingest->add_option("--buffer-out", ingest_buffer_out, "serialized replay buffer output");
    ingest->add_option("--split-fraction", ingest_split, "report a CVE-disjoint split");
    ingest->add_option("--split-seed", ingest_split_seed, "split shuffle seed");

    // train
    auto* train_cmd = app.add_subcommand("train", "train a policy from logged trajectories");
    std::string train_log, train_buffer, train_out;
    std::uint64_t train_seed = 0;
    train_cmd->add_option("--log", train_log, "JSONL trajectory log");
    train_cmd->add_option("--buffer", train_buffer, "serialized replay buffer");
    train_cmd->add_option("--out", train_out, "checkpoint output path")->required();
    auto* seed_opt = train_cmd->add_option("--seed", train_seed, "training seed");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the simulator");
    std::string eval_ckpt, eval_scenarios;
    int eval_episodes = 200, eval_seeds = 20;
    std::uint64_t eval_base_seed = 1;
    bool eval_random = false;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "trained checkpoint")->required();
    eval_cmd->add_option("--scenarios", eval_scenarios, "scenario suite JSON");
    eval_cmd->add_option("--episodes", eval_episodes, "episodes per seed");
    eval_cmd->add_option("--seeds", eval_seeds, "number of evaluation seeds");
    eval_cmd->add_option("--base-seed", eval_base_seed, "first evaluation seed");
    eval_cmd->add_flag("--with-random", eval_random, "also evaluate the random baseline");

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "roll out episodes and write a trajectory log");
    std::string sim_scenarios, sim_out, sim_policy = "eps-scripted", sim_ckpt;
    int sim_episodes = 100;
    std::uint64_t sim_seed = 0;
    double sim_epsilon = 0.3;
    sim_cmd->add_option("--scenarios", sim_scenarios, "scenario suite JSON");
    sim_cmd->add_option("--out", sim_out, "trajectory log output")->required();
    sim_cmd->add_option("--episodes", sim_episodes, "episode count");
    sim_cmd->add_option("--seed", sim_seed, "rollout seed");
    sim_cmd->add_option("--policy", sim_policy, "random | scripted | eps-scripted | checkpoint");
    sim_cmd->add_option("--epsilon", sim_epsilon, "exploration rate for eps-scripted");
    sim_cmd->add_option("--checkpoint", sim_ckpt, "checkpoint for --policy checkpoint");

    // run
    auto* run_cmd = app.add_subcommand("run", "run the full pipeline against a fixture");
    std::string run_advisory, run_fixture, run_workdir, run_traj_out, run_audit_out, run_ckpt;
    int run_topk = 3;
    run_cmd->add_option("--advisory", run_advisory, "advisory record JSON")->required();
    run_cmd->add_option("--fixture", run_fixture, "fixture template directory")->required();
    run_cmd->add_option("--workdir", run_workdir, "sandbox working directory")->required();
    run_cmd->add_option("--trajectory-out", run_traj_out, "trajectory log output");
    run_cmd->add_option("--audit-out", run_audit_out, "tool audit log output");
    run_cmd->add_option("--checkpoint", run_ckpt, "policy checkpoint for action recommendation");
    run_cmd->add_option("--topk", run_topk, "recommended action count per step");

    // report
    auto* report_cmd = app.add_subcommand("report", "compute metrics over a trajectory log");
    std::string report_log, report_out;
    bool report_json = false;
    report_cmd->add_option("--log", report_log, "JSONL trajectory log")->required();
    report_cmd->add_option("--out", report_out, "write the report to a file");
    report_cmd->add_flag("--json", report_json, "emit JSON instead of a table");

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*ingest)
            return cmd_ingest(ingest_log_path, ingest_buffer_out, config_path, ingest_split,
                              ingest_split_seed);
        if (*train_cmd) {
            if (train_log.empty() == train_buffer.empty())
                throw ConfigError("train needs exactly one of --log or --buffer");
            return cmd_train(train_log, train_buffer, train_out, config_path, train_seed,
                             seed_opt->count() > 0);
        }
        if (*eval_cmd)
            return cmd_eval(eval_ckpt, eval_scenarios, eval_episodes, eval_seeds, eval_base_seed,
                            eval_random, config_path);
        if (*sim_cmd)
            return cmd_simulate(sim_scenarios, sim_out, sim_episodes, sim_seed, sim_policy,
                                sim_epsilon, sim_ckpt, config_path);
        if (*run_cmd)
            return cmd_run(run_advisory, run_fixture, run_workdir, run_traj_out, run_audit_out,
                           run_ckpt, run_topk, config_path);
        if (*report_cmd) return cmd_report(report_log, report_out, report_json, config_path);
    } catch (const UnreadableFile& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 2;
    } catch (const EmptyLog& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 2;
    } catch (const ConfigError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 2;
    } catch (const EngineError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 2;
}
