// Experiment runner: one subcommand per experiment, reports written to --out.

#include "rwmatch/config.hpp"
#include "rwmatch/experiment.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    std::string format = "csv";
};

int run(rwmatch::ExperimentKind kind, const Options& opts) {
    using namespace rwmatch;
    std::string text;
    if (!opts.config_path.empty()) {
        std::ifstream in(opts.config_path, std::ios::binary);
        if (!in) {
            std::cerr << "error: cannot read config " << opts.config_path << "\n";
            return kExitIo;
        }
        std::ostringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    }

    ExperimentConfig cfg;
    try {
        cfg = parse_config(text);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    }
    cfg.kind = kind;
    if (opts.seed) cfg.seed = *opts.seed;

    ExperimentOutcome outcome;
    try {
        outcome = run_experiment(cfg, opts.format == "json" ? ReportFormat::Json : ReportFormat::Csv);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    } catch (const ContractViolation& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    if (const int io = write_reports(outcome, opts.out_dir, std::cerr); io != kExitOk) return io;
    (outcome.exit_code == kExitOk ? std::cout : std::cerr) << command_name(kind) << ": " << outcome.message << "\n";
    return outcome.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    using rwmatch::ExperimentKind;
    CLI::App app{"Reweighted attention and matching experiments"};
    app.require_subcommand(1);

    Options opts;
    const std::pair<ExperimentKind, const char*> commands[] = {
        {ExperimentKind::AttentionConverge, "Monte-Carlo convergence of sampled attention outputs"},
        {ExperimentKind::MatchingConverge, "Monte-Carlo convergence of grouped matching assignments"},
        {ExperimentKind::SinkhornCheck, "Marginal feasibility of random augmented Sinkhorn problems"},
        {ExperimentKind::ReduceCheck, "Uniform-weight reduction of the reweighted operators"},
        {ExperimentKind::Sparsify, "Score-head training against the frozen matcher, then pruning"},
    };
    std::vector<std::pair<CLI::App*, ExperimentKind>> subs;
    for (const auto& [kind, help] : commands) {
        CLI::App* sub = app.add_subcommand(rwmatch::command_name(kind), help);
        sub->add_option("--config", opts.config_path, "key=value or JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", opts.seed, "root seed, overrides the config");
        sub->add_option("--out", opts.out_dir, "output directory")->capture_default_str();
        sub->add_option("--format", opts.format, "report format")
            ->check(CLI::IsMember({"csv", "json"}))
            ->capture_default_str();
        subs.emplace_back(sub, kind);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : rwmatch::kExitUsage;
    }
    for (const auto& [sub, kind] : subs)
        if (sub->parsed()) return run(kind, opts);
    return rwmatch::kExitUsage;
}
