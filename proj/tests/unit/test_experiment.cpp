#include "rwmatch/experiment.hpp"

#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace rwmatch;

namespace {

ExperimentConfig small(ExperimentKind kind) {
    ExperimentConfig c;
    c.kind = kind;
    c.seed = 7;
    c.sizes = {4, 64};
    c.trials = 4;
    c.n_star = 6;
    c.steps = 10;
    c.unmatched = 2;
    c.prune_k = 3;
    c.sinkhorn_problems = 20;
    c.sinkhorn_max_n = 12;
    c.reduce_instances = 20;
    return c;
}

const ReportFile* find_file(const ExperimentOutcome& o, const std::string& name) {
    for (const auto& f : o.files)
        if (f.name == name) return &f;
    return nullptr;
}

std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("rwmatch_unit_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("every experiment runs and is byte-for-byte reproducible") {
    for (const auto kind : {ExperimentKind::AttentionConverge, ExperimentKind::MatchingConverge,
                            ExperimentKind::SinkhornCheck, ExperimentKind::Sparsify, ExperimentKind::ReduceCheck}) {
        const ExperimentConfig cfg = small(kind);
        for (const auto format : {ReportFormat::Csv, ReportFormat::Json}) {
            const ExperimentOutcome a = run_experiment(cfg, format);
            const ExperimentOutcome b = run_experiment(cfg, format);
            CAPTURE(command_name(kind));
            CHECK(a.exit_code != kExitNumerical);
            CHECK(a.exit_code != kExitUsage);
            REQUIRE(!a.files.empty());
            REQUIRE(a.files.size() == b.files.size());
            for (std::size_t k = 0; k < a.files.size(); ++k) {
                CHECK(a.files[k].name == b.files[k].name);
                CHECK(a.files[k].content == b.files[k].content);
            }
            const std::string head = std::string(command_name(kind));
            if (format == ReportFormat::Csv) {
                const ReportFile* f = find_file(a, head + ".csv");
                REQUIRE(f != nullptr);
                CHECK(f->content.starts_with("# format_version=1\n"));
                CHECK(f->content.find("# config.seed=7\n") != std::string::npos);
            } else {
                const ReportFile* f = find_file(a, head + ".json");
                REQUIRE(f != nullptr);
                const auto doc = nlohmann::json::parse(f->content);
                CHECK(doc["format_version"] == 1);
                CHECK(doc["config"]["seed"] == 7);
                CHECK(doc.contains("results"));
                CHECK(doc.size() >= 4);  // plus one key per table
            }
        }
    }
}

TEST_CASE("single-size attention smoke run") {
    ExperimentConfig c;
    c.trials = 1;
    c.sizes = {64};
    const auto out = run_experiment(c, ReportFormat::Csv);
    CHECK(out.exit_code == kExitOk);
    const std::string& csv = out.files.front().content;
    const auto header = csv.find("experiment,similarity,method,sample_size,trial_count,q25,q50,q75,max,seed\n");
    REQUIRE(header != std::string::npos);
    const std::string body = csv.substr(csv.find('\n', header) + 1);
    CHECK(std::count(body.begin(), body.end(), '\n') == 1);
}

TEST_CASE("different seeds give different reports") {
    ExperimentConfig c = small(ExperimentKind::AttentionConverge);
    const auto a = run_experiment(c, ReportFormat::Csv);
    c.seed = 8;
    const auto b = run_experiment(c, ReportFormat::Csv);
    CHECK(a.files.front().content != b.files.front().content);
}

TEST_CASE("checks that hold exit with status zero") {
    CHECK(run_experiment(small(ExperimentKind::ReduceCheck), ReportFormat::Csv).exit_code == kExitOk);
    CHECK(run_experiment(small(ExperimentKind::SinkhornCheck), ReportFormat::Csv).exit_code == kExitOk);
    const auto sp = run_experiment(small(ExperimentKind::Sparsify), ReportFormat::Csv);
    CHECK(sp.exit_code == kExitOk);
    CHECK(find_file(sp, "sparsify_pruned.csv") != nullptr);
}

TEST_CASE("a prune rule without survivors is a threshold failure") {
    ExperimentConfig c = small(ExperimentKind::Sparsify);
    c.prune = PruneChoice::Threshold;
    c.prune_threshold = 0.999999;
    const auto out = run_experiment(c, ReportFormat::Json);
    CHECK(out.exit_code == kExitThreshold);
    CHECK(out.message.find("0.99999") != std::string::npos);
}

TEST_CASE("an unreachable tolerance makes the sinkhorn check fail its threshold") {
    ExperimentConfig c = small(ExperimentKind::SinkhornCheck);
    c.iters = 1;
    c.tol = 1e-15;
    CHECK(run_experiment(c, ReportFormat::Csv).exit_code == kExitThreshold);
}

TEST_CASE("invalid configurations are rejected before running") {
    ExperimentConfig c = small(ExperimentKind::AttentionConverge);
    c.eps = 0.0;
    CHECK_THROWS_AS(run_experiment(c, ReportFormat::Csv), ConfigError);
}

TEST_CASE("reports are written to disk and write errors map to the I/O code") {
    const auto out = run_experiment(small(ExperimentKind::ReduceCheck), ReportFormat::Csv);
    const auto dir = scratch_dir("write");
    std::ostringstream err;
    CHECK(write_reports(out, dir / "nested", err) == kExitOk);
    std::ifstream is(dir / "nested" / "reduce-check.csv", std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    CHECK(ss.str() == out.files.front().content);

    const auto blocker = dir / "file";
    std::ofstream(blocker) << "x";
    CHECK(write_reports(out, blocker / "sub", err) == kExitIo);
    CHECK(err.str().find("error") != std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST_CASE("config adapters") {
    ExperimentConfig c;
    c.similarity = SimilarityChoice::Both;
    c.method = MethodChoice::Both;
    CHECK(similarities_from(c).size() == 2);
    CHECK(methods_from(c).size() == 2);
    c.prune = PruneChoice::Nms;
    CHECK(prune_rule_from(c).kind == PruneRule::Kind::Nms);
    const MatchingOptions m = matching_options_from(c);
    CHECK(m.alpha == c.alpha);
    CHECK(m.sinkhorn.eps == c.eps);
    CHECK(m.sinkhorn.max_iters == c.iters);
    const ExperimentSets s = make_experiment_sets(c);
    CHECK(s.a.size() == c.n_star);
    CHECK(s.b.size() == c.n_star);
}
