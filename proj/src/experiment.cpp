#include "rwmatch/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>

namespace rwmatch {

using Json = nlohmann::ordered_json;

ToyArchitecture architecture_from(const ExperimentConfig& cfg, Similarity sim) {
    ToyArchitecture arch;
    arch.token_dim = cfg.dim;
    arch.heads = cfg.heads;
    arch.blocks = cfg.blocks;
    arch.ffn_dim = cfg.ffn_dim;
    arch.descriptor_dim = cfg.descriptor_dim;
    arch.sim = sim;
    return arch;
}

MatchingOptions matching_options_from(const ExperimentConfig& cfg) {
    MatchingOptions opts;
    opts.alpha = cfg.alpha;
    opts.sinkhorn = {cfg.eps, cfg.iters, cfg.tol};
    return opts;
}

std::vector<Similarity> similarities_from(const ExperimentConfig& cfg) {
    switch (cfg.similarity) {
        case SimilarityChoice::Softmax: return {Similarity::softmax(cfg.temperature)};
        case SimilarityChoice::Linear: return {Similarity::linear()};
        case SimilarityChoice::Both: return {Similarity::softmax(cfg.temperature), Similarity::linear()};
    }
    return {};
}

std::vector<MatchingMethod> methods_from(const ExperimentConfig& cfg) {
    switch (cfg.method) {
        case MethodChoice::OptimalTransport: return {MatchingMethod::OptimalTransport};
        case MethodChoice::DualSoftmax: return {MatchingMethod::DualSoftmax};
        case MethodChoice::Both: return {MatchingMethod::OptimalTransport, MatchingMethod::DualSoftmax};
    }
    return {};
}

PruneRule prune_rule_from(const ExperimentConfig& cfg) {
    switch (cfg.prune) {
        case PruneChoice::Threshold: return PruneRule::keep_above(cfg.prune_threshold);
        case PruneChoice::TopK: return PruneRule::top_k(cfg.prune_k);
        case PruneChoice::Nms: return PruneRule::nms(cfg.prune_radius, cfg.prune_k);
    }
    return {};
}

ExperimentSets make_experiment_sets(const ExperimentConfig& cfg) {
    const SyntheticSetOptions opts{cfg.n_star, cfg.descriptor_dim, cfg.grid};
    Rng ra(derive_seed(cfg.seed, kStreamSetA));
    Rng rb(derive_seed(cfg.seed, kStreamSetB));
    FeatureSet a = make_synthetic_set(opts, ra);
    FeatureSet b = make_synthetic_set(opts, rb);
    return {std::move(a), std::move(b)};
}

namespace {

Matrix random_unit_columns(Rng& rng, std::size_t dim, std::size_t n) {
    Matrix m(dim, n);
    for (std::size_t j = 0; j < n; ++j) {
        auto c = m.col(j);
        double norm = 0.0;
        while (norm == 0.0) {
            for (double& v : c) v = rng.uniform(-1.0, 1.0);
            norm = std::sqrt(dot(c, c));
        }
        for (double& v : c) v /= norm;
    }
    return m;
}

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
    const double h = std::sqrt(3.0);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.uniform(-h, h);
    return m;
}

}  // namespace

SinkhornProblem make_sinkhorn_problem(const ExperimentConfig& cfg, Rng& rng) {
    const std::size_t na = 1 + rng.below(cfg.sinkhorn_max_n);
    const std::size_t nb = 1 + rng.below(cfg.sinkhorn_max_n);
    const double eps = cfg.eps_min * std::pow(cfg.eps_max / cfg.eps_min, rng.uniform());
    const Matrix ta = random_unit_columns(rng, cfg.descriptor_dim, na);
    const Matrix tb = random_unit_columns(rng, cfg.descriptor_dim, nb);
    const ProbabilityWeights pa(rng.dirichlet_flat(na));
    const ProbabilityWeights pb(rng.dirichlet_flat(nb));
    return {augment(score_matrix(ta, tb), cfg.sinkhorn_alpha), MarginalPair::from_weights(pa, pb),
            SinkhornOptions{eps, cfg.iters, cfg.tol}};
}

std::vector<SinkhornCheckRow> run_sinkhorn_check(const ExperimentConfig& cfg) {
    std::vector<SinkhornCheckRow> rows;
    for (std::size_t i = 0; i < cfg.sinkhorn_problems; ++i) {
        Rng rng(derive_seed(cfg.seed, kStreamProblems, i));
        const SinkhornProblem prob = make_sinkhorn_problem(cfg, rng);
        SinkhornCheckRow row;
        row.problem = i;
        row.rows = prob.scores.interior_rows();
        row.cols = prob.scores.interior_cols();
        row.eps = prob.opts.eps;
        try {
            const AugmentedAssignment plan = sinkhorn(prob.scores, prob.marginals, prob.opts);
            row.iterations = plan.iterations;
            row.residual = plan.residual;
            row.total_mass = plan.total_mass();
            row.converged = plan.converged;
        } catch (const NumericalFailure& e) {
            row.failed = true;
            row.iterations = static_cast<int>(e.iteration());
            row.residual = row.total_mass = std::nan("");
        }
        rows.push_back(row);
    }
    return rows;
}

std::vector<ReductionRow> run_reduction_suite(const ExperimentConfig& cfg) {
    const MatchingOptions opts = matching_options_from(cfg);
    std::vector<ReductionRow> rows;
    for (std::size_t i = 0; i < cfg.reduce_instances; ++i) {
        Rng rng(derive_seed(cfg.seed, kStreamProblems, i));
        ReductionRow row;
        row.instance = i;
        const Similarity sim = i % 2 == 0 ? Similarity::softmax(cfg.temperature) : Similarity::linear();
        row.similarity = sim.kind == Similarity::Kind::Softmax ? "softmax" : "linear";
        row.dim = 1 + rng.below(16);
        row.n_a = 1 + rng.below(32);
        row.n_b = 1 + rng.below(32);
        const Matrix ta = random_matrix(rng, row.dim, row.n_a);
        const Matrix tb = random_matrix(rng, row.dim, row.n_b);
        const auto ua = ProbabilityWeights::uniform(row.n_a);
        const auto ub = ProbabilityWeights::uniform(row.n_b);

        row.attention_dev = max_abs_diff(reweighted_attention_matrix(tb, ta, sim, ub), attention_matrix(tb, ta, sim));
        const ScoreMatrix s = score_matrix(ta, tb);
        row.dual_softmax_dev = max_abs_diff(dual_softmax_reweighted(s, ua, ub), dual_softmax(s));
        try {
            const AugmentedAssignment x = ot_uniform(ta, tb, opts);
            const AugmentedAssignment y = ot_reweighted(ta, tb, ua, ub, opts);
            row.ot_bitwise = x.iterations == y.iterations &&
                             std::memcmp(x.plan.data().data(), y.plan.data().data(),
                                         x.plan.data().size() * sizeof(double)) == 0;
        } catch (const NumericalFailure&) {
            row.ot_bitwise = false;
        }
        rows.push_back(row);
    }
    return rows;
}

std::vector<std::uint64_t> parameter_bits(const TransformerSpec& spec) {
    std::vector<std::uint64_t> bits;
    auto add = [&](std::span<const double> xs) {
        for (double x : xs) bits.push_back(std::bit_cast<std::uint64_t>(x));
    };
    add(spec.embed.weight.data());
    add(spec.embed.bias);
    for (const auto& layer : spec.layers) {
        bits.push_back(static_cast<std::uint64_t>(layer.route));
        for (const auto& h : layer.params.heads) {
            add(h.query.data());
            add(h.key.data());
            add(h.value_output.data());
        }
        add(layer.params.ffn.w1.data());
        add(layer.params.ffn.b1);
        add(layer.params.ffn.w2.data());
        add(layer.params.ffn.b2);
        bits.push_back(static_cast<std::uint64_t>(layer.params.ffn.act));
        bits.push_back(static_cast<std::uint64_t>(layer.params.sim.kind));
        bits.push_back(std::bit_cast<std::uint64_t>(layer.params.sim.temperature));
    }
    return bits;
}

SparsifyRun run_sparsify(const ExperimentConfig& cfg) {
    const TransformerSpec spec =
        make_toy_transformer(architecture_from(cfg, similarities_from(cfg).front()),
                             derive_seed(cfg.seed, kStreamNetwork));
    const auto before = parameter_bits(spec);

    Rng data_rng(derive_seed(cfg.seed, kStreamSetA));
    const SyntheticMatchPair pair =
        make_synthetic_match_pair(cfg.n_star, cfg.descriptor_dim, cfg.grid, cfg.unmatched, cfg.noise, data_rng);
    Rng init_rng(derive_seed(cfg.seed, kStreamTraining, 0));
    const ScoreHeadParams init = ScoreHeadParams::random(cfg.descriptor_dim, cfg.score_hidden, init_rng);

    const TrainingContext ctx{spec, pair.a, pair.b, pair.gt, matching_options_from(cfg)};
    SparsityConfig sc;
    sc.lambda = cfg.lambda;
    sc.rule = prune_rule_from(cfg);
    SpsaSchedule schedule;
    schedule.a = cfg.spsa_a;
    schedule.c = cfg.spsa_c;
    schedule.stability = cfg.spsa_stability;

    SparsifyRun run;
    run.training = train_score_head(init, ctx, sc, cfg.steps, derive_seed(cfg.seed, kStreamTraining, 1), schedule);
    run.backbone_unchanged = parameter_bits(spec) == before;
    run.scores_a = score_head_forward(run.training.params, pair.a);
    run.scores_b = score_head_forward(run.training.params, pair.b);
    auto try_prune = [&](const FeatureSet& set, const ScoreMap& s) -> std::optional<PruneResult> {
        try {
            return prune(set, s, sc.rule);
        } catch (const ContractViolation&) {
            return std::nullopt;
        }
    };
    run.pruned_a = try_prune(pair.a, run.scores_a);
    run.pruned_b = try_prune(pair.b, run.scores_b);
    return run;
}

namespace {

// One report: summary results plus named tables of flat rows. Rendered
// either as CSV files (one per table) or a single JSON document.
struct Report {
    std::string command;
    std::vector<std::pair<std::string, Json>> results;
    std::vector<std::pair<std::string, Json>> tables;  // name -> array of row objects
};

std::string csv_cell(const Json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_float()) return format_double(v.get<double>());
    if (v.is_null()) return "nan";
    return v.dump();
}

std::string csv_preamble(const ExperimentConfig& cfg, const Report& report) {
    std::string out = "# format_version=" + std::to_string(kReportFormatVersion) + "\n";
    for (const auto& [k, v] : config_entries(cfg)) out += "# config." + k + "=" + v + "\n";
    for (const auto& [k, v] : report.results) out += "# result." + k + "=" + csv_cell(v) + "\n";
    return out;
}

std::string csv_table(const Json& rows) {
    std::string out;
    if (rows.empty()) return out;
    bool first = true;
    for (const auto& [k, _] : rows.front().items()) {
        out += first ? "" : ",";
        out += k;
        first = false;
    }
    out += '\n';
    for (const auto& row : rows) {
        first = true;
        for (const auto& [_, v] : row.items()) {
            out += first ? "" : ",";
            out += csv_cell(v);
            first = false;
        }
        out += '\n';
    }
    return out;
}

// JSON has no NaN; non-finite values are written as strings.
Json json_value(const Json& v) {
    if (v.is_number_float() && !std::isfinite(v.get<double>())) return csv_cell(v);
    if (v.is_object() || v.is_array()) {
        Json out = v.is_object() ? Json::object() : Json::array();
        for (auto it = v.begin(); it != v.end(); ++it) {
            if (v.is_object())
                out[it.key()] = json_value(it.value());
            else
                out.push_back(json_value(it.value()));
        }
        return out;
    }
    return v;
}

std::vector<ReportFile> render(const ExperimentConfig& cfg, const Report& report, ReportFormat format) {
    std::vector<ReportFile> files;
    if (format == ReportFormat::Csv) {
        const std::string pre = csv_preamble(cfg, report);
        for (std::size_t t = 0; t < report.tables.size(); ++t) {
            const auto& [name, rows] = report.tables[t];
            const std::string file = t == 0 ? report.command + ".csv" : report.command + "_" + name + ".csv";
            files.push_back({file, pre + csv_table(rows)});
        }
        return files;
    }
    Json doc = Json::object();
    doc["format_version"] = kReportFormatVersion;
    doc["config"] = Json::parse(config_to_json(cfg));
    Json results = Json::object();
    for (const auto& [k, v] : report.results) results[k] = json_value(v);
    doc["results"] = results;
    for (const auto& [name, rows] : report.tables) doc[name] = json_value(rows);
    files.push_back({report.command + ".json", doc.dump(2) + "\n"});
    return files;
}

Json convergence_rows(const std::vector<ConvergenceReport>& reports) {
    Json rows = Json::array();
    for (const auto& r : reports)
        for (const auto& row : r.rows) {
            Json j = Json::object();
            j["experiment"] = r.experiment;
            j["similarity"] = r.similarity;
            j["method"] = r.method;
            j["sample_size"] = row.sample_size;
            j["trial_count"] = row.trials;
            j["q25"] = row.q25;
            j["q50"] = row.q50;
            j["q75"] = row.q75;
            j["max"] = row.max;
            j["seed"] = r.seed;
            rows.push_back(j);
        }
    return rows;
}

ExperimentOutcome convergence_outcome(const std::vector<ConvergenceReport>& reports, Report& report) {
    ExperimentOutcome out;
    std::size_t failures = 0;
    bool all_converge = true;
    for (const auto& r : reports) {
        const std::string tag = r.similarity + "." + r.method;
        report.results.emplace_back(tag + ".failures", r.total_failures());
        report.results.emplace_back(tag + ".converges", r.converges());
        failures += r.total_failures();
        all_converge = all_converge && r.converges();
    }
    report.tables.emplace_back("convergence", convergence_rows(reports));
    if (failures > 0) {
        out.exit_code = kExitNumerical;
        out.message = std::to_string(failures) + " trial(s) hit a numerical failure";
    } else if (!all_converge) {
        out.exit_code = kExitThreshold;
        out.message = "convergence criterion not met";
    } else {
        out.message = "convergence criterion met";
    }
    return out;
}

ExperimentOutcome attention_converge(const ExperimentConfig& cfg, Report& report) {
    const ExperimentSets sets = make_experiment_sets(cfg);
    std::vector<ConvergenceReport> reports;
    for (const Similarity& sim : similarities_from(cfg)) {
        const auto spec = make_toy_transformer(architecture_from(cfg, sim), derive_seed(cfg.seed, kStreamNetwork));
        reports.push_back(run_attention_convergence(spec, sets.a, sets.b, cfg.sizes, cfg.trials,
                                                    derive_seed(cfg.seed, kStreamTrials)));
        reports.back().seed = cfg.seed;
    }
    return convergence_outcome(reports, report);
}

ExperimentOutcome matching_converge(const ExperimentConfig& cfg, Report& report) {
    const ExperimentSets sets = make_experiment_sets(cfg);
    const MatchingOptions opts = matching_options_from(cfg);
    std::vector<ConvergenceReport> reports;
    for (const Similarity& sim : similarities_from(cfg)) {
        const auto spec = make_toy_transformer(architecture_from(cfg, sim), derive_seed(cfg.seed, kStreamNetwork));
        for (MatchingMethod method : methods_from(cfg))
        {
            reports.push_back(run_matching_convergence(spec, sets.a, sets.b, cfg.sizes, cfg.trials,
                                                       derive_seed(cfg.seed, kStreamTrials), method, opts));
            reports.back().seed = cfg.seed;
        }
    }
    return convergence_outcome(reports, report);
}

ExperimentOutcome sinkhorn_check(const ExperimentConfig& cfg, Report& report) {
    const auto rows = run_sinkhorn_check(cfg);
    Json table = Json::array();
    std::size_t failed = 0, violations = 0;
    double worst_residual = 0.0, worst_mass = 0.0;
    for (const auto& r : rows) {
        Json j = Json::object();
        j["problem"] = r.problem;
        j["n_a"] = r.rows;
        j["n_b"] = r.cols;
        j["eps"] = r.eps;
        j["iterations"] = r.iterations;
        j["residual"] = r.residual;
        j["total_mass"] = r.total_mass;
        j["converged"] = r.converged;
        table.push_back(j);
        if (r.failed) {
            ++failed;
            continue;
        }
        const double mass_err = std::abs(r.total_mass - 2.0);
        worst_residual = std::max(worst_residual, r.residual);
        worst_mass = std::max(worst_mass, mass_err);
        if (!r.converged || !(r.residual <= cfg.tol) || !(mass_err <= 2.0 * cfg.tol)) ++violations;
    }
    report.results.emplace_back("problems", rows.size());
    report.results.emplace_back("numerical_failures", failed);
    report.results.emplace_back("violations", violations);
    report.results.emplace_back("max_residual", worst_residual);
    report.results.emplace_back("max_mass_error", worst_mass);
    report.tables.emplace_back("problems", table);

    ExperimentOutcome out;
    if (failed) {
        out.exit_code = kExitNumerical;
        out.message = std::to_string(failed) + " problem(s) hit a numerical failure";
    } else if (violations) {
        out.exit_code = kExitThreshold;
        out.message = std::to_string(violations) + " problem(s) missed the residual or mass tolerance";
    } else {
        out.message = "all problems feasible within tolerance";
    }
    return out;
}

ExperimentOutcome reduce_check(const ExperimentConfig& cfg, Report& report) {
    const auto rows = run_reduction_suite(cfg);
    Json table = Json::array();
    double worst_att = 0.0, worst_ds = 0.0;
    std::size_t not_bitwise = 0;
    for (const auto& r : rows) {
        Json j = Json::object();
        j["instance"] = r.instance;
        j["similarity"] = r.similarity;
        j["dim"] = r.dim;
        j["n_a"] = r.n_a;
        j["n_b"] = r.n_b;
        j["attention_deviation"] = r.attention_dev;
        j["dual_softmax_deviation"] = r.dual_softmax_dev;
        j["max_deviation"] = std::max(r.attention_dev, r.dual_softmax_dev);
        j["ot_bitwise"] = r.ot_bitwise;
        table.push_back(j);
        // NaN deviations count as failures through the negated comparison.
        worst_att = std::isnan(r.attention_dev) ? r.attention_dev : std::max(worst_att, r.attention_dev);
        worst_ds = std::isnan(r.dual_softmax_dev) ? r.dual_softmax_dev : std::max(worst_ds, r.dual_softmax_dev);
        if (!r.ot_bitwise) ++not_bitwise;
    }
    report.results.emplace_back("instances", rows.size());
    report.results.emplace_back("max_attention_deviation", worst_att);
    report.results.emplace_back("max_dual_softmax_deviation", worst_ds);
    report.results.emplace_back("ot_mismatches", not_bitwise);
    report.tables.emplace_back("instances", table);

    ExperimentOutcome out;
    if (!(worst_att <= kReductionTolerance) || !(worst_ds <= kReductionTolerance) || not_bitwise) {
        out.exit_code = kExitThreshold;
        out.message = "uniform-weight reduction exceeded tolerance";
    } else {
        out.message = "uniform-weight reduction holds";
    }
    return out;
}

Json survivor_rows(const char* side, const FeatureSet& set, const ScoreMap& scores,
                   const std::optional<PruneResult>& pruned) {
    Json rows = Json::array();
    if (!pruned) return rows;
    for (std::size_t k = 0; k < pruned->kept.size(); ++k) {
        const std::size_t i = pruned->kept[k];
        Json j = Json::object();
        j["side"] = side;
        j["index"] = i;
        j["x"] = set[i].coord[0];
        j["y"] = set[i].coord[1];
        j["score"] = scores.s[i];
        j["probability"] = pruned->set.probs()[k];
        rows.push_back(j);
    }
    return rows;
}

ExperimentOutcome sparsify(const ExperimentConfig& cfg, Report& report) {
    ExperimentOutcome out;
    Json trace = Json::array();
    auto trace_rows = [&](const std::vector<TraceEntry>& entries) {
        for (const auto& e : entries) {
            Json j = Json::object();
            j["step"] = e.step;
            j["total"] = e.total;
            j["matching"] = e.matching;
            j["sparsity"] = e.sparsity;
            trace.push_back(j);
        }
    };
    try {
        const SparsifyRun run = run_sparsify(cfg);
        trace_rows(run.training.trace);
        report.results.emplace_back("initial_total", run.training.initial.total);
        report.results.emplace_back("initial_sparsity", run.training.initial.sparsity);
        report.results.emplace_back("final_total", run.training.final.total);
        report.results.emplace_back("final_matching", run.training.final.matching);
        report.results.emplace_back("final_sparsity", run.training.final.sparsity);
        report.results.emplace_back("loss_clamped", run.training.final.clamped);
        report.results.emplace_back("backbone_unchanged", run.backbone_unchanged);
        report.results.emplace_back("kept_a", run.pruned_a ? run.pruned_a->kept.size() : 0);
        report.results.emplace_back("kept_b", run.pruned_b ? run.pruned_b->kept.size() : 0);

        // Rebuild the sets the run used; generation is deterministic.
        Rng data_rng(derive_seed(cfg.seed, kStreamSetA));
        const SyntheticMatchPair pair = make_synthetic_match_pair(cfg.n_star, cfg.descriptor_dim, cfg.grid,
                                                                  cfg.unmatched, cfg.noise, data_rng);
        Json survivors = survivor_rows("a", pair.a, run.scores_a, run.pruned_a);
        for (auto& r : survivor_rows("b", pair.b, run.scores_b, run.pruned_b)) survivors.push_back(r);
        report.tables.emplace_back("trace", trace);
        report.tables.emplace_back("pruned", survivors);

        if (!run.backbone_unchanged) {
            out.exit_code = kExitThreshold;
            out.message = "frozen network parameters changed during training";
        } else if (!run.pruned_a || !run.pruned_b) {
            out.exit_code = kExitThreshold;
            out.message = "prune rule kept no features (threshold " + format_double(cfg.prune_threshold) + ")";
        } else {
            out.message = "final sparsity loss " + format_double(run.training.final.sparsity);
        }
    } catch (const TrainingAborted& e) {
        trace_rows(e.trace());
        report.results.emplace_back("aborted_step", e.iteration());
        report.tables.emplace_back("trace", trace);
        out.exit_code = kExitNumerical;
        out.message = e.what();
    }
    return out;
}

}  // namespace

ExperimentOutcome run_experiment(const ExperimentConfig& cfg, ReportFormat format) {
    if (auto problems = validate_config(cfg); !problems.empty()) throw ConfigError(std::move(problems));
    Report report;
    report.command = command_name(cfg.kind);
    ExperimentOutcome out;
    try {
        switch (cfg.kind) {
            case ExperimentKind::AttentionConverge: out = attention_converge(cfg, report); break;
            case ExperimentKind::MatchingConverge: out = matching_converge(cfg, report); break;
            case ExperimentKind::SinkhornCheck: out = sinkhorn_check(cfg, report); break;
            case ExperimentKind::ReduceCheck: out = reduce_check(cfg, report); break;
            case ExperimentKind::Sparsify: out = sparsify(cfg, report); break;
        }
    } catch (const NumericalFailure& e) {
        out.exit_code = kExitNumerical;
        out.message = e.what();
        if (report.tables.empty()) return out;
    }
    out.files = render(cfg, report, format);
    return out;
}

int write_reports(const ExperimentOutcome& outcome, const std::filesystem::path& dir, std::ostream& err) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        err << "error: cannot create output directory " << dir << ": " << ec.message() << "\n";
        return kExitIo;
    }
    for (const auto& f : outcome.files) {
        const auto path = dir / f.name;
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        os.write(f.content.data(), static_cast<std::streamsize>(f.content.size()));
        os.close();
        if (!os) {
            err << "error: cannot write " << path << "\n";
            return kExitIo;
        }
    }
    return kExitOk;
}

}  // namespace rwmatch
