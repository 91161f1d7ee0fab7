// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Usage: acceptance <path-to-rwmatch-cli> [criterion numbers...]

#include "../unit/helpers.hpp"
#include "rwmatch/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

using namespace rwmatch;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool ok = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string medians(const ConvergenceReport& r) {
    std::string s = r.similarity + "/" + r.method + " medians";
    for (const auto& row : r.rows) s += " " + fmt("%.3e", row.q50);
    s += " max@" + std::to_string(r.rows.back().sample_size) + " " + fmt("%.3e", r.rows.back().max);
    return s;
}

std::string cli_path;

Verdict uniform_reduction() {
    ExperimentConfig cfg;
    const auto rows = run_reduction_suite(cfg);
    double att = 0.0, ds = 0.0;
    std::size_t mismatches = 0;
    std::set<std::string> sims;
    for (const auto& r : rows) {
        att = std::max(att, r.attention_dev);
        ds = std::max(ds, r.dual_softmax_dev);
        if (!r.ot_bitwise) ++mismatches;
        sims.insert(r.similarity);
    }
    Verdict v;
    v.ok = rows.size() == 1000 && sims.size() == 2 && att <= 1e-12 && ds <= 1e-12 && mismatches == 0;
    v.detail = std::to_string(rows.size()) + " instances, attention " + fmt("%.2e", att) + ", dual-softmax " +
               fmt("%.2e", ds) + ", OT bitwise mismatches " + std::to_string(mismatches);
    return v;
}

Verdict duplication_attention() {
    Rng rng(derive_seed(2024, 2));
    double worst = 0.0;
    for (int c = 0; c < 100; ++c) {
        ToyArchitecture arch;
        arch.heads = 1 + rng.below(2);
        arch.token_dim = arch.heads * (2 + rng.below(4));
        arch.ffn_dim = 2 * arch.token_dim;
        arch.descriptor_dim = 2 + rng.below(8);
        arch.blocks = 2;
        arch.sim = rng.below(2) ? Similarity::softmax(0.5 + rng.uniform(0.0, 2.0)) : Similarity::linear();
        TransformerSpec spec = make_toy_transformer(arch, rng.next_u64());
        const std::size_t depth = 1 + rng.below(6);
        std::vector<RoutedLayer> layers;
        for (std::size_t l = 0; l < depth; ++l) layers.push_back(spec.layers[rng.below(spec.layers.size())]);
        spec.layers = layers;

        const std::size_t na = 1 + rng.below(10), nb = 1 + rng.below(10);
        const auto ca = random_counts(rng, na, 8), cb = random_counts(rng, nb, 8);
        const FeatureSet a = make_synthetic_set({na, arch.descriptor_dim, 8}, rng)
                                 .with_probs(ProbabilityWeights(counts_as_weights(ca)));
        const FeatureSet b = make_synthetic_set({nb, arch.descriptor_dim, 8}, rng)
                                 .with_probs(ProbabilityWeights(counts_as_weights(cb)));
        const SampledSet sa = deterministic_expand(a, ca), sb = deterministic_expand(b, cb);
        const auto [oa, ob] = forward(spec, sa, sb);
        const auto [ra, rb] = forward_reweighted(spec, a, b);
        for (std::size_t k = 0; k < sa.size(); ++k) worst = std::max(worst, max_abs_diff(oa.col(k), ra.col(sa.indices()[k])));
        for (std::size_t k = 0; k < sb.size(); ++k) worst = std::max(worst, max_abs_diff(ob.col(k), rb.col(sb.indices()[k])));
    }
    return {worst <= 1e-9, "100 configs, max per-token deviation " + fmt("%.2e", worst)};
}

Verdict duplication_matching() {
    Rng rng(derive_seed(2024, 3));
    double worst_ot = 0.0, worst_ds = 0.0;
    std::size_t unconverged = 0;
    for (int c = 0; c < 100; ++c) {
        const std::size_t d = 1 + rng.below(16);
        const std::size_t na = 1 + rng.below(12), nb = 1 + rng.below(12);
        const double scale = 1.5 / std::sqrt(static_cast<double>(d));
        const Matrix ta = random_matrix(rng, d, na, scale), tb = random_matrix(rng, d, nb, scale);
        const auto ca = random_counts(rng, na, 8), cb = random_counts(rng, nb, 8);
        const ProbabilityWeights pa(counts_as_weights(ca)), pb(counts_as_weights(cb));
        MatchingOptions opts;
        opts.alpha = rng.uniform(-1.0, 1.0);
        opts.sinkhorn.eps = rng.uniform(0.1, 1.0);
        opts.sinkhorn.tol = 1e-10;
        opts.sinkhorn.max_iters = 100000;

        const Matrix da = duplicate_columns(ta, ca), db = duplicate_columns(tb, cb);
        std::vector<std::size_t> ia, ib;
        for (std::size_t i = 0; i < na; ++i) ia.insert(ia.end(), ca[i], i);
        for (std::size_t j = 0; j < nb; ++j) ib.insert(ib.end(), cb[j], j);
        const FeatureSet fa = make_synthetic_set({na, 1, 8}, rng).with_probs(pa);
        const FeatureSet fb = make_synthetic_set({nb, 1, 8}, rng).with_probs(pb);
        const SampledSet sa(fa, ia), sb(fb, ib);

        const AugmentedAssignment dup = ot_uniform(da, db, opts);
        const AugmentedAssignment rw = ot_reweighted(ta, tb, pa, pb, opts);
        if (!dup.converged || !rw.converged) ++unconverged;
        worst_ot = std::max(worst_ot, max_abs_diff(grouped_sum(dup.interior(), sa, sb), rw.interior()));

        const Matrix ds = dual_softmax(score_matrix(da, db));
        const Matrix dsr = dual_softmax_reweighted(score_matrix(ta, tb), pa, pb);
        worst_ds = std::max(worst_ds, max_abs_diff(grouped_sum(ds, sa, sb), dsr));
    }
    Verdict v;
    v.ok = worst_ot <= 1e-8 && worst_ds <= 1e-10 && unconverged == 0;
    v.detail = "100 configs, OT " + fmt("%.2e", worst_ot) + ", dual-softmax " + fmt("%.2e", worst_ds) +
               ", unconverged " + std::to_string(unconverged);
    return v;
}

Verdict attention_convergence() {
    ExperimentConfig cfg;
    const ExperimentSets sets = make_experiment_sets(cfg);
    Verdict v{true, ""};
    for (const Similarity& sim : {Similarity::softmax(cfg.temperature), Similarity::linear()}) {
        const auto spec = make_toy_transformer(architecture_from(cfg, sim), derive_seed(cfg.seed, kStreamNetwork));
        const auto r = run_attention_convergence(spec, sets.a, sets.b, cfg.sizes, cfg.trials,
                                                 derive_seed(cfg.seed, kStreamTrials));
        v.ok = v.ok && r.converges() && r.total_failures() == 0;
        v.detail += (v.detail.empty() ? "" : "; ") + medians(r);
    }
    return v;
}

Verdict matching_convergence() {
    ExperimentConfig cfg;
    const ExperimentSets sets = make_experiment_sets(cfg);
    const auto spec = make_toy_transformer(architecture_from(cfg, Similarity::softmax(cfg.temperature)),
                                           derive_seed(cfg.seed, kStreamNetwork));
    Verdict v{true, ""};
    for (MatchingMethod m : {MatchingMethod::OptimalTransport, MatchingMethod::DualSoftmax}) {
        const auto r = run_matching_convergence(spec, sets.a, sets.b, cfg.sizes, cfg.trials,
                                                derive_seed(cfg.seed, kStreamTrials), m, matching_options_from(cfg));
        v.ok = v.ok && r.converges() && r.total_failures() == 0;
        v.detail += (v.detail.empty() ? "" : "; ") + medians(r);
    }
    return v;
}

Verdict sinkhorn_feasibility() {
    ExperimentConfig cfg;
    const auto rows = run_sinkhorn_check(cfg);
    std::size_t bad = 0;
    double worst_res = 0.0, worst_mass = 0.0;
    int worst_iters = 0;
    for (const auto& r : rows) {
        const double mass = std::abs(r.total_mass - 2.0);
        if (r.failed || !(r.residual <= 1e-9) || r.iterations > 200 || !(mass <= 2e-9)) ++bad;
        worst_res = std::max(worst_res, r.residual);
        worst_mass = std::max(worst_mass, mass);
        worst_iters = std::max(worst_iters, r.iterations);
    }
    return {rows.size() == 500 && bad == 0,
            std::to_string(rows.size()) + " problems, " + std::to_string(bad) + " violations, max residual " +
                fmt("%.2e", worst_res) + ", max mass error " + fmt("%.2e", worst_mass) + ", max iterations " +
                std::to_string(worst_iters)};
}

Verdict group_frequencies() {
    ExperimentConfig cfg;
    const ExperimentSets sets = make_experiment_sets(cfg);
    const std::size_t m = 100000;
    std::size_t cells = 0, inside = 0;
    for (std::uint64_t rep = 0; rep < 5; ++rep)
        for (const FeatureSet* set : {&sets.a, &sets.b}) {
            const GroupedIndexMap g = group_indices(sample_iid(*set, m, derive_seed(derive_seed(cfg.seed, 7, rep), cells)));
            for (std::size_t i = 0; i < set->size(); ++i) {
                const double p = set->probs()[i];
                const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(m));
                ++cells;
                if (std::abs(g.frequency(i) - p) <= 3.0 * sigma) ++inside;
            }
        }
    const double share = static_cast<double>(inside) / static_cast<double>(cells);
    return {share >= 0.95, std::to_string(inside) + "/" + std::to_string(cells) + " cells within 3 sigma at m=1e5"};
}

Verdict sparsity_monotonicity() {
    double mean_low = 0.0, mean_high = 0.0;
    bool frozen = true, finite = true;
    for (std::uint64_t seed = 0; seed < 5; ++seed)
        for (const double lambda : {0.1, 1.0}) {
            ExperimentConfig cfg;
            cfg.kind = ExperimentKind::Sparsify;
            cfg.seed = seed;
            cfg.lambda = lambda;
            cfg.steps = 300;
            const SparsifyRun run = run_sparsify(cfg);
            frozen = frozen && run.backbone_unchanged;
            finite = finite && std::isfinite(run.training.final.sparsity);
            (lambda < 0.5 ? mean_low : mean_high) += run.training.final.sparsity / 5.0;
        }
    return {frozen && finite && mean_high < mean_low,
            "mean final L1 " + fmt("%.4f", mean_low) + " at lambda=0.1, " + fmt("%.4f", mean_high) +
                " at lambda=1.0, backbone " + (frozen ? "unchanged" : "CHANGED")};
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

Verdict cli_determinism() {
    if (cli_path.empty()) return {false, "no CLI path given"};
    const fs::path root = fs::temp_directory_path() / "rwmatch_acceptance_cli";
    fs::remove_all(root);
    fs::create_directories(root);
    const std::vector<std::pair<std::string, std::string>> runs = {
        {"converge-attn", "sizes = 8, 64\ntrials = 5\nsimilarity = both\n"},
        {"converge-match", "sizes = 8, 64\ntrials = 5\nmethod = both\n"},
        {"sinkhorn-check", "sinkhorn_problems = 40\n"},
        {"reduce-check", "reduce_instances = 50\n"},
        {"sparsify", "steps = 20\nprune = nms\n"},
    };
    std::size_t compared = 0;
    for (const auto& [cmd, text] : runs)
        for (const char* format : {"csv", "json"}) {
            const fs::path cfg = root / (cmd + ".cfg");
            std::ofstream(cfg) << text;
            int codes[2];
            for (int k = 0; k < 2; ++k) {
                const fs::path out = root / (cmd + "_" + format + "_" + std::to_string(k));
                const std::string line = "\"" + cli_path + "\" " + cmd + " --config \"" + cfg.string() +
                                         "\" --seed 11 --format " + format + " --out \"" + out.string() +
                                         "\" > /dev/null 2>&1";
                const int status = std::system(line.c_str());
                codes[k] = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
            }
            // Threshold verdicts (status 1) are fine here; only the reports matter.
            if (codes[0] != codes[1] || (codes[0] != 0 && codes[0] != 1))
                return {false, cmd + " " + format + ": exit statuses " + std::to_string(codes[0]) + ", " +
                                   std::to_string(codes[1])};
            const fs::path d0 = root / (cmd + "_" + format + "_0"), d1 = root / (cmd + "_" + format + "_1");
            std::vector<std::string> names;
            for (const auto& e : fs::directory_iterator(d0)) names.push_back(e.path().filename().string());
            std::size_t other = 0;
            for ([[maybe_unused]] const auto& e : fs::directory_iterator(d1)) ++other;
            if (names.empty() || names.size() != other) return {false, cmd + " " + format + ": file sets differ"};
            for (const auto& n : names) {
                if (!fs::exists(d1 / n) || slurp(d0 / n) != slurp(d1 / n))
                    return {false, cmd + " " + format + ": " + n + " differs"};
                ++compared;
            }
        }
    fs::remove_all(root);
    return {true, std::to_string(compared) + " report files identical across repeated runs"};
}

struct Criterion {
    int id;
    const char* name;
    double limit_s;  // 0 for no runtime bound
    std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char** argv) {
    if (argc >= 2) cli_path = argv[1];
    std::set<int> only;
    for (int k = 2; k < argc; ++k) only.insert(std::atoi(argv[k]));

    const std::vector<Criterion> criteria = {
        {1, "uniform-weight reduction", 10, uniform_reduction},
        {2, "duplication exactness (network)", 30, duplication_attention},
        {3, "duplication exactness (matching)", 60, duplication_matching},
        {4, "stochastic convergence (network)", 300, attention_convergence},
        {5, "stochastic convergence (matching)", 600, matching_convergence},
        {6, "sinkhorn feasibility", 0, sinkhorn_feasibility},
        {7, "group frequency bounds", 0, group_frequencies},
        {8, "sparsity monotonicity", 300, sparsity_monotonicity},
        {9, "CLI determinism", 0, cli_determinism},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = c.limit_s <= 0 || secs < c.limit_s;
        const bool pass = v.ok && in_time;
        if (!pass) ++failed;
        std::printf("%s criterion %d (%s): %s [%.1fs%s]\n", pass ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str(),
                    secs, in_time ? "" : fmt(", limit %.0fs", c.limit_s).c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
