#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rwmatch {

enum class ExperimentKind { AttentionConverge, MatchingConverge, SinkhornCheck, Sparsify, ReduceCheck };

/// Subcommand name, e.g. "converge-attn".
const char* command_name(ExperimentKind kind);
/// Accepts both the subcommand name and the long experiment name.
std::optional<ExperimentKind> parse_experiment_kind(std::string_view name);

enum class SimilarityChoice { Softmax, Linear, Both };
enum class MethodChoice { OptimalTransport, DualSoftmax, Both };
enum class PruneChoice { Threshold, TopK, Nms };

/// Fully resolved experiment settings. Defaults are listed in the README.
struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::AttentionConverge;
    std::uint64_t seed = 0;

    std::vector<std::size_t> sizes = {64, 256, 1024, 4096};
    std::size_t trials = 200;

    std::size_t dim = 8;
    std::size_t heads = 2;
    std::size_t blocks = 2;
    std::size_t ffn_dim = 16;
    std::size_t descriptor_dim = 8;
    std::size_t n_star = 16;
    std::size_t grid = 8;
    SimilarityChoice similarity = SimilarityChoice::Softmax;
    double temperature = 2.0;

    MethodChoice method = MethodChoice::OptimalTransport;
    double eps = 0.1;
    double alpha = 1.0;
    int iters = 200;
    double tol = 1e-9;

    double lambda = 1.0;
    PruneChoice prune = PruneChoice::TopK;
    double prune_threshold = 0.5;
    std::size_t prune_k = 8;
    double prune_radius = 1.0;
    std::size_t steps = 300;
    double spsa_a = 0.1;
    double spsa_c = 0.05;
    double spsa_stability = 10.0;
    std::size_t score_hidden = 8;
    std::size_t unmatched = 4;
    double noise = 0.1;

    std::size_t sinkhorn_problems = 500;
    std::size_t sinkhorn_max_n = 64;
    double sinkhorn_alpha = 0.5;  // dustbin score of the check problems
    double eps_min = 0.05;
    double eps_max = 1.0;

    std::size_t reduce_instances = 1000;

    bool operator==(const ExperimentConfig&) const = default;
};

/// Every problem found while parsing, one message per offending field.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> problems);
    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    std::vector<std::string> problems_;
};

/// Parses flat `key = value` lines ('#' starts a comment) or, when the text
/// starts with '{', a JSON object with the same keys. Missing keys keep
/// their defaults; unknown keys and out-of-range values are errors.
ExperimentConfig parse_config(std::string_view text);

/// Canonical ordered (key, value) pairs; floats carry 17 significant digits.
std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& cfg);

/// key=value text accepted by parse_config.
std::string serialize_config(const ExperimentConfig& cfg);

/// JSON object form accepted by parse_config.
std::string config_to_json(const ExperimentConfig& cfg);

/// Range checks shared by the parser and programmatic callers.
std::vector<std::string> validate_config(const ExperimentConfig& cfg);

std::string format_double(double v);

}  // namespace rwmatch
