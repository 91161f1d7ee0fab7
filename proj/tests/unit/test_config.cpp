#include "rwmatch/config.hpp"

#include <doctest.h>

#include <algorithm>

using namespace rwmatch;

namespace {

bool mentions(const ConfigError& e, const std::string& key) {
    return std::any_of(e.problems().begin(), e.problems().end(),
                       [&](const std::string& p) { return p.find(key) != std::string::npos; });
}

ConfigError parse_error(std::string_view text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e;
    }
    FAIL("expected a ConfigError");
    return ConfigError({});
}

}  // namespace

TEST_CASE("empty input yields the defaults") {
    CHECK(parse_config("") == ExperimentConfig{});
    CHECK(parse_config("# only a comment\n\n") == ExperimentConfig{});
    CHECK(parse_config("{}") == ExperimentConfig{});
    CHECK(validate_config(ExperimentConfig{}).empty());
}

TEST_CASE("key=value lines set fields") {
    const ExperimentConfig c = parse_config(
        "experiment = sinkhorn-check\n"
        "seed=42  # trailing comment\n"
        "sizes = 8, 32,128\n"
        "similarity = both\n"
        "method = dual-softmax\n"
        "prune = nms\n"
        "eps = 0.25\n");
    CHECK(c.kind == ExperimentKind::SinkhornCheck);
    CHECK(c.seed == 42);
    CHECK(c.sizes == std::vector<std::size_t>{8, 32, 128});
    CHECK(c.similarity == SimilarityChoice::Both);
    CHECK(c.method == MethodChoice::DualSoftmax);
    CHECK(c.prune == PruneChoice::Nms);
    CHECK(c.eps == 0.25);
    CHECK(parse_config("experiment=matching-converge").kind == ExperimentKind::MatchingConverge);
}

TEST_CASE("JSON objects set the same fields") {
    const ExperimentConfig c = parse_config(R"({"experiment": "reduce-check", "sizes": [4, 16], "eps": 0.5,
                                                "similarity": "linear", "trials": 3})");
    CHECK(c.kind == ExperimentKind::ReduceCheck);
    CHECK(c.sizes == std::vector<std::size_t>{4, 16});
    CHECK(c.eps == 0.5);
    CHECK(c.similarity == SimilarityChoice::Linear);
    CHECK(c.trials == 3);
}

TEST_CASE("out-of-range values name the offending key") {
    const ConfigError e = parse_error("eps = 0\n");
    CHECK(e.problems().size() == 1);
    CHECK(mentions(e, "eps"));
    CHECK(mentions(parse_error("heads = 3"), "heads"));
    CHECK(mentions(parse_error("sizes = 64, 16"), "sizes"));
    CHECK(mentions(parse_error("n_star = 65"), "n_star"));
}

TEST_CASE("parse errors are all reported together") {
    const ConfigError e = parse_error("colour = red\neps = -1\ntrials = many\nnot a pair\nseed = 1\nseed = 2\n");
    CHECK(e.problems().size() == 5);
    CHECK(mentions(e, "colour"));
    CHECK(mentions(e, "eps"));
    CHECK(mentions(e, "trials"));
    CHECK(mentions(e, "line 4"));
    CHECK(mentions(e, "seed"));
    CHECK(std::string(e.what()).find("colour") != std::string::npos);
}

TEST_CASE("malformed JSON and bad enum values are rejected") {
    CHECK(mentions(parse_error("{\"eps\": "), "JSON"));
    CHECK(mentions(parse_error(R"({"similarity": "cosine"})"), "similarity"));
    CHECK(mentions(parse_error(R"({"bogus": 1})"), "bogus"));
    CHECK(mentions(parse_error(R"({"eps": {"a": 1}})"), "eps"));
    CHECK(mentions(parse_error("experiment = train"), "experiment"));
}

TEST_CASE("serialized configs round-trip exactly") {
    ExperimentConfig c;
    c.kind = ExperimentKind::Sparsify;
    c.seed = 18446744073709551615ull;
    c.sizes = {3, 5, 99};
    c.eps = 0.1 + 0.2;
    c.temperature = 1.0 / 3.0;
    c.method = MethodChoice::Both;
    c.prune = PruneChoice::Threshold;
    CHECK(parse_config(serialize_config(c)) == c);
    CHECK(parse_config(config_to_json(c)) == c);
    CHECK(format_double(0.1) == "0.10000000000000001");
    const auto entries = config_entries(c);
    CHECK(entries.front().first == "experiment");
    CHECK(entries.front().second == "sparsify");
}

TEST_CASE("experiment names") {
    CHECK(std::string(command_name(ExperimentKind::AttentionConverge)) == "converge-attn");
    CHECK(parse_experiment_kind("attention-converge") == ExperimentKind::AttentionConverge);
    CHECK(parse_experiment_kind("converge-match") == ExperimentKind::MatchingConverge);
    CHECK_FALSE(parse_experiment_kind("nope").has_value());
}
