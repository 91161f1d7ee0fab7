#include "rwmatch/config.hpp"

#include <json.hpp>

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>

namespace rwmatch {

namespace {

constexpr std::array<std::pair<ExperimentKind, const char*>, 5> kKindNames{{
    {ExperimentKind::AttentionConverge, "converge-attn"},
    {ExperimentKind::MatchingConverge, "converge-match"},
    {ExperimentKind::SinkhornCheck, "sinkhorn-check"},
    {ExperimentKind::Sparsify, "sparsify"},
    {ExperimentKind::ReduceCheck, "reduce-check"},
}};

constexpr std::array<std::pair<ExperimentKind, const char*>, 2> kKindAliases{{
    {ExperimentKind::AttentionConverge, "attention-converge"},
    {ExperimentKind::MatchingConverge, "matching-converge"},
}};

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

template <class T>
bool parse_number(std::string_view s, T& out) {
    s = trim(s);
    if (s.empty()) return false;
    if constexpr (std::is_floating_point_v<T>) {
        // std::from_chars for double is available in libstdc++ >= 11.
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
        return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(out);
    } else {
        if (s.front() == '+' || s.front() == '-') return false;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
        return ec == std::errc{} && ptr == s.data() + s.size();
    }
}

template <class T>
std::string format_int(T v) {
    return std::to_string(v);
}

struct Field {
    const char* key;
    std::function<bool(ExperimentConfig&, std::string_view)> set;
    std::function<std::string(const ExperimentConfig&)> get;
    bool numeric;  // emitted as a JSON number rather than a string
    bool list = false;
};

template <class T>
Field number_field(const char* key, T ExperimentConfig::*member) {
    Field f;
    f.key = key;
    f.numeric = true;
    f.set = [member](ExperimentConfig& c, std::string_view s) { return parse_number(s, c.*member); };
    f.get = [member](const ExperimentConfig& c) {
        if constexpr (std::is_floating_point_v<T>)
            return format_double(c.*member);
        else
            return format_int(c.*member);
    };
    return f;
}

template <class E, std::size_t N>
Field enum_field(const char* key, E ExperimentConfig::*member, std::array<std::pair<E, const char*>, N> names) {
    Field f;
    f.key = key;
    f.numeric = false;
    f.set = [member, names](ExperimentConfig& c, std::string_view s) {
        s = trim(s);
        for (const auto& [value, name] : names)
            if (s == name) {
                c.*member = value;
                return true;
            }
        return false;
    };
    f.get = [member, names](const ExperimentConfig& c) {
        for (const auto& [value, name] : names)
            if (c.*member == value) return std::string(name);
        return std::string("?");
    };
    return f;
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> t;
        Field kind;
        kind.key = "experiment";
        kind.numeric = false;
        kind.set = [](ExperimentConfig& c, std::string_view s) {
            const auto k = parse_experiment_kind(trim(s));
            if (k) c.kind = *k;
            return k.has_value();
        };
        kind.get = [](const ExperimentConfig& c) { return std::string(command_name(c.kind)); };
        t.push_back(kind);
        t.push_back(number_field("seed", &ExperimentConfig::seed));

        Field sizes;
        sizes.key = "sizes";
        sizes.numeric = true;
        sizes.list = true;
        sizes.set = [](ExperimentConfig& c, std::string_view s) {
            std::vector<std::size_t> out;
            while (true) {
                const auto comma = s.find(',');
                std::size_t v = 0;
                if (!parse_number(s.substr(0, comma), v)) return false;
                out.push_back(v);
                if (comma == std::string_view::npos) break;
                s.remove_prefix(comma + 1);
            }
            c.sizes = std::move(out);
            return true;
        };
        sizes.get = [](const ExperimentConfig& c) {
            std::string out;
            for (std::size_t i = 0; i < c.sizes.size(); ++i) {
                if (i) out += ',';
                out += std::to_string(c.sizes[i]);
            }
            return out;
        };
        t.push_back(sizes);

        t.push_back(number_field("trials", &ExperimentConfig::trials));
        t.push_back(number_field("dim", &ExperimentConfig::dim));
        t.push_back(number_field("heads", &ExperimentConfig::heads));
        t.push_back(number_field("blocks", &ExperimentConfig::blocks));
        t.push_back(number_field("ffn_dim", &ExperimentConfig::ffn_dim));
        t.push_back(number_field("descriptor_dim", &ExperimentConfig::descriptor_dim));
        t.push_back(number_field("n_star", &ExperimentConfig::n_star));
        t.push_back(number_field("grid", &ExperimentConfig::grid));
        t.push_back(enum_field("similarity", &ExperimentConfig::similarity,
                               std::array<std::pair<SimilarityChoice, const char*>, 3>{{
                                   {SimilarityChoice::Softmax, "softmax"},
                                   {SimilarityChoice::Linear, "linear"},
                                   {SimilarityChoice::Both, "both"},
                               }}));
        t.push_back(number_field("temperature", &ExperimentConfig::temperature));
        t.push_back(enum_field("method", &ExperimentConfig::method,
                               std::array<std::pair<MethodChoice, const char*>, 3>{{
                                   {MethodChoice::OptimalTransport, "ot"},
                                   {MethodChoice::DualSoftmax, "dual-softmax"},
                                   {MethodChoice::Both, "both"},
                               }}));
        t.push_back(number_field("eps", &ExperimentConfig::eps));
        t.push_back(number_field("alpha", &ExperimentConfig::alpha));
        t.push_back(number_field("iters", &ExperimentConfig::iters));
        t.push_back(number_field("tol", &ExperimentConfig::tol));
        t.push_back(number_field("lambda", &ExperimentConfig::lambda));
        t.push_back(enum_field("prune", &ExperimentConfig::prune,
                               std::array<std::pair<PruneChoice, const char*>, 3>{{
                                   {PruneChoice::Threshold, "threshold"},
                                   {PruneChoice::TopK, "topk"},
                                   {PruneChoice::Nms, "nms"},
                               }}));
        t.push_back(number_field("prune_threshold", &ExperimentConfig::prune_threshold));
        t.push_back(number_field("prune_k", &ExperimentConfig::prune_k));
        t.push_back(number_field("prune_radius", &ExperimentConfig::prune_radius));
        t.push_back(number_field("steps", &ExperimentConfig::steps));
        t.push_back(number_field("spsa_a", &ExperimentConfig::spsa_a));
        t.push_back(number_field("spsa_c", &ExperimentConfig::spsa_c));
        t.push_back(number_field("spsa_stability", &ExperimentConfig::spsa_stability));
        t.push_back(number_field("score_hidden", &ExperimentConfig::score_hidden));
        t.push_back(number_field("unmatched", &ExperimentConfig::unmatched));
        t.push_back(number_field("noise", &ExperimentConfig::noise));
        t.push_back(number_field("sinkhorn_problems", &ExperimentConfig::sinkhorn_problems));
        t.push_back(number_field("sinkhorn_max_n", &ExperimentConfig::sinkhorn_max_n));
        t.push_back(number_field("sinkhorn_alpha", &ExperimentConfig::sinkhorn_alpha));
        t.push_back(number_field("eps_min", &ExperimentConfig::eps_min));
        t.push_back(number_field("eps_max", &ExperimentConfig::eps_max));
        t.push_back(number_field("reduce_instances", &ExperimentConfig::reduce_instances));
        return t;
    }();
    return table;
}

const Field* find_field(std::string_view key) {
    for (const auto& f : fields())
        if (key == f.key) return &f;
    return nullptr;
}

void assign(ExperimentConfig& cfg, std::string_view key, std::string_view value, std::set<std::string>& seen,
            std::vector<std::string>& problems) {
    const Field* f = find_field(key);
    if (!f) {
        problems.push_back("unknown key '" + std::string(key) + "'");
        return;
    }
    if (!seen.insert(std::string(key)).second) {
        problems.push_back(std::string(key) + ": given more than once");
        return;
    }
    if (!f->set(cfg, value)) problems.push_back(std::string(key) + ": cannot parse '" + std::string(trim(value)) + "'");
}

// JSON scalars are mapped back onto the key=value value syntax.
std::optional<std::string> json_scalar_text(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number()) return v.dump();
    return std::nullopt;
}

void parse_json(std::string_view text, ExperimentConfig& cfg, std::set<std::string>& seen,
                std::vector<std::string>& problems) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        problems.push_back(std::string("malformed JSON: ") + e.what());
        return;
    }
    if (!doc.is_object()) {
        problems.push_back("malformed JSON: top level must be an object");
        return;
    }
    for (const auto& [key, value] : doc.items()) {
        std::optional<std::string> text_value;
        if (value.is_array()) {
            std::string joined;
            bool ok = true;
            for (std::size_t i = 0; i < value.size(); ++i) {
                const auto item = json_scalar_text(value[i]);
                if (!item) ok = false;
                if (i) joined += ',';
                joined += item.value_or("");
            }
            if (ok) text_value = joined;
        } else {
            text_value = json_scalar_text(value);
        }
        if (!text_value) {
            if (!find_field(key))
                problems.push_back("unknown key '" + key + "'");
            else
                problems.push_back(key + ": unsupported JSON value " + value.dump());
            continue;
        }
        assign(cfg, key, *text_value, seen, problems);
    }
}

void parse_lines(std::string_view text, ExperimentConfig& cfg, std::set<std::string>& seen,
                 std::vector<std::string>& problems) {
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            problems.push_back("line " + std::to_string(line_no) + ": expected key=value");
            continue;
        }
        assign(cfg, trim(line.substr(0, eq)), line.substr(eq + 1), seen, problems);
    }
}

}  // namespace

const char* command_name(ExperimentKind kind) {
    for (const auto& [k, name] : kKindNames)
        if (k == kind) return name;
    return "?";
}

std::optional<ExperimentKind> parse_experiment_kind(std::string_view name) {
    for (const auto& [k, n] : kKindNames)
        if (name == n) return k;
    for (const auto& [k, n] : kKindAliases)
        if (name == n) return k;
    return std::nullopt;
}

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error([&] {
          std::string msg = "invalid config:";
          for (const auto& p : problems) msg += "\n  " + p;
          return msg;
      }()),
      problems_(std::move(problems)) {}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> validate_config(const ExperimentConfig& c) {
    std::vector<std::string> p;
    auto check = [&](bool ok, const char* msg) {
        if (!ok) p.emplace_back(msg);
    };
    check(!c.sizes.empty(), "sizes: must list at least one size");
    for (std::size_t i = 0; i < c.sizes.size(); ++i) {
        if (c.sizes[i] < 1 || c.sizes[i] > 65536) {
            p.emplace_back("sizes: entries must lie in [1, 65536]");
            break;
        }
        if (i > 0 && c.sizes[i] <= c.sizes[i - 1]) {
            p.emplace_back("sizes: must be strictly increasing");
            break;
        }
    }
    check(c.trials >= 1, "trials: must be >= 1");
    check(c.dim >= 1, "dim: must be >= 1");
    check(c.heads >= 1 && c.dim % c.heads == 0, "heads: must be >= 1 and divide dim");
    check(c.blocks >= 1, "blocks: must be >= 1");
    check(c.ffn_dim >= 1, "ffn_dim: must be >= 1");
    check(c.descriptor_dim >= 1, "descriptor_dim: must be >= 1");
    check(c.grid >= 1, "grid: must be >= 1");
    check(c.n_star >= 1 && c.n_star <= c.grid * c.grid, "n_star: must lie in [1, grid*grid]");
    check(c.temperature > 0.0, "temperature: must be > 0");
    check(c.eps > 0.0, "eps: must be > 0");
    check(c.iters >= 1, "iters: must be >= 1");
    check(c.tol > 0.0, "tol: must be > 0");
    check(c.lambda >= 0.0, "lambda: must be >= 0");
    check(c.prune_threshold > 0.0 && c.prune_threshold < 1.0, "prune_threshold: must lie in (0, 1)");
    check(c.prune_k >= 1, "prune_k: must be >= 1");
    check(c.prune_radius > 0.0, "prune_radius: must be > 0");
    check(c.steps >= 1, "steps: must be >= 1");
    check(c.spsa_a > 0.0, "spsa_a: must be > 0");
    check(c.spsa_c > 0.0, "spsa_c: must be > 0");
    check(c.spsa_stability > 0.0, "spsa_stability: must be > 0");
    check(c.score_hidden >= 1, "score_hidden: must be >= 1");
    check(c.unmatched < c.n_star, "unmatched: must be < n_star");
    check(c.noise >= 0.0, "noise: must be >= 0");
    check(c.sinkhorn_problems >= 1, "sinkhorn_problems: must be >= 1");
    check(c.sinkhorn_max_n >= 1 && c.sinkhorn_max_n <= 4096, "sinkhorn_max_n: must lie in [1, 4096]");
    check(c.eps_min > 0.0, "eps_min: must be > 0");
    check(c.eps_max >= c.eps_min, "eps_max: must be >= eps_min");
    check(c.reduce_instances >= 1, "reduce_instances: must be >= 1");
    return p;
}

ExperimentConfig parse_config(std::string_view text) {
    ExperimentConfig cfg;
    std::set<std::string> seen;
    std::vector<std::string> problems;
    if (trim(text).starts_with('{'))
        parse_json(text, cfg, seen, problems);
    else
        parse_lines(text, cfg, seen, problems);

    // Range checks only for fields that parsed, so one bad value is reported once.
    for (auto& msg : validate_config(cfg)) {
        const std::string key = msg.substr(0, msg.find(':'));
        bool already = false;
        for (const auto& q : problems)
            if (q.starts_with(key + ":")) already = true;
        if (!already) problems.push_back(std::move(msg));
    }
    if (!problems.empty()) throw ConfigError(std::move(problems));
    return cfg;
}

std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& f : fields()) out.emplace_back(f.key, f.get(cfg));
    return out;
}

std::string serialize_config(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& [k, v] : config_entries(cfg)) out += k + "=" + v + "\n";
    return out;
}

std::string config_to_json(const ExperimentConfig& cfg) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& f : fields()) {
        const std::string v = f.get(cfg);
        if (f.list) {
            auto arr = nlohmann::ordered_json::array();
            for (std::size_t s : cfg.sizes) arr.push_back(s);
            j[f.key] = arr;
        } else if (f.numeric) {
            // Raw numeric text keeps the 17-digit rendering.
            j[f.key] = nlohmann::ordered_json::parse(v);
        } else {
            j[f.key] = v;
        }
    }
    return j.dump(2);
}

}  // namespace rwmatch
