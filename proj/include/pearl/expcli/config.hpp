#pragma once

#include "pearl/metaloop/train_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace pearl::expcli {

/// Everything a run needs: the training configuration plus output plumbing.
struct ExperimentConfig {
    TrainConfig train;
    std::string output_dir = "runs";
    std::size_t checkpoint_every = 0;  ///< iterations between intermediate checkpoints; 0 keeps only the final one

    bool operator==(const ExperimentConfig&) const;
};

/// Parse failure carrying a "source:line: message" location.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view v) {
    T out{};
    const char* first = v.data();
    const char* last = v.data() + v.size();
    if constexpr (std::is_unsigned_v<T>) {
        if (!v.empty() && v.front() == '-') throw std::invalid_argument("expected a non-negative integer");
    }
    auto [p, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || p != last) {
        throw std::invalid_argument(std::is_floating_point_v<T> ? "expected a number" : "expected an integer");
    }
    return out;
}

template <class T>
std::string format_number(T v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) throw std::logic_error("format_number failed");
    return std::string(buf, p);
}

inline bool parse_bool(std::string_view v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("expected true or false");
}

inline std::vector<std::size_t> parse_sizes(std::string_view v) {
    std::vector<std::size_t> out;
    while (true) {
        const auto comma = v.find(',');
        out.push_back(parse_number<std::size_t>(trim(v.substr(0, comma))));
        if (comma == std::string_view::npos) break;
        v.remove_prefix(comma + 1);
    }
    return out;
}

inline std::string format_sizes(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
    return s;
}

struct Field {
    std::string section;
    std::string key;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, std::string_view)> set;
};

template <class T, class Member>
Field number(std::string section, std::string key, Member member) {
    return {std::move(section), std::move(key),
            [member](const ExperimentConfig& c) { return format_number<T>(member(c)); },
            [member](ExperimentConfig& c, std::string_view v) { member(c) = parse_number<T>(v); }};
}

template <class Member>
Field boolean(std::string section, std::string key, Member member) {
    return {std::move(section), std::move(key),
            [member](const ExperimentConfig& c) {
                return std::string(member(c) ? "true" : "false");
            },
            [member](ExperimentConfig& c, std::string_view v) { member(c) = parse_bool(v); }};
}

template <class Member>
Field sizes(std::string section, std::string key, Member member) {
    return {std::move(section), std::move(key),
            [member](const ExperimentConfig& c) { return format_sizes(member(c)); },
            [member](ExperimentConfig& c, std::string_view v) { member(c) = parse_sizes(v); }};
}

template <class Member, class FromString>
Field enumeration(std::string section, std::string key, Member member, FromString from) {
    return {std::move(section), std::move(key),
            [member](const ExperimentConfig& c) { return std::string(to_string(member(c))); },
            [member, from](ExperimentConfig& c, std::string_view v) { member(c) = from(std::string(v)); }};
}

inline Field text(std::string section, std::string key, std::string ExperimentConfig::*member) {
    return {std::move(section), std::move(key), [member](const ExperimentConfig& c) { return c.*member; },
            [member](ExperimentConfig& c, std::string_view v) {
                if (v.empty()) throw std::invalid_argument("expected a non-empty value");
                c.*member = std::string(v);
            }};
}

#define PEARL_FIELD(expr) [](auto& c) -> auto& { return expr; }

/// Every configurable field, in serialization order.
inline const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        enumeration("task", "family", PEARL_FIELD(c.train.family), family_from_string),
        number<std::size_t>("task", "horizon", PEARL_FIELD(c.train.horizon)),
        number<double>("task", "goal_radius", PEARL_FIELD(c.train.goal_radius)),
        boolean("task", "sparse_indicator", PEARL_FIELD(c.train.sparse_indicator)),
        number<std::size_t>("task", "n_train_tasks", PEARL_FIELD(c.train.n_train_tasks)),
        number<std::size_t>("task", "n_test_tasks", PEARL_FIELD(c.train.n_test_tasks)),
        number<std::uint64_t>("task", "task_seed", PEARL_FIELD(c.train.task_seed)),

        number<std::size_t>("encoder", "latent_dim", PEARL_FIELD(c.train.encoder.latent_dim)),
        sizes("encoder", "hidden_dims", PEARL_FIELD(c.train.encoder.hidden_dims)),
        enumeration("encoder", "variant", PEARL_FIELD(c.train.encoder.variant), encoder_variant_from_string),
        boolean("encoder", "include_next_state", PEARL_FIELD(c.train.encoder.include_next_state)),
        boolean("encoder", "shared_trunk", PEARL_FIELD(c.train.encoder.shared_trunk)),
        boolean("encoder", "prior_in_product", PEARL_FIELD(c.train.encoder.prior_in_product)),
        number<std::size_t>("encoder", "recurrent_hidden", PEARL_FIELD(c.train.encoder.recurrent_hidden)),
        number<std::size_t>("encoder", "bptt_window", PEARL_FIELD(c.train.encoder.bptt_window)),

        sizes("networks", "hidden_dims", PEARL_FIELD(c.train.hidden_dims)),

        number<double>("sac", "discount", PEARL_FIELD(c.train.sac.discount)),
        number<double>("sac", "temperature", PEARL_FIELD(c.train.temperature)),
        number<double>("sac", "tau", PEARL_FIELD(c.train.sac.tau)),
        number<double>("sac", "kl_weight", PEARL_FIELD(c.train.sac.kl_weight)),
        number<double>("sac", "lr_encoder", PEARL_FIELD(c.train.sac.lr_encoder)),
        number<double>("sac", "lr_policy", PEARL_FIELD(c.train.sac.lr_policy)),
        number<double>("sac", "lr_critic", PEARL_FIELD(c.train.sac.lr_critic)),
        boolean("sac", "twin_q", PEARL_FIELD(c.train.sac.twin_q)),

        number<std::size_t>("replay", "buffer_capacity", PEARL_FIELD(c.train.buffer_capacity)),
        number<std::size_t>("replay", "rl_batch_size", PEARL_FIELD(c.train.rl_batch_size)),
        number<std::size_t>("replay", "context_batch_size", PEARL_FIELD(c.train.context_batch_size)),
        enumeration("replay", "context_strategy", PEARL_FIELD(c.train.context.kind), context_strategy_from_string),
        number<std::size_t>("replay", "refresh_interval", PEARL_FIELD(c.train.context.refresh_interval)),
        boolean("replay", "rl_batch_trajectories", PEARL_FIELD(c.train.rl_batch_trajectories)),
        boolean("replay", "collect_context_from_buffer", PEARL_FIELD(c.train.collect_context_from_buffer)),

        number<std::size_t>("loop", "tasks_per_meta_batch", PEARL_FIELD(c.train.tasks_per_meta_batch)),
        number<std::size_t>("loop", "collect_episodes", PEARL_FIELD(c.train.collect_episodes)),
        number<std::size_t>("loop", "env_step_budget", PEARL_FIELD(c.train.env_step_budget)),
        number<std::size_t>("loop", "eval_every", PEARL_FIELD(c.train.eval_every)),
        number<std::size_t>("loop", "eval_episodes", PEARL_FIELD(c.train.eval_episodes)),
        number<std::size_t>("loop", "eval_rollouts", PEARL_FIELD(c.train.eval_rollouts)),
        number<std::size_t>("loop", "log_every", PEARL_FIELD(c.train.log_every)),

        number<std::uint64_t>("run", "seed", PEARL_FIELD(c.train.seed)),
        text("run", "output_dir", &ExperimentConfig::output_dir),
        number<std::size_t>("run", "checkpoint_every", PEARL_FIELD(c.checkpoint_every)),
    };
    return table;
}

#undef PEARL_FIELD

}  // namespace detail

/// Writes every field, defaults included, in a fixed order.
inline std::string serialize(const ExperimentConfig& cfg) {
    std::ostringstream out;
    std::string section;
    for (const auto& f : detail::fields()) {
        if (f.section != section) {
            if (!section.empty()) out << '\n';
            section = f.section;
            out << '[' << section << "]\n";
        }
        out << f.key << " = " << f.get(cfg) << '\n';
    }
    return out.str();
}

inline bool ExperimentConfig::operator==(const ExperimentConfig& other) const {
    return serialize(*this) == serialize(other);
}

/// Parses `[section]` headers and `key = value` lines; `#` starts a comment
/// line. Missing keys keep their defaults. The result is validated.
inline ExperimentConfig parse(std::string_view text, const std::string& source = "<config>") {
    std::map<std::string, const detail::Field*> by_name;
    std::set<std::string> sections;
    for (const auto& f : detail::fields()) {
        by_name[f.section + "." + f.key] = &f;
        sections.insert(f.section);
    }

    ExperimentConfig cfg;
    std::set<std::string> seen;
    std::string section;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& msg) {
        throw ConfigError(source + ":" + std::to_string(line_no) + ": " + msg);
    };

    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string_view line = detail::trim(raw);
        if (line.empty() || line.front() == '#' || line.front() == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail("malformed section header");
            section = std::string(detail::trim(line.substr(1, line.size() - 2)));
            if (!sections.count(section)) fail("unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) fail("expected 'key = value'");
        if (section.empty()) fail("key outside of any section");
        const std::string key(detail::trim(line.substr(0, eq)));
        const std::string_view value = detail::trim(line.substr(eq + 1));
        const std::string full = section + "." + key;
        auto it = by_name.find(full);
        if (it == by_name.end()) fail("unknown key '" + key + "' in [" + section + "]");
        if (!seen.insert(full).second) fail("duplicate key '" + key + "'");
        try {
            it->second->set(cfg, value);
        } catch (const std::exception& e) {
            fail(key + ": " + e.what());
        }
    }
    try {
        cfg.train.validate();
    } catch (const std::exception& e) {
        throw ConfigError(source + ": invalid configuration: " + e.what());
    }
    return cfg;
}

inline ExperimentConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

}  // namespace pearl::expcli
