#pragma once

#include "pearl/envsuite/tasks.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>

namespace pearl {

inline constexpr const char* kTaskSetMagic = "pearl-taskset";
inline constexpr int kTaskSetVersion = 1;

namespace detail {

/// Shortest decimal form that parses back to the same double.
inline std::string exact_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw std::runtime_error("exact_double: formatting failed");
    return std::string(buf, end);
}

}  // namespace detail

/// Text form:
///   pearl-taskset 1
///   family <name> horizon <h> gain <g> radius <r> indicator <0|1>
///   seed <seed>
///   task <id> <train|test> <param...>
inline std::string serialize_task_set(const TaskSet& set) {
    std::ostringstream out;
    const TaskFamily& f = set.family;
    out << kTaskSetMagic << ' ' << kTaskSetVersion << '\n';
    out << "family " << to_string(f.id) << " horizon " << f.horizon << " gain " << detail::exact_double(f.action_gain)
        << " radius " << detail::exact_double(f.goal_radius) << " indicator " << (f.sparse_indicator ? 1 : 0) << '\n';
    out << "seed " << set.seed << '\n';
    auto write = [&](const TaskInstance& t) {
        out << "task " << t.task_id << ' ' << to_string(t.split);
        for (double p : t.task_param) out << ' ' << detail::exact_double(p);
        out << '\n';
    };
    for (const auto& t : set.train) write(t);
    for (const auto& t : set.test) write(t);
    return out.str();
}

inline TaskSet parse_task_set(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& msg) -> void {
        throw std::runtime_error("task set line " + std::to_string(lineno) + ": " + msg);
    };

    TaskSet set;
    bool have_family = false;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (!have_header) {
            int version = 0;
            if (key != kTaskSetMagic || !(ls >> version)) fail("missing header");
            if (version != kTaskSetVersion) fail("unsupported version " + std::to_string(version));
            have_header = true;
        } else if (key == "family") {
            std::string name, k;
            int indicator = 0;
            ls >> name;
            try {
                set.family = make_family(family_from_string(name));
            } catch (const std::invalid_argument& e) {
                fail(e.what());
            }
            while (ls >> k) {
                if (k == "horizon") ls >> set.family.horizon;
                else if (k == "gain") ls >> set.family.action_gain;
                else if (k == "radius") ls >> set.family.goal_radius;
                else if (k == "indicator") { ls >> indicator; set.family.sparse_indicator = indicator != 0; }
                else fail("unknown family attribute '" + k + "'");
                if (ls.fail()) fail("bad value for '" + k + "'");
            }
            try {
                set.family.validate();
            } catch (const std::invalid_argument& e) {
                fail(e.what());
            }
            have_family = true;
        } else if (key == "seed") {
            if (!(ls >> set.seed)) fail("bad seed");
        } else if (key == "task") {
            if (!have_family) fail("task before family");
            TaskInstance t;
            std::string split;
            if (!(ls >> t.task_id >> split)) fail("bad task entry");
            try {
                t.split = split_from_string(split);
            } catch (const std::invalid_argument& e) {
                fail(e.what());
            }
            t.family = set.family;
            double p;
            while (ls >> p) t.task_param.push_back(p);
            if (!ls.eof()) fail("bad task parameter");
            if (!in_task_space(set.family, t.task_param)) fail("task parameter outside task space");
            (t.split == Split::train ? set.train : set.test).push_back(std::move(t));
        } else {
            fail("unknown record '" + key + "'");
        }
    }
    if (!have_header) throw std::runtime_error("task set: empty input");
    if (!have_family) throw std::runtime_error("task set: missing family record");
    return set;
}

}  // namespace pearl
