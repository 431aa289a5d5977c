#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pearl::expcli {

struct CurvePoint {
    double env_steps = 0.0;
    double value = 0.0;
};

/// Eval rows of one metrics file, in file order.
struct RunCurve {
    std::string source;
    std::vector<CurvePoint> points;
};

class MetricsFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline RunCurve read_eval_curve(std::istream& in, const std::string& source) {
    RunCurve run{source, {}};
    std::string line;
    std::size_t line_no = 0;
    double last_steps = -1.0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json row;
        try {
            row = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw MetricsFormatError(source + ":" + std::to_string(line_no) + ": not a JSON record");
        }
        if (!row.is_object() || !row.contains("type") || !row["type"].is_string()) {
            throw MetricsFormatError(source + ":" + std::to_string(line_no) + ": record lacks a type");
        }
        if (row["type"] != "eval") continue;
        if (!row.contains("env_steps") || !row["env_steps"].is_number() || !row.contains("eval_return") ||
            !row["eval_return"].is_number()) {
            throw MetricsFormatError(source + ":" + std::to_string(line_no) + ": eval record lacks env_steps/eval_return");
        }
        const double steps = row["env_steps"].get<double>();
        if (steps < last_steps) {
            throw MetricsFormatError(source + ":" + std::to_string(line_no) + ": env_steps decreased");
        }
        last_steps = steps;
        run.points.push_back({steps, row["eval_return"].get<double>()});
    }
    if (run.points.empty()) throw MetricsFormatError(source + ": no eval records");
    return run;
}

inline RunCurve read_eval_curve(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MetricsFormatError(path + ": cannot open metrics file");
    return read_eval_curve(in, path);
}

/// Runs sharing a label, reduced to mean and min/max at the env-step
/// values every run reports.
struct CurveGroup {
    std::string label;
    std::vector<RunCurve> runs;
    std::vector<double> steps;
    std::vector<double> mean;
    std::vector<double> lo;
    std::vector<double> hi;

    bool has_band() const { return runs.size() > 1; }
};

inline CurveGroup reduce_group(std::string label, std::vector<RunCurve> runs) {
    if (runs.empty()) throw std::invalid_argument("reduce_group: no runs");
    CurveGroup g;
    g.label = std::move(label);
    g.runs = std::move(runs);
    // Last value per env-step count in each run.
    std::vector<std::map<double, double>> by_step;
    for (const auto& r : g.runs) {
        std::map<double, double> m;
        for (const auto& p : r.points) m[p.env_steps] = p.value;
        by_step.push_back(std::move(m));
    }
    for (const auto& [steps, v0] : by_step.front()) {
        std::vector<double> vals{v0};
        bool everywhere = true;
        for (std::size_t i = 1; i < by_step.size(); ++i) {
            auto it = by_step[i].find(steps);
            if (it == by_step[i].end()) {
                everywhere = false;
                break;
            }
            vals.push_back(it->second);
        }
        if (!everywhere) continue;
        double sum = 0.0;
        for (double v : vals) sum += v;
        g.steps.push_back(steps);
        g.mean.push_back(sum / double(vals.size()));
        g.lo.push_back(*std::min_element(vals.begin(), vals.end()));
        g.hi.push_back(*std::max_element(vals.begin(), vals.end()));
    }
    if (g.steps.empty()) throw MetricsFormatError("runs labelled '" + g.label + "' share no evaluation points");
    return g;
}

struct SummaryRow {
    std::string label;
    std::string source;  ///< metrics file, or "mean" for the group aggregate
    double final_env_steps = 0.0;
    double final_return = 0.0;
    double threshold = 0.0;
    std::optional<double> steps_to_threshold;
};

/// First env-step count at which the curve reaches `threshold`.
inline std::optional<double> steps_to_reach(const std::vector<double>& steps, const std::vector<double>& values,
                                            double threshold) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] >= threshold) return steps[i];
    }
    return std::nullopt;
}

/// Without an explicit threshold, each row uses 80% of the way from its first
/// evaluation to its best one.
inline double default_threshold(const std::vector<double>& values) {
    const double first = values.front();
    const double best = *std::max_element(values.begin(), values.end());
    return first + 0.8 * (best - first);
}

inline std::vector<SummaryRow> summarize(const std::vector<CurveGroup>& groups, std::optional<double> threshold) {
    std::vector<SummaryRow> rows;
    for (const auto& g : groups) {
        for (const auto& r : g.runs) {
            std::vector<double> s, v;
            for (const auto& p : r.points) {
                s.push_back(p.env_steps);
                v.push_back(p.value);
            }
            const double t = threshold ? *threshold : default_threshold(v);
            rows.push_back({g.label, r.source, s.back(), v.back(), t, steps_to_reach(s, v, t)});
        }
        if (g.has_band()) {
            const double t = threshold ? *threshold : default_threshold(g.mean);
            rows.push_back({g.label, "mean", g.steps.back(), g.mean.back(), t, steps_to_reach(g.steps, g.mean, t)});
        }
    }
    return rows;
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
    std::ostringstream out;
    out.precision(17);
    out << "label,source,final_env_steps,final_return,threshold,env_steps_to_threshold\n";
    for (const auto& r : rows) {
        out << r.label << ',' << r.source << ',' << r.final_env_steps << ',' << r.final_return << ',' << r.threshold
            << ',';
        if (r.steps_to_threshold) out << *r.steps_to_threshold;
        out << '\n';
    }
    return out.str();
}

namespace detail {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string tick_label(double v) {
    char buf[32];
    if (std::abs(v) >= 1e4) std::snprintf(buf, sizeof buf, "%.3g", v);
    else std::snprintf(buf, sizeof buf, "%g", std::round(v * 100.0) / 100.0);
    return buf;
}

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace detail

/// Return-vs-env-steps chart: one line per group, min/max band for groups
/// with several runs.
inline std::string render_svg(const std::vector<CurveGroup>& groups, const std::string& title = "") {
    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
    constexpr double W = 720, H = 440, L = 70, R = 180, T = 40, B = 55;
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const auto& g : groups) {
        for (std::size_t i = 0; i < g.steps.size(); ++i) {
            x0 = std::min(x0, g.steps[i]);
            x1 = std::max(x1, g.steps[i]);
            y0 = std::min(y0, g.lo[i]);
            y1 = std::max(y1, g.hi[i]);
        }
    }
    if (x1 <= x0) x1 = x0 + 1.0;
    if (y1 <= y0) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!title.empty()) {
        s << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
          << detail::xml_escape(title) << "</text>\n";
    }
    // axes and ticks
    s << "<g stroke=\"#444\" fill=\"none\"><line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R
      << "\" y2=\"" << H - B << "\"/><line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
      << "\"/></g>\n";
    for (int k = 0; k <= 5; ++k) {
        const double xv = x0 + (x1 - x0) * k / 5.0;
        const double yv = y0 + (y1 - y0) * k / 5.0;
        s << "<text x=\"" << detail::fmt(px(xv)) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">"
          << detail::tick_label(xv) << "</text>\n";
        s << "<text x=\"" << L - 8 << "\" y=\"" << detail::fmt(py(yv) + 4) << "\" text-anchor=\"end\">"
          << detail::tick_label(yv) << "</text>\n";
        s << "<line x1=\"" << L << "\" x2=\"" << W - R << "\" y1=\"" << detail::fmt(py(yv)) << "\" y2=\""
          << detail::fmt(py(yv)) << "\" stroke=\"#ddd\"/>\n";
    }
    s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">environment steps</text>\n";
    s << "<text transform=\"translate(18," << (T + H - B) / 2
      << ") rotate(-90)\" text-anchor=\"middle\">test return</text>\n";

    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const auto& g = groups[gi];
        const char* color = kColors[gi % (sizeof kColors / sizeof *kColors)];
        if (g.has_band()) {
            s << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
            for (std::size_t i = 0; i < g.steps.size(); ++i) s << detail::fmt(px(g.steps[i])) << ',' << detail::fmt(py(g.hi[i])) << ' ';
            for (std::size_t i = g.steps.size(); i-- > 0;) s << detail::fmt(px(g.steps[i])) << ',' << detail::fmt(py(g.lo[i])) << ' ';
            s << "\"/>\n";
        }
        s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < g.steps.size(); ++i) s << detail::fmt(px(g.steps[i])) << ',' << detail::fmt(py(g.mean[i])) << ' ';
        s << "\"/>\n";
        const double ly = T + 10 + 20.0 * double(gi);
        s << "<line x1=\"" << W - R + 15 << "\" x2=\"" << W - R + 40 << "\" y1=\"" << ly << "\" y2=\"" << ly
          << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        s << "<text x=\"" << W - R + 46 << "\" y=\"" << ly + 4 << "\">" << detail::xml_escape(g.label) << " (n="
          << g.runs.size() << ")</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

}  // namespace pearl::expcli
