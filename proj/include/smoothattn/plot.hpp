#ifndef SMOOTHATTN_PLOT_HPP
#define SMOOTHATTN_PLOT_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "smoothattn/common.hpp"
#include "smoothattn/data.hpp"
#include "smoothattn/model.hpp"
#include "smoothattn/scene.hpp"

namespace smoothattn {

// ---------------------------------------------------------------------------
// Prediction CSV: truth and predicted tracks of one scene in a single file.
// Columns: scene_id, agent_id, step, kind, x, y with kind in {truth, pred}.
// ---------------------------------------------------------------------------

inline constexpr const char* kPredictionHeader = "scene_id,agent_id,step,kind,x,y";

struct TrajectorySeries {
    std::uint64_t agent_id = 0;
    std::vector<std::array<double, 3>> truth;  // (step, x, y)
    std::vector<std::array<double, 3>> pred;   // (step, x, y)
};

struct PredictionData {
    std::string scene_id;
    std::vector<TrajectorySeries> agents;
};

inline void write_prediction_csv(const std::string& path, const Scene& scene,
                                 const PredictResult& pred) {
    check(pred.N == scene.num_agents(), "write_prediction_csv: prediction has ", pred.N,
          " agents, scene has ", scene.num_agents());
    std::ofstream out(path);
    check(out.good(), "write_prediction_csv: cannot open '", path, "' for writing");
    out << kPredictionHeader << '\n';
    char buf[256];
    for (int i = 0; i < scene.num_agents(); ++i) {
        for (int t = 0; t < scene.num_steps(); ++t) {
            const AgentState& s = scene.at(t, i);
            std::snprintf(buf, sizeof(buf), "%s,%llu,%d,truth,%.9f,%.9f\n", scene.id.c_str(),
                          static_cast<unsigned long long>(scene.agent_ids[static_cast<std::size_t>(i)]),
                          t, s.x, s.y);
            out << buf;
        }
        for (int h = 0; h < pred.horizon; ++h) {
            const AgentState& s = pred.at(h, i);
            std::snprintf(buf, sizeof(buf), "%s,%llu,%d,pred,%.9f,%.9f\n", scene.id.c_str(),
                          static_cast<unsigned long long>(scene.agent_ids[static_cast<std::size_t>(i)]),
                          scene.t_obs + h, s.x, s.y);
            out << buf;
        }
    }
    check(out.good(), "write_prediction_csv: write failure on '", path, "'");
}

inline PredictionData read_prediction_csv(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "read_prediction_csv: cannot open '", path, "'");
    std::string line;
    check(static_cast<bool>(std::getline(in, line)), "read_prediction_csv: '", path, "' is empty");
    check(detail::strip_cr(line) == kPredictionHeader, "read_prediction_csv: ", path,
          ": unrecognized header '", line, "'");
    PredictionData out;
    long lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        auto f = detail::split_fields(line);
        check(f.size() == 6, "read_prediction_csv: ", path, ":", lineno,
              ": expected 6 fields, got ", f.size());
        if (out.scene_id.empty()) out.scene_id = f[0];
        std::uint64_t aid = detail::parse_u64(f[1], path, lineno, "agent_id");
        long step = detail::parse_long(f[2], path, lineno, "step");
        double x = detail::parse_double(f[4], path, lineno, "x");
        double y = detail::parse_double(f[5], path, lineno, "y");
        TrajectorySeries* row = nullptr;
        for (TrajectorySeries& a : out.agents)
            if (a.agent_id == aid) row = &a;
        if (!row) {
            out.agents.push_back(TrajectorySeries{aid, {}, {}});
            row = &out.agents.back();
        }
        std::array<double, 3> p{static_cast<double>(step), x, y};
        if (f[3] == "truth")
            row->truth.push_back(p);
        else if (f[3] == "pred")
            row->pred.push_back(p);
        else
            fail("read_prediction_csv: ", path, ":", lineno, ": unknown kind '", f[3], "'");
    }
    check(!out.agents.empty(), "read_prediction_csv: '", path, "' has no data rows");
    return out;
}

// ---------------------------------------------------------------------------
// Attention CSV: the timeline of one agent's attention over the others.
// Columns: step, then one attn_<agent_id> column per other agent.
// ---------------------------------------------------------------------------

struct AttentionData {
    std::uint64_t agent_id = 0;
    std::vector<std::uint64_t> others;         // column order
    std::vector<std::vector<double>> weights;  // [T][others]
};

inline void write_attention_csv(const std::string& path, const AttentionTensor& theta,
                                int agent, const std::vector<std::uint64_t>& agent_ids) {
    check(agent >= 0 && agent < theta.N, "write_attention_csv: agent ", agent, " out of range");
    check(static_cast<int>(agent_ids.size()) == theta.N, "write_attention_csv: ",
          agent_ids.size(), " agent ids for ", theta.N, " agents");
    std::ofstream out(path);
    check(out.good(), "write_attention_csv: cannot open '", path, "' for writing");
    out << "step";
    for (int j = 0; j < theta.N; ++j)
        if (j != agent)
            out << ",attn_" << agent_ids[static_cast<std::size_t>(j)];
    out << '\n';
    char buf[64];
    for (int t = 0; t < theta.T; ++t) {
        out << t;
        for (int j = 0; j < theta.N; ++j) {
            if (j == agent) continue;
            std::snprintf(buf, sizeof(buf), ",%.9f", theta.at_pair(t, agent, j));
            out << buf;
        }
        out << '\n';
    }
    check(out.good(), "write_attention_csv: write failure on '", path, "'");
}

inline AttentionData read_attention_csv(const std::string& path, std::uint64_t agent_id = 0) {
    std::ifstream in(path);
    check(in.good(), "read_attention_csv: cannot open '", path, "'");
    std::string line;
    check(static_cast<bool>(std::getline(in, line)), "read_attention_csv: '", path, "' is empty");
    auto header = detail::split_fields(detail::strip_cr(line));
    check(header.size() >= 2 && header[0] == "step", "read_attention_csv: ", path,
          ": unrecognized header '", line, "'");
    AttentionData out;
    out.agent_id = agent_id;
    for (std::size_t c = 1; c < header.size(); ++c) {
        check(header[c].rfind("attn_", 0) == 0, "read_attention_csv: ", path,
              ": unrecognized column '", header[c], "'");
        out.others.push_back(detail::parse_u64(header[c].substr(5), path, 1, "agent_id"));
    }
    long lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        auto f = detail::split_fields(line);
        check(f.size() == header.size(), "read_attention_csv: ", path, ":", lineno,
              ": expected ", header.size(), " fields, got ", f.size());
        std::vector<double> w;
        for (std::size_t c = 1; c < f.size(); ++c)
            w.push_back(detail::parse_double(f[c], path, lineno, "weight"));
        out.weights.push_back(std::move(w));
    }
    check(!out.weights.empty(), "read_attention_csv: '", path, "' has no data rows");
    return out;
}

// ---------------------------------------------------------------------------
// SVG rendering
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt2(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

inline const char* agent_color(std::size_t k) {
    static constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                              "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
    return kPalette[k % (sizeof(kPalette) / sizeof(kPalette[0]))];
}

}  // namespace detail

// Trajectory overlay: solid truth tracks and dashed predicted tracks, one
// color per highlighted agent, gray background agents. Dot radius grows with
// the time index so direction of travel is readable without arrows.
inline std::string trajectory_overlay_svg(const PredictionData& data,
                                          std::uint64_t front_main = 0,
                                          std::uint64_t rear_main = 0) {
    check(!data.agents.empty(), "trajectory_overlay_svg: no agents");
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    double tmax = 1.0;
    for (const TrajectorySeries& a : data.agents)
        for (const auto* list : {&a.truth, &a.pred})
            for (const auto& p : *list) {
                xmin = std::min(xmin, p[1]); xmax = std::max(xmax, p[1]);
                ymin = std::min(ymin, p[2]); ymax = std::max(ymax, p[2]);
                tmax = std::max(tmax, p[0]);
            }
    double spanx = std::max(xmax - xmin, 1e-6), spany = std::max(ymax - ymin, 1e-6);
    xmin -= 0.08 * spanx; xmax += 0.08 * spanx;
    ymin -= 0.05 * spany; ymax += 0.05 * spany;
    spanx = xmax - xmin; spany = ymax - ymin;
    double W = 420.0;
    double H = std::clamp(W * spany / spanx, 240.0, 900.0);
    auto X = [&](double x) { return (x - xmin) / spanx * W; };
    auto Y = [&](double y) { return H - (y - ymin) / spany * H; };  // flip: +y is up

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    std::size_t color_idx = 0;
    for (const TrajectorySeries& a : data.agents) {
        bool is_main = (a.agent_id == front_main || a.agent_id == rear_main) &&
                       (front_main != 0 || rear_main != 0);
        std::string color = is_main
                                ? (a.agent_id == front_main ? "#d62728" : "#1f77b4")
                                : (front_main == 0 && rear_main == 0
                                       ? detail::agent_color(color_idx++)
                                       : "#b0b0b0");
        for (int pass = 0; pass < 2; ++pass) {
            const auto& pts = pass == 0 ? a.truth : a.pred;
            if (pts.empty()) continue;
            svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\""
                << (pass == 0 ? "1.4" : "1.2") << "\""
                << (pass == 0 ? "" : " stroke-dasharray=\"4 3\"") << " points=\"";
            for (const auto& p : pts)
                svg << detail::fmt2(X(p[1])) << ',' << detail::fmt2(Y(p[2])) << ' ';
            svg << "\"/>\n";
            for (const auto& p : pts) {
                double r = 1.2 + 2.6 * (p[0] / tmax);  // dot size encodes time
                svg << "<circle cx=\"" << detail::fmt2(X(p[1])) << "\" cy=\""
                    << detail::fmt2(Y(p[2])) << "\" r=\"" << detail::fmt2(r) << "\" ";
                if (pass == 0)
                    svg << "fill=\"" << color << "\"";
                else
                    svg << "fill=\"white\" stroke=\"" << color << "\" stroke-width=\"0.8\"";
                svg << "/>\n";
            }
        }
        svg << "<text x=\"" << detail::fmt2(X(a.truth.empty() ? 0.0 : a.truth.front()[1]) + 4)
            << "\" y=\"" << detail::fmt2(Y(a.truth.empty() ? 0.0 : a.truth.front()[2]) - 4)
            << "\" font-size=\"9\" fill=\"" << color << "\">" << a.agent_id << "</text>\n";
    }
    svg << "<text x=\"6\" y=\"14\" font-size=\"11\" fill=\"#333\">" << data.scene_id
        << " (solid truth, dashed predicted, dot size = time)</text>\n</svg>\n";
    return svg.str();
}

// Attention timeline of one agent: weight per other agent over time, with the
// scenario's high-interaction window shaded and one target optionally
// emphasized in color.
inline std::string attention_timeline_svg(const AttentionData& data, int highlight_begin = -1,
                                          int highlight_end = -1, std::uint64_t focus_id = 0) {
    int T = static_cast<int>(data.weights.size());
    check(T >= 1, "attention_timeline_svg: empty timeline");
    double W = 460.0, H = 220.0, ml = 34.0, mb = 22.0, mt = 20.0, mr = 8.0;
    double pw = W - ml - mr, ph = H - mt - mb;
    auto X = [&](double t) { return ml + (T <= 1 ? 0.0 : t / (T - 1.0)) * pw; };
    auto Y = [&](double w) { return mt + (1.0 - w) * ph; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (highlight_begin >= 0 && highlight_end > highlight_begin) {
        double x0 = X(highlight_begin), x1 = X(std::min(highlight_end, T - 1));
        svg << "<rect x=\"" << detail::fmt2(x0) << "\" y=\"" << detail::fmt2(mt) << "\" width=\""
            << detail::fmt2(x1 - x0) << "\" height=\"" << detail::fmt2(ph)
            << "\" fill=\"#fff3c4\"/>\n";
    }
    for (double g : {0.0, 0.5, 1.0})
        svg << "<line x1=\"" << detail::fmt2(ml) << "\" y1=\"" << detail::fmt2(Y(g))
            << "\" x2=\"" << detail::fmt2(W - mr) << "\" y2=\"" << detail::fmt2(Y(g))
            << "\" stroke=\"#ddd\" stroke-width=\"0.6\"/>\n"
            << "<text x=\"4\" y=\"" << detail::fmt2(Y(g) + 3) << "\" font-size=\"9\" fill=\"#666\">"
            << detail::fmt2(g) << "</text>\n";
    std::size_t color_idx = 0;
    for (std::size_t k = 0; k < data.others.size(); ++k) {
        bool focus = data.others[k] == focus_id && focus_id != 0;
        std::string color = focus ? "#d62728"
                                  : (focus_id == 0 ? detail::agent_color(color_idx++) : "#b8b8b8");
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\""
            << (focus ? "1.8" : "1.0") << "\" points=\"";
        for (int t = 0; t < T; ++t)
            svg << detail::fmt2(X(t)) << ',' << detail::fmt2(Y(data.weights[static_cast<std::size_t>(t)][k])) << ' ';
        svg << "\"/>\n";
    }
    svg << "<line x1=\"" << detail::fmt2(ml) << "\" y1=\"" << detail::fmt2(mt + ph) << "\" x2=\""
        << detail::fmt2(W - mr) << "\" y2=\"" << detail::fmt2(mt + ph)
        << "\" stroke=\"#333\" stroke-width=\"0.8\"/>\n"
        << "<text x=\"" << detail::fmt2(ml) << "\" y=\"" << detail::fmt2(H - 6)
        << "\" font-size=\"9\" fill=\"#666\">step 0 .. " << (T - 1) << "</text>\n"
        << "<text x=\"" << detail::fmt2(ml) << "\" y=\"13\" font-size=\"11\" fill=\"#333\">"
        << "attention of agent " << data.agent_id << "</text>\n</svg>\n";
    return svg.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    check(out.good(), "write_text_file: cannot open '", path, "' for writing");
    out << content;
    check(out.good(), "write_text_file: write failure on '", path, "'");
}

}  // namespace smoothattn

#endif  // SMOOTHATTN_PLOT_HPP
