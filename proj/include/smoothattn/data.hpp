#ifndef SMOOTHATTN_DATA_HPP
#define SMOOTHATTN_DATA_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "smoothattn/common.hpp"
#include "smoothattn/rng.hpp"
#include "smoothattn/scene.hpp"

namespace smoothattn {

// On-disk trajectory format: UTF-8 CSV, '.' decimal separator, mandatory
// header `scene_id,agent_id,step,timestamp_ms,x,y`, coordinates written with
// 9 fractional digits (round-trip accurate to 1e-9). Files whose header is
// `track_id,frame_id,timestamp_ms,x,y` (external recordings) load as a
// single scene with steps rebased to the first common frame.
inline constexpr const char* kCsvHeader = "scene_id,agent_id,step,timestamp_ms,x,y";
inline constexpr const char* kTrackHeader = "track_id,frame_id,timestamp_ms,x,y";
inline constexpr int kTimestampStepMs = 100;

struct WindowSpec {
    int window = 0;
    int observed = 0;
    int stride = 0;

    void validate() const {
        check(observed > 0 && observed < window, "WindowSpec: need 0 < observed < window, got ",
              observed, " / ", window);
        check(stride >= 1, "WindowSpec: stride must be >= 1, got ", stride);
    }
};

inline void save_csv(const std::string& path, const std::vector<Scene>& scenes) {
    std::ofstream out(path);
    check(out.good(), "save_csv: cannot open '", path, "' for writing");
    out << kCsvHeader << "\n";
    char buf[256];
    for (const Scene& s : scenes) {
        int T = s.num_steps(), N = s.num_agents();
        for (int t = 0; t < T; ++t)
            for (int i = 0; i < N; ++i) {
                std::snprintf(buf, sizeof(buf), "%s,%llu,%d,%d,%.9f,%.9f\n", s.id.c_str(),
                              static_cast<unsigned long long>(s.agent_ids[static_cast<std::size_t>(i)]),
                              t, t * kTimestampStepMs, s.at(t, i).x, s.at(t, i).y);
                out << buf;
            }
    }
    check(out.good(), "save_csv: write failure on '", path, "'");
}

namespace detail {

struct CsvRow {
    std::string scene_id;
    std::uint64_t agent_id = 0;
    long step = 0;
    double x = 0.0, y = 0.0;
};

inline std::string strip_cr(std::string s) {
    while (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_double(const std::string& s, const std::string& path, int lineno,
                           const char* what) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        check(used == s.size(), "");
        return v;
    } catch (...) {
        fail("load_csv: ", path, ":", lineno, ": bad ", what, " value '", s, "'");
    }
}

inline long parse_long(const std::string& s, const std::string& path, int lineno,
                       const char* what) {
    try {
        std::size_t used = 0;
        long v = std::stol(s, &used);
        check(used == s.size(), "");
        return v;
    } catch (...) {
        fail("load_csv: ", path, ":", lineno, ": bad ", what, " value '", s, "'");
    }
}

inline std::uint64_t parse_u64(const std::string& s, const std::string& path, int lineno,
                               const char* what) {
    try {
        std::size_t used = 0;
        unsigned long long v = std::stoull(s, &used);
        check(used == s.size(), "");
        return static_cast<std::uint64_t>(v);
    } catch (...) {
        fail("load_csv: ", path, ":", lineno, ": bad ", what, " value '", s, "'");
    }
}

// Assemble one scene from its rows: agents ordered by first appearance, the
// step range cropped to the maximal interval where every agent is present.
inline Scene assemble_scene(const std::string& scene_id, const std::vector<CsvRow>& rows,
                            const std::string& path, int t_obs_hint) {
    std::vector<std::uint64_t> agents;
    std::map<std::uint64_t, std::map<long, AgentState>> track;
    for (const CsvRow& r : rows) {
        if (track.find(r.agent_id) == track.end()) agents.push_back(r.agent_id);
        auto& per = track[r.agent_id];
        check(per.find(r.step) == per.end(), "load_csv: ", path, ": duplicate (scene '",
              scene_id, "', agent ", r.agent_id, ", step ", r.step, ")");
        per[r.step] = AgentState{r.x, r.y};
    }
    check(agents.size() >= 2, "load_csv: ", path, ": scene '", scene_id,
          "' has fewer than 2 agents");

    long lo = std::numeric_limits<long>::min();
    long hi = std::numeric_limits<long>::max();
    for (std::uint64_t a : agents) {
        const auto& per = track[a];
        long first = per.begin()->first;
        long last = per.rbegin()->first;
        check(static_cast<long>(per.size()) == last - first + 1, "load_csv: ", path,
              ": agent ", a, " of scene '", scene_id, "' has non-contiguous steps");
        lo = std::max(lo, first);
        hi = std::min(hi, last);
    }
    check(hi >= lo + 1, "load_csv: ", path, ": scene '", scene_id,
          "' has no common interval of at least 2 steps across its agents");

    Scene s;
    s.id = scene_id;
    s.agent_ids = agents;
    int T = static_cast<int>(hi - lo + 1);
    s.states.resize(static_cast<std::size_t>(T) * agents.size());
    for (int t = 0; t < T; ++t)
        for (std::size_t i = 0; i < agents.size(); ++i)
            s.at(t, static_cast<int>(i)) = track[agents[i]].at(lo + t);
    s.t_obs = std::clamp(t_obs_hint, 1, T - 1);
    s.validate();
    return s;
}

}  // namespace detail

// Loads trajectory CSVs in either the native or the external track-file
// schema. `t_obs_hint` sets each scene's observed span (clamped to the
// scene's length); dataset manifests carry the authoritative value.
inline std::vector<Scene> load_csv(const std::string& path, int t_obs_hint = 15) {
    std::ifstream in(path);
    check(in.good(), "load_csv: cannot open '", path, "'");
    std::string line;
    check(static_cast<bool>(std::getline(in, line)), "load_csv: '", path, "' is empty");
    std::vector<std::string> header = detail::split_fields(line);
    bool native = line.rfind(kCsvHeader, 0) == 0;
    bool track_style = !native && line.rfind(kTrackHeader, 0) == 0;
    check(native || track_style, "load_csv: ", path,
          ":1: unrecognized header '", line, "' (expected '", kCsvHeader, "' or '",
          kTrackHeader, "')");

    std::vector<std::string> scene_order;
    std::map<std::string, std::vector<detail::CsvRow>> by_scene;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::vector<std::string> f = detail::split_fields(line);
        detail::CsvRow r;
        if (native) {
            check(f.size() == 6, "load_csv: ", path, ":", lineno, ": expected 6 fields, got ",
                  f.size());
            r.scene_id = f[0];
            r.agent_id = detail::parse_u64(f[1], path, lineno, "agent_id");
            r.step = detail::parse_long(f[2], path, lineno, "step");
            r.x = detail::parse_double(f[4], path, lineno, "x");
            r.y = detail::parse_double(f[5], path, lineno, "y");
        } else {
            check(f.size() == 5, "load_csv: ", path, ":", lineno, ": expected 5 fields, got ",
                  f.size());
            r.scene_id = "scene0";
            r.agent_id = detail::parse_u64(f[0], path, lineno, "track_id");
            r.step = detail::parse_long(f[1], path, lineno, "frame_id");
            r.x = detail::parse_double(f[3], path, lineno, "x");
            r.y = detail::parse_double(f[4], path, lineno, "y");
        }
        check(std::isfinite(r.x) && std::isfinite(r.y), "load_csv: ", path, ":", lineno,
              ": non-finite coordinate");
        if (by_scene.find(r.scene_id) == by_scene.end()) scene_order.push_back(r.scene_id);
        by_scene[r.scene_id].push_back(r);
    }
    check(!scene_order.empty(), "load_csv: '", path, "' has a header but no data rows");

    std::vector<Scene> scenes;
    scenes.reserve(scene_order.size());
    for (const std::string& sid : scene_order)
        scenes.push_back(detail::assemble_scene(sid, by_scene[sid], path, t_obs_hint));
    return scenes;
}

struct WindowResult {
    std::vector<Scene> scenes;
    int skipped = 0;  // input scenes shorter than one window
};

// Cuts every scene into sliding windows of `spec.window` steps at the given
// stride; each window is a standalone scene observing its first
// `spec.observed` steps. Scenes too short for a single window are counted,
// not emitted.
inline WindowResult window(const std::vector<Scene>& scenes, const WindowSpec& spec) {
    spec.validate();
    WindowResult out;
    for (const Scene& s : scenes) {
        int T = s.num_steps();
        if (T < spec.window) {
            ++out.skipped;
            continue;
        }
        int wi = 0;
        for (int start = 0; start + spec.window <= T; start += spec.stride, ++wi) {
            Scene w;
            w.id = s.id + "#w" + std::to_string(wi);
            w.agent_ids = s.agent_ids;
            w.t_obs = spec.observed;
            w.states.assign(s.states.begin() + static_cast<std::ptrdiff_t>(start) * s.num_agents(),
                            s.states.begin() +
                                static_cast<std::ptrdiff_t>(start + spec.window) * s.num_agents());
            w.validate();
            out.scenes.push_back(std::move(w));
        }
    }
    return out;
}

struct SplitResult {
    std::vector<Scene> train, val, test;
};

// Deterministic shuffled partition into train/val/test by the given
// fractions (which must sum to 1).
inline SplitResult split(const std::vector<Scene>& scenes, double f_train, double f_val,
                         double f_test, std::uint64_t seed) {
    double total = f_train + f_val + f_test;
    check(std::abs(total - 1.0) < 1e-9, "split: fractions must sum to 1, got ", total);
    check(f_train >= 0.0 && f_val >= 0.0 && f_test >= 0.0, "split: negative fraction");

    std::vector<std::size_t> order(scenes.size());
    std::iota(order.begin(), order.end(), 0);
    auto rng = make_stream(seed, "split");
    std::shuffle(order.begin(), order.end(), rng);

    auto n = static_cast<double>(scenes.size());
    std::size_t n_train = static_cast<std::size_t>(std::llround(f_train * n));
    std::size_t n_val = static_cast<std::size_t>(std::llround(f_val * n));
    n_train = std::min(n_train, scenes.size());
    n_val = std::min(n_val, scenes.size() - n_train);

    SplitResult out;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const Scene& s = scenes[order[k]];
        if (k < n_train)
            out.train.push_back(s);
        else if (k < n_train + n_val)
            out.val.push_back(s);
        else
            out.test.push_back(s);
    }
    return out;
}

}  // namespace smoothattn

#endif  // SMOOTHATTN_DATA_HPP
