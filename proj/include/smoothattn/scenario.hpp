#ifndef SMOOTHATTN_SCENARIO_HPP
#define SMOOTHATTN_SCENARIO_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "smoothattn/common.hpp"
#include "smoothattn/rng.hpp"
#include "smoothattn/scene.hpp"

namespace smoothattn {

// Scene units are decameters (1 unit = 10 m) on a 0.1 s step, so a typical
// road speed of ~10 m/s moves ~0.1 units per step and a 40-step episode
// stays within a few units of the origin after centering.
inline constexpr double kDt = 0.1;              // seconds per step
inline constexpr double kLaneWidth = 0.35;      // 3.5 m
inline constexpr double kSafetyRadius = 0.2;    // 2 m minimum separation
inline constexpr int kDefaultSteps = 40;
inline constexpr int kDefaultObserved = 15;
inline constexpr int kDefaultBackground = 20;

enum class ScenarioKind { DoubleMerge, HaltingCar };

inline const char* scenario_name(ScenarioKind k) {
    return k == ScenarioKind::DoubleMerge ? "double_merge" : "halting_car";
}

inline ScenarioKind parse_scenario(const std::string& s) {
    for (ScenarioKind k : {ScenarioKind::DoubleMerge, ScenarioKind::HaltingCar})
        if (s == scenario_name(k)) return k;
    fail("unknown scenario '", s, "' (expected 'double_merge' or 'halting_car')");
}

// One generated episode: the scene, its case label, the scenario-defined
// oracle attention (main vehicles fully attend to each other, everything
// else uniform), and the step window in which the interaction is active.
struct ScenarioSample {
    Scene scene;
    std::string case_label;                 // major | minor | stop | go
    AttentionTensor correct_attention;
    int highlight_begin = 0;                // [begin, end) step range
    int highlight_end = 0;
    int rear_main_index = 0;                // agent slot of the yielding/following vehicle
    int front_main_index = 0;

    bool has_oracle() const { return correct_attention.T > 0; }
};

namespace detail {

// Time-constant oracle: each of the two main agents puts all mass on the
// other main agent; every other row is uniform over the N-1 others.
inline AttentionTensor oracle_attention(int T, int N, int main_a, int main_b) {
    AttentionTensor th(T, N);
    double u = 1.0 / static_cast<double>(N - 1);
    for (int t = 0; t < T; ++t)
        for (int i = 0; i < N; ++i) {
            if (i == main_a) {
                th.at(t, i, AttentionTensor::compact_index(i, main_b)) = 1.0;
            } else if (i == main_b) {
                th.at(t, i, AttentionTensor::compact_index(i, main_a)) = 1.0;
            } else {
                for (int k = 0; k + 1 < N; ++k) th.at(t, i, k) = u;
            }
        }
    return th;
}

// Cubic ease 0 -> 1 with zero slope at both ends.
inline double ease(double u) {
    u = std::clamp(u, 0.0, 1.0);
    return u * u * (3.0 - 2.0 * u);
}

// Lateral profile of a lane change from x0 to x1 over [begin, begin+dur).
inline double lane_change_x(int t, double x0, double x1, int begin, int dur) {
    if (t < begin) return x0;
    if (t >= begin + dur) return x1;
    return x0 + (x1 - x0) * ease(static_cast<double>(t - begin) / static_cast<double>(dur));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Double Merge: two main vehicles in the two inner lanes swap lanes; the
// rear one waits until the front one has finished its change before starting
// its own. Background traffic drives straight on the two outer lanes.
// Case 'minor': the left (lane-1) main vehicle is ahead; 'major': the right.
// ---------------------------------------------------------------------------

inline ScenarioSample gen_double_merge(const std::string& case_label, std::uint64_t seed,
                                       int background_count = kDefaultBackground,
                                       int T = kDefaultSteps, int t_obs = kDefaultObserved) {
    check(case_label == "major" || case_label == "minor",
          "gen_double_merge: case must be 'major' or 'minor', got '", case_label, "'");
    check(background_count >= 0 && T >= 4 && t_obs >= 1 && t_obs < T,
          "gen_double_merge: invalid geometry (background ", background_count, ", T ", T,
          ", t_obs ", t_obs, ")");
    auto rng = make_stream(seed, case_label == "major" ? "double_merge/major"
                                                       : "double_merge/minor");
    std::uniform_real_distribution<double> out_speed(0.08, 0.12);
    std::uniform_real_distribution<double> main_speed(0.09, 0.11);
    std::uniform_real_distribution<double> main_gap(0.4, 0.6);
    std::uniform_real_distribution<double> base_jitter(0.0, 0.2);

    // Lane centers, left to right; mains on lanes 1 and 2.
    const double lx[4] = {0.0, kLaneWidth, 2.0 * kLaneWidth, 3.0 * kLaneWidth};
    double v_left = out_speed(rng);
    double v_right = out_speed(rng);
    double v_main = main_speed(rng);
    double gap = main_gap(rng);

    bool left_ahead = case_label == "minor";
    // Agent 0 is the left main (lane 1 -> 2), agent 1 the right (lane 2 -> 1).
    double y0_left = left_ahead ? gap : 0.0;
    double y0_right = left_ahead ? 0.0 : gap;

    // The front vehicle changes lanes first; the rear starts strictly after
    // the front has completed.
    const int dur = 10;
    const int front_begin = 5;
    const int rear_begin = front_begin + dur + 2;
    int left_begin = left_ahead ? front_begin : rear_begin;
    int right_begin = left_ahead ? rear_begin : front_begin;

    int n = 2 + background_count;
    Scene scene;
    scene.id = std::string("double_merge/") + case_label + "/" + std::to_string(seed);
    scene.t_obs = t_obs;
    scene.agent_ids = {1, 2};
    scene.states.assign(static_cast<std::size_t>(T) * static_cast<std::size_t>(n), AgentState{});

    for (int t = 0; t < T; ++t) {
        scene.states[static_cast<std::size_t>(t) * n + 0] =
            AgentState{detail::lane_change_x(t, lx[1], lx[2], left_begin, dur),
                       y0_left + v_main * t};
        scene.states[static_cast<std::size_t>(t) * n + 1] =
            AgentState{detail::lane_change_x(t, lx[2], lx[1], right_begin, dur),
                       y0_right + v_main * t};
    }

    // Background: half on the far-left lane, half on the far-right.
    int nb_left = background_count / 2;
    int nb_right = background_count - nb_left;
    std::uniform_real_distribution<double> bgap(0.55, 0.75);
    double y_base_l = -2.2 + base_jitter(rng);
    for (int j = 0; j < nb_left; ++j) {
        y_base_l += bgap(rng);
        int slot = 2 + j;
        scene.agent_ids.push_back(100 + static_cast<std::uint64_t>(j));
        for (int t = 0; t < T; ++t)
            scene.states[static_cast<std::size_t>(t) * n + slot] =
                AgentState{lx[0], y_base_l + v_left * t};
    }
    double y_base_r = -2.2 + base_jitter(rng);
    for (int j = 0; j < nb_right; ++j) {
        y_base_r += bgap(rng);
        int slot = 2 + nb_left + j;
        scene.agent_ids.push_back(200 + static_cast<std::uint64_t>(j));
        for (int t = 0; t < T; ++t)
            scene.states[static_cast<std::size_t>(t) * n + slot] =
                AgentState{lx[3], y_base_r + v_right * t};
    }
    scene.validate();

    ScenarioSample s;
    s.scene = std::move(scene);
    s.case_label = case_label;
    s.correct_attention = detail::oracle_attention(T, n, 0, 1);
    s.highlight_begin = front_begin;
    s.highlight_end = rear_begin + dur;
    s.front_main_index = left_ahead ? 0 : 1;
    s.rear_main_index = left_ahead ? 1 : 0;
    return s;
}

// ---------------------------------------------------------------------------
// Halting Car: a leader and a follower share an inner lane. In the 'stop'
// case the leader brakes to a halt and accelerates back; in 'go' it cruises.
// The follower's speed depends on its distance to the leader, so it halts
// and restarts in response. Background traffic as in Double Merge.
// ---------------------------------------------------------------------------

inline ScenarioSample gen_halting_car(const std::string& case_label, std::uint64_t seed,
                                      int background_count = kDefaultBackground,
                                      int T = kDefaultSteps, int t_obs = kDefaultObserved) {
    check(case_label == "stop" || case_label == "go",
          "gen_halting_car: case must be 'stop' or 'go', got '", case_label, "'");
    check(background_count >= 0 && T >= 4 && t_obs >= 1 && t_obs < T,
          "gen_halting_car: invalid geometry (background ", background_count, ", T ", T,
          ", t_obs ", t_obs, ")");
    auto rng = make_stream(seed, case_label == "stop" ? "halting_car/stop" : "halting_car/go");
    std::uniform_real_distribution<double> out_speed(0.08, 0.12);
    std::uniform_real_distribution<double> lead_speed(0.09, 0.11);
    std::uniform_real_distribution<double> follow_gap(0.6, 0.8);
    std::uniform_real_distribution<double> base_jitter(0.0, 0.2);

    const double lx[4] = {0.0, kLaneWidth, 2.0 * kLaneWidth, 3.0 * kLaneWidth};
    double v_left = out_speed(rng);
    double v_right = out_speed(rng);
    double v_lead = lead_speed(rng);
    double gap0 = follow_gap(rng);

    // Leader speed profile: cruise, brake to zero, hold, accelerate back.
    const int brake_begin = 10, brake_end = 18, hold_end = 26, accel_end = 34;
    auto leader_speed = [&](int t) {
        if (case_label == "go") return v_lead;
        if (t < brake_begin) return v_lead;
        if (t < brake_end)
            return v_lead * (1.0 - static_cast<double>(t - brake_begin) /
                                       static_cast<double>(brake_end - brake_begin));
        if (t < hold_end) return 0.0;
        if (t < accel_end)
            return v_lead * (static_cast<double>(t - hold_end) /
                             static_cast<double>(accel_end - hold_end));
        return v_lead;
    };

    // Follower: proportional response to headway above a safe distance,
    // capped slightly above the leader's cruise speed.
    const double gap_safe = 0.25;
    const double response_steps = 3.0;
    const double v_cap = 1.25 * v_lead;

    int n = 2 + background_count;
    Scene scene;
    scene.id = std::string("halting_car/") + case_label + "/" + std::to_string(seed);
    scene.t_obs = t_obs;
    scene.agent_ids = {1, 2};
    scene.states.assign(static_cast<std::size_t>(T) * static_cast<std::size_t>(n), AgentState{});

    double y_lead = gap0, y_follow = 0.0;
    for (int t = 0; t < T; ++t) {
        scene.states[static_cast<std::size_t>(t) * n + 0] = AgentState{lx[1], y_lead};
        scene.states[static_cast<std::size_t>(t) * n + 1] = AgentState{lx[1], y_follow};
        double vf = std::clamp((y_lead - y_follow - gap_safe) / response_steps, 0.0, v_cap);
        y_lead += leader_speed(t);
        y_follow += vf;
    }

    int nb_left = background_count / 2;
    int nb_right = background_count - nb_left;
    std::uniform_real_distribution<double> bgap(0.55, 0.75);
    double y_base_l = -2.2 + base_jitter(rng);
    for (int j = 0; j < nb_left; ++j) {
        y_base_l += bgap(rng);
        int slot = 2 + j;
        scene.agent_ids.push_back(100 + static_cast<std::uint64_t>(j));
        for (int t = 0; t < T; ++t)
            scene.states[static_cast<std::size_t>(t) * n + slot] =
                AgentState{lx[0], y_base_l + v_left * t};
    }
    double y_base_r = -2.2 + base_jitter(rng);
    for (int j = 0; j < nb_right; ++j) {
        y_base_r += bgap(rng);
        int slot = 2 + nb_left + j;
        scene.agent_ids.push_back(200 + static_cast<std::uint64_t>(j));
        for (int t = 0; t < T; ++t)
            scene.states[static_cast<std::size_t>(t) * n + slot] =
                AgentState{lx[3], y_base_r + v_right * t};
    }
    scene.validate();

    ScenarioSample s;
    s.scene = std::move(scene);
    s.case_label = case_label;
    s.correct_attention = detail::oracle_attention(T, n, 0, 1);
    s.highlight_begin = brake_begin;
    s.highlight_end = accel_end;
    s.front_main_index = 0;  // leader
    s.rear_main_index = 1;   // follower
    return s;
}

inline ScenarioSample gen_scenario(ScenarioKind kind, const std::string& case_label,
                                   std::uint64_t seed, int background_count = kDefaultBackground,
                                   int T = kDefaultSteps, int t_obs = kDefaultObserved) {
    return kind == ScenarioKind::DoubleMerge
               ? gen_double_merge(case_label, seed, background_count, T, t_obs)
               : gen_halting_car(case_label, seed, background_count, T, t_obs);
}

// The data-rich ("major") and data-scarce ("minor") case labels of each
// scenario; for Halting Car the sudden-stop episodes are the majority class.
inline std::string major_label(ScenarioKind k) {
    return k == ScenarioKind::DoubleMerge ? "major" : "stop";
}
inline std::string minor_label(ScenarioKind k) {
    return k == ScenarioKind::DoubleMerge ? "minor" : "go";
}

// ---------------------------------------------------------------------------
// Dataset assembly
// ---------------------------------------------------------------------------

struct DatasetBundle {
    ScenarioKind kind = ScenarioKind::DoubleMerge;
    int major_count = 0;
    int minor_count = 0;
    double minor_ratio = 0.0;
    std::uint64_t seed = 0;
    int background_count = kDefaultBackground;
    std::vector<ScenarioSample> train, val, test;
};

// Deterministic dataset: `major_count` majority-case and
// round(major_count * minor_ratio) minority-case training trajectories,
// split 80/20 into train/val, plus `test_per_case` fresh test trajectories
// of each case drawn from disjoint seed streams.
inline DatasetBundle build_dataset(ScenarioKind kind, int major_count, double minor_ratio,
                                   std::uint64_t seed, int background_count = kDefaultBackground,
                                   int test_per_case = 50, int T = kDefaultSteps,
                                   int t_obs = kDefaultObserved) {
    check(major_count >= 1, "build_dataset: major_count must be >= 1, got ", major_count);
    check(minor_ratio > 0.0 && minor_ratio <= 1.0,
          "build_dataset: minor_ratio must lie in (0, 1], got ", minor_ratio);
    check(test_per_case >= 1, "build_dataset: test_per_case must be >= 1, got ", test_per_case);

    DatasetBundle d;
    d.kind = kind;
    d.major_count = major_count;
    d.minor_count = std::max(1, static_cast<int>(std::llround(major_count * minor_ratio)));
    d.minor_ratio = minor_ratio;
    d.seed = seed;
    d.background_count = background_count;

    std::vector<ScenarioSample> pool;
    pool.reserve(static_cast<std::size_t>(d.major_count + d.minor_count));
    for (int k = 0; k < d.major_count; ++k)
        pool.push_back(gen_scenario(kind, major_label(kind),
                                    derive_seed(seed, "train-major", static_cast<std::uint64_t>(k)),
                                    background_count, T, t_obs));
    for (int k = 0; k < d.minor_count; ++k)
        pool.push_back(gen_scenario(kind, minor_label(kind),
                                    derive_seed(seed, "train-minor", static_cast<std::uint64_t>(k)),
                                    background_count, T, t_obs));

    // 20% of the pool (at least one scene) becomes validation.
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    auto shuffle_rng = make_stream(seed, "val-split");
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    std::size_t n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(pool.size()))));
    n_val = std::min(n_val, pool.size() - 1);
    std::vector<char> is_val(pool.size(), 0);
    for (std::size_t k = 0; k < n_val; ++k) is_val[order[k]] = 1;
    for (std::size_t k = 0; k < pool.size(); ++k)
        (is_val[k] ? d.val : d.train).push_back(std::move(pool[k]));

    for (int k = 0; k < test_per_case; ++k)
        d.test.push_back(gen_scenario(kind, major_label(kind),
                                      derive_seed(seed, "test-major", static_cast<std::uint64_t>(k)),
                                      background_count, T, t_obs));
    for (int k = 0; k < test_per_case; ++k)
        d.test.push_back(gen_scenario(kind, minor_label(kind),
                                      derive_seed(seed, "test-minor", static_cast<std::uint64_t>(k)),
                                      background_count, T, t_obs));
    return d;
}

}  // namespace smoothattn

#endif  // SMOOTHATTN_SCENARIO_HPP
