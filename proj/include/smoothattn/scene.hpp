#ifndef SMOOTHATTN_SCENE_HPP
#define SMOOTHATTN_SCENE_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "smoothattn/common.hpp"

namespace smoothattn {

struct AgentState {
    double x = 0.0;
    double y = 0.0;
};

// A fixed-cast multi-agent episode: per-step 2D states for N agents over T
// steps. The first `t_obs` steps are observed; the rest are to be predicted.
struct Scene {
    std::string id;
    std::vector<std::uint64_t> agent_ids;      // N labels
    std::vector<AgentState> states;            // row-major [T x N]
    int t_obs = 0;

    int num_agents() const { return static_cast<int>(agent_ids.size()); }
    int num_steps() const {
        return agent_ids.empty() ? 0 : static_cast<int>(states.size() / agent_ids.size());
    }

    AgentState& at(int t, int i) { return states[static_cast<std::size_t>(t) * agent_ids.size() + static_cast<std::size_t>(i)]; }
    const AgentState& at(int t, int i) const {
        return states[static_cast<std::size_t>(t) * agent_ids.size() + static_cast<std::size_t>(i)];
    }

    void validate() const {
        int n = num_agents();
        int tt = num_steps();
        check(n >= 2, "Scene '", id, "': needs at least 2 agents, got ", n);
        check(states.size() == static_cast<std::size_t>(n) * static_cast<std::size_t>(tt),
              "Scene '", id, "': ragged state grid");
        check(t_obs >= 1 && t_obs < tt, "Scene '", id, "': t_obs ", t_obs,
              " must satisfy 1 <= t_obs < T = ", tt);
        for (const AgentState& s : states)
            check(std::isfinite(s.x) && std::isfinite(s.y), "Scene '", id,
                  "': non-finite coordinate");
    }

    // Centroid of the first step, the offset removed by centered(). Summed in
    // value order so agent relabeling cannot perturb the last bits.
    AgentState first_step_centroid() const {
        int n = num_agents();
        std::vector<double> xs(static_cast<std::size_t>(n)), ys(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            xs[static_cast<std::size_t>(i)] = at(0, i).x;
            ys[static_cast<std::size_t>(i)] = at(0, i).y;
        }
        return AgentState{sorted_sum(std::move(xs)) / n, sorted_sum(std::move(ys)) / n};
    }

    // Copy translated so the centroid of all agents at the first step is the
    // origin; removes the scene-offset nuisance before the model sees it.
    Scene centered() const {
        Scene out = *this;
        AgentState c = first_step_centroid();
        for (AgentState& s : out.states) {
            s.x -= c.x;
            s.y -= c.y;
        }
        return out;
    }

    // Relabel agents: new position p holds old agent perm[p].
    Scene permuted(const std::vector<int>& perm) const {
        int n = num_agents();
        int tt = num_steps();
        check(static_cast<int>(perm.size()) == n, "Scene::permuted: bad permutation size");
        Scene out;
        out.id = id;
        out.t_obs = t_obs;
        out.agent_ids.resize(static_cast<std::size_t>(n));
        out.states.resize(states.size());
        for (int p = 0; p < n; ++p) out.agent_ids[static_cast<std::size_t>(p)] = agent_ids[static_cast<std::size_t>(perm[static_cast<std::size_t>(p)])];
        for (int t = 0; t < tt; ++t)
            for (int p = 0; p < n; ++p) out.at(t, p) = at(t, perm[static_cast<std::size_t>(p)]);
        return out;
    }
};

// Per-step categorical attention of each agent over the other N-1 agents,
// stored compactly: entry (t, i, k) is agent i's weight on the k-th other
// agent (others enumerated in index order, skipping i).
struct AttentionTensor {
    int T = 0;
    int N = 0;
    std::vector<double> w;  // [T x N x (N-1)]

    AttentionTensor() = default;
    AttentionTensor(int t, int n) : T(t), N(n), w(static_cast<std::size_t>(t) * n * (n - 1), 0.0) {}

    double& at(int t, int i, int k) {
        return w[(static_cast<std::size_t>(t) * N + i) * (N - 1) + k];
    }
    double at(int t, int i, int k) const {
        return w[(static_cast<std::size_t>(t) * N + i) * (N - 1) + k];
    }

    // Compact column index of agent j in the row of agent i.
    static int compact_index(int i, int j) { return j < i ? j : j - 1; }

    double at_pair(int t, int i, int j) const { return at(t, i, compact_index(i, j)); }
};

}  // namespace smoothattn

#endif  // SMOOTHATTN_SCENE_HPP
