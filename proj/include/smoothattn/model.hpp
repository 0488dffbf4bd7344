#ifndef SMOOTHATTN_MODEL_HPP
#define SMOOTHATTN_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "smoothattn/array.hpp"
#include "smoothattn/common.hpp"
#include "smoothattn/rng.hpp"
#include "smoothattn/scene.hpp"
#include "smoothattn/tape.hpp"

namespace smoothattn {

enum class RolloutSampling { Mean, Reparameterized };

struct ModelConfig {
    int embed_dim = 32;
    int hidden_dim = 64;
    int attn_dim = 32;
    RolloutSampling rollout_sampling = RolloutSampling::Reparameterized;

    void validate() const {
        check(embed_dim >= 1 && hidden_dim >= 1 && attn_dim >= 1,
              "ModelConfig: all dims must be >= 1");
    }
};

// Per-agent bivariate Gaussian in raw head parameterization. The covariance
// is positive definite by construction: sigma = exp(log_sigma), rho = tanh(c).
struct GaussianParams {
    double mu_x = 0.0, mu_y = 0.0;
    double log_sx = 0.0, log_sy = 0.0;
    double corr_raw = 0.0;

    double sigma_x() const { return std::exp(log_sx); }
    double sigma_y() const { return std::exp(log_sy); }
    double rho() const { return std::tanh(corr_raw); }
    double cov_xx() const { return sigma_x() * sigma_x(); }
    double cov_yy() const { return sigma_y() * sigma_y(); }
    double cov_xy() const { return rho() * sigma_x() * sigma_y(); }
};

// Prediction made at each step t for step t+1, for every agent.
struct GaussianGrid {
    int T = 0;
    int N = 0;
    std::vector<GaussianParams> g;

    GaussianGrid() = default;
    GaussianGrid(int t, int n) : T(t), N(n), g(static_cast<std::size_t>(t) * n) {}
    GaussianParams& at(int t, int i) { return g[static_cast<std::size_t>(t) * N + i]; }
    const GaussianParams& at(int t, int i) const { return g[static_cast<std::size_t>(t) * N + i]; }
};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

// All learnable weights: the five one-layer networks and the three gated
// recurrent cells, in a fixed iteration order used for init, checkpoints,
// gradients and the optimizer state alike.
struct ModelParams {
    std::vector<std::pair<std::string, Array>> tensors;

    Array& find(const std::string& name) {
        for (auto& [n, a] : tensors)
            if (n == name) return a;
        fail("ModelParams: unknown tensor '", name, "'");
    }
    const Array& find(const std::string& name) const {
        for (const auto& [n, a] : tensors)
            if (n == name) return a;
        fail("ModelParams: unknown tensor '", name, "'");
    }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& [name, a] : tensors) n += a.size();
        return n;
    }

    static std::vector<std::pair<std::string, std::vector<std::size_t>>> layout(
        const ModelConfig& cfg) {
        auto e = static_cast<std::size_t>(cfg.embed_dim);
        auto h = static_cast<std::size_t>(cfg.hidden_dim);
        auto a = static_cast<std::size_t>(cfg.attn_dim);
        std::size_t pred_in = e + 2 * h;  // state embedding + attended mix + self output
        return {
            {"interact.W", {4, e}},        {"interact.b", {e}},
            {"self.W", {4, e}},            {"self.b", {e}},
            {"embed.W", {2, e}},           {"embed.b", {e}},
            {"attn.W", {h, a}},            {"attn.b", {a}},
            {"rnn_interact.Wx", {e, 4 * h}}, {"rnn_interact.Wh", {h, 4 * h}}, {"rnn_interact.b", {4 * h}},
            {"rnn_self.Wx", {e, 4 * h}},     {"rnn_self.Wh", {h, 4 * h}},     {"rnn_self.b", {4 * h}},
            {"rnn_pred.Wx", {pred_in, 4 * h}}, {"rnn_pred.Wh", {h, 4 * h}},   {"rnn_pred.b", {4 * h}},
            {"pred.W", {h, 5}},            {"pred.b", {5}},
        };
    }

    static ModelParams zeros(const ModelConfig& cfg) {
        ModelParams p;
        for (auto& [name, shape] : layout(cfg)) p.tensors.emplace_back(name, Array::zeros(shape));
        return p;
    }

    // Xavier-uniform weights, zero biases.
    static ModelParams init(const ModelConfig& cfg, std::uint64_t seed) {
        ModelParams p;
        auto rng = make_stream(seed, "init");
        for (auto& [name, shape] : layout(cfg)) {
            Array a = Array::zeros(shape);
            bool is_bias = shape.size() == 1;
            if (!is_bias) {
                double fan_in = static_cast<double>(shape[0]);
                double fan_out = static_cast<double>(shape[1]);
                double bound = std::sqrt(6.0 / (fan_in + fan_out));
                std::uniform_real_distribution<double> dist(-bound, bound);
                for (double& v : a.data) v = dist(rng);
            }
            p.tensors.emplace_back(name, std::move(a));
        }
        return p;
    }
};

// Parameter tensors bound as leaves on one tape.
struct BoundParams {
    std::vector<std::pair<std::string, Var>> vars;

    Var operator[](const std::string& name) const {
        for (const auto& [n, v] : vars)
            if (n == name) return v;
        fail("BoundParams: unknown tensor '", name, "'");
    }

    static BoundParams bind(Tape& tape, const ModelParams& params) {
        BoundParams b;
        b.vars.reserve(params.tensors.size());
        for (const auto& [name, a] : params.tensors) b.vars.emplace_back(name, tape.leaf(a));
        return b;
    }

    // Gradients in the same order as ModelParams::tensors, after backward().
    std::vector<std::pair<std::string, Array>> gradients(Tape& tape) const {
        std::vector<std::pair<std::string, Array>> out;
        out.reserve(vars.size());
        for (const auto& [name, v] : vars) out.emplace_back(name, tape.grad(v.id));
        return out;
    }
};

// ---------------------------------------------------------------------------
// Recurrent cell
// ---------------------------------------------------------------------------

struct RecurrentVars {
    Var out;  // cell output fed downstream (equals the new hidden state)
    Var h;
    Var c;
};

// Single-layer gated recurrence with input, forget, output gates and a cell
// state, applied to a batch of rows at once. Gate order in the fused weight
// matrices is (input, forget, cell, output).
inline RecurrentVars lstm_step(Var x, Var h, Var c, Var Wx, Var Wh, Var b, int hidden) {
    auto hd = static_cast<std::size_t>(hidden);
    Var z = add(matmul(x, Wx), affine(h, Wh, b));
    Var gi = sigmoid(slice_cols(z, 0, hd));
    Var gf = sigmoid(slice_cols(z, hd, hd));
    Var gc = tanh(slice_cols(z, 2 * hd, hd));
    Var go = sigmoid(slice_cols(z, 3 * hd, hd));
    Var c2 = add(mul(gf, c), mul(gi, gc));
    Var h2 = mul(go, tanh(c2));
    return RecurrentVars{h2, h2, c2};
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

enum class ForwardMode { TeacherForced, RolloutMean, RolloutSample };

enum class AttnOverrideKind { None, Uniform, Oracle };

struct AttnOverride {
    AttnOverrideKind kind = AttnOverrideKind::None;
    const AttentionTensor* oracle = nullptr;
};

// Tape-level outputs of one sequence evaluation. Index t holds the
// quantities computed at input step t: the attention rows theta[t][i] and
// the Gaussian predicting step t+1.
struct SequenceResult {
    int T = 0;  // number of processed steps
    int N = 0;
    std::vector<Var> gauss;                // [T] each [N x 5]
    std::vector<std::vector<Var>> theta;   // [T][N] each [(N-1) x 1]
    std::vector<Var> input_states;         // [T] each [N x 2]
};

namespace detail {

inline void edge_index_lists(int n, std::vector<int>& tails, std::vector<int>& heads) {
    tails.clear();
    heads.clear();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (j != i) {
                tails.push_back(i);
                heads.push_back(j);
            }
}

inline Array state_array(const Scene& scene, int t) {
    int n = scene.num_agents();
    Array a = Array::zeros({static_cast<std::size_t>(n), 2});
    for (int i = 0; i < n; ++i) {
        a.data[2 * static_cast<std::size_t>(i)] = scene.at(t, i).x;
        a.data[2 * static_cast<std::size_t>(i) + 1] = scene.at(t, i).y;
    }
    return a;
}

}  // namespace detail

// Core sequence evaluation shared by teacher forcing, training rollout and
// inference. `steps` is the number of input steps to process. Ground truth
// feeds the first `truth_steps` inputs; beyond that the input state comes
// from the previous step's predicted Gaussian (mean or reparameterized
// sample). The scene is expected to be centered by the caller.
inline SequenceResult run_sequence(Tape& tape, const Scene& scene, const BoundParams& p,
                                   const ModelConfig& cfg, ForwardMode mode, int steps,
                                   const AttnOverride& ovr = {}, std::uint64_t seed = 0) {
    cfg.validate();
    int n = scene.num_agents();
    check(n >= 2, "run_sequence: need at least 2 agents");
    int truth_steps = (mode == ForwardMode::TeacherForced) ? steps : scene.t_obs;
    check(truth_steps >= 1, "run_sequence: need at least one observed step");
    check(scene.num_steps() >= truth_steps, "run_sequence: scene shorter than observed span");

    auto nu = static_cast<std::size_t>(n);
    auto e = static_cast<std::size_t>(n * (n - 1));
    auto hidden = static_cast<std::size_t>(cfg.hidden_dim);

    std::vector<int> tails, heads;
    detail::edge_index_lists(n, tails, heads);

    // Replication pattern: row r of the edge list belongs to tail agent
    // tails[r]; used to pair each edge feature with its agent's self feature.
    const std::vector<int>& self_rep = tails;

    Var eh = tape.leaf(Array::zeros({e, hidden}));
    Var ec = tape.leaf(Array::zeros({e, hidden}));
    Var sh = tape.leaf(Array::zeros({nu, hidden}));
    Var sc = tape.leaf(Array::zeros({nu, hidden}));
    Var ph = tape.leaf(Array::zeros({nu, hidden}));
    Var pc = tape.leaf(Array::zeros({nu, hidden}));

    Var w_int = p["interact.W"], b_int = p["interact.b"];
    Var w_self = p["self.W"], b_self = p["self.b"];
    Var w_emb = p["embed.W"], b_emb = p["embed.b"];
    Var w_attn = p["attn.W"], b_attn = p["attn.b"];
    Var iwx = p["rnn_interact.Wx"], iwh = p["rnn_interact.Wh"], ib = p["rnn_interact.b"];
    Var swx = p["rnn_self.Wx"], swh = p["rnn_self.Wh"], sb = p["rnn_self.b"];
    Var pwx = p["rnn_pred.Wx"], pwh = p["rnn_pred.Wh"], pb = p["rnn_pred.b"];
    Var w_pred = p["pred.W"], b_pred = p["pred.b"];

    Var one = tape.constant(1.0);

    // Per-agent noise streams keyed by agent id, so a relabeling of the cast
    // moves each agent's draws with it.
    std::vector<std::mt19937_64> noise;
    if (mode == ForwardMode::RolloutSample)
        for (int i = 0; i < n; ++i)
            noise.push_back(make_stream(seed, "rollout", scene.agent_ids[static_cast<std::size_t>(i)]));
    std::normal_distribution<double> stdnorm(0.0, 1.0);

    SequenceResult res;
    res.T = steps;
    res.N = n;
    res.gauss.reserve(static_cast<std::size_t>(steps));
    res.theta.reserve(static_cast<std::size_t>(steps));
    res.input_states.reserve(static_cast<std::size_t>(steps));

    Var prev_state{};  // input state at t-1 (as consumed then)
    for (int t = 0; t < steps; ++t) {
        Var state{};
        if (t < truth_steps) {
            state = tape.leaf(detail::state_array(scene, t));
        } else {
            Var g = res.gauss[static_cast<std::size_t>(t - 1)];
            Var mu = slice_cols(g, 0, 2);
            if (mode == ForwardMode::RolloutSample) {
                Var sx = exp(slice_cols(g, 2, 1));
                Var sy = exp(slice_cols(g, 3, 1));
                Var rho = tanh(slice_cols(g, 4, 1));
                for (int i = 0; i < n; ++i) {
                    double r = rho.val().data[static_cast<std::size_t>(i)];
                    if (!(1.0 - r * r > 0.0) || !std::isfinite(sx.val().data[static_cast<std::size_t>(i)]) ||
                        !std::isfinite(sy.val().data[static_cast<std::size_t>(i)]))
                        fail("rollout: covariance not positive definite at step ", t + 1,
                             " agent ", i);
                }
                Array e1 = Array::zeros({nu, 1});
                Array e2 = Array::zeros({nu, 1});
                for (int i = 0; i < n; ++i) {
                    e1.data[static_cast<std::size_t>(i)] = stdnorm(noise[static_cast<std::size_t>(i)]);
                    e2.data[static_cast<std::size_t>(i)] = stdnorm(noise[static_cast<std::size_t>(i)]);
                }
                Var eps1 = tape.leaf(std::move(e1));
                Var eps2 = tape.leaf(std::move(e2));
                // Cholesky of [[sx^2, r sx sy], [r sx sy, sy^2]]:
                // x = mu_x + sx e1, y = mu_y + sy (r e1 + sqrt(1-r^2) e2)
                Var px = add(slice_cols(mu, 0, 1), mul(sx, eps1));
                Var tail_y = add(mul(rho, eps1), mul(sqrt(sub(one, square(rho))), eps2));
                Var py = add(slice_cols(mu, 1, 1), mul(sy, tail_y));
                state = concat({px, py}, 1);
            } else {
                state = mu;
            }
        }
        Var sprev = (t == 0) ? state : prev_state;

        // Edge and self-loop embeddings (Eq. 1-2 shapes).
        Var edge_in = concat({gather_rows(state, tails), gather_rows(state, heads)}, 1);
        Var x_edge = tanh(affine(edge_in, w_int, b_int));
        Var self_in = concat({sprev, state}, 1);
        Var x_self = tanh(affine(self_in, w_self, b_self));

        RecurrentVars er = lstm_step(x_edge, eh, ec, iwx, iwh, ib, cfg.hidden_dim);
        eh = er.h;
        ec = er.c;
        RecurrentVars sr = lstm_step(x_self, sh, sc, swx, swh, sb, cfg.hidden_dim);
        sh = sr.h;
        sc = sr.c;

        // Attention of each agent over the other agents.
        std::vector<Var> theta_rows;
        theta_rows.reserve(nu);
        if (ovr.kind == AttnOverrideKind::None) {
            Var self_feat = tanh(affine(sr.out, w_attn, b_attn));
            Var edge_feat = tanh(affine(er.out, w_attn, b_attn));
            Var logits = rowsum(mul(edge_feat, gather_rows(self_feat, self_rep)));
            for (int i = 0; i < n; ++i) {
                Var li = slice_rows(logits, static_cast<std::size_t>(i) * (nu - 1), nu - 1);
                theta_rows.push_back(softmax(li));
            }
        } else if (ovr.kind == AttnOverrideKind::Uniform) {
            for (int i = 0; i < n; ++i)
                theta_rows.push_back(tape.leaf(Array::full({nu - 1, 1}, 1.0 / static_cast<double>(n - 1))));
        } else {
            check(ovr.oracle != nullptr, "run_sequence: oracle attention override without oracle");
            check(ovr.oracle->T > t && ovr.oracle->N == n,
                  "run_sequence: oracle attention does not cover step ", t);
            for (int i = 0; i < n; ++i) {
                Array row = Array::zeros({nu - 1, 1});
                for (int k = 0; k + 1 < n; ++k) row.data[static_cast<std::size_t>(k)] = ovr.oracle->at(t, i, k);
                theta_rows.push_back(tape.leaf(std::move(row)));
            }
        }

        std::vector<Var> attended_rows;
        attended_rows.reserve(nu);
        for (int i = 0; i < n; ++i) {
            Var block = slice_rows(er.out, static_cast<std::size_t>(i) * (nu - 1), nu - 1);
            attended_rows.push_back(attention_mix(theta_rows[static_cast<std::size_t>(i)], block));
        }
        Var attended = concat(attended_rows, 0);

        // Prediction stream: embedded state, attended interactions, self output.
        Var s_emb = tanh(affine(state, w_emb, b_emb));
        Var pred_in = concat({s_emb, attended, sr.out}, 1);
        RecurrentVars pr = lstm_step(pred_in, ph, pc, pwx, pwh, pb, cfg.hidden_dim);
        ph = pr.h;
        pc = pr.c;
        Var gauss_t = affine(pr.out, w_pred, b_pred);

        res.gauss.push_back(gauss_t);
        res.theta.push_back(std::move(theta_rows));
        res.input_states.push_back(state);
        prev_state = state;
    }
    return res;
}

// Teacher forcing: ground-truth inputs at every step; one Gaussian per agent
// per step and the full attention record.
inline SequenceResult forward_teacher_forced(Tape& tape, const Scene& scene,
                                             const BoundParams& p, const ModelConfig& cfg,
                                             const AttnOverride& ovr = {}) {
    scene.validate();
    return run_sequence(tape, scene, p, cfg, ForwardMode::TeacherForced, scene.num_steps(), ovr);
}

// Simulated test-phase prediction: ground truth up to t_obs, then the model's
// own sampled (or mean) predictions feed back as inputs.
inline SequenceResult rollout(Tape& tape, const Scene& scene, const BoundParams& p,
                              const ModelConfig& cfg, std::uint64_t seed,
                              const AttnOverride& ovr = {}) {
    scene.validate();
    ForwardMode m = cfg.rollout_sampling == RolloutSampling::Reparameterized
                        ? ForwardMode::RolloutSample
                        : ForwardMode::RolloutMean;
    return run_sequence(tape, scene, p, cfg, m, scene.num_steps(), ovr, seed);
}

// ---------------------------------------------------------------------------
// Value extraction
// ---------------------------------------------------------------------------

inline GaussianGrid extract_gaussians(const SequenceResult& r) {
    GaussianGrid g(r.T, r.N);
    for (int t = 0; t < r.T; ++t) {
        const Array& a = r.gauss[static_cast<std::size_t>(t)].val();
        for (int i = 0; i < r.N; ++i) {
            GaussianParams& gp = g.at(t, i);
            gp.mu_x = a.at(static_cast<std::size_t>(i), 0);
            gp.mu_y = a.at(static_cast<std::size_t>(i), 1);
            gp.log_sx = a.at(static_cast<std::size_t>(i), 2);
            gp.log_sy = a.at(static_cast<std::size_t>(i), 3);
            gp.corr_raw = a.at(static_cast<std::size_t>(i), 4);
        }
    }
    return g;
}

inline AttentionTensor extract_attention(const SequenceResult& r) {
    AttentionTensor th(r.T, r.N);
    for (int t = 0; t < r.T; ++t)
        for (int i = 0; i < r.N; ++i) {
            const Array& row = r.theta[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)].val();
            for (int k = 0; k + 1 < r.N; ++k) th.at(t, i, k) = row.data[static_cast<std::size_t>(k)];
        }
    return th;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

struct PredictResult {
    int horizon = 0;
    int N = 0;
    std::vector<AgentState> traj;  // [horizon x N], in the input frame
    AttentionTensor attention;     // rows for every processed input step

    AgentState& at(int k, int i) { return traj[static_cast<std::size_t>(k) * N + i]; }
    const AgentState& at(int k, int i) const { return traj[static_cast<std::size_t>(k) * N + i]; }
};

// Inference-mode prediction: consumes the first scene.t_obs steps as the
// observed prefix and rolls the model forward `horizon` steps by mean
// propagation.
inline PredictResult predict(const Scene& scene, int horizon, const ModelParams& params,
                             const ModelConfig& cfg, const AttnOverride& ovr = {}) {
    check(horizon >= 1, "predict: horizon must be >= 1, got ", horizon);
    check(scene.t_obs >= 2, "predict: observed prefix needs >= 2 steps, got ", scene.t_obs);
    check(scene.num_steps() >= scene.t_obs, "predict: scene shorter than its observed span");
    int n = scene.num_agents();
    check(n >= 2, "predict: need at least 2 agents");

    AgentState c = scene.first_step_centroid();
    Scene centered = scene.centered();

    Tape tape;
    BoundParams bound = BoundParams::bind(tape, params);
    int steps = scene.t_obs + horizon - 1;
    SequenceResult r =
        run_sequence(tape, centered, bound, cfg, ForwardMode::RolloutMean, steps, ovr);

    PredictResult out;
    out.horizon = horizon;
    out.N = n;
    out.traj.resize(static_cast<std::size_t>(horizon) * static_cast<std::size_t>(n));
    for (int k = 0; k < horizon; ++k) {
        const Array& g = r.gauss[static_cast<std::size_t>(scene.t_obs - 1 + k)].val();
        for (int i = 0; i < n; ++i) {
            out.at(k, i).x = g.at(static_cast<std::size_t>(i), 0) + c.x;
            out.at(k, i).y = g.at(static_cast<std::size_t>(i), 1) + c.y;
        }
    }
    out.attention = extract_attention(r);
    return out;
}

}  // namespace smoothattn

#endif  // SMOOTHATTN_MODEL_HPP
