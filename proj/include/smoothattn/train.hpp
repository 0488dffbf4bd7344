#ifndef SMOOTHATTN_TRAIN_HPP
#define SMOOTHATTN_TRAIN_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "smoothattn/common.hpp"
#include "smoothattn/losses.hpp"
#include "smoothattn/metrics.hpp"
#include "smoothattn/model.hpp"
#include "smoothattn/rng.hpp"
#include "smoothattn/scenario.hpp"

namespace smoothattn {

struct AdamConfig {
    double b1 = 0.9;
    double b2 = 0.999;
    double eps = 1e-8;
};

struct TrainConfig {
    double learning_rate = 0.001;
    double tau = 0.001;             // variance penalty threshold
    double beta1_var = 0.01;        // weight of the variance terms
    double beta2_smooth = 0.01;     // weight of the smoothness terms
    int batch_size = 8;
    int epochs = 200;
    std::uint64_t seed = 1;
    Variant variant = Variant::Ours;
    AdamConfig adam;
    RolloutSampling rollout_sampling = RolloutSampling::Reparameterized;
    double grad_clip = 0.0;         // global-norm clip; 0 disables

    void validate() const {
        check(learning_rate > 0.0, "TrainConfig: learning_rate must be > 0");
        check(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
        check(epochs >= 1, "TrainConfig: epochs must be >= 1");
        check(tau > 0.0, "TrainConfig: tau must be > 0");
    }
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
    std::vector<std::pair<std::string, Array>> m, v;
    long t = 0;

    static AdamState like(const ModelParams& p) {
        AdamState s;
        for (const auto& [name, a] : p.tensors) {
            s.m.emplace_back(name, Array::zeros(a.shape));
            s.v.emplace_back(name, Array::zeros(a.shape));
        }
        return s;
    }
};

// One bias-corrected Adam update in place.
inline void adam_step(ModelParams& params,
                      const std::vector<std::pair<std::string, Array>>& grads,
                      AdamState& st, double lr, const AdamConfig& cfg) {
    check(grads.size() == params.tensors.size(), "adam_step: ", grads.size(),
          " gradients for ", params.tensors.size(), " tensors");
    st.t += 1;
    double c1 = 1.0 - std::pow(cfg.b1, static_cast<double>(st.t));
    double c2 = 1.0 - std::pow(cfg.b2, static_cast<double>(st.t));
    for (std::size_t k = 0; k < params.tensors.size(); ++k) {
        auto& [name, p] = params.tensors[k];
        const auto& [gname, g] = grads[k];
        check(gname == name && g.same_shape(p), "adam_step: gradient ", k, " ('", gname,
              "') does not match tensor '", name, "'");
        Array& m = st.m[k].second;
        Array& v = st.v[k].second;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m.data[i] = cfg.b1 * m.data[i] + (1.0 - cfg.b1) * g.data[i];
            v.data[i] = cfg.b2 * v.data[i] + (1.0 - cfg.b2) * g.data[i] * g.data[i];
            double mh = m.data[i] / c1;
            double vh = v.data[i] / c2;
            p.data[i] -= lr * mh / (std::sqrt(vh) + cfg.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Training log
// ---------------------------------------------------------------------------

struct TrainLog {
    struct StepRow {
        long step = 0;
        LossBreakdown loss;
    };
    struct EpochRow {
        int epoch = 0;
        double val_ade = 0.0;
        bool improved = false;
    };
    std::vector<StepRow> steps;
    std::vector<EpochRow> epochs;
    int best_epoch = -1;
    double best_val_ade = std::numeric_limits<double>::infinity();

    // steps.csv: one LossBreakdown row per optimizer step.
    void save_steps_csv(const std::string& path) const {
        std::ofstream out(path);
        check(out.good(), "TrainLog: cannot open '", path, "' for writing");
        out << "step,likelihood_one_step,likelihood_seq,var_one_step,var_seq,"
               "smooth_one_step,smooth_seq,total\n";
        char buf[512];
        for (const StepRow& r : steps) {
            std::snprintf(buf, sizeof(buf),
                          "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step,
                          r.loss.likelihood_one_step, r.loss.likelihood_seq,
                          r.loss.var_one_step, r.loss.var_seq, r.loss.smooth_one_step,
                          r.loss.smooth_seq, r.loss.total);
            out << buf;
        }
        check(out.good(), "TrainLog: write failure on '", path, "'");
    }

    void save_validation_csv(const std::string& path) const {
        std::ofstream out(path);
        check(out.good(), "TrainLog: cannot open '", path, "' for writing");
        out << "epoch,val_ade,improved\n";
        char buf[128];
        for (const EpochRow& r : epochs) {
            std::snprintf(buf, sizeof(buf), "%d,%.17g,%d\n", r.epoch, r.val_ade,
                          r.improved ? 1 : 0);
            out << buf;
        }
        check(out.good(), "TrainLog: write failure on '", path, "'");
    }
};

// Optional training observers (not part of the persisted config).
struct TrainHooks {
    // Called after each forward pass with the teacher-forced and (when the
    // variant runs one) rollout results, before backward.
    std::function<void(const Scene&, const SequenceResult&, const SequenceResult*)> on_forward;
};

struct TrainOutcome {
    ModelParams best;    // parameters at the best validation ADE
    ModelParams final;   // parameters after the last step
    TrainLog log;
};

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace detail {

inline double validation_ade(const std::vector<ScenarioSample>& val, const ModelParams& p,
                             const ModelConfig& cfg, Variant v) {
    double acc = 0.0;
    for (const ScenarioSample& s : val) {
        int horizon = s.scene.num_steps() - s.scene.t_obs;
        PredictResult pr = predict(s.scene, horizon, p, cfg, make_override(v, s));
        acc += ade(pr, s.scene);
    }
    return acc / static_cast<double>(val.size());
}

inline void clip_gradients(std::vector<std::pair<std::string, Array>>& grads, double clip) {
    double ss = 0.0;
    for (const auto& [name, g] : grads)
        for (double x : g.data) ss += x * x;
    double norm = std::sqrt(ss);
    if (norm <= clip) return;
    double s = clip / norm;
    for (auto& [name, g] : grads)
        for (double& x : g.data) x *= s;
}

}  // namespace detail

// Adam training of the full objective on a scenario training set, selecting
// the checkpoint with the best validation ADE. Fully deterministic per seed.
inline TrainOutcome train(const std::vector<ScenarioSample>& train_set,
                          const std::vector<ScenarioSample>& val_set,
                          const ModelConfig& model_cfg, const TrainConfig& cfg,
                          const TrainHooks* hooks = nullptr) {
    cfg.validate();
    model_cfg.validate();
    check(!train_set.empty(), "train: empty training set");
    check(!val_set.empty(), "train: empty validation set");

    ModelConfig ecfg = model_cfg;
    ecfg.rollout_sampling = cfg.rollout_sampling;

    ModelParams params = ModelParams::init(ecfg, cfg.seed);
    AdamState adam = AdamState::like(params);
    TrainOutcome out;
    out.best = params;

    bool seq_pass = variant_has_sequence_pass(cfg.variant);
    double beta2 = variant_beta2(cfg.variant, cfg.beta2_smooth);

    long global_step = 0;
    std::uint64_t scene_counter = 0;
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto shuffle_rng = make_stream(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t batch_end = std::min(order.size(), pos + static_cast<std::size_t>(cfg.batch_size));
            auto batch_n = static_cast<double>(batch_end - pos);

            std::vector<std::pair<std::string, Array>> grad_sum;
            for (const auto& [name, a] : params.tensors)
                grad_sum.emplace_back(name, Array::zeros(a.shape));
            LossBreakdown mean{};

            for (std::size_t bi = pos; bi < batch_end; ++bi) {
                const ScenarioSample& sample = train_set[order[bi]];
                Scene scene = sample.scene.centered();
                AttnOverride ovr = make_override(cfg.variant, sample);

                Tape tape;
                BoundParams bound = BoundParams::bind(tape, params);
                SequenceResult tf = run_sequence(tape, scene, bound, ecfg,
                                                 ForwardMode::TeacherForced,
                                                 scene.num_steps(), ovr);
                SequenceResult ro;
                if (seq_pass) {
                    ForwardMode m = ecfg.rollout_sampling == RolloutSampling::Reparameterized
                                        ? ForwardMode::RolloutSample
                                        : ForwardMode::RolloutMean;
                    ro = run_sequence(tape, scene, bound, ecfg, m, scene.num_steps(), ovr,
                                      derive_seed(cfg.seed, "rollout", scene_counter));
                }
                ++scene_counter;
                if (hooks && hooks->on_forward)
                    hooks->on_forward(scene, tf, seq_pass ? &ro : nullptr);

                TotalLoss tl = total_loss_node(tape, scene, tf, seq_pass ? &ro : nullptr,
                                               cfg.beta1_var, beta2, cfg.tau);
                check(std::isfinite(tl.parts.total), "training diverged: non-finite loss at step ",
                      global_step, " on scene '", sample.scene.id, "'");
                backward(tape, tl.total);
                auto grads = bound.gradients(tape);
                for (std::size_t k = 0; k < grad_sum.size(); ++k)
                    for (std::size_t i = 0; i < grad_sum[k].second.size(); ++i)
                        grad_sum[k].second.data[i] += grads[k].second.data[i];

                mean.likelihood_one_step += tl.parts.likelihood_one_step;
                mean.likelihood_seq += tl.parts.likelihood_seq;
                mean.var_one_step += tl.parts.var_one_step;
                mean.var_seq += tl.parts.var_seq;
                mean.smooth_one_step += tl.parts.smooth_one_step;
                mean.smooth_seq += tl.parts.smooth_seq;
                mean.total += tl.parts.total;
            }

            for (auto& [name, g] : grad_sum)
                for (double& x : g.data) {
                    x /= batch_n;
                    check(std::isfinite(x), "training diverged: non-finite gradient of '",
                          name, "' at step ", global_step);
                }
            mean.likelihood_one_step /= batch_n;
            mean.likelihood_seq /= batch_n;
            mean.var_one_step /= batch_n;
            mean.var_seq /= batch_n;
            mean.smooth_one_step /= batch_n;
            mean.smooth_seq /= batch_n;
            mean.total /= batch_n;

            if (cfg.grad_clip > 0.0) detail::clip_gradients(grad_sum, cfg.grad_clip);
            adam_step(params, grad_sum, adam, cfg.learning_rate, cfg.adam);
            out.log.steps.push_back(TrainLog::StepRow{global_step, mean});
            ++global_step;
        }

        double val_ade = detail::validation_ade(val_set, params, ecfg, cfg.variant);
        bool improved = val_ade < out.log.best_val_ade;
        if (improved) {
            out.log.best_val_ade = val_ade;
            out.log.best_epoch = epoch;
            out.best = params;
        }
        out.log.epochs.push_back(TrainLog::EpochRow{epoch, val_ade, improved});
    }

    out.final = std::move(params);
    return out;
}

// ---------------------------------------------------------------------------
// Repeated-runs experiment
// ---------------------------------------------------------------------------

struct RunOutcome {
    std::uint64_t seed = 0;
    EvalResult eval;
    TrainLog log;
    ModelParams params;  // best-validation checkpoint of this run
};

// n_runs independent trainings with seeds base+0..base+n_runs-1, each
// evaluated on the bundle's test set.
inline std::vector<RunOutcome> run_experiment(const DatasetBundle& data,
                                              const ModelConfig& model_cfg,
                                              const TrainConfig& base, int n_runs) {
    check(n_runs >= 1, "run_experiment: n_runs must be >= 1, got ", n_runs);
    std::vector<RunOutcome> out;
    out.reserve(static_cast<std::size_t>(n_runs));
    for (int k = 0; k < n_runs; ++k) {
        TrainConfig cfg = base;
        cfg.seed = base.seed + static_cast<std::uint64_t>(k);
        TrainOutcome t = train(data.train, data.val, model_cfg, cfg);
        ModelConfig ecfg = model_cfg;
        ecfg.rollout_sampling = cfg.rollout_sampling;
        RunOutcome r;
        r.seed = cfg.seed;
        r.eval = evaluate_on(data.test, t.best, ecfg, cfg.variant);
        r.log = std::move(t.log);
        r.params = std::move(t.best);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace smoothattn

#endif  // SMOOTHATTN_TRAIN_HPP
