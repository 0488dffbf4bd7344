#ifndef SMOOTHATTN_METRICS_HPP
#define SMOOTHATTN_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "smoothattn/common.hpp"
#include "smoothattn/losses.hpp"
#include "smoothattn/model.hpp"
#include "smoothattn/rng.hpp"
#include "smoothattn/scenario.hpp"

namespace smoothattn {

// ---------------------------------------------------------------------------
// Displacement errors
// ---------------------------------------------------------------------------

namespace detail {

inline void require_pred_covers(const PredictResult& pred, const Scene& truth) {
    int horizon = truth.num_steps() - truth.t_obs;
    check(pred.N == truth.num_agents(), "displacement error: prediction has ", pred.N,
          " agents, scene has ", truth.num_agents());
    check(pred.horizon == horizon, "displacement error: prediction horizon ", pred.horizon,
          " does not match scene's predicted span ", horizon);
}

inline double dist(const AgentState& a, const AgentState& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

}  // namespace detail

// Mean Euclidean error over the given agents and all predicted steps.
inline double ade_agents(const PredictResult& pred, const Scene& truth,
                         const std::vector<int>& agents) {
    detail::require_pred_covers(pred, truth);
    check(!agents.empty(), "ade: empty agent set");
    double acc = 0.0;
    for (int k = 0; k < pred.horizon; ++k)
        for (int i : agents) acc += detail::dist(pred.at(k, i), truth.at(truth.t_obs + k, i));
    return acc / (static_cast<double>(pred.horizon) * static_cast<double>(agents.size()));
}

// Mean Euclidean error over the given agents at the final predicted step.
inline double fde_agents(const PredictResult& pred, const Scene& truth,
                         const std::vector<int>& agents) {
    detail::require_pred_covers(pred, truth);
    check(!agents.empty(), "fde: empty agent set");
    double acc = 0.0;
    int k = pred.horizon - 1;
    for (int i : agents) acc += detail::dist(pred.at(k, i), truth.at(truth.t_obs + k, i));
    return acc / static_cast<double>(agents.size());
}

inline std::vector<int> all_agents(const Scene& s) {
    std::vector<int> out(static_cast<std::size_t>(s.num_agents()));
    for (int i = 0; i < s.num_agents(); ++i) out[static_cast<std::size_t>(i)] = i;
    return out;
}

inline double ade(const PredictResult& pred, const Scene& truth) {
    return ade_agents(pred, truth, all_agents(truth));
}

inline double fde(const PredictResult& pred, const Scene& truth) {
    return fde_agents(pred, truth, all_agents(truth));
}

// ---------------------------------------------------------------------------
// Attention diagnostics
// ---------------------------------------------------------------------------

// Per step, the attention mass agent `agent` assigns to the other agent that
// the oracle designates as its target (the argmax of the oracle row).
inline std::vector<double> attention_correctness_series(const AttentionTensor& theta,
                                                        const AttentionTensor& oracle,
                                                        int agent) {
    check(theta.N == oracle.N, "attention_correctness: agent counts differ: ", theta.N,
          " vs ", oracle.N);
    check(theta.T <= oracle.T, "attention_correctness: oracle covers ", oracle.T,
          " steps, attention has ", theta.T);
    check(agent >= 0 && agent < theta.N, "attention_correctness: agent ", agent,
          " out of range");
    std::vector<double> out(static_cast<std::size_t>(theta.T));
    for (int t = 0; t < theta.T; ++t) {
        int best = 0;
        for (int k = 1; k + 1 < oracle.N; ++k)
            if (oracle.at(t, agent, k) > oracle.at(t, agent, best)) best = k;
        out[static_cast<std::size_t>(t)] = theta.at(t, agent, best);
    }
    return out;
}

// Mean of a per-step series over [begin, end) clamped to the series length.
inline double window_mean(const std::vector<double>& series, int begin, int end) {
    begin = std::max(begin, 0);
    end = std::min(end, static_cast<int>(series.size()));
    check(end > begin, "window_mean: empty window [", begin, ", ", end, ")");
    double acc = 0.0;
    for (int t = begin; t < end; ++t) acc += series[static_cast<std::size_t>(t)];
    return acc / static_cast<double>(end - begin);
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

inline double mean_of(const std::vector<double>& v) {
    check(!v.empty(), "mean: empty sample");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Sample standard deviation (n-1 denominator).
inline double std_of(const std::vector<double>& v) {
    check(v.size() >= 2, "std: need at least 2 values, got ", v.size());
    double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

namespace detail {

// Continued-fraction kernel of the regularized incomplete beta function
// (modified Lentz method).
inline double beta_cont_frac(double a, double b, double x) {
    const int max_iter = 400;
    const double eps = 1e-15, tiny = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) return h;
    }
    fail("incomplete beta: continued fraction did not converge (a=", a, ", b=", b, ", x=", x,
         ")");
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b), accurate to ~1e-14.
inline double incomplete_beta(double a, double b, double x) {
    check(a > 0.0 && b > 0.0, "incomplete_beta: a and b must be positive");
    check(x >= 0.0 && x <= 1.0, "incomplete_beta: x must lie in [0, 1], got ", x);
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                   b * std::log(1.0 - x);
    double bt = std::exp(ln_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * detail::beta_cont_frac(a, b, x) / a;
    return 1.0 - bt * detail::beta_cont_frac(b, a, 1.0 - x) / b;
}

// Two-sided Welch unequal-variance t-test p-value.
inline double welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    check(a.size() >= 2 && b.size() >= 2, "welch_t_test: both samples need >= 2 values (got ",
          a.size(), " and ", b.size(), ")");
    double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    double ma = mean_of(a), mb = mean_of(b);
    double va = 0.0, vb = 0.0;
    for (double x : a) va += (x - ma) * (x - ma);
    for (double x : b) vb += (x - mb) * (x - mb);
    va /= na - 1.0;
    vb /= nb - 1.0;

    double se2 = va / na + vb / nb;
    if (se2 == 0.0) {
        if (ma == mb) return 1.0;
        fail("welch_t_test: zero variance in both samples with different means (",
             ma, " vs ", mb, ")");
    }
    double t = (ma - mb) / std::sqrt(se2);
    double nu = se2 * se2 /
                ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
    return incomplete_beta(nu / 2.0, 0.5, nu / (nu + t * t));
}

// ---------------------------------------------------------------------------
// Variant evaluation on a test set
// ---------------------------------------------------------------------------

struct EvalCase {
    double ade = 0.0;       // mean over scenes, all agents
    double fde = 0.0;
    double ade_main = 0.0;  // mean over scenes, the two main vehicles only
    double fde_main = 0.0;
    int scenes = 0;
};

struct EvalResult {
    std::vector<std::pair<std::string, EvalCase>> by_case;
    // Mean (over scenes with an oracle) of the rear main vehicle's in-window
    // attention mass on the front main vehicle; -1 when no oracle exists or
    // the variant overrides attention.
    double rear_attention_correctness = -1.0;
    std::string dataset_tag;  // identity of the evaluated test set

    EvalCase& case_entry(const std::string& label) {
        for (auto& [l, c] : by_case)
            if (l == label) return c;
        by_case.emplace_back(label, EvalCase{});
        return by_case.back().second;
    }
    const EvalCase* find_case(const std::string& label) const {
        for (const auto& [l, c] : by_case)
            if (l == label) return &c;
        return nullptr;
    }
};

// Stable identity of a test set: order-sensitive digest of scene ids.
inline std::string dataset_digest(const std::vector<ScenarioSample>& samples) {
    std::uint64_t h = 1469598103934665603ull;
    for (const ScenarioSample& s : samples) {
        h = mix64(h ^ fnv1a(s.scene.id));
        h = mix64(h ^ static_cast<std::uint64_t>(s.scene.num_steps()));
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline AttnOverride make_override(Variant v, const ScenarioSample& sample) {
    AttnOverride ovr;
    ovr.kind = variant_override(v);
    if (ovr.kind == AttnOverrideKind::Oracle) {
        check(sample.has_oracle(), "variant 'correct' needs oracle attention, but scene '",
              sample.scene.id, "' carries none (synthetic datasets only)");
        ovr.oracle = &sample.correct_attention;
    }
    return ovr;
}

// Deterministic mean-mode evaluation of one parameter set over a test set,
// aggregated per case label.
inline EvalResult evaluate_on(const std::vector<ScenarioSample>& samples,
                              const ModelParams& params, const ModelConfig& cfg, Variant v) {
    check(!samples.empty(), "evaluate_on: empty test set");
    EvalResult out;
    out.dataset_tag = dataset_digest(samples);
    double attn_acc = 0.0;
    int attn_scenes = 0;
    for (const ScenarioSample& s : samples) {
        int horizon = s.scene.num_steps() - s.scene.t_obs;
        AttnOverride ovr = make_override(v, s);
        PredictResult pr = predict(s.scene, horizon, params, cfg, ovr);
        EvalCase& c = out.case_entry(s.case_label);
        c.ade += ade(pr, s.scene);
        c.fde += fde(pr, s.scene);
        c.ade_main += ade_agents(pr, s.scene, {0, 1});
        c.fde_main += fde_agents(pr, s.scene, {0, 1});
        c.scenes += 1;
        if (s.has_oracle() && ovr.kind == AttnOverrideKind::None) {
            std::vector<double> series = attention_correctness_series(
                pr.attention, s.correct_attention, s.rear_main_index);
            attn_acc += window_mean(series, s.highlight_begin, s.highlight_end);
            ++attn_scenes;
        }
    }
    for (auto& [label, c] : out.by_case) {
        c.ade /= c.scenes;
        c.fde /= c.scenes;
        c.ade_main /= c.scenes;
        c.fde_main /= c.scenes;
    }
    if (attn_scenes > 0) out.rear_attention_correctness = attn_acc / attn_scenes;
    return out;
}

// ---------------------------------------------------------------------------
// Cross-variant comparison
// ---------------------------------------------------------------------------

struct RunRecord {
    std::uint64_t seed = 0;
    EvalResult result;
};

struct MetricReport {
    std::string variant;
    std::vector<RunRecord> runs;

    // Raw per-run values of one field for one case label.
    std::vector<double> raw(const std::string& case_label, const std::string& field) const {
        std::vector<double> out;
        for (const RunRecord& r : runs) {
            const EvalCase* c = r.result.find_case(case_label);
            check(c != nullptr, "MetricReport: variant '", variant, "' has no case '",
                  case_label, "'");
            if (field == "ade")
                out.push_back(c->ade);
            else if (field == "fde")
                out.push_back(c->fde);
            else if (field == "ade_main")
                out.push_back(c->ade_main);
            else if (field == "fde_main")
                out.push_back(c->fde_main);
            else
                fail("MetricReport: unknown field '", field, "'");
        }
        return out;
    }
};

struct ComparisonCell {
    double ade_mean = 0.0, ade_std = 0.0;
    double fde_mean = 0.0, fde_std = 0.0;
};

struct Comparison {
    std::vector<std::string> case_labels;
    // rows[variant][case] aligned with case_labels
    std::vector<std::pair<std::string, std::vector<ComparisonCell>>> rows;
    // Welch p-values of 'ours' vs 's_attn' ADE per case; empty when either
    // variant is absent or runs are too few.
    std::vector<std::pair<std::string, double>> p_ade;
};

// Aggregates per-variant reports into a comparison table. All reports must
// cover the same test set and the same run seeds.
inline Comparison compare_variants(const std::vector<MetricReport>& reports) {
    check(!reports.empty(), "compare_variants: no reports");
    for (const MetricReport& r : reports) check(!r.runs.empty(), "compare_variants: variant '",
                                                r.variant, "' has no runs");
    const MetricReport& ref = reports.front();
    for (const MetricReport& r : reports) {
        check(r.runs.size() == ref.runs.size(), "compare_variants: variant '", r.variant,
              "' has ", r.runs.size(), " runs, '", ref.variant, "' has ", ref.runs.size());
        for (std::size_t k = 0; k < r.runs.size(); ++k) {
            check(r.runs[k].seed == ref.runs[k].seed, "compare_variants: run ", k,
                  " seed mismatch between '", r.variant, "' and '", ref.variant, "'");
            check(r.runs[k].result.dataset_tag == ref.runs[k].result.dataset_tag,
                  "compare_variants: variants evaluated on different test sets (run ", k, ")");
        }
    }

    Comparison out;
    for (const auto& [label, c] : ref.runs.front().result.by_case)
        out.case_labels.push_back(label);

    for (const MetricReport& r : reports) {
        std::vector<ComparisonCell> cells;
        for (const std::string& label : out.case_labels) {
            std::vector<double> ades = r.raw(label, "ade");
            std::vector<double> fdes = r.raw(label, "fde");
            ComparisonCell cell;
            cell.ade_mean = mean_of(ades);
            cell.fde_mean = mean_of(fdes);
            cell.ade_std = ades.size() >= 2 ? std_of(ades) : 0.0;
            cell.fde_std = fdes.size() >= 2 ? std_of(fdes) : 0.0;
            cells.push_back(cell);
        }
        out.rows.emplace_back(r.variant, std::move(cells));
    }

    const MetricReport* ours = nullptr;
    const MetricReport* sattn = nullptr;
    for (const MetricReport& r : reports) {
        if (r.variant == variant_name(Variant::Ours)) ours = &r;
        if (r.variant == variant_name(Variant::SAttn)) sattn = &r;
    }
    if (ours && sattn && ours->runs.size() >= 2) {
        for (const std::string& label : out.case_labels)
            out.p_ade.emplace_back(label,
                                   welch_t_test(ours->raw(label, "ade"), sattn->raw(label, "ade")));
    }
    return out;
}

}  // namespace smoothattn

#endif  // SMOOTHATTN_METRICS_HPP
