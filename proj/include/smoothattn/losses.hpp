#ifndef SMOOTHATTN_LOSSES_HPP
#define SMOOTHATTN_LOSSES_HPP

#include <cmath>
#include <vector>

#include "smoothattn/model.hpp"
#include "smoothattn/scene.hpp"
#include "smoothattn/tape.hpp"

namespace smoothattn {

inline constexpr double kLn2Pi = 1.8378770664093454836;

// Training/evaluation variants. `Ours` is the full objective; the others are
// the reference configurations it is compared against:
//   SAttn     - one-step terms only (no rollout pass), no smoothness prior
//   NonSmooth - full objective minus the smoothness prior
//   Average   - attention overridden with the uniform distribution
//   Correct   - attention overridden with the scenario oracle
enum class Variant { Ours, SAttn, NonSmooth, Average, Correct };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::Ours: return "ours";
        case Variant::SAttn: return "s_attn";
        case Variant::NonSmooth: return "non_smooth";
        case Variant::Average: return "average";
        case Variant::Correct: return "correct";
    }
    return "?";
}

inline Variant parse_variant(const std::string& s) {
    for (Variant v : {Variant::Ours, Variant::SAttn, Variant::NonSmooth, Variant::Average,
                      Variant::Correct})
        if (s == variant_name(v)) return v;
    fail("unknown variant '", s,
         "' (expected ours | s_attn | non_smooth | average | correct)");
}

inline bool variant_has_sequence_pass(Variant v) { return v != Variant::SAttn; }

inline double variant_beta2(Variant v, double beta2) {
    // Correct uses the time-constant oracle attention, so its smoothness term
    // is skipped rather than computed as an exact zero.
    return (v == Variant::SAttn || v == Variant::NonSmooth || v == Variant::Correct) ? 0.0
                                                                                    : beta2;
}

inline AttnOverrideKind variant_override(Variant v) {
    if (v == Variant::Average) return AttnOverrideKind::Uniform;
    if (v == Variant::Correct) return AttnOverrideKind::Oracle;
    return AttnOverrideKind::None;
}

// One training step's loss components. `total` is composed exactly as
//   (lik_one + lik_seq) + (b1*(var_one + var_seq) + b2*(smooth_one + smooth_seq))
// in that floating-point order.
struct LossBreakdown {
    double likelihood_one_step = 0.0;
    double likelihood_seq = 0.0;
    double var_one_step = 0.0;
    double var_seq = 0.0;
    double smooth_one_step = 0.0;
    double smooth_seq = 0.0;
    double total = 0.0;
};

namespace detail {

inline void require_pd(double sx, double sy, double rho, int step, int agent) {
    bool ok = std::isfinite(sx) && std::isfinite(sy) && sx > 0.0 && sy > 0.0 &&
              1.0 - rho * rho > 0.0;
    if (!ok)
        fail("likelihood: covariance not positive definite at step ", step, " agent ", agent,
             " (sigma_x=", sx, ", sigma_y=", sy, ", rho=", rho, ")");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Value-side losses (plain doubles; used for evaluation and as independent
// checks of the tape-side builders)
// ---------------------------------------------------------------------------

// Negative log likelihood of the true states under the predicted bivariate
// Gaussians, summed over agents and predicted steps. Row t of the grid is the
// prediction for step t+1; the first step has no prediction, and the final
// row predicts past the scene, so rows 0..T-2 are scored against steps 1..T-1.
inline double likelihood_loss(const Scene& scene, const GaussianGrid& g) {
    int T = scene.num_steps();
    int N = scene.num_agents();
    check(g.T >= T - 1 && g.N == N, "likelihood_loss: grid ", g.T, "x", g.N,
          " does not cover scene ", T, "x", N);
    double acc = 0.0;
    for (int t = 1; t < T; ++t)
        for (int i = 0; i < N; ++i) {
            const GaussianParams& p = g.at(t - 1, i);
            double sx = p.sigma_x(), sy = p.sigma_y(), rho = p.rho();
            detail::require_pd(sx, sy, rho, t, i);
            double zx = (scene.at(t, i).x - p.mu_x) / sx;
            double zy = (scene.at(t, i).y - p.mu_y) / sy;
            double omr = 1.0 - rho * rho;
            acc += kLn2Pi + p.log_sx + p.log_sy + 0.5 * std::log(omr) +
                   (zx * zx - 2.0 * rho * zx * zy + zy * zy) / (2.0 * omr);
        }
    return acc;
}

// Large-variance penalty: sum of exp(std) over every std that exceeds tau,
// for both axes of every predicted Gaussian in the grid.
inline double variance_loss(const GaussianGrid& g, double tau) {
    check(tau > 0.0, "variance_loss: tau must be positive, got ", tau);
    double acc = 0.0;
    for (const GaussianParams& p : g.g) {
        double sx = p.sigma_x(), sy = p.sigma_y();
        if (sx > tau) acc += std::exp(sx);
        if (sy > tau) acc += std::exp(sy);
    }
    return acc;
}

// Vectorial total variation of the attention weights across time: the L2 norm
// of each agent's row-to-row change, summed over transitions and agents.
inline double smoothness_loss(const AttentionTensor& th) {
    check(th.T >= 1, "smoothness_loss: need at least one step");
    double acc = 0.0;
    for (int t = 1; t < th.T; ++t)
        for (int i = 0; i < th.N; ++i) {
            double ss = 0.0;
            for (int k = 0; k + 1 < th.N; ++k) {
                double d = th.at(t, i, k) - th.at(t - 1, i, k);
                ss += d * d;
            }
            acc += ss > 0.0 ? std::sqrt(ss) : 0.0;
        }
    return acc;
}

// ---------------------------------------------------------------------------
// Tape-side losses (differentiable nodes over a forward pass)
// ---------------------------------------------------------------------------

inline Var likelihood_loss_node(Tape& tape, const SequenceResult& r, const Scene& scene) {
    int T = scene.num_steps();
    int N = scene.num_agents();
    check(r.T >= T - 1 && r.N == N, "likelihood_loss: forward pass ", r.T, "x", r.N,
          " does not cover scene ", T, "x", N);
    Var one = tape.constant(1.0);
    Var two = tape.constant(2.0);
    Var half = tape.constant(0.5);
    Var acc = tape.constant(kLn2Pi * static_cast<double>(N) * static_cast<double>(T - 1));
    auto nu = static_cast<std::size_t>(N);
    for (int t = 1; t < T; ++t) {
        Var g = r.gauss[static_cast<std::size_t>(t - 1)];
        Array txa = Array::zeros({nu, 1}), tya = Array::zeros({nu, 1});
        for (int i = 0; i < N; ++i) {
            txa.data[static_cast<std::size_t>(i)] = scene.at(t, i).x;
            tya.data[static_cast<std::size_t>(i)] = scene.at(t, i).y;
        }
        Var lsx = slice_cols(g, 2, 1), lsy = slice_cols(g, 3, 1);
        Var rho = tanh(slice_cols(g, 4, 1));
        for (int i = 0; i < N; ++i) {
            auto iu = static_cast<std::size_t>(i);
            detail::require_pd(std::exp(lsx.val().data[iu]), std::exp(lsy.val().data[iu]),
                               rho.val().data[iu], t, i);
        }
        Var zx = mul(sub(tape.leaf(std::move(txa)), slice_cols(g, 0, 1)), exp(neg(lsx)));
        Var zy = mul(sub(tape.leaf(std::move(tya)), slice_cols(g, 1, 1)), exp(neg(lsy)));
        Var omr = sub(one, square(rho));
        Var quad = div(sub(add(square(zx), square(zy)), mul(two, mul(rho, mul(zx, zy)))),
                       mul(two, omr));
        Var step_nll = add(add(add(lsx, lsy), mul(half, log(omr))), quad);
        acc = add(acc, sum(step_nll));
    }
    return acc;
}

inline Var variance_loss_node(Tape& tape, const SequenceResult& r, double tau) {
    check(tau > 0.0, "variance_loss: tau must be positive, got ", tau);
    Var acc = tape.constant(0.0);
    auto nu = static_cast<std::size_t>(r.N);
    for (int t = 0; t < r.T; ++t) {
        Var g = r.gauss[static_cast<std::size_t>(t)];
        Var sx = exp(slice_cols(g, 2, 1));
        Var sy = exp(slice_cols(g, 3, 1));
        // The threshold indicator is a constant gate: no gradient flows
        // through the comparison itself.
        Array gx = Array::zeros({nu, 1}), gy = Array::zeros({nu, 1});
        bool any = false;
        for (std::size_t i = 0; i < nu; ++i) {
            if (sx.val().data[i] > tau) gx.data[i] = 1.0, any = true;
            if (sy.val().data[i] > tau) gy.data[i] = 1.0, any = true;
        }
        if (!any) continue;
        Var term = add(sum(mul(exp(sx), tape.leaf(std::move(gx)))),
                       sum(mul(exp(sy), tape.leaf(std::move(gy)))));
        acc = add(acc, term);
    }
    return acc;
}

inline Var smoothness_loss_node(Tape& tape, const SequenceResult& r) {
    check(r.T >= 1, "smoothness_loss: need at least one step");
    Var acc = tape.constant(0.0);
    for (int t = 1; t < r.T; ++t)
        for (int i = 0; i < r.N; ++i) {
            Var d = sub(r.theta[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)],
                        r.theta[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(i)]);
            acc = add(acc, sqrt_or_zero(sum(square(d))));
        }
    return acc;
}

struct TotalLoss {
    Var total;  // differentiable aggregate
    LossBreakdown parts;
};

// Eq.-12-style aggregate over a teacher-forced pass and (optionally) a
// rollout pass on the same scene. Both likelihood terms score the ground
// truth; a missing rollout contributes exact zeros for the sequence terms.
inline TotalLoss total_loss_node(Tape& tape, const Scene& scene, const SequenceResult& tf,
                                 const SequenceResult* ro, double beta1, double beta2,
                                 double tau) {
    Var lik1 = likelihood_loss_node(tape, tf, scene);
    Var var1 = variance_loss_node(tape, tf, tau);
    Var sm1 = smoothness_loss_node(tape, tf);
    Var lik2 = ro ? likelihood_loss_node(tape, *ro, scene) : tape.constant(0.0);
    Var var2 = ro ? variance_loss_node(tape, *ro, tau) : tape.constant(0.0);
    Var sm2 = ro ? smoothness_loss_node(tape, *ro) : tape.constant(0.0);

    Var b1 = tape.constant(beta1);
    Var b2 = tape.constant(beta2);
    Var total = add(add(lik1, lik2),
                    add(mul(b1, add(var1, var2)), mul(b2, add(sm1, sm2))));

    TotalLoss out;
    out.total = total;
    out.parts.likelihood_one_step = lik1.scalar();
    out.parts.likelihood_seq = lik2.scalar();
    out.parts.var_one_step = var1.scalar();
    out.parts.var_seq = var2.scalar();
    out.parts.smooth_one_step = sm1.scalar();
    out.parts.smooth_seq = sm2.scalar();
    out.parts.total = total.scalar();
    return out;
}

}  // namespace smoothattn

#endif  // SMOOTHATTN_LOSSES_HPP
