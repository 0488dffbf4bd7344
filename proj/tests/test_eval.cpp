#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "smoothattn/metrics.hpp"
#include "smoothattn/rng.hpp"
#include "smoothattn/scenario.hpp"

using namespace smoothattn;
using Catch::Matchers::ContainsSubstring;

namespace {

// Truth scene with N agents, T steps, observing t_obs.
Scene make_truth(int n, int t, int t_obs, std::uint64_t seed) {
    Scene s;
    s.id = "eval/truth/" + std::to_string(seed);
    s.t_obs = t_obs;
    auto rng = make_stream(seed, "truth");
    std::uniform_real_distribution<double> d(-2.0, 2.0);
    for (int i = 0; i < n; ++i) s.agent_ids.push_back(static_cast<std::uint64_t>(i + 1));
    s.states.resize(static_cast<std::size_t>(n) * t);
    for (auto& st : s.states) st = AgentState{d(rng), d(rng)};
    return s;
}

// Prediction equal to the truth's predicted span, then offset per agent.
PredictResult shifted_prediction(const Scene& truth, std::vector<AgentState> offsets) {
    PredictResult p;
    p.N = truth.num_agents();
    p.horizon = truth.num_steps() - truth.t_obs;
    p.traj.resize(static_cast<std::size_t>(p.N) * p.horizon);
    for (int k = 0; k < p.horizon; ++k)
        for (int i = 0; i < p.N; ++i) {
            const AgentState& base = truth.at(truth.t_obs + k, i);
            p.at(k, i) = AgentState{base.x + offsets[static_cast<std::size_t>(i)].x,
                                    base.y + offsets[static_cast<std::size_t>(i)].y};
        }
    return p;
}

}  // namespace

TEST_CASE("displacement error closed forms") {
    Scene truth = make_truth(2, 4, 2, 1);  // horizon 2

    SECTION("a constant 3-4 offset scores 5 everywhere") {
        PredictResult p = shifted_prediction(truth, {AgentState{3.0, 4.0}, AgentState{3.0, 4.0}});
        CHECK(ade(p, truth) == Catch::Approx(5.0).margin(1e-12));
        CHECK(fde(p, truth) == Catch::Approx(5.0).margin(1e-12));
    }
    SECTION("perfect prediction scores exactly zero") {
        PredictResult p = shifted_prediction(truth, {AgentState{0.0, 0.0}, AgentState{0.0, 0.0}});
        CHECK(ade(p, truth) == 0.0);
        CHECK(fde(p, truth) == 0.0);
    }
    SECTION("the mean runs over agents") {
        PredictResult p = shifted_prediction(truth, {AgentState{5.0, 0.0}, AgentState{0.0, 1.0}});
        CHECK(ade(p, truth) == Catch::Approx(3.0).margin(1e-12));
        CHECK(fde(p, truth) == Catch::Approx(3.0).margin(1e-12));
        CHECK(ade_agents(p, truth, {0}) == Catch::Approx(5.0).margin(1e-12));
        CHECK(ade_agents(p, truth, {1}) == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("the final-step error ignores earlier steps") {
        PredictResult p = shifted_prediction(truth, {AgentState{0.0, 0.0}, AgentState{0.0, 0.0}});
        // corrupt only the first predicted step
        p.at(0, 0).x += 7.0;
        p.at(0, 1).y += 7.0;
        CHECK(fde(p, truth) == 0.0);
        CHECK(ade(p, truth) == Catch::Approx(3.5).margin(1e-12));
    }
    SECTION("shifting truth and prediction together changes nothing") {
        PredictResult p = shifted_prediction(truth, {AgentState{0.3, -0.4}, AgentState{1.0, 0.0}});
        double base_ade = ade(p, truth), base_fde = fde(p, truth);
        Scene moved = truth;
        for (auto& st : moved.states) {
            st.x += 10.0;
            st.y -= 20.0;
        }
        PredictResult q = p;
        for (auto& st : q.traj) {
            st.x += 10.0;
            st.y -= 20.0;
        }
        CHECK(ade(q, moved) == Catch::Approx(base_ade).margin(1e-12));
        CHECK(fde(q, moved) == Catch::Approx(base_fde).margin(1e-12));
    }
    SECTION("shape mismatches are rejected") {
        PredictResult p = shifted_prediction(truth, {AgentState{}, AgentState{}});
        p.horizon = 1;
        p.traj.resize(2);
        REQUIRE_THROWS_MATCHES(ade(p, truth), Error,
                               Catch::Matchers::MessageMatches(ContainsSubstring("horizon")));
        PredictResult q = shifted_prediction(truth, {AgentState{}, AgentState{}});
        REQUIRE_THROWS_MATCHES(ade_agents(q, truth, {}), Error,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("empty agent set")));
    }
}

TEST_CASE("attention correctness series") {
    const int T = 4, N = 3;
    AttentionTensor oracle(T, N);
    // agent 2's oracle target is agent 0; agent 0's target is agent 1
    for (int t = 0; t < T; ++t) {
        oracle.at(t, 2, AttentionTensor::compact_index(2, 0)) = 1.0;
        oracle.at(t, 0, AttentionTensor::compact_index(0, 1)) = 1.0;
        oracle.at(t, 1, 0) = 0.5;
        oracle.at(t, 1, 1) = 0.5;
    }
    AttentionTensor theta(T, N);
    auto rng = make_stream(2, "theta");
    std::uniform_real_distribution<double> d(0.0, 1.0);
    for (int t = 0; t < T; ++t)
        for (int i = 0; i < N; ++i) {
            double a = d(rng), b = d(rng);
            theta.at(t, i, 0) = a / (a + b);
            theta.at(t, i, 1) = b / (a + b);
        }

    SECTION("the series reads the mass on the oracle's argmax") {
        std::vector<double> s2 = attention_correctness_series(theta, oracle, 2);
        REQUIRE(s2.size() == 4);
        for (int t = 0; t < T; ++t)
            CHECK(s2[static_cast<std::size_t>(t)] == theta.at_pair(t, 2, 0));
        std::vector<double> s0 = attention_correctness_series(theta, oracle, 0);
        for (int t = 0; t < T; ++t)
            CHECK(s0[static_cast<std::size_t>(t)] == theta.at_pair(t, 0, 1));
    }
    SECTION("attention equal to the oracle scores one everywhere") {
        std::vector<double> s = attention_correctness_series(oracle, oracle, 2);
        for (double v : s) CHECK(v == 1.0);
    }
    SECTION("uniform attention scores the uniform mass") {
        const int big = 22;
        AttentionTensor o2(2, big);
        for (int t = 0; t < 2; ++t) o2.at(t, 1, AttentionTensor::compact_index(1, 0)) = 1.0;
        AttentionTensor u(2, big);
        for (double& w : u.w) w = 1.0 / (big - 1);
        std::vector<double> s = attention_correctness_series(u, o2, 1);
        for (double v : s) CHECK(v == Catch::Approx(1.0 / 21.0).margin(1e-15));
    }
    SECTION("shape and range violations are rejected") {
        AttentionTensor small(T, 2);
        REQUIRE_THROWS_MATCHES(attention_correctness_series(small, oracle, 0), Error,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("agent counts differ")));
        REQUIRE_THROWS_MATCHES(attention_correctness_series(theta, oracle, 3), Error,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("out of range")));
        AttentionTensor long_theta(T + 1, N);
        REQUIRE_THROWS_MATCHES(attention_correctness_series(long_theta, oracle, 0), Error,
                               Catch::Matchers::MessageMatches(ContainsSubstring("covers")));
    }
}

TEST_CASE("window mean") {
    std::vector<double> s{0.0, 1.0, 2.0, 3.0, 4.0};
    CHECK(window_mean(s, 1, 4) == Catch::Approx(2.0).margin(1e-15));
    CHECK(window_mean(s, 0, 5) == Catch::Approx(2.0).margin(1e-15));
    // out-of-range bounds clamp to the series
    CHECK(window_mean(s, -10, 99) == Catch::Approx(2.0).margin(1e-15));
    CHECK(window_mean(s, 3, 99) == Catch::Approx(3.5).margin(1e-15));
    REQUIRE_THROWS_MATCHES(window_mean(s, 3, 3), Error,
                           Catch::Matchers::MessageMatches(ContainsSubstring("empty window")));
}

TEST_CASE("sample statistics") {
    std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    CHECK(mean_of(v) == Catch::Approx(2.5).margin(1e-15));
    CHECK(std_of(v) == Catch::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-14));
    REQUIRE_THROWS_AS(mean_of({}), Error);
    REQUIRE_THROWS_AS(std_of({1.0}), Error);
}

TEST_CASE("regularized incomplete beta") {
    SECTION("uniform distribution: I_x(1,1) = x") {
        for (double x : {0.1, 0.37, 0.5, 0.92})
            CHECK(incomplete_beta(1.0, 1.0, x) == Catch::Approx(x).epsilon(1e-13));
    }
    SECTION("endpoints are exact") {
        CHECK(incomplete_beta(2.5, 0.5, 0.0) == 0.0);
        CHECK(incomplete_beta(2.5, 0.5, 1.0) == 1.0);
    }
    SECTION("arcsine symmetry: I_half(0.5, 0.5) = 0.5") {
        CHECK(incomplete_beta(0.5, 0.5, 0.5) == Catch::Approx(0.5).epsilon(1e-13));
    }
    SECTION("reflection identity") {
        for (double x : {0.2, 0.6, 0.85}) {
            double lhs = incomplete_beta(1.7, 3.2, x);
            double rhs = 1.0 - incomplete_beta(3.2, 1.7, 1.0 - x);
            CHECK(lhs == Catch::Approx(rhs).margin(1e-12));
        }
    }
    SECTION("monotonic in x") {
        double prev = 0.0;
        for (double x = 0.05; x < 1.0; x += 0.05) {
            double v = incomplete_beta(2.0, 5.0, x);
            CHECK(v >= prev);
            prev = v;
        }
    }
    SECTION("domain violations are rejected") {
        REQUIRE_THROWS_AS(incomplete_beta(0.0, 1.0, 0.5), Error);
        REQUIRE_THROWS_AS(incomplete_beta(1.0, 1.0, -0.1), Error);
        REQUIRE_THROWS_AS(incomplete_beta(1.0, 1.0, 1.1), Error);
    }
}

TEST_CASE("unequal-variance t-test") {
    SECTION("matches 60-digit references to 1e-8") {
        struct Case {
            std::vector<double> a, b;
            double p;
        };
        std::vector<Case> cases{
            {{2.1, 2.4, 1.9, 2.2}, {3.0, 3.3, 2.8, 3.1}, 0.00087340975558792327},
            {{1.0, 2.0, 3.0, 4.0, 5.0}, {1.5, 2.5, 3.5, 4.5, 5.5}, 0.63053607555697634},
            {{0.5, 0.7, 0.9, 1.1, 1.3, 1.5},
             {0.52, 0.68, 0.93, 1.07, 1.32, 1.48},
             0.99999999999999993},
            {{10.0, 10.1, 9.9, 10.05, 9.95}, {10.5, 10.6, 10.4, 10.55, 10.45},
             8.488181527628492e-6},
            {{-1.0, 0.0, 1.0, 2.0}, {5.0, 6.0, 7.0}, 0.0014732999199067494},
        };
        for (const Case& c : cases) {
            INFO("expected " << c.p);
            CHECK(welch_t_test(c.a, c.b) == Catch::Approx(c.p).margin(1e-8));
        }
    }
    SECTION("identical samples give p = 1") {
        std::vector<double> a{0.4, 0.6, 0.5, 0.55};
        CHECK(welch_t_test(a, a) == 1.0);
    }
    SECTION("the test is symmetric in its arguments") {
        std::vector<double> a{2.1, 2.4, 1.9, 2.2}, b{3.0, 3.3, 2.8, 3.1};
        CHECK(welch_t_test(a, b) == Catch::Approx(welch_t_test(b, a)).margin(1e-12));
    }
    SECTION("clearly separated tight samples are overwhelmingly significant") {
        std::vector<double> a{0.0, 1e-9, -1e-9, 0.0}, b{1.0, 1.0 + 1e-9, 1.0 - 1e-9, 1.0};
        CHECK(welch_t_test(a, b) < 1e-6);
    }
    SECTION("degenerate zero-variance samples") {
        std::vector<double> a{2.0, 2.0, 2.0}, b{2.0, 2.0};
        CHECK(welch_t_test(a, b) == 1.0);
        std::vector<double> c{3.0, 3.0};
        REQUIRE_THROWS_MATCHES(welch_t_test(a, c), Error,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("zero variance")));
    }
    SECTION("tiny samples are rejected") {
        REQUIRE_THROWS_MATCHES(welch_t_test({1.0}, {2.0, 3.0}), Error,
                               Catch::Matchers::MessageMatches(ContainsSubstring(">= 2")));
    }
}

TEST_CASE("test-set identity digest") {
    ScenarioSample a = gen_double_merge("major", 1, 2, 8, 4);
    ScenarioSample b = gen_double_merge("minor", 2, 2, 8, 4);
    std::string d1 = dataset_digest({a, b});
    CHECK(d1 == dataset_digest({a, b}));
    CHECK(d1 != dataset_digest({b, a}));       // order-sensitive
    CHECK(d1 != dataset_digest({a}));          // content-sensitive
    CHECK(d1.size() == 16);
}

TEST_CASE("attention override resolution") {
    ScenarioSample s = gen_double_merge("major", 3, 2, 8, 4);
    CHECK(make_override(Variant::Ours, s).kind == AttnOverrideKind::None);
    CHECK(make_override(Variant::SAttn, s).kind == AttnOverrideKind::None);
    CHECK(make_override(Variant::Average, s).kind == AttnOverrideKind::Uniform);
    AttnOverride o = make_override(Variant::Correct, s);
    CHECK(o.kind == AttnOverrideKind::Oracle);
    CHECK(o.oracle == &s.correct_attention);

    ScenarioSample bare;
    bare.scene = s.scene;
    bare.case_label = "unlabeled";
    REQUIRE_THROWS_MATCHES(make_override(Variant::Correct, bare), Error,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("needs oracle attention")));
}

TEST_CASE("test-set evaluation") {
    ModelConfig cfg;
    cfg.embed_dim = 3;
    cfg.hidden_dim = 4;
    cfg.attn_dim = 3;
    ModelParams params = ModelParams::init(cfg, 5);
    std::vector<ScenarioSample> samples;
    for (std::uint64_t k = 1; k <= 2; ++k) {
        samples.push_back(gen_double_merge("major", k, 2, 10, 5));
        samples.push_back(gen_double_merge("minor", k, 2, 10, 5));
    }

    SECTION("per-case aggregation") {
        EvalResult r = evaluate_on(samples, params, cfg, Variant::Ours);
        REQUIRE(r.by_case.size() == 2);
        for (const auto& [label, c] : r.by_case) {
            CHECK((label == "major" || label == "minor"));
            CHECK(c.scenes == 2);
            CHECK(c.ade >= 0.0);
            CHECK(std::isfinite(c.ade));
            CHECK(std::isfinite(c.fde));
            CHECK(std::isfinite(c.ade_main));
            CHECK(c.fde_main >= 0.0);
        }
        CHECK(r.dataset_tag == dataset_digest(samples));
        CHECK(r.rear_attention_correctness >= 0.0);
        CHECK(r.rear_attention_correctness <= 1.0);
    }
    SECTION("the single-scene aggregate equals a direct computation") {
        std::vector<ScenarioSample> one{samples[0]};
        EvalResult r = evaluate_on(one, params, cfg, Variant::Ours);
        const Scene& sc = one[0].scene;
        PredictResult pr = predict(sc, sc.num_steps() - sc.t_obs, params, cfg);
        const EvalCase* c = r.find_case("major");
        REQUIRE(c != nullptr);
        CHECK(c->ade == ade(pr, sc));
        CHECK(c->fde == fde(pr, sc));
        CHECK(c->ade_main == ade_agents(pr, sc, {0, 1}));
    }
    SECTION("attention overrides suppress the correctness diagnostic") {
        EvalResult avg = evaluate_on(samples, params, cfg, Variant::Average);
        CHECK(avg.rear_attention_correctness == -1.0);
        EvalResult cor = evaluate_on(samples, params, cfg, Variant::Correct);
        CHECK(cor.rear_attention_correctness == -1.0);
    }
    SECTION("oracle-free scenes skip the diagnostic") {
        ScenarioSample bare;
        bare.scene = samples[0].scene;
        bare.case_label = "unlabeled";
        EvalResult r = evaluate_on({bare}, params, cfg, Variant::Ours);
        CHECK(r.rear_attention_correctness == -1.0);
    }
    SECTION("an empty test set is rejected") {
        REQUIRE_THROWS_MATCHES(evaluate_on({}, params, cfg, Variant::Ours), Error,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("empty test set")));
    }
}

TEST_CASE("variant comparison") {
    ModelConfig cfg;
    cfg.embed_dim = 3;
    cfg.hidden_dim = 4;
    cfg.attn_dim = 3;
    std::vector<ScenarioSample> test_set;
    for (std::uint64_t k = 1; k <= 2; ++k) {
        test_set.push_back(gen_double_merge("major", 10 + k, 2, 10, 5));
        test_set.push_back(gen_double_merge("minor", 20 + k, 2, 10, 5));
    }
    auto report_for = [&](const std::string& name, Variant v) {
        MetricReport rep;
        rep.variant = name;
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            RunRecord rr;
            rr.seed = seed;
            rr.result = evaluate_on(test_set, ModelParams::init(cfg, seed * 7), cfg, v);
            rep.runs.push_back(std::move(rr));
        }
        return rep;
    };
    MetricReport ours = report_for("ours", Variant::Ours);
    MetricReport sattn = report_for("s_attn", Variant::SAttn);

    SECTION("table cells match a direct recomputation") {
        Comparison c = compare_variants({ours, sattn});
        REQUIRE(c.case_labels.size() == 2);
        REQUIRE(c.rows.size() == 2);
        CHECK(c.rows[0].first == "ours");
        for (std::size_t ci = 0; ci < c.case_labels.size(); ++ci) {
            std::vector<double> ades = ours.raw(c.case_labels[ci], "ade");
            CHECK(c.rows[0].second[ci].ade_mean == mean_of(ades));
            CHECK(c.rows[0].second[ci].ade_std == std_of(ades));
        }
        REQUIRE(c.p_ade.size() == 2);
        for (const auto& [label, p] : c.p_ade) {
            CHECK(p > 0.0);
            CHECK(p <= 1.0);
            CHECK(p == Catch::Approx(welch_t_test(ours.raw(label, "ade"),
                                                  sattn.raw(label, "ade"))).margin(1e-15));
        }
    }
    SECTION("without both reference variants there are no p-values") {
        Comparison c = compare_variants({ours});
        CHECK(c.p_ade.empty());
        REQUIRE(c.rows.size() == 1);
    }
    SECTION("mismatched run seeds are rejected") {
        MetricReport other = sattn;
        other.runs[1].seed = 99;
        REQUIRE_THROWS_MATCHES(compare_variants({ours, other}), Error,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("seed mismatch")));
    }
    SECTION("mismatched run counts are rejected") {
        MetricReport other = sattn;
        other.runs.pop_back();
        REQUIRE_THROWS_AS(compare_variants({ours, other}), Error);
    }
    SECTION("different test sets are rejected") {
        std::vector<ScenarioSample> alt{gen_double_merge("major", 77, 2, 10, 5),
                                        gen_double_merge("minor", 78, 2, 10, 5)};
        MetricReport rep;
        rep.variant = "s_attn";
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            RunRecord rr;
            rr.seed = seed;
            rr.result = evaluate_on(alt, ModelParams::init(cfg, seed * 7), cfg, Variant::SAttn);
            rep.runs.push_back(std::move(rr));
        }
        REQUIRE_THROWS_MATCHES(compare_variants({ours, rep}), Error,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("different test sets")));
    }
    SECTION("the raw extractor validates its inputs") {
        REQUIRE_THROWS_MATCHES(ours.raw("nonexistent", "ade"), Error,
                               Catch::Matchers::MessageMatches(ContainsSubstring("no case")));
        REQUIRE_THROWS_MATCHES(ours.raw("major", "mde"), Error,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("unknown field")));
    }
}
