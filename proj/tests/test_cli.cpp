#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "smoothattn/checkpoint.hpp"
#include "smoothattn/data.hpp"
#include "smoothattn/dataset_io.hpp"
#include "smoothattn/plot.hpp"
#include "smoothattn/report_io.hpp"
#include "smoothattn/rng.hpp"

using namespace smoothattn;
using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
    std::vector<std::string> out;
    std::istringstream in(slurp(p));
    std::string line;
    while (std::getline(in, line)) out.push_back(line);
    return out;
}

// Shared scratch tree and lazily built pipeline artifacts. Everything the
// suite trains or generates lives under one per-process temp directory so
// later test cases can reuse earlier stages.
struct Workspace {
    fs::path root;
    std::string cli;

    Workspace() {
        const char* env = std::getenv("SMOOTHATTN_CLI");
        REQUIRE(env != nullptr);  // set by the test harness to the CLI binary path
        cli = env;
        REQUIRE(fs::exists(cli));
        root = fs::temp_directory_path() /
               ("smoothattn_cli_suite_" + std::to_string(static_cast<long>(::getpid())));
        fs::remove_all(root);
        fs::create_directories(root);
    }

    CliResult run_env(const std::string& env_prefix, const std::string& args) const {
        fs::path out_file = root / "stdout.txt", err_file = root / "stderr.txt";
        std::string cmd = env_prefix + cli + " " + args + " >" + out_file.string() + " 2>" +
                          err_file.string();
        int status = std::system(cmd.c_str());
        CliResult r;
        r.code = (status >= 0 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
        r.out = slurp(out_file);
        r.err = slurp(err_file);
        return r;
    }
    CliResult run(const std::string& args) const { return run_env("", args); }

    // 3 major + 3 minor training trajectories -> 5 train / 1 val, plus one
    // fresh test trajectory per case.
    std::string gen_flags(std::uint64_t seed) const {
        return "--scenario double_merge --major 3 --minor-ratio 1.0 --seed " +
               std::to_string(seed) +
               " --background 1 --steps 10 --t-obs 5 --test-per-case 1";
    }

    const fs::path& dataset() {
        static fs::path dir = [&] {
            fs::path d = root / "dataset";
            CliResult r = run("generate " + gen_flags(5) + " --out " + d.string());
            REQUIRE(r.code == 0);
            REQUIRE_THAT(r.out, ContainsSubstring("5 train, 1 val, 2 test"));
            return d;
        }();
        return dir;
    }

    std::string train_flags(const std::string& variant) const {
        return "--variant " + variant +
               " --runs 1 --seed 7 --epochs 2 --batch 4 "
               "--embed-dim 3 --hidden-dim 4 --attn-dim 3";
    }

    const fs::path& trained(const std::string& variant) {
        static std::map<std::string, fs::path> cache;
        auto it = cache.find(variant);
        if (it != cache.end()) return it->second;
        fs::path dir = root / ("train_" + variant);
        CliResult r = run("train --data " + dataset().string() + " --out " + dir.string() +
                          " " + train_flags(variant));
        REQUIRE(r.code == 0);
        REQUIRE_THAT(r.out, ContainsSubstring("run seed=7"));
        return cache.emplace(variant, dir).first->second;
    }

    const fs::path& eval_out() {
        static fs::path dir = [&] {
            fs::path d = root / "eval_ours";
            CliResult r = run("eval --checkpoint " +
                              (trained("ours") / "run_7" / "checkpoint.txt").string() +
                              " --data " + dataset().string() + " --out " + d.string() +
                              " --variant ours");
            REQUIRE(r.code == 0);
            REQUIRE_THAT(r.out, ContainsSubstring("exported 2 test scenes"));
            return d;
        }();
        return dir;
    }
};

Workspace& ws() {
    static Workspace w;
    return w;
}

}  // namespace

TEST_CASE("version and argument errors") {
    CHECK(ws().run("--version").out.find("1.0.0") != std::string::npos);
    CHECK(ws().run("--version").code == 0);
    CHECK(ws().run("").code != 0);                 // a subcommand is required
    CHECK(ws().run("frobnicate").code != 0);       // unknown subcommand
    CHECK(ws().run("generate").code != 0);         // missing required options
    CHECK(ws().run("generate --scenario roundabout --out x").code != 0);
    CHECK(ws().run("train --data x --out y --variant bogus").code != 0);
    CliResult r = ws().run("predict --checkpoint x --scene y --horizon 0 --out z");
    CHECK(r.code != 0);  // horizon must be positive
}

TEST_CASE("dataset generation is byte-reproducible") {
    fs::path d1 = ws().dataset();
    REQUIRE(fs::exists(d1 / "manifest.json"));
    CHECK(fs::exists(d1 / "train" / "scene_000.csv"));
    CHECK(fs::exists(d1 / "train" / "scene_004.csv"));
    CHECK(fs::exists(d1 / "val" / "scene_000.csv"));
    CHECK(fs::exists(d1 / "test" / "scene_001.csv"));
    CHECK(!fs::exists(d1 / "train" / "scene_005.csv"));

    fs::path d2 = ws().root / "dataset_again";
    REQUIRE(ws().run("generate " + ws().gen_flags(5) + " --out " + d2.string()).code == 0);
    for (const char* split : {"train", "val", "test"})
        for (const auto& entry : fs::directory_iterator(d1 / split)) {
            fs::path twin = d2 / split / entry.path().filename();
            REQUIRE(fs::exists(twin));
            INFO(entry.path().string());
            CHECK(slurp(entry.path()) == slurp(twin));
        }
    // The manifests agree on everything but the creation timestamp.
    nlohmann::json m1 = nlohmann::json::parse(slurp(d1 / "manifest.json"));
    nlohmann::json m2 = nlohmann::json::parse(slurp(d2 / "manifest.json"));
    CHECK(m1.at("created_timestamp_ms").get<std::int64_t>() > 0);
    m1.erase("created_timestamp_ms");
    m2.erase("created_timestamp_ms");
    CHECK(m1 == m2);

    // A different seed produces different trajectories.
    fs::path d3 = ws().root / "dataset_reseeded";
    REQUIRE(ws().run("generate " + ws().gen_flags(6) + " --out " + d3.string()).code == 0);
    CHECK(slurp(d1 / "train" / "scene_000.csv") != slurp(d3 / "train" / "scene_000.csv"));
}

TEST_CASE("generated datasets load back with oracle metadata") {
    DatasetBundle data = load_dataset(ws().dataset().string());
    CHECK(data.train.size() == 5);
    CHECK(data.val.size() == 1);
    REQUIRE(data.test.size() == 2);
    CHECK(data.major_count == 3);
    CHECK(data.minor_count == 3);
    CHECK(data.test[0].case_label == "major");
    CHECK(data.test[1].case_label == "minor");
    for (const std::vector<ScenarioSample>* split : {&data.train, &data.val, &data.test})
        for (const ScenarioSample& s : *split) {
            CHECK(s.has_oracle());
            CHECK(s.scene.num_steps() == 10);
            CHECK(s.scene.t_obs == 5);
            CHECK(s.scene.num_agents() == 3);  // two mains + one background vehicle
            CHECK(s.highlight_end > s.highlight_begin);
        }
}

TEST_CASE("relative outputs resolve under the output root") {
    fs::path redirect = ws().root / "redirect";
    CliResult r = ws().run_env("SMOOTHATTN_OUT_ROOT=" + redirect.string() + " ",
                               "generate " + ws().gen_flags(5) + " --out rel_ds");
    REQUIRE(r.code == 0);
    CHECK(fs::exists(redirect / "rel_ds" / "manifest.json"));
    CHECK(!fs::exists("rel_ds"));
}

TEST_CASE("training writes the full artifact tree") {
    fs::path t = ws().trained("ours");

    std::string config = slurp(t / "config.txt");
    CHECK_THAT(config, ContainsSubstring("variant=ours"));
    CHECK_THAT(config, ContainsSubstring("epochs=2"));
    CHECK_THAT(config, ContainsSubstring("hidden-dim=4"));
    CHECK_THAT(config, ContainsSubstring("rollout-sampling=reparameterized"));

    REQUIRE(fs::exists(t / "run_7" / "checkpoint.txt"));
    std::vector<std::string> steps = lines_of(t / "run_7" / "steps.csv");
    REQUIRE(!steps.empty());
    CHECK(steps[0] ==
          "step,likelihood_one_step,likelihood_seq,var_one_step,var_seq,"
          "smooth_one_step,smooth_seq,total");
    // 5 training scenes at batch 4 -> 2 optimizer steps per epoch, 2 epochs.
    CHECK(steps.size() == 5);

    std::vector<std::string> val = lines_of(t / "run_7" / "validation.csv");
    REQUIRE(val.size() == 3);
    CHECK(val[0] == "epoch,val_ade,improved");

    std::vector<std::string> metrics = lines_of(t / "run_7" / "metrics.csv");
    REQUIRE(!metrics.empty());
    CHECK(metrics[0] == kReportHeader);

    MetricReport report = read_report_csv((t / "report.csv").string());
    CHECK(report.variant == "ours");
    REQUIRE(report.runs.size() == 1);
    CHECK(report.runs[0].seed == 7);
    CHECK(report.runs[0].result.by_case.size() == 2);
    CHECK(report.runs[0].result.rear_attention_correctness >= 0.0);

    std::string summary = slurp(t / "summary.txt");
    CHECK_THAT(summary, ContainsSubstring("ours"));
    CHECK_THAT(summary, ContainsSubstring("ade"));

    Checkpoint ck = load_checkpoint((t / "run_7" / "checkpoint.txt").string());
    CHECK(ck.config.embed_dim == 3);
    CHECK(ck.config.hidden_dim == 4);
    CHECK(ck.config.attn_dim == 3);
    CHECK(ck.params.tensors.size() == ModelParams::layout(ck.config).size());
}

TEST_CASE("training is reproducible across invocations") {
    fs::path first = ws().trained("ours");
    fs::path again = ws().root / "train_ours_again";
    CliResult r = ws().run("train --data " + ws().dataset().string() + " --out " +
                           again.string() + " " + ws().train_flags("ours"));
    REQUIRE(r.code == 0);
    for (const char* rel : {"run_7/checkpoint.txt", "run_7/steps.csv", "run_7/validation.csv",
                            "report.csv", "config.txt"}) {
        INFO(rel);
        CHECK(slurp(first / rel) == slurp(again / rel));
    }
}

TEST_CASE("evaluation exports per-scene predictions") {
    fs::path e = ws().eval_out();
    CHECK(lines_of(e / "metrics.csv").at(0) == kReportHeader);
    CHECK_THAT(slurp(e / "metrics.txt"), ContainsSubstring("ours"));

    fs::path scene_dir = e / "scenes" / "scene_000_major";
    REQUIRE(fs::exists(scene_dir / "prediction.csv"));
    REQUIRE(fs::exists(scene_dir / "meta.json"));
    REQUIRE(fs::exists(e / "scenes" / "scene_001_minor" / "prediction.csv"));

    PredictionData pred = read_prediction_csv((scene_dir / "prediction.csv").string());
    REQUIRE(pred.agents.size() == 3);
    for (const TrajectorySeries& a : pred.agents) {
        CHECK(a.truth.size() == 10);
        CHECK(a.pred.size() == 5);      // horizon = steps - t_obs
        CHECK(a.pred.front()[0] == 5);  // prediction starts at the first future step
    }

    nlohmann::json meta = nlohmann::json::parse(slurp(scene_dir / "meta.json"));
    CHECK(meta.at("case") == "major");
    CHECK(meta.at("t_obs") == 5);
    std::uint64_t front = meta.at("front_main_id"), rear = meta.at("rear_main_id");
    CHECK(front != rear);
    CHECK((front == 1 || front == 2));
    CHECK((rear == 1 || rear == 2));

    // One attention timeline per main vehicle; rows normalized per step.
    for (std::uint64_t id : {front, rear}) {
        fs::path f = scene_dir / ("attention_agent_" + std::to_string(id) + ".csv");
        REQUIRE(fs::exists(f));
        AttentionData attn = read_attention_csv(f.string(), id);
        REQUIRE(attn.others.size() == 2);
        CHECK(attn.weights.size() == 9);  // t_obs + horizon - 1 processed input steps
        for (const std::vector<double>& row : attn.weights) {
            double s = 0.0;
            for (double w : row) s += w;
            CHECK(s == Catch::Approx(1.0).margin(1e-9));
        }
    }
}

TEST_CASE("evaluation refuses the oracle variant without oracle metadata") {
    fs::path bare = ws().root / "dataset_bare";
    fs::copy(ws().dataset(), bare, fs::copy_options::recursive);
    nlohmann::json m = nlohmann::json::parse(slurp(bare / "manifest.json"));
    for (nlohmann::json& e : m.at("scenes")) e["has_oracle"] = false;
    std::ofstream(bare / "manifest.json") << m.dump(2) << '\n';

    CliResult ok = ws().run("eval --checkpoint " +
                            (ws().trained("ours") / "run_7" / "checkpoint.txt").string() +
                            " --data " + bare.string() + " --out " +
                            (ws().root / "eval_bare").string() + " --variant ours");
    CHECK(ok.code == 0);  // attention-based variants do not need the oracle

    CliResult r = ws().run("eval --checkpoint " +
                           (ws().trained("ours") / "run_7" / "checkpoint.txt").string() +
                           " --data " + bare.string() + " --out " +
                           (ws().root / "eval_bare_correct").string() + " --variant correct");
    CHECK(r.code == 1);
    CHECK_THAT(r.err, ContainsSubstring("needs oracle attention"));
}

TEST_CASE("prediction on a bare track file extends past the recorded span") {
    // A hand-built scene with no scenario metadata at all.
    Scene s;
    s.id = "demo";
    s.t_obs = 4;
    s.agent_ids = {11, 22, 33};
    auto rng = make_stream(9, "cli-demo");
    std::uniform_real_distribution<double> d(-0.05, 0.05);
    for (int t = 0; t < 8; ++t)
        for (int i = 0; i < 3; ++i)
            s.states.push_back(AgentState{0.3 * i + 0.1 * t + d(rng), 0.05 * t + d(rng)});
    fs::path csv = ws().root / "demo_scene.csv";
    save_csv(csv.string(), {s});

    fs::path out = ws().root / "predict_out";
    CliResult r = ws().run("predict --checkpoint " +
                           (ws().trained("ours") / "run_7" / "checkpoint.txt").string() +
                           " --scene " + csv.string() + " --horizon 20 --t-obs 4 --out " +
                           out.string());
    REQUIRE(r.code == 0);
    CHECK_THAT(r.out, ContainsSubstring("horizon 20"));

    PredictionData pred = read_prediction_csv((out / "scene_000" / "prediction.csv").string());
    REQUIRE(pred.agents.size() == 3);
    for (const TrajectorySeries& a : pred.agents) {
        CHECK(a.truth.size() == 8);
        REQUIRE(a.pred.size() == 20);  // far beyond the recorded 8 steps
        CHECK(a.pred.front()[0] == 4);
        CHECK(a.pred.back()[0] == 23);
        for (const auto& p : a.pred) {
            CHECK(std::isfinite(p[1]));
            CHECK(std::isfinite(p[2]));
        }
    }
    nlohmann::json meta = nlohmann::json::parse(slurp(out / "scene_000" / "meta.json"));
    CHECK(meta.at("case") == "unlabeled");

    CliResult missing = ws().run("predict --checkpoint " +
                                 (ws().root / "no_such_checkpoint.txt").string() + " --scene " +
                                 csv.string() + " --horizon 2 --out " +
                                 (ws().root / "predict_missing").string());
    CHECK(missing.code == 1);
    CHECK_THAT(missing.err, ContainsSubstring("error:"));
}

TEST_CASE("plot renders svg overlays next to the exported data") {
    fs::path scenes = ws().eval_out() / "scenes";
    CliResult r = ws().run("plot --run " + scenes.string());
    REQUIRE(r.code == 0);
    fs::path scene_dir = scenes / "scene_000_major";
    REQUIRE(fs::exists(scene_dir / "trajectory.svg"));
    CHECK_THAT(slurp(scene_dir / "trajectory.svg"), ContainsSubstring("<svg"));
    int attention_svgs = 0;
    for (const auto& entry : fs::directory_iterator(scene_dir)) {
        std::string name = entry.path().filename().string();
        if (name.rfind("attention_agent_", 0) == 0 && entry.path().extension() == ".svg") {
            ++attention_svgs;
            CHECK_THAT(slurp(entry.path()), ContainsSubstring("<svg"));
        }
    }
    CHECK(attention_svgs == 2);

    // Rendering into a separate directory mirrors the input tree.
    fs::path sep = ws().root / "plots";
    REQUIRE(ws().run("plot --run " + scenes.string() + " --out " + sep.string()).code == 0);
    CHECK(fs::exists(sep / "scene_000_major" / "trajectory.svg"));

    fs::path empty = ws().root / "empty_dir";
    fs::create_directories(empty);
    CliResult bad = ws().run("plot --run " + empty.string());
    CHECK(bad.code == 1);
    CHECK_THAT(bad.err, ContainsSubstring("no prediction.csv"));
}

TEST_CASE("compare joins variant reports into one table") {
    fs::path ours = ws().trained("ours");
    fs::path sattn = ws().trained("s_attn");
    fs::path cmp = ws().root / "comparison";
    CliResult r = ws().run("compare --runs " + ours.string() + " " + sattn.string() +
                           " --out " + cmp.string());
    REQUIRE(r.code == 0);

    std::vector<std::string> csv = lines_of(cmp / "comparison.csv");
    REQUIRE(csv.size() >= 3);
    CHECK(csv[0] ==
          "variant,major_ade_mean,major_ade_std,major_fde_mean,major_fde_std,"
          "minor_ade_mean,minor_ade_std,minor_fde_mean,minor_fde_std");
    CHECK(csv[1].rfind("ours,", 0) == 0);
    CHECK(csv[2].rfind("s_attn,", 0) == 0);

    std::string text = slurp(cmp / "comparison.txt");
    CHECK_THAT(text, ContainsSubstring("ours"));
    CHECK_THAT(text, ContainsSubstring("s_attn"));
    // Single-run reports carry no significance test.
    CHECK(text.find("p(ours vs s_attn") == std::string::npos);

    CliResult bad = ws().run("compare --runs " + (ws().root / "nowhere").string() + " --out " +
                             (ws().root / "cmp_bad").string());
    CHECK(bad.code == 1);
    CHECK_THAT(bad.err, ContainsSubstring("missing"));
}
