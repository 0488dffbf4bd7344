// smoothattn command-line interface: dataset generation, training,
// evaluation, prediction, and plot-data export for the smooth-attention
// trajectory predictor.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "smoothattn/checkpoint.hpp"
#include "smoothattn/dataset_io.hpp"
#include "smoothattn/plot.hpp"
#include "smoothattn/report_io.hpp"
#include "smoothattn/train.hpp"

namespace fs = std::filesystem;
using namespace smoothattn;

namespace {

constexpr const char* kVersion = "1.0.0";

// Relative output paths resolve under $SMOOTHATTN_OUT_ROOT when it is set.
std::string resolve_out(const std::string& path) {
    const char* root = std::getenv("SMOOTHATTN_OUT_ROOT");
    if (!root || !*root || path.empty() || fs::path(path).is_absolute()) return path;
    return (fs::path(root) / path).string();
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    check(!ec, "cannot create directory '", dir, "': ", ec.message());
}

struct TrainFlags {
    std::string data_dir;
    std::string out_dir;
    std::string variant = "ours";
    std::string rollout_sampling = "reparameterized";
    int runs = 10;
    TrainConfig cfg;
    ModelConfig model;
};

RolloutSampling parse_sampling(const std::string& s) {
    if (s == "reparameterized") return RolloutSampling::Reparameterized;
    if (s == "mean") return RolloutSampling::Mean;
    fail("unknown rollout sampling '", s, "' (expected 'reparameterized' or 'mean')");
}

void write_config_echo(const std::string& path, const TrainFlags& f) {
    std::ofstream out(path);
    check(out.good(), "cannot open '", path, "' for writing");
    out << "variant=" << f.variant << '\n'
        << "runs=" << f.runs << '\n'
        << "seed=" << f.cfg.seed << '\n'
        << "lr=" << f.cfg.learning_rate << '\n'
        << "tau=" << f.cfg.tau << '\n'
        << "beta1=" << f.cfg.beta1_var << '\n'
        << "beta2=" << f.cfg.beta2_smooth << '\n'
        << "batch=" << f.cfg.batch_size << '\n'
        << "epochs=" << f.cfg.epochs << '\n'
        << "grad-clip=" << f.cfg.grad_clip << '\n'
        << "embed-dim=" << f.model.embed_dim << '\n'
        << "hidden-dim=" << f.model.hidden_dim << '\n'
        << "attn-dim=" << f.model.attn_dim << '\n'
        << "rollout-sampling=" << f.rollout_sampling << '\n';
    check(out.good(), "write failure on '", path, "'");
}

// Writes prediction.csv, per-main-vehicle attention CSVs, and meta.json for
// one evaluated scene.
void export_scene(const std::string& dir, const ScenarioSample& sample,
                  const PredictResult& pred) {
    ensure_dir(dir);
    const Scene& scene = sample.scene;
    write_prediction_csv((fs::path(dir) / "prediction.csv").string(), scene, pred);

    std::vector<int> plot_agents;
    if (sample.front_main_index >= 0 && sample.rear_main_index >= 0 &&
        sample.front_main_index != sample.rear_main_index) {
        plot_agents = {sample.front_main_index, sample.rear_main_index};
    } else {
        for (int i = 0; i < std::min(scene.num_agents(), 2); ++i) plot_agents.push_back(i);
    }
    for (int i : plot_agents) {
        char name[64];
        std::snprintf(name, sizeof(name), "attention_agent_%llu.csv",
                      static_cast<unsigned long long>(scene.agent_ids[static_cast<std::size_t>(i)]));
        write_attention_csv((fs::path(dir) / name).string(), pred.attention, i,
                            scene.agent_ids);
    }

    nlohmann::json meta;
    meta["scene_id"] = scene.id;
    meta["case"] = sample.case_label;
    meta["t_obs"] = scene.t_obs;
    meta["highlight_begin"] = sample.highlight_begin;
    meta["highlight_end"] = sample.highlight_end;
    bool mains_known = sample.front_main_index >= 0 && sample.rear_main_index >= 0 &&
                       sample.front_main_index != sample.rear_main_index;
    meta["front_main_id"] =
        mains_known ? scene.agent_ids[static_cast<std::size_t>(sample.front_main_index)] : 0;
    meta["rear_main_id"] =
        mains_known ? scene.agent_ids[static_cast<std::size_t>(sample.rear_main_index)] : 0;
    std::ofstream mout(fs::path(dir) / "meta.json");
    check(mout.good(), "cannot open '", (fs::path(dir) / "meta.json").string(), "' for writing");
    mout << meta.dump(2) << '\n';
    check(mout.good(), "write failure on meta.json in '", dir, "'");
}

// --------------------------------------------------------------------------
// Subcommand bodies
// --------------------------------------------------------------------------

void cmd_generate(const std::string& scenario, int major, double minor_ratio,
                  std::uint64_t seed, int background, int steps, int t_obs,
                  int test_per_case, const std::string& out_dir) {
    DatasetBundle data = build_dataset(parse_scenario(scenario), major, minor_ratio, seed,
                                       background, test_per_case, steps, t_obs);
    save_dataset(out_dir, data);
    std::printf("generated %s dataset: %zu train, %zu val, %zu test scenes -> %s\n",
                scenario.c_str(), data.train.size(), data.val.size(), data.test.size(),
                out_dir.c_str());
}

void cmd_train(const TrainFlags& f) {
    DatasetBundle data = load_dataset(f.data_dir);
    TrainConfig cfg = f.cfg;
    cfg.variant = parse_variant(f.variant);
    cfg.rollout_sampling = parse_sampling(f.rollout_sampling);
    ModelConfig mc = f.model;
    mc.rollout_sampling = cfg.rollout_sampling;

    ensure_dir(f.out_dir);
    write_config_echo((fs::path(f.out_dir) / "config.txt").string(), f);

    std::vector<RunOutcome> runs = run_experiment(data, mc, cfg, f.runs);
    MetricReport report{variant_name(cfg.variant), {}};
    for (const RunOutcome& r : runs) {
        char dirname[64];
        std::snprintf(dirname, sizeof(dirname), "run_%llu",
                      static_cast<unsigned long long>(r.seed));
        std::string run_dir = (fs::path(f.out_dir) / dirname).string();
        ensure_dir(run_dir);
        save_checkpoint((fs::path(run_dir) / "checkpoint.txt").string(), r.params, mc);
        r.log.save_steps_csv((fs::path(run_dir) / "steps.csv").string());
        r.log.save_validation_csv((fs::path(run_dir) / "validation.csv").string());
        MetricReport single{variant_name(cfg.variant), {RunRecord{r.seed, r.eval}}};
        write_report_csv((fs::path(run_dir) / "metrics.csv").string(), single);
        report.runs.push_back(RunRecord{r.seed, r.eval});
        std::printf("run seed=%llu best_epoch=%d best_val_ade=%.4f\n",
                    static_cast<unsigned long long>(r.seed), r.log.best_epoch,
                    r.log.best_val_ade);
    }
    write_report_csv((fs::path(f.out_dir) / "report.csv").string(), report);
    std::string summary = format_report(report);
    write_text_file((fs::path(f.out_dir) / "summary.txt").string(), summary);
    std::fputs(summary.c_str(), stdout);
}

void cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
              const std::string& out_dir, const std::string& variant_str) {
    Checkpoint ck = load_checkpoint(checkpoint_path);
    DatasetBundle data = load_dataset(data_dir);
    Variant variant = parse_variant(variant_str);

    EvalResult result = evaluate_on(data.test, ck.params, ck.config, variant);
    ensure_dir(out_dir);
    MetricReport report{variant_name(variant), {RunRecord{0, result}}};
    write_report_csv((fs::path(out_dir) / "metrics.csv").string(), report);
    std::string summary = format_report(report);
    write_text_file((fs::path(out_dir) / "metrics.txt").string(), summary);

    for (std::size_t i = 0; i < data.test.size(); ++i) {
        const ScenarioSample& sample = data.test[i];
        int horizon = sample.scene.num_steps() - sample.scene.t_obs;
        PredictResult pred = predict(sample.scene, horizon, ck.params, ck.config,
                                     make_override(variant, sample));
        char dirname[128];
        std::snprintf(dirname, sizeof(dirname), "scene_%03zu_%s", i, sample.case_label.c_str());
        export_scene((fs::path(out_dir) / "scenes" / dirname).string(), sample, pred);
    }
    std::fputs(summary.c_str(), stdout);
    std::printf("exported %zu test scenes -> %s\n", data.test.size(),
                (fs::path(out_dir) / "scenes").string().c_str());
}

void cmd_predict(const std::string& checkpoint_path, const std::string& scene_path,
                 int horizon, int t_obs, const std::string& out_dir) {
    Checkpoint ck = load_checkpoint(checkpoint_path);
    std::vector<Scene> scenes = load_csv(scene_path, t_obs);
    ensure_dir(out_dir);
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        PredictResult pred = predict(scenes[i], horizon, ck.params, ck.config);
        char dirname[64];
        std::snprintf(dirname, sizeof(dirname), "scene_%03zu", i);
        std::string dir = (fs::path(out_dir) / dirname).string();
        ScenarioSample sample;  // bare CSV input: no case label, no oracle metadata
        sample.scene = scenes[i];
        sample.case_label = "unlabeled";
        sample.front_main_index = -1;
        sample.rear_main_index = -1;
        export_scene(dir, sample, pred);
        std::printf("scene '%s': %d agents, horizon %d -> %s\n", scenes[i].id.c_str(),
                    scenes[i].num_agents(), horizon, dir.c_str());
    }
}

void cmd_plot(const std::string& run_dir, std::string out_dir) {
    check(fs::exists(run_dir), "plot: no such directory '", run_dir, "'");
    if (out_dir.empty()) out_dir = run_dir;
    int emitted = 0;
    for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
        if (!entry.is_regular_file()) continue;
        std::string name = entry.path().filename().string();
        fs::path rel = fs::relative(entry.path().parent_path(), run_dir);
        fs::path dest_dir = fs::path(out_dir) / rel;

        // Highlight window and main-vehicle ids, when the exporter recorded them.
        int hl_begin = -1, hl_end = -1;
        std::uint64_t front_id = 0, rear_id = 0;
        fs::path meta_path = entry.path().parent_path() / "meta.json";
        if (fs::exists(meta_path)) {
            std::ifstream min(meta_path);
            nlohmann::json meta;
            try {
                min >> meta;
                hl_begin = meta.value("highlight_begin", -1);
                hl_end = meta.value("highlight_end", -1);
                front_id = meta.value("front_main_id", std::uint64_t{0});
                rear_id = meta.value("rear_main_id", std::uint64_t{0});
            } catch (const nlohmann::json::exception& e) {
                fail("plot: ", meta_path.string(), ": invalid meta file: ", e.what());
            }
        }

        if (name == "prediction.csv") {
            PredictionData data = read_prediction_csv(entry.path().string());
            ensure_dir(dest_dir.string());
            write_text_file((dest_dir / "trajectory.svg").string(),
                            trajectory_overlay_svg(data, front_id, rear_id));
            ++emitted;
        } else if (name.rfind("attention_agent_", 0) == 0 &&
                   name.size() > 20 && name.substr(name.size() - 4) == ".csv") {
            std::string id_str = name.substr(16, name.size() - 20);
            std::uint64_t agent_id = detail::parse_u64(id_str, entry.path().string(), 0, "agent_id");
            AttentionData data = read_attention_csv(entry.path().string(), agent_id);
            std::uint64_t focus = agent_id == rear_id ? front_id
                                  : agent_id == front_id ? rear_id
                                                         : 0;
            ensure_dir(dest_dir.string());
            std::string svg_name = name.substr(0, name.size() - 4) + ".svg";
            write_text_file((dest_dir / svg_name).string(),
                            attention_timeline_svg(data, hl_begin, hl_end, focus));
            ++emitted;
        }
    }
    check(emitted > 0, "plot: no prediction.csv or attention_agent_*.csv files under '",
          run_dir, "'");
    std::printf("rendered %d svg file(s) -> %s\n", emitted, out_dir.c_str());
}

void cmd_compare(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
    std::vector<MetricReport> reports;
    for (const std::string& dir : run_dirs) {
        fs::path report_path = fs::path(dir) / "report.csv";
        check(fs::exists(report_path), "compare: missing '", report_path.string(), "'");
        reports.push_back(read_report_csv(report_path.string()));
    }
    Comparison cmp = compare_variants(reports);
    ensure_dir(out_dir);
    write_comparison_csv((fs::path(out_dir) / "comparison.csv").string(), cmp);
    std::string text = format_comparison(cmp);
    write_text_file((fs::path(out_dir) / "comparison.txt").string(), text);
    std::fputs(text.c_str(), stdout);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"smoothattn: smooth-attention multi-agent trajectory prediction"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    // generate ------------------------------------------------------------
    auto* gen = app.add_subcommand("generate", "Generate a synthetic driving dataset");
    std::string g_scenario;
    int g_major = 50, g_background = kDefaultBackground, g_steps = kDefaultSteps;
    int g_t_obs = kDefaultObserved, g_test_per_case = 50;
    double g_minor_ratio = 0.3;
    std::uint64_t g_seed = 1;
    std::string g_out;
    gen->add_option("--scenario", g_scenario, "Scenario kind")
        ->required()
        ->check(CLI::IsMember({"double_merge", "halting_car"}));
    gen->add_option("--major", g_major, "Majority-case training trajectories")->capture_default_str();
    gen->add_option("--minor-ratio", g_minor_ratio, "Minority/majority size ratio")->capture_default_str();
    gen->add_option("--seed", g_seed, "Generator seed")->capture_default_str();
    gen->add_option("--background", g_background, "Background vehicles per scene")->capture_default_str();
    gen->add_option("--steps", g_steps, "Steps per trajectory")->capture_default_str();
    gen->add_option("--t-obs", g_t_obs, "Observed steps per trajectory")->capture_default_str();
    gen->add_option("--test-per-case", g_test_per_case, "Test trajectories per case")->capture_default_str();
    gen->add_option("--out", g_out, "Output dataset directory")->required();
    gen->callback([&]() {
        cmd_generate(g_scenario, g_major, g_minor_ratio, g_seed, g_background, g_steps,
                     g_t_obs, g_test_per_case, resolve_out(g_out));
    });

    // train ---------------------------------------------------------------
    auto* tr = app.add_subcommand("train", "Train one variant for several seeded runs");
    TrainFlags tf;
    tr->set_config("--config", "", "Config file with key=value lines");
    tr->add_option("--data", tf.data_dir, "Dataset directory (from 'generate')")->required();
    tr->add_option("--out", tf.out_dir, "Output directory")->required();
    tr->add_option("--variant", tf.variant, "Training variant")->capture_default_str()
        ->check(CLI::IsMember({"ours", "s_attn", "non_smooth", "average", "correct"}));
    tr->add_option("--runs", tf.runs, "Independent runs (seeds seed..seed+runs-1)")->capture_default_str();
    tr->add_option("--seed", tf.cfg.seed, "Base seed")->capture_default_str();
    tr->add_option("--lr", tf.cfg.learning_rate, "Adam learning rate")->capture_default_str();
    tr->add_option("--tau", tf.cfg.tau, "Variance penalty threshold")->capture_default_str();
    tr->add_option("--beta1", tf.cfg.beta1_var, "Variance penalty weight")->capture_default_str();
    tr->add_option("--beta2", tf.cfg.beta2_smooth, "Attention smoothness weight")->capture_default_str();
    tr->add_option("--batch", tf.cfg.batch_size, "Batch size")->capture_default_str();
    tr->add_option("--epochs", tf.cfg.epochs, "Training epochs")->capture_default_str();
    tr->add_option("--grad-clip", tf.cfg.grad_clip, "Global-norm gradient clip (0 = off)")->capture_default_str();
    tr->add_option("--embed-dim", tf.model.embed_dim, "Embedding width")->capture_default_str();
    tr->add_option("--hidden-dim", tf.model.hidden_dim, "Recurrent state width")->capture_default_str();
    tr->add_option("--attn-dim", tf.model.attn_dim, "Attention projection width")->capture_default_str();
    tr->add_option("--rollout-sampling", tf.rollout_sampling,
                   "Rollout state feed: reparameterized | mean")->capture_default_str()
        ->check(CLI::IsMember({"reparameterized", "mean"}));
    tr->callback([&]() {
        tf.out_dir = resolve_out(tf.out_dir);
        cmd_train(tf);
    });

    // eval ----------------------------------------------------------------
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset's test split");
    std::string e_checkpoint, e_data, e_out, e_variant = "ours";
    ev->add_option("--checkpoint", e_checkpoint, "Checkpoint file")->required();
    ev->add_option("--data", e_data, "Dataset directory")->required();
    ev->add_option("--out", e_out, "Output directory")->required();
    ev->add_option("--variant", e_variant, "Evaluation variant (attention override)")->capture_default_str()
        ->check(CLI::IsMember({"ours", "s_attn", "non_smooth", "average", "correct"}));
    ev->callback([&]() { cmd_eval(e_checkpoint, e_data, resolve_out(e_out), e_variant); });

    // predict -------------------------------------------------------------
    auto* pr = app.add_subcommand("predict", "Predict future tracks for scenes in a CSV file");
    std::string p_checkpoint, p_scene, p_out;
    int p_horizon = 0, p_t_obs = kDefaultObserved;
    pr->add_option("--checkpoint", p_checkpoint, "Checkpoint file")->required();
    pr->add_option("--scene", p_scene, "Scene CSV file")->required();
    pr->add_option("--horizon", p_horizon, "Steps to predict past the observed window")
        ->required()
        ->check(CLI::PositiveNumber);
    pr->add_option("--t-obs", p_t_obs, "Observed steps fed to the model")->capture_default_str();
    pr->add_option("--out", p_out, "Output directory")->required();
    pr->callback([&]() { cmd_predict(p_checkpoint, p_scene, p_horizon, p_t_obs, resolve_out(p_out)); });

    // plot ----------------------------------------------------------------
    auto* pl = app.add_subcommand("plot", "Render SVG plots from exported prediction data");
    std::string l_run, l_out;
    pl->add_option("--run", l_run, "Directory containing exported prediction/attention CSVs")
        ->required();
    pl->add_option("--out", l_out, "Output directory (default: alongside the inputs)");
    pl->callback([&]() { cmd_plot(l_run, resolve_out(l_out)); });

    // compare -------------------------------------------------------------
    auto* cp = app.add_subcommand("compare", "Compare variant training outputs");
    std::vector<std::string> c_runs;
    std::string c_out;
    cp->add_option("--runs", c_runs, "Training output directories (one per variant)")
        ->required()
        ->expected(-1);
    cp->add_option("--out", c_out, "Output directory")->required();
    cp->callback([&]() { cmd_compare(c_runs, resolve_out(c_out)); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
