#ifndef SMOOTHATTN_DATASET_IO_HPP
#define SMOOTHATTN_DATASET_IO_HPP

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "smoothattn/common.hpp"
#include "smoothattn/data.hpp"
#include "smoothattn/scenario.hpp"

namespace smoothattn {

// Dataset directory layout:
//   <dir>/manifest.json
//   <dir>/train/scene_NNN.csv   (one scene per file; same for val/, test/)
// The manifest records the generator inputs, the split membership, and the
// per-scene interaction metadata (case label, highlighted window, main-agent
// slots) from which the oracle attention is reconstructed on load. The
// creation timestamp lives only here, so regeneration with identical inputs
// reproduces every CSV byte for byte.

inline constexpr int kDatasetFormatVersion = 1;

namespace detail {

inline std::string scene_file_name(const std::string& split, int index) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s/scene_%03d.csv", split.c_str(), index);
    return buf;
}

inline nlohmann::json sample_entry(const ScenarioSample& s, const std::string& split,
                                   int index) {
    nlohmann::json e;
    e["split"] = split;
    e["file"] = scene_file_name(split, index);
    e["id"] = s.scene.id;
    e["case"] = s.case_label;
    e["t_obs"] = s.scene.t_obs;
    e["highlight_begin"] = s.highlight_begin;
    e["highlight_end"] = s.highlight_end;
    e["front_main_index"] = s.front_main_index;
    e["rear_main_index"] = s.rear_main_index;
    e["has_oracle"] = s.has_oracle();
    return e;
}

}  // namespace detail

inline void save_dataset(const std::string& dir, const DatasetBundle& data) {
    namespace fs = std::filesystem;
    check(!data.train.empty(), "save_dataset: bundle has no training scenes");
    std::error_code ec;
    for (const char* split : {"train", "val", "test"}) {
        fs::create_directories(fs::path(dir) / split, ec);
        check(!ec, "save_dataset: cannot create '", (fs::path(dir) / split).string(), "': ",
              ec.message());
    }

    nlohmann::json m;
    m["format_version"] = kDatasetFormatVersion;
    m["scenario"] = scenario_name(data.kind);
    m["seed"] = data.seed;
    m["major"] = data.major_count;
    m["minor"] = data.minor_count;
    m["minor_ratio"] = data.minor_ratio;
    m["background"] = data.background_count;
    m["steps"] = data.train.front().scene.num_steps();
    m["t_obs"] = data.train.front().scene.t_obs;
    m["timestamp_step_ms"] = kTimestampStepMs;
    m["created_timestamp_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count();
    m["scenes"] = nlohmann::json::array();

    auto dump_split = [&](const char* split, const std::vector<ScenarioSample>& samples) {
        for (std::size_t i = 0; i < samples.size(); ++i) {
            int idx = static_cast<int>(i);
            save_csv((fs::path(dir) / detail::scene_file_name(split, idx)).string(),
                     {samples[i].scene});
            m["scenes"].push_back(detail::sample_entry(samples[i], split, idx));
        }
    };
    dump_split("train", data.train);
    dump_split("val", data.val);
    dump_split("test", data.test);

    std::ofstream out(fs::path(dir) / "manifest.json");
    check(out.good(), "save_dataset: cannot open '", (fs::path(dir) / "manifest.json").string(),
          "' for writing");
    out << m.dump(2) << '\n';
    check(out.good(), "save_dataset: write failure on manifest in '", dir, "'");
}

inline DatasetBundle load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    fs::path mpath = fs::path(dir) / "manifest.json";
    std::ifstream in(mpath);
    check(in.good(), "load_dataset: cannot open '", mpath.string(), "'");
    nlohmann::json m;
    try {
        in >> m;
    } catch (const nlohmann::json::exception& e) {
        fail("load_dataset: ", mpath.string(), ": invalid manifest: ", e.what());
    }

    DatasetBundle data;
    try {
        check(m.at("format_version").get<int>() == kDatasetFormatVersion,
              "load_dataset: ", mpath.string(), ": unsupported format_version ",
              m.at("format_version").get<int>());
        data.kind = parse_scenario(m.at("scenario").get<std::string>());
        data.seed = m.at("seed").get<std::uint64_t>();
        data.major_count = m.at("major").get<int>();
        data.minor_count = m.at("minor").get<int>();
        data.minor_ratio = m.at("minor_ratio").get<double>();
        data.background_count = m.at("background").get<int>();

        for (const nlohmann::json& e : m.at("scenes")) {
            std::string split = e.at("split").get<std::string>();
            std::string file = e.at("file").get<std::string>();
            int t_obs = e.at("t_obs").get<int>();
            std::vector<Scene> scenes = load_csv((fs::path(dir) / file).string(), t_obs);
            check(scenes.size() == 1, "load_dataset: '", file, "' holds ", scenes.size(),
                  " scenes, expected exactly 1");
            ScenarioSample s;
            s.scene = std::move(scenes.front());
            check(s.scene.id == e.at("id").get<std::string>(), "load_dataset: '", file,
                  "' contains scene '", s.scene.id, "' but the manifest expects '",
                  e.at("id").get<std::string>(), "'");
            s.case_label = e.at("case").get<std::string>();
            s.highlight_begin = e.at("highlight_begin").get<int>();
            s.highlight_end = e.at("highlight_end").get<int>();
            s.front_main_index = e.at("front_main_index").get<int>();
            s.rear_main_index = e.at("rear_main_index").get<int>();
            if (e.at("has_oracle").get<bool>())
                s.correct_attention = detail::oracle_attention(
                    s.scene.num_steps(), s.scene.num_agents(), s.front_main_index,
                    s.rear_main_index);
            if (split == "train")
                data.train.push_back(std::move(s));
            else if (split == "val")
                data.val.push_back(std::move(s));
            else if (split == "test")
                data.test.push_back(std::move(s));
            else
                fail("load_dataset: ", mpath.string(), ": unknown split '", split, "'");
        }
    } catch (const nlohmann::json::exception& e) {
        fail("load_dataset: ", mpath.string(), ": invalid manifest: ", e.what());
    }
    check(!data.train.empty(), "load_dataset: '", dir, "' has no training scenes");
    check(!data.val.empty(), "load_dataset: '", dir, "' has no validation scenes");
    return data;
}

}  // namespace smoothattn

#endif  // SMOOTHATTN_DATASET_IO_HPP
