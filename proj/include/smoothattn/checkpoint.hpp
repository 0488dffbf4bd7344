#ifndef SMOOTHATTN_CHECKPOINT_HPP
#define SMOOTHATTN_CHECKPOINT_HPP

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "smoothattn/common.hpp"
#include "smoothattn/model.hpp"

namespace smoothattn {

// Text checkpoint: model dimensions followed by every tensor in layout
// order, values as C99 hex floats so a save/load round trip is bit-exact.

inline void save_checkpoint(const std::string& path, const ModelParams& params,
                            const ModelConfig& cfg) {
    std::ofstream out(path);
    check(out.good(), "save_checkpoint: cannot open '", path, "' for writing");
    out << "smoothattn-checkpoint v1\n";
    out << "embed_dim " << cfg.embed_dim << "\n";
    out << "hidden_dim " << cfg.hidden_dim << "\n";
    out << "attn_dim " << cfg.attn_dim << "\n";
    out << "rollout_sampling "
        << (cfg.rollout_sampling == RolloutSampling::Reparameterized ? "reparameterized" : "mean")
        << "\n";
    out << "tensors " << params.tensors.size() << "\n";
    char buf[64];
    for (const auto& [name, a] : params.tensors) {
        out << "tensor " << name << " " << a.rank();
        for (std::size_t e : a.shape) out << " " << e;
        out << "\n";
        for (std::size_t i = 0; i < a.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%a", a.data[i]);
            out << buf << (i + 1 == a.size() ? "" : " ");
        }
        out << "\n";
    }
    check(out.good(), "save_checkpoint: write failure on '", path, "'");
}

struct Checkpoint {
    ModelParams params;
    ModelConfig config;
};

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "load_checkpoint: cannot open '", path, "'");
    std::string line;
    check(static_cast<bool>(std::getline(in, line)) && line == "smoothattn-checkpoint v1",
          "load_checkpoint: '", path, "' is not a checkpoint file (bad magic line)");

    Checkpoint ck;
    auto read_kv = [&](const char* key) -> std::string {
        check(static_cast<bool>(std::getline(in, line)), "load_checkpoint: '", path,
              "': truncated before '", key, "'");
        std::istringstream is(line);
        std::string k, v;
        is >> k >> v;
        check(k == key && !v.empty(), "load_checkpoint: '", path, "': expected '", key,
              " <value>', got '", line, "'");
        return v;
    };
    ck.config.embed_dim = std::stoi(read_kv("embed_dim"));
    ck.config.hidden_dim = std::stoi(read_kv("hidden_dim"));
    ck.config.attn_dim = std::stoi(read_kv("attn_dim"));
    std::string sampling = read_kv("rollout_sampling");
    check(sampling == "reparameterized" || sampling == "mean",
          "load_checkpoint: '", path, "': unknown rollout_sampling '", sampling, "'");
    ck.config.rollout_sampling = sampling == "reparameterized"
                                     ? RolloutSampling::Reparameterized
                                     : RolloutSampling::Mean;
    ck.config.validate();
    std::size_t count = std::stoul(read_kv("tensors"));

    for (std::size_t k = 0; k < count; ++k) {
        check(static_cast<bool>(std::getline(in, line)), "load_checkpoint: '", path,
              "': truncated at tensor ", k);
        std::istringstream hs(line);
        std::string tag, name;
        std::size_t rank = 0;
        hs >> tag >> name >> rank;
        check(tag == "tensor" && !name.empty() && rank >= 1 && rank <= 2,
              "load_checkpoint: '", path, "': bad tensor header '", line, "'");
        std::vector<std::size_t> shape(rank);
        for (std::size_t r = 0; r < rank; ++r) {
            check(static_cast<bool>(hs >> shape[r]), "load_checkpoint: '", path,
                  "': bad shape in '", line, "'");
        }
        Array a = Array::zeros(shape);
        check(static_cast<bool>(std::getline(in, line)), "load_checkpoint: '", path,
              "': missing values for tensor '", name, "'");
        const char* p = line.c_str();
        for (std::size_t i = 0; i < a.size(); ++i) {
            char* end = nullptr;
            a.data[i] = std::strtod(p, &end);
            check(end != p, "load_checkpoint: '", path, "': bad value ", i, " of tensor '",
                  name, "'");
            p = end;
        }
        ck.params.tensors.emplace_back(name, std::move(a));
    }

    // The tensor list must exactly match the layout the dimensions imply.
    auto expect = ModelParams::layout(ck.config);
    check(ck.params.tensors.size() == expect.size(), "load_checkpoint: '", path, "': ",
          ck.params.tensors.size(), " tensors, expected ", expect.size());
    for (std::size_t k = 0; k < expect.size(); ++k) {
        check(ck.params.tensors[k].first == expect[k].first, "load_checkpoint: '", path,
              "': tensor ", k, " is '", ck.params.tensors[k].first, "', expected '",
              expect[k].first, "'");
        check(ck.params.tensors[k].second.shape == expect[k].second, "load_checkpoint: '",
              path, "': tensor '", expect[k].first, "' has shape ",
              ck.params.tensors[k].second.shape_str());
    }
    return ck;
}

}  // namespace smoothattn

#endif  // SMOOTHATTN_CHECKPOINT_HPP
