#include "json_io.hpp"

namespace sdlpgc::detail {

void reject_unknown_keys(const json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

namespace {

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

}  // namespace

json to_json(const ModelConfig& c) {
    return json{{"num_nodes", c.num_nodes},
                {"input_len", c.input_len},
                {"horizon", c.horizon},
                {"embed_dim", c.embed_dim},
                {"heads", c.heads},
                {"head_dim", c.head_dim},
                {"skip_proj_dim", c.skip_proj_dim},
                {"blocks", c.blocks},
                {"depth", c.depth},
                {"residual_channels", c.residual_channels},
                {"skip_channels", c.skip_channels},
                {"end_channels", c.end_channels},
                {"lpgc_hidden", c.lpgc_hidden},
                {"dilation_base", c.dilation_base},
                {"kernel_set", c.kernel_set},
                {"dropout", c.dropout},
                {"padding", to_string(c.padding)},
                {"seed", c.seed},
                {"variant", to_string(c.variant)}};
}

ModelConfig model_config_from_json(const json& j) {
    const std::string where = "model";
    reject_unknown_keys(j, {"num_nodes", "input_len", "horizon", "embed_dim", "heads", "head_dim", "skip_proj_dim",
                            "blocks", "depth", "residual_channels", "skip_channels", "end_channels", "lpgc_hidden",
                            "dilation_base", "kernel_set", "dropout", "padding", "seed", "variant"},
                        where);
    ModelConfig c;
    read(j, "num_nodes", c.num_nodes, where);
    read(j, "input_len", c.input_len, where);
    read(j, "horizon", c.horizon, where);
    read(j, "embed_dim", c.embed_dim, where);
    read(j, "heads", c.heads, where);
    read(j, "head_dim", c.head_dim, where);
    read(j, "skip_proj_dim", c.skip_proj_dim, where);
    read(j, "blocks", c.blocks, where);
    read(j, "depth", c.depth, where);
    read(j, "residual_channels", c.residual_channels, where);
    read(j, "skip_channels", c.skip_channels, where);
    read(j, "end_channels", c.end_channels, where);
    read(j, "lpgc_hidden", c.lpgc_hidden, where);
    read(j, "dilation_base", c.dilation_base, where);
    read(j, "kernel_set", c.kernel_set, where);
    read(j, "dropout", c.dropout, where);
    read(j, "seed", c.seed, where);
    std::string text;
    if (j.contains("padding")) {
        read(j, "padding", text, where);
        c.padding = parse_padding(text);
    }
    if (j.contains("variant")) {
        read(j, "variant", text, where);
        c.variant = parse_variant(text);
    }
    return c;
}

json to_json(const TrainConfig& c) {
    return json{{"epochs", c.epochs},       {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
                {"clip_norm", c.clip_norm}, {"patience", c.patience},     {"seed", c.seed},
                {"max_steps", c.max_steps}, {"device", c.device}};
}

TrainConfig train_config_from_json(const json& j) {
    const std::string where = "train";
    reject_unknown_keys(j, {"epochs", "batch_size", "learning_rate", "clip_norm", "patience", "seed", "max_steps", "device"},
                        where);
    TrainConfig c;
    read(j, "epochs", c.epochs, where);
    read(j, "batch_size", c.batch_size, where);
    read(j, "learning_rate", c.learning_rate, where);
    read(j, "clip_norm", c.clip_norm, where);
    read(j, "patience", c.patience, where);
    read(j, "seed", c.seed, where);
    read(j, "max_steps", c.max_steps, where);
    read(j, "device", c.device, where);
    if (c.device != "cpu") throw ConfigError("train.device: only 'cpu' is supported");
    return c;
}

json to_json(const data::NormStats& n) { return json{{"mean", n.mean}, {"std", n.std}}; }

data::NormStats norm_stats_from_json(const json& j) {
    reject_unknown_keys(j, {"mean", "std"}, "norm_stats");
    try {
        return {j.at("mean").get<double>(), j.at("std").get<double>()};
    } catch (const json::exception& e) {
        throw ConfigError(std::string("norm_stats: ") + e.what());
    }
}

json to_json(const data::SplitSpec& s) {
    return json{{"train_frac", s.train_frac}, {"val_frac", s.val_frac}, {"test_frac", s.test_frac}};
}

data::SplitSpec split_spec_from_json(const json& j) {
    const std::string where = "split";
    reject_unknown_keys(j, {"train_frac", "val_frac", "test_frac"}, where);
    data::SplitSpec s;
    read(j, "train_frac", s.train_frac, where);
    read(j, "val_frac", s.val_frac, where);
    read(j, "test_frac", s.test_frac, where);
    s.validate();
    return s;
}

}  // namespace sdlpgc::detail
