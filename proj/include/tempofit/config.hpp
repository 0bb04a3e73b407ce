#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tempofit/model.hpp"
#include "tempofit/training.hpp"

namespace tempofit {

enum class Precision { f32, f64 };

inline const char* to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

inline Precision precision_from_string(const std::string& s) {
    if (s == "f32") return Precision::f32;
    if (s == "f64") return Precision::f64;
    throw std::invalid_argument("precision must be f32 or f64");
}

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flat `key = value` configuration, `#` starts a comment, unknown and
// duplicate keys are rejected.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    Precision precision = Precision::f32;
    std::size_t topk = 5;

    static const std::set<std::string>& known_keys() {
        static const std::set<std::string> keys = {
            "extractor",    "frozen",      "conv_filters", "vit_patch",  "vit_dim",
            "vit_heads",    "vit_depth",   "vit_ff",       "res_mid",    "eff_filters",
            "eff_se_reduction", "feature_dim", "frames",   "height",     "width",
            "channels",     "classes",     "lstm_hidden",  "attn_hidden", "pool",
            "lr",           "batch_size",  "max_epochs",   "patience",   "min_delta",
            "seed",         "precision",   "topk",
        };
        return keys;
    }

    static RunConfig parse(const std::string& text);
    static RunConfig parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse(buf.str());
    }

    std::string to_text() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + " is not `key = value`");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw ConfigError("config line " + std::to_string(lineno) + " has an empty key or value");
        }
        if (!kv.emplace(key, value).second) {
            throw ConfigError("duplicate config key: " + key);
        }
    }
    return kv;
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long n = std::stoll(v, &pos);
        if (pos != v.size() || n < 0) throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw ConfigError("config key `" + key + "` wants a non-negative integer, got `" + v + "`");
    }
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const unsigned long long n = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return static_cast<std::uint64_t>(n);
    } catch (const std::exception&) {
        throw ConfigError("config key `" + key + "` wants an unsigned integer, got `" + v + "`");
    }
}

inline double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key `" + key + "` wants a number, got `" + v + "`");
    }
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key `" + key + "` wants true/false, got `" + v + "`");
}

inline std::vector<std::size_t> to_size_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    std::istringstream in(v);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError("config key `" + key + "` has an empty list item");
        out.push_back(to_size(key, item));
    }
    if (out.empty()) throw ConfigError("config key `" + key + "` wants a comma-separated list");
    return out;
}

}  // namespace detail

inline RunConfig RunConfig::parse(const std::string& text) {
    const auto kv = detail::parse_kv(text);
    for (const auto& [key, value] : kv) {
        (void)value;
        if (known_keys().find(key) == known_keys().end()) {
            throw ConfigError("unknown config key: " + key);
        }
    }

    RunConfig cfg;
    auto get = [&](const char* key) -> const std::string* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };

    try {
    if (const auto* v = get("extractor")) cfg.model.extractor.kind = extractor_kind_from_string(*v);
    if (const auto* v = get("frozen")) cfg.model.extractor.frozen = detail::to_bool("frozen", *v);
    if (const auto* v = get("conv_filters")) cfg.model.extractor.conv_filters = detail::to_size_list("conv_filters", *v);
    if (const auto* v = get("vit_patch")) cfg.model.extractor.vit_patch = detail::to_size("vit_patch", *v);
    if (const auto* v = get("vit_dim")) cfg.model.extractor.vit_dim = detail::to_size("vit_dim", *v);
    if (const auto* v = get("vit_heads")) cfg.model.extractor.vit_heads = detail::to_size("vit_heads", *v);
    if (const auto* v = get("vit_depth")) cfg.model.extractor.vit_depth = detail::to_size("vit_depth", *v);
    if (const auto* v = get("vit_ff")) cfg.model.extractor.vit_ff = detail::to_size("vit_ff", *v);
    if (const auto* v = get("res_mid")) cfg.model.extractor.res_mid = detail::to_size("res_mid", *v);
    if (const auto* v = get("eff_filters")) cfg.model.extractor.eff_filters = detail::to_size("eff_filters", *v);
    if (const auto* v = get("eff_se_reduction")) cfg.model.extractor.eff_se_reduction = detail::to_size("eff_se_reduction", *v);
    if (const auto* v = get("feature_dim")) cfg.model.extractor.feature_dim = detail::to_size("feature_dim", *v);

    if (const auto* v = get("frames")) cfg.model.frames = detail::to_size("frames", *v);
    if (const auto* v = get("height")) cfg.model.height = detail::to_size("height", *v);
    if (const auto* v = get("width")) cfg.model.width = detail::to_size("width", *v);
    if (const auto* v = get("channels")) cfg.model.channels = detail::to_size("channels", *v);
    if (const auto* v = get("classes")) {
        cfg.model.classes = detail::to_size("classes", *v);
    } else {
        throw ConfigError("missing required config key: classes");
    }
    if (const auto* v = get("lstm_hidden")) cfg.model.lstm_hidden = detail::to_size("lstm_hidden", *v);
    if (const auto* v = get("attn_hidden")) cfg.model.attn_hidden = detail::to_size("attn_hidden", *v);
    if (const auto* v = get("pool")) cfg.model.pool = pool_mode_from_string(*v);

    if (const auto* v = get("lr")) cfg.train.learning_rate = detail::to_double("lr", *v);
    if (const auto* v = get("batch_size")) cfg.train.batch_size = detail::to_size("batch_size", *v);
    if (const auto* v = get("max_epochs")) cfg.train.max_epochs = detail::to_size("max_epochs", *v);
    if (const auto* v = get("patience")) cfg.train.patience = detail::to_size("patience", *v);
    if (const auto* v = get("min_delta")) cfg.train.min_delta = detail::to_double("min_delta", *v);
    if (const auto* v = get("seed")) cfg.train.seed = detail::to_u64("seed", *v);
    if (const auto* v = get("precision")) cfg.precision = precision_from_string(*v);
    if (const auto* v = get("topk")) {
        cfg.topk = detail::to_size("topk", *v);
        if (cfg.topk < 1 || cfg.topk > cfg.model.classes) {
            throw ConfigError("topk must lie in [1, classes]");
        }
    } else {
        cfg.topk = std::min<std::size_t>(5, cfg.model.classes);
    }

    cfg.model.validate();
    cfg.train.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
    return cfg;
}

inline std::string RunConfig::to_text() const {
    std::ostringstream out;
    out << "extractor = " << to_string(model.extractor.kind) << '\n';
    out << "frozen = " << (model.extractor.frozen ? "true" : "false") << '\n';
    out << "conv_filters = ";
    for (std::size_t i = 0; i < model.extractor.conv_filters.size(); ++i) {
        if (i) out << ',';
        out << model.extractor.conv_filters[i];
    }
    out << '\n';
    out << "vit_patch = " << model.extractor.vit_patch << '\n';
    out << "vit_dim = " << model.extractor.vit_dim << '\n';
    out << "vit_heads = " << model.extractor.vit_heads << '\n';
    out << "vit_depth = " << model.extractor.vit_depth << '\n';
    out << "vit_ff = " << model.extractor.vit_ff << '\n';
    out << "res_mid = " << model.extractor.res_mid << '\n';
    out << "eff_filters = " << model.extractor.eff_filters << '\n';
    out << "eff_se_reduction = " << model.extractor.eff_se_reduction << '\n';
    out << "feature_dim = " << model.extractor.feature_dim << '\n';
    out << "frames = " << model.frames << '\n';
    out << "height = " << model.height << '\n';
    out << "width = " << model.width << '\n';
    out << "channels = " << model.channels << '\n';
    out << "classes = " << model.classes << '\n';
    out << "lstm_hidden = " << model.lstm_hidden << '\n';
    out << "attn_hidden = " << model.attn_hidden << '\n';
    out << "pool = " << to_string(model.pool) << '\n';
    std::ostringstream nums;
    nums.precision(17);
    nums << "lr = " << train.learning_rate << '\n';
    nums << "min_delta = " << train.min_delta << '\n';
    out << nums.str();
    out << "batch_size = " << train.batch_size << '\n';
    out << "max_epochs = " << train.max_epochs << '\n';
    out << "patience = " << train.patience << '\n';
    out << "seed = " << train.seed << '\n';
    out << "precision = " << to_string(precision) << '\n';
    out << "topk = " << topk << '\n';
    return out.str();
}

}  // namespace tempofit
