#include "afs/config.hpp"

#include <fstream>
#include <set>

#include "afs/error.hpp"

namespace afs {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known,
                    const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (known.count(key) == 0) {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

std::string axis_token(ShiftAxis a) {
    switch (a) {
        case ShiftAxis::Time: return "t";
        case ShiftAxis::Height: return "h";
        case ShiftAxis::Width: return "w";
    }
    return "?";
}

ShiftAxis axis_from_token(const std::string& s) {
    if (s == "t") return ShiftAxis::Time;
    if (s == "h") return ShiftAxis::Height;
    if (s == "w") return ShiftAxis::Width;
    throw ConfigError("unknown shift axis '" + s + "' (expected t/h/w)");
}

nlohmann::json shift_to_json(const ShiftSpec& s) {
    nlohmann::json j;
    j["axes"] = nlohmann::json::array();
    for (ShiftAxis a : s.axes) j["axes"].push_back(axis_token(a));
    j["fraction"] = {s.fraction_num, s.fraction_den};
    j["offset"] = s.offset;
    return j;
}

ShiftSpec shift_from_json(const nlohmann::json& j) {
    reject_unknown(j, {"axes", "fraction", "offset"}, "shift");
    ShiftSpec s;
    if (!j.contains("axes") || !j.contains("fraction")) {
        throw ConfigError("shift override needs 'axes' and 'fraction'");
    }
    for (const auto& a : j.at("axes")) s.axes.push_back(axis_from_token(a.get<std::string>()));
    const auto& f = j.at("fraction");
    if (!f.is_array() || f.size() != 2) throw ConfigError("shift fraction must be [num, den]");
    s.fraction_num = f[0].get<std::int64_t>();
    s.fraction_den = f[1].get<std::int64_t>();
    if (j.contains("offset")) s.offset = j.at("offset").get<std::int64_t>();
    return s;
}

}  // namespace

nlohmann::json config_to_json(const ModelConfig& cfg) {
    const ModelSpec& s = cfg.spec;
    nlohmann::json j;
    j["variant"] = variant_name(s.variant);
    j["stem"] = s.stem == StemKind::S3D ? "3d" : "2d";
    j["frames"] = s.frames;
    j["height"] = s.height;
    j["width"] = s.width;
    j["in_channels"] = s.in_channels;
    j["num_classes"] = s.num_classes;
    if (!s.shift.axes.empty()) j["shift"] = shift_to_json(s.shift);
    j["block_variant"] = variant_row_name(s.block_row);
    if (s.use_mhsa) {
        j["use_mhsa"] = true;
        j["mhsa_heads"] = s.mhsa_heads;
    }
    j["se_reduction"] = s.se_reduction;
    j["drop_path_rate"] = s.drop_path_rate;
    j["seed"] = cfg.seed;
    return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
    reject_unknown(j,
                   {"variant", "stem", "frames", "height", "width", "in_channels", "num_classes",
                    "shift", "block_variant", "use_mhsa", "mhsa_heads", "se_reduction",
                    "drop_path_rate", "seed"},
                   "model config");
    ModelConfig cfg;
    ModelSpec& s = cfg.spec;
    if (!j.contains("variant")) throw ConfigError("model config needs 'variant'");
    s.variant = variant_from_string(j.at("variant").get<std::string>());
    if (j.contains("stem")) {
        const std::string stem = j.at("stem").get<std::string>();
        if (stem == "2d") {
            s.stem = StemKind::S2D;
        } else if (stem == "3d") {
            s.stem = StemKind::S3D;
        } else {
            throw ConfigError("stem must be '2d' or '3d', got '" + stem + "'");
        }
    }
    if (j.contains("frames")) s.frames = j.at("frames").get<std::int64_t>();
    if (j.contains("height")) s.height = j.at("height").get<std::int64_t>();
    if (j.contains("width")) s.width = j.at("width").get<std::int64_t>();
    if (j.contains("in_channels")) s.in_channels = j.at("in_channels").get<std::int64_t>();
    if (j.contains("num_classes")) s.num_classes = j.at("num_classes").get<std::int64_t>();
    if (j.contains("shift")) s.shift = shift_from_json(j.at("shift"));
    if (j.contains("block_variant")) {
        s.block_row = variant_row_from_string(j.at("block_variant").get<std::string>());
    }
    if (j.contains("use_mhsa")) s.use_mhsa = j.at("use_mhsa").get<bool>();
    if (j.contains("mhsa_heads")) s.mhsa_heads = j.at("mhsa_heads").get<std::int64_t>();
    if (j.contains("se_reduction")) s.se_reduction = j.at("se_reduction").get<std::int64_t>();
    if (j.contains("drop_path_rate")) s.drop_path_rate = j.at("drop_path_rate").get<float>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    validate_model_spec(s);
    return cfg;
}

ModelConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("invalid JSON in '" + path + "': " + e.what());
    }
    return config_from_json(j);
}

void save_config(const std::string& path, const ModelConfig& cfg) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os << config_to_json(cfg).dump(2) << "\n";
}

ModelConfig preset_config(const std::string& name) {
    ModelConfig cfg;
    ModelSpec& s = cfg.spec;
    auto image = [&](Variant v) {
        s.variant = v;
        s.stem = StemKind::S2D;
        s.frames = 1;
        s.height = s.width = 224;
        s.num_classes = 1000;
    };
    auto video = [&](Variant v) {
        s.variant = v;
        s.stem = StemKind::S3D;
        s.frames = 16;  // 8 temporal tokens after the halving stem
        s.height = s.width = 224;
        s.num_classes = 400;
    };
    if (name == "ast-ti") {
        image(Variant::Tiny);
    } else if (name == "ast-s") {
        image(Variant::Small);
    } else if (name == "ast-m") {
        image(Variant::Medium);
    } else if (name == "vast-ti") {
        video(Variant::Tiny);
    } else if (name == "vast-s") {
        video(Variant::Small);
    } else if (name == "vast-m") {
        video(Variant::Medium);
    } else if (name == "micro") {
        s.variant = Variant::Micro;
        s.stem = StemKind::S3D;
        s.frames = 8;
        s.height = s.width = 32;
        s.num_classes = 2;
    } else {
        throw ConfigError("unknown model preset '" + name + "'");
    }
    return cfg;
}

}  // namespace afs
