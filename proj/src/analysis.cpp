#include "afs/analysis.hpp"

#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "afs/error.hpp"

namespace afs {

std::int64_t ComputeStats::total_params() const {
    std::int64_t n = 0;
    for (const LayerRow& r : rows) n += r.params;
    return n;
}

std::int64_t ComputeStats::total_macs() const {
    std::int64_t n = 0;
    for (const LayerRow& r : rows) n += r.macs;
    return n;
}

ComputeStats analyze(const ModelSpec& spec, bool double_count) {
    validate_model_spec(spec);
    ComputeStats stats;
    stats.double_count = double_count;
    const std::int64_t mul = double_count ? 2 : 1;
    const auto stages = stages_for(spec.variant);

    std::int64_t T = spec.frames, H = spec.height / 4, W = spec.width / 4;
    const std::int64_t c1 = stages.front().channels;
    {
        LayerRow r;
        r.name = "stem";
        if (spec.stem == StemKind::S3D) {
            T = (spec.frames + 2 - 3) / 2 + 1;
            r.params = 3 * 7 * 7 * spec.in_channels * c1 + c1 + 2 * c1;
            r.macs = mul * T * H * W * 3 * 7 * 7 * spec.in_channels * c1;
        } else {
            r.params = 7 * 7 * spec.in_channels * c1 + c1 + 2 * c1;
            r.macs = mul * T * H * W * 7 * 7 * spec.in_channels * c1;
        }
        r.out_shape = {1, T, H, W, c1};
        stats.rows.push_back(std::move(r));
    }

    const BlockConfig probe = make_variant(spec.block_row, BlockConfig{});
    for (std::size_t si = 0; si < stages.size(); ++si) {
        const StageSpec& st = stages[si];
        const std::int64_t d = st.channels;
        if (si > 0) {
            const std::int64_t ci = stages[si - 1].channels;
            H /= 2;
            W /= 2;
            LayerRow r;
            r.name = "down" + std::to_string(si + 1);
            r.params = 4 * ci * d + d + 2 * d;
            r.macs = mul * T * H * W * 4 * ci * d;
            r.out_shape = {1, T, H, W, d};
            stats.rows.push_back(std::move(r));
        }
        const std::int64_t S = T * H * W;
        for (std::int64_t b = 0; b < st.depth; ++b) {
            const std::string prefix =
                "stage" + std::to_string(si + 1) + ".block" + std::to_string(b);
            LayerRow mix;
            mix.name = prefix + ".mixer";
            mix.out_shape = {1, T, H, W, d};
            if (spec.use_mhsa) {
                mix.params = 2 * d + 4 * d * d + d;
                mix.macs = mul * (4 * S * d * d + 2 * S * S * d);
            } else if (probe.only_shift) {
                mix.params = 0;
                mix.macs = 0;
            } else {
                mix.params = 2 * d + 2 * d * d + d;  // ln1, w_v, w_h(+bias)
                mix.macs = mul * 2 * S * d * d;
                if (probe.use_scale) {
                    const std::int64_t dr = d / spec.se_reduction;
                    mix.params += 2 * d * dr + dr + d;
                    mix.macs += mul * 2 * d * dr;  // pooled vector, per clip
                }
                if (probe.use_bias) {
                    mix.params += 9 * d + d;
                    mix.macs += mul * S * 9 * d;
                }
            }
            stats.rows.push_back(std::move(mix));

            LayerRow mlp;
            mlp.name = prefix + ".mlp";
            mlp.out_shape = {1, T, H, W, d};
            const std::int64_t hidden = st.expansion * d;
            mlp.params = 2 * d + d * hidden + hidden + hidden * d + d;
            mlp.macs = mul * 2 * S * d * hidden;
            stats.rows.push_back(std::move(mlp));
        }
    }

    const std::int64_t dl = stages.back().channels;
    stats.rows.push_back({"final_norm", 2 * dl, 0, {1, T, H, W, dl}});
    stats.rows.push_back(
        {"head", dl * spec.num_classes + spec.num_classes, mul * dl * spec.num_classes,
         {1, spec.num_classes}});
    return stats;
}

std::int64_t count_params(const Model& m) { return m.params.total_params(); }

namespace {

std::string shape_json(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace

std::string report(const ComputeStats& stats, const std::string& format) {
    std::ostringstream os;
    if (format == "json") {
        nlohmann::json j;
        j["unit"] = stats.double_count ? "flops_2x" : "mac";
        j["rows"] = nlohmann::json::array();
        for (const LayerRow& r : stats.rows) {
            j["rows"].push_back(
                {{"name", r.name}, {"params", r.params}, {"macs", r.macs}, {"out_shape", r.out_shape}});
        }
        j["total_params"] = stats.total_params();
        j["total_macs"] = stats.total_macs();
        os << j.dump(2) << "\n";
    } else if (format == "csv") {
        os << "name,params,macs,out_shape\n";
        for (const LayerRow& r : stats.rows) {
            os << r.name << "," << r.params << "," << r.macs << ",\"" << shape_json(r.out_shape)
               << "\"\n";
        }
        os << "total," << stats.total_params() << "," << stats.total_macs() << ",\n";
    } else if (format == "table") {
        std::size_t w = 10;
        for (const LayerRow& r : stats.rows) w = std::max(w, r.name.size());
        os << std::left << std::setw(static_cast<int>(w) + 2) << "layer" << std::right
           << std::setw(14) << "params" << std::setw(16) << "macs"
           << "  shape\n";
        for (const LayerRow& r : stats.rows) {
            os << std::left << std::setw(static_cast<int>(w) + 2) << r.name << std::right
               << std::setw(14) << r.params << std::setw(16) << r.macs << "  "
               << shape_json(r.out_shape) << "\n";
        }
        os << std::left << std::setw(static_cast<int>(w) + 2) << "total" << std::right
           << std::setw(14) << stats.total_params() << std::setw(16) << stats.total_macs() << "\n";
    } else {
        throw ConfigError("unknown report format '" + format + "' (expected json/csv/table)");
    }
    return os.str();
}

}  // namespace afs
