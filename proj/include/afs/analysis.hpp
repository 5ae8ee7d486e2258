#pragma once

#include <string>
#include <vector>

#include "afs/model.hpp"

namespace afs {

struct LayerRow {
    std::string name;
    std::int64_t params = 0;
    std::int64_t macs = 0;
    Shape out_shape;
};

struct ComputeStats {
    std::vector<LayerRow> rows;
    bool double_count = false;  // report 2 FLOPs per MAC instead of 1

    std::int64_t total_params() const;
    std::int64_t total_macs() const;
};

// Static per-layer accounting for one clip (batch 1, one view). Counts one
// unit per multiply-accumulate; normalization, activations and the shift
// itself contribute zero. Row order mirrors the build order: stem,
// per-stage downsample, then mixer and MLP rows per block, final norm, head.
ComputeStats analyze(const ModelSpec& spec, bool double_count = false);

// Exact count of learnable scalars in a built model.
std::int64_t count_params(const Model& m);

// format is one of "json", "csv", "table".
std::string report(const ComputeStats& stats, const std::string& format);

}  // namespace afs
