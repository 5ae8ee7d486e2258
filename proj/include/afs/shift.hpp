#pragma once

#include <optional>
#include <vector>

#include "afs/tape.hpp"
#include "afs/tensor.hpp"

namespace afs {

// Axes of the [N, T, H, W, C] video layout that channel groups can move along.
enum class ShiftAxis { Time = 1, Height = 2, Width = 3 };

const char* shift_axis_name(ShiftAxis a);

// Contiguous channel range [begin, end) translated by `offset` positions
// along `axis`; vacated positions are zero-filled.
struct ChannelGroup {
    std::int64_t begin = 0;
    std::int64_t end = 0;
    ShiftAxis axis = ShiftAxis::Height;
    std::int64_t offset = 0;  // signed

    bool operator==(const ChannelGroup&) const = default;
};

// Which channels move where. The total fraction is split evenly across axes
// (floor division), and each axis allotment splits evenly between the + and -
// directions. Remainder channels stay unshifted at the tail.
struct ShiftSpec {
    std::vector<ShiftAxis> axes;
    std::int64_t fraction_num = 0;
    std::int64_t fraction_den = 1;
    std::int64_t offset = 1;
    std::int64_t channels = 0;
    // When set, overrides the derived partition entirely.
    std::optional<std::vector<ChannelGroup>> explicit_groups;

    ShiftSpec with_channels(std::int64_t c) const {
        ShiftSpec s = *this;
        s.channels = c;
        return s;
    }
    bool operator==(const ShiftSpec&) const = default;
};

ShiftSpec image_shift_default(std::int64_t channels = 0);  // {h,w}, 1/3
ShiftSpec video_shift_default(std::int64_t channels = 0);  // {t,h,w}, 1/2

// Deterministic channel partition: groups in axis order, + before -, then the
// unshifted remainder (not listed).
std::vector<ChannelGroup> partition_channels(const ShiftSpec& spec);

// Forward shift of a [N,T,H,W,C] tensor; output shape equals input shape.
Tensor shift_forward(const Tensor& x, const ShiftSpec& spec);
// Adjoint: identical to shifting with all offsets negated.
Tensor shift_vjp(const Tensor& grad_out, const ShiftSpec& spec);

// Shared kernel used by both directions.
Tensor shift_by_groups(const Tensor& x, const std::vector<ChannelGroup>& groups);

// Tape-registered shift.
VarId shift(Tape& tape, VarId x, const ShiftSpec& spec);

}  // namespace afs
