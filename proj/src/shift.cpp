#include "afs/shift.hpp"

#include <cstring>

#include "afs/error.hpp"

namespace afs {

const char* shift_axis_name(ShiftAxis a) {
    switch (a) {
        case ShiftAxis::Time: return "time";
        case ShiftAxis::Height: return "height";
        case ShiftAxis::Width: return "width";
    }
    return "?";
}

ShiftSpec image_shift_default(std::int64_t channels) {
    ShiftSpec s;
    s.axes = {ShiftAxis::Height, ShiftAxis::Width};
    s.fraction_num = 1;
    s.fraction_den = 3;
    s.channels = channels;
    return s;
}

ShiftSpec video_shift_default(std::int64_t channels) {
    ShiftSpec s;
    s.axes = {ShiftAxis::Time, ShiftAxis::Height, ShiftAxis::Width};
    s.fraction_num = 1;
    s.fraction_den = 2;
    s.channels = channels;
    return s;
}

std::vector<ChannelGroup> partition_channels(const ShiftSpec& spec) {
    if (spec.explicit_groups) return *spec.explicit_groups;
    if (spec.fraction_den <= 0 || spec.fraction_num < 0) {
        throw ConfigError("shift fraction must be a non-negative rational");
    }
    if (spec.fraction_num > spec.fraction_den) {
        throw ConfigError("shift fraction " + std::to_string(spec.fraction_num) + "/" +
                          std::to_string(spec.fraction_den) + " exceeds 1");
    }
    if (spec.channels <= 0) throw ConfigError("shift spec has no channel count");
    if (spec.offset <= 0) throw ConfigError("shift offset magnitude must be positive");

    std::vector<ChannelGroup> groups;
    if (spec.fraction_num == 0 || spec.axes.empty()) return groups;

    const std::int64_t n_axes = static_cast<std::int64_t>(spec.axes.size());
    const std::int64_t per_axis = (spec.channels * spec.fraction_num) / (spec.fraction_den * n_axes);
    const std::int64_t per_sign = per_axis / 2;
    std::int64_t c = 0;
    for (ShiftAxis axis : spec.axes) {
        for (int sign : {+1, -1}) {
            if (per_sign == 0) continue;
            groups.push_back({c, c + per_sign, axis, sign * spec.offset});
            c += per_sign;
        }
    }
    return groups;
}

Tensor shift_by_groups(const Tensor& x, const std::vector<ChannelGroup>& groups) {
    if (x.rank() != 5) {
        throw ShapeError("shift expects a rank-5 [N,T,H,W,C] tensor, got " + shape_str(x.shape()));
    }
    const std::int64_t N = x.extent(0), T = x.extent(1), H = x.extent(2), W = x.extent(3),
                       C = x.extent(4);
    Tensor out = x;  // unshifted channels copied verbatim
    const std::int64_t extents[4] = {N, T, H, W};

    for (const ChannelGroup& g : groups) {
        if (g.begin < 0 || g.end > C || g.begin >= g.end) {
            throw ConfigError("shift group channels [" + std::to_string(g.begin) + "," +
                              std::to_string(g.end) + ") out of range for C=" + std::to_string(C));
        }
        const int ax = static_cast<int>(g.axis);
        const std::int64_t width = g.end - g.begin;
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t t = 0; t < T; ++t)
                for (std::int64_t h = 0; h < H; ++h)
                    for (std::int64_t w = 0; w < W; ++w) {
                        std::int64_t src[4] = {n, t, h, w};
                        src[ax] -= g.offset;
                        const std::int64_t dst_off =
                            (((n * T + t) * H + h) * W + w) * C + g.begin;
                        if (src[ax] < 0 || src[ax] >= extents[ax]) {
                            std::memset(out.data() + dst_off, 0,
                                        static_cast<std::size_t>(width) * sizeof(float));
                        } else {
                            const std::int64_t src_off =
                                (((src[0] * T + src[1]) * H + src[2]) * W + src[3]) * C + g.begin;
                            std::memcpy(out.data() + dst_off, x.data() + src_off,
                                        static_cast<std::size_t>(width) * sizeof(float));
                        }
                    }
    }
    return out;
}

Tensor shift_forward(const Tensor& x, const ShiftSpec& spec) {
    ShiftSpec s = spec;
    if (s.channels == 0 && x.rank() == 5) s.channels = x.extent(4);
    return shift_by_groups(x, partition_channels(s));
}

Tensor shift_vjp(const Tensor& grad_out, const ShiftSpec& spec) {
    ShiftSpec s = spec;
    if (s.channels == 0 && grad_out.rank() == 5) s.channels = grad_out.extent(4);
    std::vector<ChannelGroup> groups = partition_channels(s);
    for (ChannelGroup& g : groups) g.offset = -g.offset;
    return shift_by_groups(grad_out, groups);
}

VarId shift(Tape& tape, VarId x, const ShiftSpec& spec) {
    ShiftSpec s = spec;
    if (s.channels == 0) s.channels = tape.val(x).extent(4);
    Tensor y = shift_forward(tape.val(x), s);
    return tape.emit(std::move(y), {x}, [x, s](Tape& t, VarId self) {
        Tensor gx = shift_vjp(t.grad(self), s);
        Tensor& dst = t.grad(x);
        for (std::int64_t i = 0; i < gx.numel(); ++i) dst[i] += gx[i];
    });
}

}  // namespace afs
