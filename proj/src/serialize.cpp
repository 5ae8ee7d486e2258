#include "afs/serialize.hpp"

#include <cstring>
#include <fstream>
#include <set>

#include "afs/error.hpp"

namespace afs {

namespace {

void put_bytes(std::ostream& os, const void* data, std::size_t n, std::size_t& offset) {
    os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!os) throw IoError("write failed", offset);
    offset += n;
}

void get_bytes(std::istream& is, void* data, std::size_t n, std::size_t& offset) {
    is.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (is.gcount() != static_cast<std::streamsize>(n)) {
        throw IoError("unexpected end of file", offset);
    }
    offset += n;
}

void put_u16(std::ostream& os, std::uint16_t v, std::size_t& offset) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>(v >> 8)};
    put_bytes(os, b, 2, offset);
}

void put_u32(std::ostream& os, std::uint32_t v, std::size_t& offset) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    put_bytes(os, b, 4, offset);
}

std::uint16_t get_u16(std::istream& is, std::size_t& offset) {
    unsigned char b[2];
    get_bytes(is, b, 2, offset);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& is, std::size_t& offset) {
    unsigned char b[4];
    get_bytes(is, b, 4, offset);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

void put_f32_payload(std::ostream& os, const Tensor& t, std::size_t& offset) {
    static_assert(sizeof(float) == 4);
    if (t.numel() == 0) return;
    // Assumes a little-endian host float layout (checked at startup elsewhere
    // would be overkill; every supported target is LE).
    put_bytes(os, t.data(), static_cast<std::size_t>(t.numel()) * 4, offset);
}

}  // namespace

void write_tensor_record(std::ostream& os, const Tensor& t, std::size_t& offset) {
    put_bytes(os, "TNSR", 4, offset);
    put_u16(os, kTnsrVersion, offset);
    const unsigned char dtype = 0, rank = static_cast<unsigned char>(t.rank());
    put_bytes(os, &dtype, 1, offset);
    put_bytes(os, &rank, 1, offset);
    for (int i = 0; i < t.rank(); ++i) {
        const std::int64_t e = t.extent(i);
        if (e < 0 || e > 0xffffffffLL) throw IoError("extent does not fit in u32", offset);
        put_u32(os, static_cast<std::uint32_t>(e), offset);
    }
    put_f32_payload(os, t, offset);
}

Tensor read_tensor_record(std::istream& is, std::size_t& offset) {
    const std::size_t magic_at = offset;
    char magic[4];
    get_bytes(is, magic, 4, offset);
    if (std::memcmp(magic, "TNSR", 4) != 0) throw IoError("bad magic", magic_at);
    const std::size_t version_at = offset;
    const std::uint16_t version = get_u16(is, offset);
    if (version != kTnsrVersion) {
        throw IoError("unsupported version " + std::to_string(version), version_at);
    }
    unsigned char dtype, rank;
    const std::size_t dtype_at = offset;
    get_bytes(is, &dtype, 1, offset);
    if (dtype != 0) throw IoError("unsupported dtype code " + std::to_string(dtype), dtype_at);
    const std::size_t rank_at = offset;
    get_bytes(is, &rank, 1, offset);
    if (rank > kMaxRank) throw IoError("rank " + std::to_string(rank) + " exceeds limit", rank_at);
    Shape shape;
    for (int i = 0; i < rank; ++i) {
        const std::size_t ext_at = offset;
        const std::uint32_t e = get_u32(is, offset);
        if (e == 0) throw IoError("zero extent", ext_at);
        shape.push_back(static_cast<std::int64_t>(e));
    }
    Tensor t(shape);
    if (t.numel() > 0) get_bytes(is, t.data(), static_cast<std::size_t>(t.numel()) * 4, offset);
    return t;
}

void save_tensor(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    std::size_t offset = 0;
    write_tensor_record(os, t, offset);
}

Tensor load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    std::size_t offset = 0;
    Tensor t = read_tensor_record(is, offset);
    if (is.peek() != std::char_traits<char>::eof()) {
        throw IoError("trailing bytes after tensor record", offset);
    }
    return t;
}

void save_named_tensors(const std::string& path,
                        const std::vector<std::pair<std::string, Tensor>>& items) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    std::size_t offset = 0;
    for (const auto& [name, tensor] : items) {
        put_u32(os, static_cast<std::uint32_t>(name.size()), offset);
        put_bytes(os, name.data(), name.size(), offset);
        write_tensor_record(os, tensor, offset);
    }
}

std::vector<std::pair<std::string, Tensor>> load_named_tensors(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    std::vector<std::pair<std::string, Tensor>> items;
    std::size_t offset = 0;
    while (is.peek() != std::char_traits<char>::eof()) {
        const std::uint32_t len = get_u32(is, offset);
        std::string name(len, '\0');
        if (len > 0) get_bytes(is, name.data(), len, offset);
        Tensor t = read_tensor_record(is, offset);
        items.emplace_back(std::move(name), std::move(t));
    }
    return items;
}

void save_params(const std::string& path, const ParamStore& store) {
    std::vector<std::pair<std::string, Tensor>> items;
    for (const auto& p : store.all()) items.emplace_back(p->name, p->value);
    save_named_tensors(path, items);
}

void load_params(const std::string& path, ParamStore& store) {
    const auto items = load_named_tensors(path);
    std::set<std::string> seen;
    for (const auto& [name, tensor] : items) {
        Parameter* p = store.find(name);
        if (p == nullptr) throw IoError("checkpoint contains unknown parameter '" + name + "'");
        if (p->value.shape() != tensor.shape()) {
            throw IoError("parameter '" + name + "' has shape " + shape_str(tensor.shape()) +
                          ", expected " + shape_str(p->value.shape()));
        }
        if (!seen.insert(name).second) throw IoError("duplicate parameter '" + name + "'");
        p->value = tensor;
    }
    for (const auto& p : store.all()) {
        if (seen.count(p->name) == 0) {
            throw IoError("checkpoint is missing parameter '" + p->name + "'");
        }
    }
}

}  // namespace afs
