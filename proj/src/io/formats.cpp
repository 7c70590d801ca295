#include "downscaler/io/formats.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace downscaler::io {

namespace {

constexpr std::uint16_t kFormatVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

class Reader {
public:
    Reader(std::string bytes, std::string path)
        : bytes_(std::move(bytes)), path_(std::move(path)) {}

    std::uint8_t u8(const char* field) {
        need(1, field);
        return static_cast<std::uint8_t>(bytes_[pos_++]);
    }
    std::uint16_t u16(const char* field) {
        need(2, field);
        std::uint16_t v = static_cast<std::uint8_t>(bytes_[pos_]) |
                          (static_cast<std::uint16_t>(static_cast<std::uint8_t>(bytes_[pos_ + 1]))
                           << 8);
        pos_ += 2;
        return v;
    }
    std::uint32_t u32(const char* field) {
        need(4, field);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32(const char* field) { return std::bit_cast<float>(u32(field)); }
    std::string str(std::size_t n, const char* field) {
        need(n, field);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    void f32_block(float* dst, std::size_t n, const char* field) {
        need(4 * n, field);
        if constexpr (std::endian::native == std::endian::little) {
            std::memcpy(dst, bytes_.data() + pos_, 4 * n);
            pos_ += 4 * n;
        } else {
            for (std::size_t i = 0; i < n; ++i) dst[i] = f32(field);
        }
    }
    bool at_end() const { return pos_ == bytes_.size(); }
    std::size_t remaining() const { return bytes_.size() - pos_; }
    const std::string& path() const { return path_; }

    [[noreturn]] void fail(const std::string& field) const {
        throw DataError(path_ + ": corrupt or truncated field '" + field + "'");
    }

private:
    void need(std::size_t n, const char* field) {
        if (bytes_.size() - pos_ < n) fail(field);
    }
    std::string bytes_;
    std::size_t pos_ = 0;
    std::string path_;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path + ": cannot open for reading");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

void spew(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(path + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError(path + ": write failed");
}

void encode_tensors(std::string& out, const std::vector<NamedTensor>& tensors) {
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& nt : tensors) {
        if (nt.name.size() > 0xffff) throw DataError("tensor name too long: " + nt.name);
        put_u16(out, static_cast<std::uint16_t>(nt.name.size()));
        out.append(nt.name);
        out.push_back(static_cast<char>(nt.value.rank()));
        for (int e : nt.value.shape) put_u32(out, static_cast<std::uint32_t>(e));
        if constexpr (std::endian::native == std::endian::little) {
            const char* raw = reinterpret_cast<const char*>(nt.value.ptr());
            out.append(raw, raw + 4 * nt.value.size());
        } else {
            for (float v : nt.value.data) put_f32(out, v);
        }
    }
}

std::vector<NamedTensor> decode_tensors(Reader& r) {
    const std::uint32_t count = r.u32("tensor count");
    std::vector<NamedTensor> tensors;
    tensors.reserve(count);
    for (std::uint32_t t = 0; t < count; ++t) {
        NamedTensor nt;
        const std::uint16_t name_len = r.u16("name length");
        nt.name = r.str(name_len, "name");
        const std::uint8_t rank = r.u8("rank");
        if (rank == 0 || rank > 8) r.fail("rank of tensor '" + nt.name + "'");
        std::vector<int> shape(rank);
        std::size_t numel = 1;
        for (int i = 0; i < rank; ++i) {
            const std::uint32_t e = r.u32("extent");
            if (e == 0 || e > (1u << 30)) r.fail("extent of tensor '" + nt.name + "'");
            shape[static_cast<std::size_t>(i)] = static_cast<int>(e);
            numel *= e;
        }
        if (numel * 4 > r.remaining()) r.fail("payload of tensor '" + nt.name + "'");
        nt.value.shape = std::move(shape);
        nt.value.data.resize(numel);
        r.f32_block(nt.value.ptr(), numel, "payload");
        tensors.push_back(std::move(nt));
    }
    return tensors;
}

} // namespace

void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
    std::string out;
    out.append("CKPT");
    put_u16(out, kFormatVersion);
    encode_tensors(out, tensors);
    spew(path, out);
}

std::vector<NamedTensor> read_checkpoint(const std::string& path) {
    Reader r(slurp(path), path);
    if (r.str(4, "magic") != "CKPT") r.fail("magic");
    if (r.u16("version") != kFormatVersion) r.fail("version");
    auto tensors = decode_tensors(r);
    if (!r.at_end()) r.fail("trailing bytes");
    return tensors;
}

void write_dset(const std::string& path, const DsetFile& file) {
    std::string out;
    out.append("DSET");
    put_u16(out, kFormatVersion);
    encode_tensors(out, file.tensors);
    put_u32(out, file.split_index);
    put_u32(out, static_cast<std::uint32_t>(file.metadata_json.size()));
    out.append(file.metadata_json);
    spew(path, out);
}

DsetFile read_dset(const std::string& path) {
    Reader r(slurp(path), path);
    if (r.str(4, "magic") != "DSET") r.fail("magic");
    if (r.u16("version") != kFormatVersion) r.fail("version");
    DsetFile f;
    f.tensors = decode_tensors(r);
    f.split_index = r.u32("split_index");
    const std::uint32_t meta_len = r.u32("metadata length");
    f.metadata_json = r.str(meta_len, "metadata");
    if (!r.at_end()) r.fail("trailing bytes");
    return f;
}

const Tensor* find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
    for (const auto& nt : tensors)
        if (nt.name == name) return &nt.value;
    return nullptr;
}

const Tensor& require_tensor(const std::vector<NamedTensor>& tensors, const std::string& name,
                             const std::string& path) {
    const Tensor* t = find_tensor(tensors, name);
    if (!t) throw DataError(path + ": missing tensor '" + name + "'");
    return *t;
}

void write_pgm(const std::string& path, const Tensor& field) {
    if (field.rank() != 2)
        throw ShapeError("pgm: field must be rank 2, got " + shape_to_string(field.shape));
    const int h = field.shape[0], w = field.shape[1];

    float lo = std::numeric_limits<float>::infinity();
    float hi = -std::numeric_limits<float>::infinity();
    std::vector<float> g(field.size());
    for (std::size_t i = 0; i < field.size(); ++i) {
        g[i] = std::log1p(std::fmax(field.data[i], 0.0f));
        lo = std::fmin(lo, g[i]);
        hi = std::fmax(hi, g[i]);
    }
    const float span = hi > lo ? hi - lo : 1.0f;

    std::string out;
    out += "P5\n";
    out += "# log1p rescale: min=" + format_double(lo) + " max=" + format_double(hi) + "\n";
    out += std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    for (std::size_t i = 0; i < g.size(); ++i) {
        const float t = (g[i] - lo) / span;
        const int byte = static_cast<int>(std::lround(255.0f * std::fmin(std::fmax(t, 0.0f), 1.0f)));
        out.push_back(static_cast<char>(byte));
    }
    spew(path, out);
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::string(buf);
}

} // namespace downscaler::io
