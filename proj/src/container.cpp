#include "lodge/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <zlib.h>

namespace lodge::io {

namespace {

constexpr std::uint8_t kMagic[16] = {0x89, 'L', 'O', 'D', 'G', 'E', 'K', 'I', 'T', '\r', '\n', 0x1A, '\n', 0, 0, 0};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

std::size_t dtype_size(Dtype d) { return d == Dtype::f32 ? 4 : 8; }

Dtype parse_dtype(const nlohmann::json& h) {
    if (!h.contains("dtype") || !h["dtype"].is_string()) throw HeaderError("header: missing dtype");
    const auto s = h["dtype"].get<std::string>();
    if (s == "f32") return Dtype::f32;
    if (s == "f64") return Dtype::f64;
    throw HeaderError("header: unknown dtype '" + s + "'");
}

std::uint64_t header_count(const nlohmann::json& h) {
    for (const char* key : {"L", "channels"}) {
        if (!h.contains(key) || !h[key].is_number_unsigned()) throw HeaderError(std::string("header: missing ") + key);
    }
    if (!h.contains("kind") || !h["kind"].is_string()) throw HeaderError("header: missing kind");
    const auto L = h["L"].get<std::uint64_t>();
    const auto C = h["channels"].get<std::uint64_t>();
    if (C == 0) throw HeaderError("header: zero channels");
    if (L > (std::uint64_t{1} << 40) / C) throw HeaderError("header: implausible size");
    return L * C;
}

}  // namespace

std::uint32_t crc32(const std::uint8_t* data, std::size_t size) {
    uLong c = ::crc32(0L, Z_NULL, 0);
    while (size > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
        c = ::crc32(c, data, chunk);
        data += chunk;
        size -= chunk;
    }
    return static_cast<std::uint32_t>(c);
}

std::vector<std::uint8_t> encode(nlohmann::json header, const std::vector<double>& values, Dtype dtype) {
    header["dtype"] = dtype == Dtype::f32 ? "f32" : "f64";
    if (header_count(header) != values.size()) throw HeaderError("encode: header shape disagrees with payload");
    const std::string text = header.dump();
    std::vector<std::uint8_t> out(kMagic, kMagic + 16);
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    const std::size_t payload_begin = out.size();
    out.reserve(out.size() + values.size() * dtype_size(dtype) + 4);
    for (double v : values) {
        if (dtype == Dtype::f32) {
            put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        } else {
            const auto bits = std::bit_cast<std::uint64_t>(v);
            put_u32(out, static_cast<std::uint32_t>(bits));
            put_u32(out, static_cast<std::uint32_t>(bits >> 32));
        }
    }
    put_u32(out, crc32(out.data() + payload_begin, out.size() - payload_begin));
    return out;
}

Container decode(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 24 || std::memcmp(bytes.data(), kMagic, 16) != 0) throw HeaderError("bad magic");
    if (get_u32(bytes.data() + 16) != kFormatVersion) throw HeaderError("unsupported format version");
    const std::uint32_t hlen = get_u32(bytes.data() + 20);
    if (bytes.size() < 24ull + hlen) throw HeaderError("header truncated");
    Container c;
    try {
        c.header = nlohmann::json::parse(bytes.begin() + 24, bytes.begin() + 24 + hlen);
    } catch (const nlohmann::json::exception& e) {
        throw HeaderError(std::string("header is not valid JSON: ") + e.what());
    }
    if (!c.header.is_object()) throw HeaderError("header must be a JSON object");
    c.dtype = parse_dtype(c.header);
    const std::uint64_t count = header_count(c.header);
    const std::size_t payload_begin = 24 + hlen;
    const std::size_t payload_bytes = count * dtype_size(c.dtype);
    if (bytes.size() < payload_begin + payload_bytes + 4) throw TruncatedError("payload shorter than header declares");
    if (bytes.size() > payload_begin + payload_bytes + 4) throw HeaderError("trailing bytes after checksum");
    const std::uint8_t* p = bytes.data() + payload_begin;
    if (crc32(p, payload_bytes) != get_u32(p + payload_bytes)) throw ChecksumError("payload checksum mismatch");
    c.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (c.dtype == Dtype::f32) {
            c.values[i] = std::bit_cast<float>(get_u32(p + 4 * i));
        } else {
            const std::uint64_t lo = get_u32(p + 8 * i), hi = get_u32(p + 8 * i + 4);
            c.values[i] = std::bit_cast<double>(lo | (hi << 32));
        }
    }
    return c;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FormatError("write failed: " + path.string());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_matrix(const std::filesystem::path& path, nlohmann::json header, const Mat& m, Dtype dtype) {
    header["L"] = m.rows;
    header["channels"] = m.cols;
    write_file(path, encode(std::move(header), m.data, dtype));
}

Container read_container(const std::filesystem::path& path) { return decode(read_file(path)); }

Mat container_matrix(const Container& c) {
    Mat m(c.header["L"].get<std::size_t>(), c.header["channels"].get<std::size_t>());
    m.data = c.values;
    return m;
}

}  // namespace lodge::io
