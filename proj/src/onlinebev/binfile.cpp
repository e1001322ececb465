#include "onlinebev/binfile.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "onlinebev/error.hpp"

namespace obev {

namespace {

static_assert(sizeof(double) == 8);

std::uint64_t to_le(std::uint64_t v)
{
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        std::uint64_t r = 0;
        for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
        return r;
    }
}

void put_u64(std::string& out, std::uint64_t v)
{
    v = to_le(v);
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
}

std::uint64_t get_u64(const char* p)
{
    std::uint64_t v;
    std::memcpy(&v, p, 8);
    return to_le(v);
}

}  // namespace

BinWriter::BinWriter(std::string magic) : magic_(std::move(magic))
{
    if (magic_.size() != 8) throw Error("container magic must be 8 bytes");
}

std::uint64_t BinWriter::append(std::span<const double> values)
{
    const std::uint64_t offset = payload_.size();
    for (double d : values) put_u64(payload_, std::bit_cast<std::uint64_t>(d));
    return offset;
}

std::string BinWriter::finish(const nlohmann::json& header) const
{
    const std::string text = header.dump();
    std::string out;
    out.reserve(16 + text.size() + payload_.size());
    out += magic_;
    put_u64(out, text.size());
    out += text;
    out += payload_;
    return out;
}

BinFile parse_bin(std::string bytes, std::string_view expected_magic, const std::string& what)
{
    if (bytes.size() < 16 || std::string_view(bytes).substr(0, 8) != expected_magic) {
        throw ParseError(what + ": missing or wrong magic (expected " + std::string(expected_magic) + ")");
    }
    const std::uint64_t n = get_u64(bytes.data() + 8);
    if (n > bytes.size() - 16) throw ParseError(what + ": truncated JSON header");
    BinFile file;
    try {
        file.header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(n));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(what + ": malformed JSON header: " + e.what());
    }
    file.payload = bytes.substr(16 + n);
    return file;
}

bool read_doubles(const BinFile& file, std::uint64_t offset, std::size_t count, double* out)
{
    if (offset > file.payload.size() || count > (file.payload.size() - offset) / 8) return false;
    const char* p = file.payload.data() + offset;
    for (std::size_t i = 0; i < count; ++i) out[i] = std::bit_cast<double>(get_u64(p + 8 * i));
    return true;
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write to '" + path + "' failed");
}

std::uint64_t fnv1a64(std::string_view bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace obev
