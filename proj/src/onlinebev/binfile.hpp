#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace obev {

// Container shared by checkpoints and datasets:
//
//   bytes [0, 8)        magic, e.g. "OBEVCKP1"
//   bytes [8, 16)       header length N, unsigned 64-bit little-endian
//   bytes [16, 16+N)    UTF-8 JSON header
//   bytes [16+N, ...)   payload: little-endian IEEE-754 doubles
//
// Offsets stored in headers are byte offsets from the start of the payload.
class BinWriter {
public:
    explicit BinWriter(std::string magic);

    // Appends values to the payload and returns their byte offset.
    std::uint64_t append(std::span<const double> values);
    std::string finish(const nlohmann::json& header) const;

private:
    std::string magic_;
    std::string payload_;
};

struct BinFile {
    nlohmann::json header;
    std::string payload;
};

// Parses a container held in memory; throws ParseError on a bad magic or a
// truncated header.
BinFile parse_bin(std::string bytes, std::string_view expected_magic, const std::string& what);

// Reads count doubles at a payload offset. Returns false when the payload is
// too short.
bool read_doubles(const BinFile& file, std::uint64_t offset, std::size_t count, double* out);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

// FNV-1a, used to compare dataset bytes across ablation arms.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace obev
