#include "onlinebev/checkpoint.hpp"

#include "onlinebev/binfile.hpp"
#include "onlinebev/error.hpp"

namespace obev {

std::string serialize_checkpoint(const ParamStore& params, const nlohmann::json& meta)
{
    BinWriter writer(kCheckpointMagic);
    nlohmann::json index = nlohmann::json::array();
    for (const auto& [name, entry] : params) {
        const auto offset = writer.append(entry.value.values());
        index.push_back({{"name", name}, {"shape", entry.value.shape()}, {"offset", offset}});
    }
    return writer.finish({{"version", 1}, {"meta", meta}, {"tensors", index}});
}

Checkpoint deserialize_checkpoint(std::string bytes)
{
    const BinFile file = parse_bin(std::move(bytes), kCheckpointMagic, "checkpoint");
    Checkpoint ckpt;
    try {
        if (file.header.at("version").get<int>() != 1) throw ParseError("checkpoint: unsupported version");
        ckpt.meta = file.header.value("meta", nlohmann::json::object());
        for (const auto& t : file.header.at("tensors")) {
            const auto name = t.at("name").get<std::string>();
            const auto shape = t.at("shape").get<Shape>();
            Tensor value(shape);
            if (!read_doubles(file, t.at("offset").get<std::uint64_t>(), value.size(), value.data())) {
                throw ParseError("checkpoint: data block of '" + name + "' is truncated");
            }
            ckpt.params.add(name, std::move(value));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: bad index: ") + e.what());
    }
    return ckpt;
}

void save_checkpoint(const std::string& path, const ParamStore& params, const nlohmann::json& meta)
{
    write_file(path, serialize_checkpoint(params, meta));
}

Checkpoint load_checkpoint(const std::string& path)
{
    return deserialize_checkpoint(read_file(path));
}

}  // namespace obev
