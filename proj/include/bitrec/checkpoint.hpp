#pragma once

// Checkpoint container: magic "BHCK", version byte, u32 little-endian JSON
// length, JSON metadata (kind, m, users, items, epoch, metrics, config,
// config_hash, seed), then the user table followed by the item table as
// row-major little-endian 32-bit floats.

#include <cstdint>
#include <fstream>
#include <string>

#include <json.hpp>

#include "bitrec/common.hpp"
#include "bitrec/vhmodel.hpp"

namespace bitrec {

inline constexpr char kCheckpointMagic[4] = {'B', 'H', 'C', 'K'};
inline constexpr uint8_t kCheckpointVersion = 1;

struct Checkpoint {
    nlohmann::json meta;
    Matrix user_table;
    Matrix item_table;
};

namespace detail {
inline void write_table_f32(std::ostream& os, const Matrix& t) {
    for (double v : t.data) write_f32_le(os, static_cast<float>(v));
}
inline Matrix read_table_f32(std::istream& is, std::size_t rows, std::size_t cols) {
    Matrix t(rows, cols);
    for (double& v : t.data) v = static_cast<double>(read_f32_le(is));
    return t;
}
}  // namespace detail

inline void save_checkpoint(const std::string& path, const nlohmann::json& meta,
                            const Matrix& user_table, const Matrix& item_table) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path);
    os.write(kCheckpointMagic, 4);
    write_u8(os, kCheckpointVersion);
    const std::string json = meta.dump();
    write_u32_le(os, static_cast<uint32_t>(json.size()));
    os.write(json.data(), static_cast<std::streamsize>(json.size()));
    detail::write_table_f32(os, user_table);
    detail::write_table_f32(os, item_table);
    if (!os) throw IoError("short write: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint not found: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw IoError("not a checkpoint file (bad magic): " + path);
    const uint8_t version = read_u8(is);
    if (version != kCheckpointVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    const uint32_t json_len = read_u32_le(is);
    std::string json(json_len, '\0');
    is.read(json.data(), json_len);
    if (!is) throw IoError("truncated checkpoint metadata: " + path);

    Checkpoint ck;
    ck.meta = nlohmann::json::parse(json);
    const std::size_t m = ck.meta.at("m").get<std::size_t>();
    const std::size_t users = ck.meta.at("users").get<std::size_t>();
    const std::size_t items = ck.meta.at("items").get<std::size_t>();
    ck.user_table = detail::read_table_f32(is, users, m);
    ck.item_table = detail::read_table_f32(is, items, m);
    return ck;
}

}  // namespace bitrec
