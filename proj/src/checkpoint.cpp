#include "sega/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "sega/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace sega {

namespace {

constexpr char kMagic[8] = {'S', 'E', 'G', 'A', 'C', 'K', 'P', 'T'};

template <typename T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("checkpoint: truncated file " + path);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<const Tensor*>& tensors) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("checkpoint: cannot open " + path + " for writing");
    out.write(kMagic, sizeof(kMagic));
    write_pod<uint32_t>(out, kCheckpointVersion);
    for (const Tensor* t : tensors) {
        if (t->name.empty()) throw DataError("checkpoint: tensor without a name");
        if (t->name.size() > 0xffff) throw DataError("checkpoint: name too long: " + t->name);
        write_pod<uint16_t>(out, static_cast<uint16_t>(t->name.size()));
        out.write(t->name.data(), static_cast<std::streamsize>(t->name.size()));
        write_pod<uint8_t>(out, static_cast<uint8_t>(t->shape.size()));
        for (int d : t->shape) write_pod<uint32_t>(out, static_cast<uint32_t>(d));
        out.write(reinterpret_cast<const char*>(t->value.data()),
                  static_cast<std::streamsize>(t->value.size() * sizeof(float)));
    }
    if (!out) throw DataError("checkpoint: write failed for " + path);
}

std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError("checkpoint: bad magic in " + path);
    const auto version = read_pod<uint32_t>(in, path);
    if (version != kCheckpointVersion)
        throw DataError("checkpoint: unsupported version " + std::to_string(version) + " in " +
                        path);
    std::map<std::string, Tensor> out;
    while (true) {
        uint16_t name_len = 0;
        in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
        if (in.eof()) break;
        if (!in) throw DataError("checkpoint: truncated file " + path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw DataError("checkpoint: truncated name in " + path);
        const auto rank = read_pod<uint8_t>(in, path);
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<int>(read_pod<uint32_t>(in, path));
        Tensor t(name, shape, false);
        in.read(reinterpret_cast<char*>(t.value.data()),
                static_cast<std::streamsize>(t.value.size() * sizeof(float)));
        if (!in) throw DataError("checkpoint: truncated data for '" + name + "' in " + path);
        if (out.count(name)) throw DataError("checkpoint: duplicate tensor '" + name + "'");
        out.emplace(name, std::move(t));
    }
    return out;
}

}  // namespace sega
