#include "mvcc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace mvcc {

namespace {

constexpr char kMagic[4] = {'M', 'V', 'C', 'C'};

void put_bytes(std::string& out, std::uint64_t value, int nbytes) {
    for (int i = 0; i < nbytes; ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

struct Reader {
    std::string data;
    std::size_t pos = 0;
    const std::string& path;

    std::uint64_t take(int nbytes) {
        if (pos + static_cast<std::size_t>(nbytes) > data.size()) {
            throw IngestionError("checkpoint '" + path + "' is truncated at byte " +
                                 std::to_string(pos));
        }
        std::uint64_t v = 0;
        for (int i = 0; i < nbytes; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
        }
        pos += static_cast<std::size_t>(nbytes);
        return v;
    }
};

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors) {
    std::string out;
    out.append(kMagic, 4);
    put_bytes(out, kCheckpointVersion, 4);
    put_bytes(out, tensors.size(), 4);
    for (const auto& [name, t] : tensors) {
        if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
            throw ConfigError("checkpoint: tensor name too long: " + name.substr(0, 64) + "...");
        }
        put_bytes(out, name.size(), 2);
        out.append(name);
        put_bytes(out, static_cast<std::uint64_t>(t.rank()), 1);
        for (int i = 0; i < t.rank(); ++i) {
            put_bytes(out, static_cast<std::uint64_t>(t.dim(i)), 8);
        }
        for (double v : t.values()) put_bytes(out, std::bit_cast<std::uint64_t>(v), 8);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IngestionError("cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IngestionError("short write to '" + path + "'");
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IngestionError("cannot open checkpoint '" + path + "'");
    std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r{std::move(data), 0, path};
    if (r.data.size() < 4 || std::memcmp(r.data.data(), kMagic, 4) != 0) {
        throw ConfigError("'" + path + "' is not a checkpoint file (bad magic)");
    }
    r.pos = 4;
    const auto version = static_cast<std::uint32_t>(r.take(4));
    if (version != kCheckpointVersion) {
        throw ConfigError("checkpoint '" + path + "' has format version " +
                          std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
    }
    const auto count = static_cast<std::uint32_t>(r.take(4));
    std::vector<std::pair<std::string, Tensor>> tensors;
    tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = static_cast<std::size_t>(r.take(2));
        if (r.pos + name_len > r.data.size()) {
            throw IngestionError("checkpoint '" + path + "' is truncated inside a tensor name");
        }
        std::string name = r.data.substr(r.pos, name_len);
        r.pos += name_len;
        const int rank = static_cast<int>(r.take(1));
        Shape shape(static_cast<std::size_t>(rank));
        for (int d = 0; d < rank; ++d) {
            const std::uint64_t dim = r.take(8);
            if (dim == 0 || dim > static_cast<std::uint64_t>(std::numeric_limits<int>::max())) {
                throw IngestionError("checkpoint '" + path + "' tensor '" + name +
                                     "' has invalid dimension " + std::to_string(dim));
            }
            shape[static_cast<std::size_t>(d)] = static_cast<int>(dim);
        }
        const std::size_t n = shape_numel(shape);
        std::vector<double> values(n);
        for (std::size_t j = 0; j < n; ++j) {
            values[j] = std::bit_cast<double>(r.take(8));
        }
        tensors.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(values)));
    }
    if (r.pos != r.data.size()) {
        throw IngestionError("checkpoint '" + path + "' has " +
                             std::to_string(r.data.size() - r.pos) + " trailing bytes");
    }
    return tensors;
}

}  // namespace mvcc
