#include "checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "error.hpp"

namespace dveslt {

namespace {

constexpr char kMagic[4] = {'D', 'V', 'E', 'C'};

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& what) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) fail("checkpoint: truncated while reading " + what);
    return v;
}

} // namespace

void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& entries) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) fail("checkpoint: cannot open '" + path + "' for writing");
    os.write(kMagic, 4);
    write_pod<uint32_t>(os, kCheckpointVersion);
    write_pod<uint64_t>(os, entries.size());
    for (const auto& [name, t] : entries) {
        write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<uint32_t>(os, static_cast<uint32_t>(t.shape.size()));
        for (int64_t d : t.shape) write_pod<int64_t>(os, d);
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    if (!os) fail("checkpoint: write failed for '" + path + "'");
}

std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("checkpoint: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        fail("checkpoint: '" + path + "' is not a checkpoint container");
    uint32_t version = read_pod<uint32_t>(is, "version");
    if (version != kCheckpointVersion)
        fail("checkpoint: unsupported format version " + std::to_string(version));
    uint64_t count = read_pod<uint64_t>(is, "entry count");
    std::map<std::string, Tensor> out;
    for (uint64_t i = 0; i < count; ++i) {
        uint32_t nlen = read_pod<uint32_t>(is, "name length");
        std::string name(nlen, '\0');
        is.read(name.data(), nlen);
        if (!is) fail("checkpoint: truncated entry name");
        uint32_t ndim = read_pod<uint32_t>(is, "rank");
        Shape shape(ndim);
        for (uint32_t d = 0; d < ndim; ++d) shape[d] = read_pod<int64_t>(is, "dim");
        int64_t n = shape_size(shape);
        Tensor t = Tensor::zeros(shape);
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(static_cast<size_t>(n) * sizeof(double)));
        if (!is) fail("checkpoint: truncated data for entry '" + name + "'");
        if (out.count(name)) fail("checkpoint: duplicate entry '" + name + "'");
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

} // namespace dveslt
