#include "swm/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

namespace swm::io {

namespace {

static_assert(std::endian::native == std::endian::little,
              "container writer assumes a little-endian host");

constexpr char kMagic[4] = {'S', 'W', 'M', 'T'};

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("container: truncated stream");
    return v;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
    os.write(kMagic, 4);
    write_pod<std::uint32_t>(os, kContainerVersion);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(e));
    for (std::int64_t i = 0; i < t.size(); ++i) write_pod<double>(os, static_cast<double>(t[i]));
    if (!os) throw IoError("container: write failed");
}

Tensor read_tensor(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw IoError("container: bad magic");
    const auto version = read_pod<std::uint32_t>(is);
    if (version != kContainerVersion) {
        throw IoError("container: unsupported version " + std::to_string(version));
    }
    const auto rank = read_pod<std::uint32_t>(is);
    if (rank > 8) throw IoError("container: implausible rank " + std::to_string(rank));
    Shape shape(rank);
    std::int64_t count = 1;
    for (auto& e : shape) {
        e = static_cast<std::int64_t>(read_pod<std::uint64_t>(is));
        count *= e;
    }
    std::vector<real> data(static_cast<std::size_t>(count));
    for (auto& v : data) v = static_cast<real>(read_pod<double>(is));
    return Tensor::from_data(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    write_tensor(os, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    return read_tensor(is);
}

void save_named_tensors(const std::filesystem::path& bin_path,
                        const std::filesystem::path& manifest_path,
                        const NamedTensors& tensors) {
    std::ofstream os(bin_path, std::ios::binary);
    if (!os) throw IoError("cannot open " + bin_path.string() + " for writing");
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [name, t] : tensors) {
        nlohmann::json e;
        e["name"] = name;
        e["offset"] = static_cast<std::uint64_t>(os.tellp());
        e["shape"] = t.shape();
        entries.push_back(std::move(e));
        write_tensor(os, t);
    }
    nlohmann::json manifest;
    manifest["format"] = "swmt";
    manifest["version"] = kContainerVersion;
    manifest["tensors"] = std::move(entries);
    std::ofstream ms(manifest_path);
    if (!ms) throw IoError("cannot open " + manifest_path.string() + " for writing");
    ms << manifest.dump(2) << "\n";
}

NamedTensors load_named_tensors(const std::filesystem::path& bin_path,
                                const std::filesystem::path& manifest_path) {
    std::ifstream ms(manifest_path);
    if (!ms) throw IoError("cannot open " + manifest_path.string());
    nlohmann::json manifest = nlohmann::json::parse(ms);
    if (manifest.value("format", "") != "swmt") throw IoError("manifest: unknown format");
    std::ifstream is(bin_path, std::ios::binary);
    if (!is) throw IoError("cannot open " + bin_path.string());
    NamedTensors out;
    for (const auto& e : manifest.at("tensors")) {
        is.seekg(static_cast<std::streamoff>(e.at("offset").get<std::uint64_t>()));
        out.emplace_back(e.at("name").get<std::string>(), read_tensor(is));
    }
    return out;
}

std::uint64_t content_hash(const NamedTensors& tensors) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const unsigned char* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& [name, t] : tensors) {
        mix(reinterpret_cast<const unsigned char*>(name.data()), name.size());
        for (std::int64_t i = 0; i < t.size(); ++i) {
            const double v = static_cast<double>(t[i]);
            mix(reinterpret_cast<const unsigned char*>(&v), sizeof(double));
        }
    }
    return h;
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace swm::io
