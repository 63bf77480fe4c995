#include "drf/io.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include "drf/error.hpp"

namespace drf {

static_assert(std::endian::native == std::endian::little,
              "container format assumes a little-endian host");

namespace {
constexpr char kMagic[4] = {'D', 'R', 'F', '1'};

void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}
}  // namespace

void write_container(const std::string& path, const Container& c) {
    nlohmann::json header = c.header;
    if (!header.contains("version")) header["version"] = 1;
    nlohmann::json dir = nlohmann::json::array();
    for (const auto& [name, data] : c.arrays)
        dir.push_back({{"name", name}, {"count", data.size()}});
    header["arrays"] = dir;

    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("io: cannot open " + path + " for writing");
    os.write(kMagic, 4);
    const std::string htext = header.dump();
    write_u64(os, htext.size());
    os.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (const auto& [name, data] : c.arrays)
        os.write(reinterpret_cast<const char*>(data.data()),
                 static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!os) throw Error("io: write failed for " + path);
}

Container read_container(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("io: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != std::string(kMagic, 4))
        throw Error("io: " + path + " is not a DRF container");
    const std::uint64_t hlen = read_u64(is);
    std::string htext(hlen, '\0');
    is.read(htext.data(), static_cast<std::streamsize>(hlen));
    Container c;
    try {
        c.header = nlohmann::json::parse(htext);
    } catch (const nlohmann::json::exception& e) {
        throw Error("io: bad container header in " + path + ": " + e.what());
    }
    if (!c.header.contains("version"))
        throw Error("io: container " + path + " missing version field");
    for (const auto& entry : c.header.at("arrays")) {
        const std::string name = entry.at("name");
        std::vector<double> data(entry.at("count").get<std::size_t>());
        is.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(double)));
        if (!is) throw Error("io: truncated array '" + name + "' in " + path);
        c.arrays.emplace(name, std::move(data));
    }
    return c;
}

}  // namespace drf
