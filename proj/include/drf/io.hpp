#pragma once

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace drf {

/// Self-describing binary container: magic "DRF1", a JSON text header
/// (carries a mandatory "version" field plus caller metadata and the array
/// directory), then the named arrays as raw little-endian 64-bit floats in
/// directory order.
struct Container {
    nlohmann::json header;
    std::map<std::string, std::vector<double>> arrays;
};

void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path);

}  // namespace drf
