#ifndef MONOATTR_CORE_SERIALIZE_HPP
#define MONOATTR_CORE_SERIALIZE_HPP

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "monoattr/core/dense.hpp"
#include "monoattr/core/error.hpp"

namespace monoattr {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; big-endian hosts are unsupported");

/**
 * Checkpoint container: one JSON header line describing the model and
 * the parameter list, followed by a flat little-endian f64 blob holding
 * every tensor back to back in header order.
 */
struct Checkpoint {
    nlohmann::json header;  // includes "params": [{name, shape}]
    std::vector<std::pair<std::string, std::vector<double>>> params;

    const std::vector<double>& get(const std::string& name) const {
        for (const auto& [n, v] : params)
            if (n == name) return v;
        throw Error("checkpoint: missing parameter '" + name + "'");
    }
};

inline void save_checkpoint(const std::string& path, nlohmann::json header,
                            const std::vector<std::pair<std::string, std::vector<double>>>& params,
                            const std::vector<std::vector<int>>& shapes) {
    nlohmann::json plist = nlohmann::json::array();
    for (std::size_t i = 0; i < params.size(); ++i)
        plist.push_back({{"name", params[i].first}, {"shape", shapes[i]}});
    header["params"] = plist;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path);
    out << header.dump() << "\n";
    for (const auto& [name, data] : params)
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!out) throw Error("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open: " + path);
    std::string header_line;
    if (!std::getline(in, header_line)) throw ParseError("checkpoint: missing header line in " + path);
    Checkpoint ck;
    try {
        ck.header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("checkpoint: bad JSON header in " + path + ": " + e.what());
    }
    if (!ck.header.contains("params")) throw ParseError("checkpoint: header lacks params list");
    for (const auto& p : ck.header["params"]) {
        std::size_t n = 1;
        for (int e : p["shape"].get<std::vector<int>>()) n *= static_cast<std::size_t>(e);
        std::vector<double> data(n);
        in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(double)));
        if (!in) throw ParseError("checkpoint: truncated blob in " + path);
        ck.params.emplace_back(p["name"].get<std::string>(), std::move(data));
    }
    return ck;
}

}  // namespace monoattr

#endif
