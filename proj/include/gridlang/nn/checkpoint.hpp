#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gridlang/nn/network.hpp"

namespace gridlang::nn {

// Checkpoint file: a plain-text manifest (config keys, data checksum, one
// line per tensor with name/dtype/offset/shape), an "end" marker, then the
// raw little-endian float64 arrays back to back. Offsets are relative to
// the start of the data section.

namespace detail {

inline void write_config_lines(std::ostream& out, const NetworkConfig& c) {
    out << "config in_channels " << c.in_channels << "\n";
    out << "config grid_h " << c.grid_h << "\n";
    out << "config grid_w " << c.grid_w << "\n";
    out << "config conv1_filters " << c.conv1_filters << "\n";
    out << "config conv1_kernel " << c.conv1_kernel << "\n";
    out << "config conv1_stride " << c.conv1_stride << "\n";
    out << "config conv2_filters " << c.conv2_filters << "\n";
    out << "config conv2_kernel " << c.conv2_kernel << "\n";
    out << "config conv2_stride " << c.conv2_stride << "\n";
    out << "config vocab_size " << c.vocab_size << "\n";
    out << "config embed_dim " << c.embed_dim << "\n";
    out << "config instr_dim " << c.instr_dim << "\n";
    out << "config trunk_hidden " << c.trunk_hidden << "\n";
    out << "config n_actions " << c.n_actions << "\n";
    out << "config fusion " << fusion_name(c.fusion) << "\n";
}

inline void apply_config_line(NetworkConfig& c, const std::string& key,
                              const std::string& value) {
    auto num = [&value] { return static_cast<size_t>(std::stoull(value)); };
    if (key == "in_channels") c.in_channels = num();
    else if (key == "grid_h") c.grid_h = num();
    else if (key == "grid_w") c.grid_w = num();
    else if (key == "conv1_filters") c.conv1_filters = num();
    else if (key == "conv1_kernel") c.conv1_kernel = num();
    else if (key == "conv1_stride") c.conv1_stride = num();
    else if (key == "conv2_filters") c.conv2_filters = num();
    else if (key == "conv2_kernel") c.conv2_kernel = num();
    else if (key == "conv2_stride") c.conv2_stride = num();
    else if (key == "vocab_size") c.vocab_size = num();
    else if (key == "embed_dim") c.embed_dim = num();
    else if (key == "instr_dim") c.instr_dim = num();
    else if (key == "trunk_hidden") c.trunk_hidden = num();
    else if (key == "n_actions") c.n_actions = num();
    else if (key == "fusion") c.fusion = parse_fusion(value);
    else throw Error("checkpoint: unknown config key: " + key);
}

} // namespace detail

inline void save_checkpoint(const ParameterSet& params, const std::string& path) {
    std::string data;
    std::ostringstream manifest;
    manifest << "gridlang-checkpoint v1\n";
    detail::write_config_lines(manifest, params.cfg);

    std::ostringstream tensor_lines;
    params.for_each([&](const char* name, const Tensor& t) {
        tensor_lines << "tensor " << name << " float64 " << data.size();
        for (size_t d : t.shape) tensor_lines << " " << d;
        tensor_lines << "\n";
        const size_t bytes = t.numel() * sizeof(double);
        const size_t base = data.size();
        data.resize(base + bytes);
        std::memcpy(data.data() + base, t.data.data(), bytes);
    });

    char checksum[32];
    std::snprintf(checksum, sizeof checksum, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(data.data(), data.size())));
    manifest << "checksum fnv1a64 " << checksum << "\n";
    manifest << tensor_lines.str();
    manifest << "end\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open checkpoint for writing: " + path);
    const std::string head = manifest.str();
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error("checkpoint write failed: " + path);
}

inline ParameterSet load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path);

    NetworkConfig cfg;
    std::string expected_checksum;
    struct Entry {
        std::string name;
        size_t offset = 0;
        std::vector<size_t> shape;
    };
    std::vector<Entry> entries;

    std::string line;
    if (!std::getline(in, line) || line != "gridlang-checkpoint v1")
        throw Error("not a checkpoint file: " + path);
    while (std::getline(in, line)) {
        if (line == "end") break;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "config") {
            std::string key, value;
            ls >> key >> value;
            detail::apply_config_line(cfg, key, value);
        } else if (kind == "checksum") {
            std::string algo;
            ls >> algo >> expected_checksum;
            if (algo != "fnv1a64") throw Error("checkpoint: unknown checksum algo " + algo);
        } else if (kind == "tensor") {
            Entry e;
            std::string dtype;
            ls >> e.name >> dtype >> e.offset;
            if (dtype != "float64")
                throw Error("checkpoint: unsupported dtype " + dtype);
            size_t dim;
            while (ls >> dim) e.shape.push_back(dim);
            entries.push_back(std::move(e));
        } else {
            throw Error("checkpoint: bad manifest line: " + line);
        }
    }
    if (line != "end") throw Error("checkpoint: manifest not terminated");

    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    char actual[32];
    std::snprintf(actual, sizeof actual, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(data.data(), data.size())));
    if (expected_checksum != actual)
        throw ChecksumMismatchError("checkpoint checksum mismatch for " + path);

    ParameterSet params = ParameterSet::create(cfg);
    size_t entry_idx = 0;
    params.for_each([&](const char* name, Tensor& t) {
        if (entry_idx >= entries.size())
            throw ShapeMismatchError("checkpoint: missing tensor " + std::string(name));
        const Entry& e = entries[entry_idx++];
        if (e.name != name || e.shape != t.shape)
            throw ShapeMismatchError("checkpoint: tensor mismatch at " + e.name);
        const size_t bytes = t.numel() * sizeof(double);
        if (e.offset + bytes > data.size())
            throw ShapeMismatchError("checkpoint: data section too short");
        std::memcpy(t.data.data(), data.data() + e.offset, bytes);
    });
    if (entry_idx != entries.size())
        throw ShapeMismatchError("checkpoint: extra tensors in manifest");
    return params;
}

// Load and insist the stored network matches an expected configuration.
inline ParameterSet load_checkpoint(const std::string& path, const NetworkConfig& expected) {
    ParameterSet params = load_checkpoint(path);
    if (!(params.cfg == expected))
        throw ShapeMismatchError("checkpoint config does not match the requested network");
    return params;
}

} // namespace gridlang::nn
