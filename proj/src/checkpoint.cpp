#include "ptri/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace ptri {

namespace {

constexpr char kMagic[4] = {'P', 'T', 'R', 'I'};
constexpr std::uint32_t kVersion = 1;

const char* pad_to_string(Pad pad) { return pad == Pad::Same ? "same" : "valid"; }

Pad pad_from_string(const std::string& s) {
    if (s == "same") return Pad::Same;
    if (s == "valid") return Pad::Valid;
    throw_data("unknown padding mode: " + s);
}

template <typename T>
void write_le(std::ofstream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::ifstream& in, const char* what) {
    T value;
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw_data(std::string("truncated checkpoint while reading ") + what);
    return value;
}

}  // namespace

void save_checkpoint(const ModelGraph& model, const fs::path& path) {
    nlohmann::json layers = nlohmann::json::array();
    nlohmann::json params = nlohmann::json::array();
    std::ptrdiff_t total = 0;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const LayerSpec& spec = model.layers[i];
        layers.push_back({{"kind", to_string(spec.kind)},
                          {"name", spec.name},
                          {"kernel", spec.kernel},
                          {"stride", spec.stride},
                          {"padding", pad_to_string(spec.padding)},
                          {"in_channels", spec.in_channels},
                          {"out_channels", spec.out_channels},
                          {"expansion", spec.expansion}});
        const auto names = layer_param_names(spec);
        for (std::size_t j = 0; j < model.params[i].size(); ++j) {
            const Tensor<float>& t = model.params[i][j];
            params.push_back({{"layer", i}, {"name", names.at(j)}, {"shape", t.shape}});
            total += t.numel();
        }
    }
    const nlohmann::json header{{"name", model.name},
                                {"input_size", model.input_size},
                                {"input_channels", model.input_channels},
                                {"class_count", model.class_count},
                                {"layers", std::move(layers)},
                                {"params", std::move(params)},
                                {"param_count", total}};
    const std::string header_bytes = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw_io("cannot write checkpoint: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    write_le(out, kVersion);
    write_le(out, static_cast<std::uint64_t>(header_bytes.size()));
    out.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
    for (const auto& lp : model.params)
        for (const Tensor<float>& t : lp)
            out.write(reinterpret_cast<const char*>(t.ptr()),
                      static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!out) throw_io("write failure on checkpoint: " + path.string());
}

ModelGraph load_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_io("cannot open checkpoint: " + path.string());

    char magic[4];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw_data("bad checkpoint magic: " + path.string());
    const auto version = read_le<std::uint32_t>(in, "version");
    if (version != kVersion)
        throw_data("unsupported checkpoint version " + std::to_string(version));
    const auto header_len = read_le<std::uint64_t>(in, "header length");
    std::string header_bytes(header_len, '\0');
    in.read(header_bytes.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw_data("truncated checkpoint header: " + path.string());

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_bytes);
    } catch (const nlohmann::json::exception& e) {
        throw_data("invalid checkpoint header JSON: " + std::string(e.what()));
    }

    ModelGraph model;
    try {
        model.name = header.at("name").get<std::string>();
        model.input_size = header.at("input_size").get<int>();
        model.input_channels = header.at("input_channels").get<int>();
        model.class_count = header.at("class_count").get<int>();
        for (const auto& l : header.at("layers")) {
            LayerSpec spec;
            spec.kind = layer_kind_from_string(l.at("kind").get<std::string>());
            spec.name = l.at("name").get<std::string>();
            spec.kernel = l.at("kernel").get<int>();
            spec.stride = l.at("stride").get<int>();
            spec.padding = pad_from_string(l.at("padding").get<std::string>());
            spec.in_channels = l.at("in_channels").get<int>();
            spec.out_channels = l.at("out_channels").get<int>();
            spec.expansion = l.at("expansion").get<int>();
            model.layers.push_back(std::move(spec));
        }
    } catch (const nlohmann::json::exception&) {
        throw_data("checkpoint header missing required fields: " + path.string());
    }

    std::ptrdiff_t declared_total = 0;
    std::size_t cursor = 0;
    model.params.resize(model.layers.size());
    try {
        const auto& params = header.at("params");
        for (std::size_t i = 0; i < model.layers.size(); ++i) {
            const auto shapes = layer_param_shapes(model.layers[i]);
            const auto names = layer_param_names(model.layers[i]);
            for (std::size_t j = 0; j < shapes.size(); ++j, ++cursor) {
                if (cursor >= params.size()) throw_data("checkpoint header lists too few parameters");
                const auto& rec = params[cursor];
                if (rec.at("layer").get<std::size_t>() != i ||
                    rec.at("name").get<std::string>() != names[j] ||
                    rec.at("shape").get<std::vector<int>>() != shapes[j])
                    throw_data("checkpoint parameter record does not match layer " +
                               model.layers[i].name);
                Tensor<float> t(shapes[j]);
                in.read(reinterpret_cast<char*>(t.ptr()),
                        static_cast<std::streamsize>(t.numel() * sizeof(float)));
                if (!in) throw_data("truncated checkpoint payload: " + path.string());
                declared_total += t.numel();
                model.params[i].push_back(std::move(t));
            }
        }
        if (cursor != params.size()) throw_data("checkpoint header lists extra parameters");
        if (header.at("param_count").get<std::ptrdiff_t>() != declared_total)
            throw_data("checkpoint param_count does not match tensor sizes");
    } catch (const nlohmann::json::exception&) {
        throw_data("checkpoint parameter table malformed: " + path.string());
    }
    return model;
}

}  // namespace ptri
