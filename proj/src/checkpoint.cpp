#include "grd/checkpoint.hpp"

#include <cstring>

#include "grd/errors.hpp"
#include "grd/io_util.hpp"

namespace grd {

namespace {
constexpr char kMagic[4] = {'G', 'R', 'D', 'M'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kFlagSecondAttentionUnmasked = 1u;
}  // namespace

void save_checkpoint(const Network& net, const std::string& path) {
    if (net.norm_stats.empty())
        throw InvalidConfig("refusing to save a checkpoint without normalization stats");

    ByteWriter w;
    w.bytes(kMagic, 4);
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(net.arch.max_dim));
    w.u32(static_cast<std::uint32_t>(net.arch.d_model));
    w.u32(static_cast<std::uint32_t>(net.arch.n_blocks));
    w.u32(static_cast<std::uint32_t>(net.arch.n_heads));
    w.u32(net.arch.second_attention_causal ? 0u : kFlagSecondAttentionUnmasked);

    const std::string kind = kind_name(net.kind);
    w.u16(static_cast<std::uint16_t>(kind.size()));
    w.bytes(kind.data(), kind.size());

    w.u32(static_cast<std::uint32_t>(net.norm_stats.max_dim));
    for (double v : net.norm_stats.mean) w.f64(v);
    for (double v : net.norm_stats.stdev) w.f64(v);

    w.u32(static_cast<std::uint32_t>(net.store.count()));
    for (int i = 0; i < net.store.count(); ++i) {
        const auto& p = net.store.at(i);
        w.u16(static_cast<std::uint16_t>(p.name.size()));
        w.bytes(p.name.data(), p.name.size());
        w.u32(static_cast<std::uint32_t>(p.value.rows));
        w.u32(static_cast<std::uint32_t>(p.value.cols));
        for (double v : p.value.data) w.f64(v);
    }

    w.u32(crc32_of(w.data().data(), w.data().size()));
    write_file(path, w.data());
}

Network load_checkpoint(const std::string& path) {
    const std::vector<std::uint8_t> bytes = read_file(path);
    if (bytes.size() < 32) throw FormatError("checkpoint file too small: " + path);

    const std::size_t body = bytes.size() - 4;
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, bytes.data() + body, 4);
    if (crc32_of(bytes.data(), body) != stored_crc)
        throw FormatError("checkpoint checksum mismatch in " + path);

    ByteReader r(bytes.data(), body);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad checkpoint magic in " + path);
    if (r.u32() != kVersion) throw FormatError("unsupported checkpoint version in " + path);

    const int max_dim = static_cast<int>(r.u32());
    const int d_model = static_cast<int>(r.u32());
    const int n_blocks = static_cast<int>(r.u32());
    const int n_heads = static_cast<int>(r.u32());
    const std::uint32_t flags = r.u32();

    std::string kind_str(r.u16(), '\0');
    r.bytes(kind_str.data(), kind_str.size());
    const ModelKind kind = kind_from_name(kind_str);

    GrdArchitecture arch = make_architecture(kind, max_dim, d_model, n_blocks, n_heads);
    arch.second_attention_causal = (flags & kFlagSecondAttentionUnmasked) == 0;
    Network net = build_network(kind, arch, /*seed=*/0);

    net.norm_stats.max_dim = static_cast<int>(r.u32());
    net.norm_stats.mean.resize(3 * net.norm_stats.max_dim);
    net.norm_stats.stdev.resize(3 * net.norm_stats.max_dim);
    for (double& v : net.norm_stats.mean) v = r.f64();
    for (double& v : net.norm_stats.stdev) v = r.f64();

    const std::uint32_t tensor_count = r.u32();
    if (static_cast<int>(tensor_count) != net.store.count())
        throw FormatError("checkpoint lists " + std::to_string(tensor_count) + " tensors, expected " +
                          std::to_string(net.store.count()));
    for (std::uint32_t i = 0; i < tensor_count; ++i) {
        std::string name(r.u16(), '\0');
        r.bytes(name.data(), name.size());
        const int handle = net.store.find(name);
        if (handle < 0) throw FormatError("checkpoint tensor '" + name + "' is not a parameter");
        auto& p = net.store.at(handle);
        const int rows = static_cast<int>(r.u32());
        const int cols = static_cast<int>(r.u32());
        if (rows != p.value.rows || cols != p.value.cols)
            throw FormatError("checkpoint tensor '" + name + "' has shape " + std::to_string(rows) +
                              "x" + std::to_string(cols));
        for (double& v : p.value.data) v = r.f64();
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes in checkpoint " + path);
    return net;
}

}  // namespace grd
