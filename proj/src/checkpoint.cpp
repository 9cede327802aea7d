#include <algorithm>

#include "bytes.hpp"
#include "weedout/errors.hpp"
#include "weedout/network.hpp"
#include "weedout/sparsity.hpp"

namespace weedout {

namespace {

constexpr char kCheckpointMagic[4] = {'W', 'D', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

void put_network(std::vector<std::uint8_t>& out, const Network& net) {
    bytes::put_le64(out, net.init_seed);
    bytes::put_le32(out, static_cast<std::uint32_t>(net.spec.input.size()));
    for (std::size_t d : net.spec.input) bytes::put_le64(out, d);
    bytes::put_le32(out, static_cast<std::uint32_t>(net.spec.layers.size()));
    for (const LayerSpec& l : net.spec.layers) {
        out.push_back(static_cast<std::uint8_t>(l.kind));
        bytes::put_le64(out, l.units);
        bytes::put_le64(out, l.kernel);
        bytes::put_le64(out, l.stride);
        out.push_back(l.maskable ? 1 : 0);
    }
    for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
        if (!net.spec.layers[i].has_params()) continue;
        for (double v : net.params[i].weights.data()) bytes::put_f64(out, v);
        for (double v : net.params[i].bias.data()) bytes::put_f64(out, v);
    }
}

Network read_network(bytes::Reader& r) {
    Network net;
    net.init_seed = r.le64("init seed");
    const std::uint32_t rank = r.le32("input rank");
    if (rank == 0 || rank > 8) throw FormatError(r.offset() - 4, "implausible input rank");
    net.spec.input.resize(rank);
    for (auto& d : net.spec.input) d = r.le64("input shape");
    const std::uint32_t count = r.le32("layer count");
    if (count > 4096) throw FormatError(r.offset() - 4, "implausible layer count");
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t at = r.offset();
        LayerSpec l;
        const std::uint8_t kind = r.take(1, "layer kind")[0];
        if (kind > static_cast<std::uint8_t>(LayerKind::flatten)) throw FormatError(at, "unknown layer kind");
        l.kind = static_cast<LayerKind>(kind);
        l.units = r.le64("units");
        l.kernel = r.le64("kernel");
        l.stride = r.le64("stride");
        l.maskable = r.take(1, "maskable")[0] != 0;
        net.spec.layers.push_back(l);
    }
    try {
        net.spec.validate();
    } catch (const SpecError& e) {
        throw FormatError(r.offset(), std::string("checkpoint spec invalid: ") + e.what());
    }
    net.params.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (!net.spec.layers[i].has_params()) continue;
        Tensor w(net.spec.weight_shape(i));
        for (double& v : w.data()) v = r.f64("weights");
        Tensor b({net.spec.layers[i].units});
        for (double& v : b.data()) v = r.f64("bias");
        net.params[i] = {std::move(w), std::move(b)};
    }
    return net;
}

}  // namespace

std::uint64_t Network::checksum() const {
    std::vector<std::uint8_t> buf;
    put_network(buf, *this);
    return fnv1a64(buf);
}

void save_checkpoint(const std::filesystem::path& path, const Network& net, const MaskSet* mask) {
    std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
    bytes::put_le32(out, kCheckpointVersion);
    put_network(out, net);
    out.push_back(mask ? 1 : 0);
    if (mask) {
        check_congruent(*mask, net.spec);
        out.push_back(static_cast<std::uint8_t>(mask->mode));
        bytes::put_f64(out, mask->eta);
        bytes::put_le64(out, mask->sample_seed);
        for (std::size_t i : net.spec.maskable_layers()) {
            const Tensor& m = *mask->layers[i];
            bytes::put_le64(out, m.size());
            for (double v : m.data()) out.push_back(v != 0.0 ? 1 : 0);
        }
    }
    bytes::write_file(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const auto raw = bytes::read_file(path);
    bytes::Reader r(raw);
    auto magic = r.take(4, "magic");
    if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic)) throw FormatError(0, "bad checkpoint magic");
    if (r.le32("version") != kCheckpointVersion) throw FormatError(4, "unsupported checkpoint version");
    Checkpoint ck{read_network(r), std::nullopt};
    const bool has_mask = r.take(1, "mask flag")[0] != 0;
    if (has_mask) {
        const std::size_t mask_at = r.offset();
        MaskSet m;
        const std::uint8_t mode = r.take(1, "mask mode")[0];
        if (mode > 1) throw FormatError(mask_at, "unknown mask mode");
        m.mode = static_cast<MaskMode>(mode);
        m.eta = r.f64("eta");
        m.sample_seed = r.le64("sample seed");
        m.layers.resize(ck.net.spec.layers.size());
        for (std::size_t i : ck.net.spec.maskable_layers()) {
            const std::size_t n = r.le64("mask length");
            const Shape shape =
                m.mode == MaskMode::structured ? Shape{ck.net.spec.layers[i].units} : ck.net.spec.weight_shape(i);
            if (n != shape_size(shape)) throw FormatError(r.offset() - 8, "mask length does not match layer");
            auto bits = r.take(n, "mask bits");
            std::vector<double> v(bits.begin(), bits.end());
            m.layers[i] = Tensor(shape, std::move(v));
        }
        const MaskSet expected = sample_mask(ck.net.spec, SparsityRatio(m.eta), m.mode, m.sample_seed);
        if (expected != m) {
            throw ChecksumError("checkpoint mask arrays disagree with a resample from (eta, mode, sample_seed)");
        }
        ck.mask = std::move(m);
    }
    if (!r.done()) throw FormatError(r.offset(), "trailing bytes after checkpoint");
    return ck;
}

}  // namespace weedout
