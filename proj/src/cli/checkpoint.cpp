// SPDX-License-Identifier: Apache-2.0

#include "uniat/cli/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "uniat/core/error.hpp"
#include "uniat/core/io.hpp"

namespace uniat::cli {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'U', 'N', 'I', 'A', 'T', 'C', 'K', 'P'};

class Writer {
public:
    template <typename U>
    void pod(U v) {
        const auto* p = reinterpret_cast<const std::byte*>(&v);
        out.insert(out.end(), p, p + sizeof(U));
    }
    void str(const std::string& s) {
        pod(static_cast<std::uint32_t>(s.size()));
        const auto* p = reinterpret_cast<const std::byte*>(s.data());
        out.insert(out.end(), p, p + s.size());
    }
    std::vector<std::byte> out;
};

class Parser {
public:
    explicit Parser(std::span<const std::byte> in) : in_(in) {}
    template <typename U>
    U pod() {
        U v;
        std::memcpy(&v, take(sizeof(U)), sizeof(U));
        return v;
    }
    std::string str() {
        const auto n = pod<std::uint32_t>();
        const auto* p = take(n);
        return std::string(reinterpret_cast<const char*>(p), n);
    }
    void floats(std::vector<float>& v, std::size_t n) {
        if (n > remaining() / sizeof(float)) fail();
        v.resize(n);
        std::memcpy(v.data(), take(n * sizeof(float)), n * sizeof(float));
    }
    [[nodiscard]] std::size_t remaining() const { return in_.size() - pos_; }

private:
    const std::byte* take(std::size_t n) {
        if (n > remaining()) fail();
        const std::byte* p = in_.data() + pos_;
        pos_ += n;
        return p;
    }
    [[noreturn]] static void fail() { throw ValidationError("checkpoint: truncated input"); }
    std::span<const std::byte> in_;
    std::size_t pos_ = 0;
};

std::vector<std::uint64_t> to_shape(const tensor::Shape& s) { return {s.begin(), s.end()}; }

}  // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return &a;
    return nullptr;
}

std::vector<std::byte> serialize(const Checkpoint& ckpt) {
    Writer w;
    for (char c : kMagic) w.pod(c);
    w.pod(ckpt.version);
    w.pod(ckpt.step);
    w.str(ckpt.config_json);
    w.str(ckpt.rng_state);
    w.pod(static_cast<std::uint32_t>(ckpt.arrays.size()));
    for (const auto& a : ckpt.arrays) {
        std::uint64_t n = 1;
        for (auto d : a.shape) n *= d;
        if (n != a.values.size()) throw ShapeError("checkpoint: array '" + a.name + "' size disagrees with its shape");
        w.str(a.name);
        w.pod(static_cast<std::uint32_t>(a.shape.size()));
        for (auto d : a.shape) w.pod(d);
        for (float v : a.values) w.pod(v);
    }
    return std::move(w.out);
}

Checkpoint deserialize(std::span<const std::byte> bytes) {
    Parser p(bytes);
    for (char c : kMagic)
        if (p.pod<char>() != c) throw ValidationError("checkpoint: bad magic");
    Checkpoint ckpt;
    ckpt.version = p.pod<std::uint32_t>();
    if (ckpt.version != kCheckpointVersion)
        throw ValidationError("checkpoint: unsupported version " + std::to_string(ckpt.version));
    ckpt.step = p.pod<std::uint64_t>();
    ckpt.config_json = p.str();
    ckpt.rng_state = p.str();
    const auto count = p.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedArray a;
        a.name = p.str();
        const auto nd = p.pod<std::uint32_t>();
        std::uint64_t n = 1;
        for (std::uint32_t k = 0; k < nd; ++k) {
            a.shape.push_back(p.pod<std::uint64_t>());
            n *= a.shape.back();
        }
        p.floats(a.values, n);
        ckpt.arrays.push_back(std::move(a));
    }
    if (p.remaining() != 0) throw ValidationError("checkpoint: trailing bytes");
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    atomic_write(path, serialize(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize(read_binary(path)); }

std::vector<NamedArray> model_arrays(const objective::Model<float>& model) {
    std::vector<NamedArray> out;
    for (const auto& n : model.named_parameters()) {
        const auto v = n.tensor.values();
        out.push_back({n.name, to_shape(n.tensor.shape()), {v.begin(), v.end()}});
    }
    for (const auto& h : model.heads) {
        const std::string p = "head." + (model.heads.size() == 1 ? std::string("shared") : to_string(h.scenario));
        out.push_back({p + ".bn.running_mean", {h.running_mean.size()}, h.running_mean});
        out.push_back({p + ".bn.running_var", {h.running_var.size()}, h.running_var});
    }
    return out;
}

void restore_model(const Checkpoint& ckpt, objective::Model<float>& model) {
    auto copy = [&](const std::string& name, std::span<float> dst, const std::vector<std::uint64_t>& shape) {
        const NamedArray* a = ckpt.find(name);
        if (!a) throw ValidationError("checkpoint: missing array '" + name + "'");
        if (a->shape != shape) throw ShapeError("checkpoint: array '" + name + "' has the wrong shape");
        std::copy(a->values.begin(), a->values.end(), dst.begin());
    };
    for (auto& n : model.named_parameters()) copy(n.name, n.tensor.values(), to_shape(n.tensor.shape()));
    for (auto& h : model.heads) {
        const std::string p = "head." + (model.heads.size() == 1 ? std::string("shared") : to_string(h.scenario));
        copy(p + ".bn.running_mean", h.running_mean, {h.running_mean.size()});
        copy(p + ".bn.running_var", h.running_var, {h.running_var.size()});
    }
}

}  // namespace uniat::cli
