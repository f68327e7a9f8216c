// SPDX-License-Identifier: Apache-2.0

#include "uniat/backbone/vit.hpp"

#include "uniat/core/error.hpp"
#include "uniat/core/rng.hpp"
#include "uniat/tensor/ops.hpp"

namespace uniat::backbone {

using tensor::Tape;
using tensor::Tensor;
namespace ops = uniat::tensor;

namespace {

constexpr double kLayerNormEps = 1e-5;

template <typename T>
Tensor<T> truncated(Rng& rng, tensor::Shape shape, double std) {
    std::vector<T> v(tensor::shape_numel(shape));
    for (T& x : v) x = static_cast<T>(rng.truncated_normal(std));
    return Tensor<T>(std::move(shape), std::move(v), true);
}

template <typename T>
Tensor<T> filled(std::size_t n, T value) {
    return Tensor<T>::full({n}, value, true);
}

}  // namespace

void ModelConfig::validate() const {
    if (patch_size == 0 || image_height % patch_size != 0 || image_width % patch_size != 0)
        throw ValidationError("image size must be divisible by patch_size");
    if (channels == 0 || embed_dim == 0 || num_layers == 0 || ffn_hidden == 0)
        throw ValidationError("model dimensions must be positive");
    if (num_heads == 0 || embed_dim % num_heads != 0) throw ValidationError("embed_dim must be divisible by num_heads");
    if (use_moae) {
        if (shared_token) throw ValidationError("a shared CLS token cannot be routed through scenario experts");
        moae_config().validate();
    }
}

template <typename T>
std::vector<tensor::NamedTensor<T>> BackboneParams<T>::named_parameters() const {
    std::vector<tensor::NamedTensor<T>> out{
        {"patch.weight", patch_weight},
        {"patch.bias", patch_bias},
        {"pos_embed", pos_embed},
        {"cls_tokens", cls_tokens},
    };
    for (std::size_t l = 0; l < blocks.size(); ++l) {
        const auto& b = blocks[l];
        const std::string p = "block" + std::to_string(l) + ".";
        out.push_back({p + "ln1.gain", b.ln1_gain});
        out.push_back({p + "ln1.bias", b.ln1_bias});
        out.push_back({p + "qkv.weight", b.qkv_weight});
        out.push_back({p + "qkv.bias", b.qkv_bias});
        out.push_back({p + "proj.weight", b.proj_weight});
        out.push_back({p + "proj.bias", b.proj_bias});
        out.push_back({p + "ln2.gain", b.ln2_gain});
        out.push_back({p + "ln2.bias", b.ln2_bias});
        out.push_back({p + "ffn.in.weight", b.ffn_in_weight});
        out.push_back({p + "ffn.in.bias", b.ffn_in_bias});
        out.push_back({p + "ffn.out.weight", b.ffn_out_weight});
        out.push_back({p + "ffn.out.bias", b.ffn_out_bias});
        if (b.moae) b.moae->collect_parameters(p + "moae.", out);
    }
    out.push_back({"final_ln.gain", final_gain});
    out.push_back({"final_ln.bias", final_bias});
    return out;
}

template <typename T>
Tensor<T> patchify(const Image& image, const ModelConfig& config) {
    if (image.height != config.image_height || image.width != config.image_width ||
        image.channels != config.channels || image.pixels.size() != image.height * image.width * image.channels) {
        throw ShapeError("patchify: image " + std::to_string(image.height) + "x" + std::to_string(image.width) + "x" +
                         std::to_string(image.channels) + " does not match config " +
                         std::to_string(config.image_height) + "x" + std::to_string(config.image_width) + "x" +
                         std::to_string(config.channels));
    }
    const std::size_t p = config.patch_size, c = config.channels;
    const std::size_t grid_w = config.image_width / p;
    std::vector<T> out(config.num_patches() * config.patch_dim());
    std::size_t k = 0;
    for (std::size_t patch = 0; patch < config.num_patches(); ++patch) {
        const std::size_t y0 = (patch / grid_w) * p, x0 = (patch % grid_w) * p;
        for (std::size_t dy = 0; dy < p; ++dy)
            for (std::size_t dx = 0; dx < p; ++dx)
                for (std::size_t ch = 0; ch < c; ++ch) out[k++] = static_cast<T>(image.at(y0 + dy, x0 + dx, ch));
    }
    return Tensor<T>({config.num_patches(), config.patch_dim()}, std::move(out));
}

template <typename T>
Image unpatchify(const Tensor<T>& patches, const ModelConfig& config) {
    if (patches.numel() != config.num_patches() * config.patch_dim())
        throw ShapeError("unpatchify: " + tensor::shape_string(patches.shape()) + " does not match config");
    const std::size_t p = config.patch_size, c = config.channels;
    const std::size_t grid_w = config.image_width / p;
    Image image(config.image_height, config.image_width, c);
    std::size_t k = 0;
    for (std::size_t patch = 0; patch < config.num_patches(); ++patch) {
        const std::size_t y0 = (patch / grid_w) * p, x0 = (patch % grid_w) * p;
        for (std::size_t dy = 0; dy < p; ++dy)
            for (std::size_t dx = 0; dx < p; ++dx)
                for (std::size_t ch = 0; ch < c; ++ch) image.at(y0 + dy, x0 + dx, ch) = static_cast<float>(patches[k++]);
    }
    return image;
}

template <typename T>
BackboneParams<T> init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    const double s = config.init_std;
    const std::size_t d = config.embed_dim, h = config.ffn_hidden;
    BackboneParams<T> p;
    p.config = config;
    p.config.seed = seed;
    p.patch_weight = truncated<T>(rng, {config.patch_dim(), d}, s);
    p.patch_bias = filled<T>(d, T(0));
    p.pos_embed = truncated<T>(rng, {config.num_patches(), d}, s);
    p.cls_tokens = truncated<T>(rng, {config.num_cls_tokens(), d}, s);
    p.blocks.resize(config.num_layers);
    for (auto& b : p.blocks) {
        b.ln1_gain = filled<T>(d, T(1));
        b.ln1_bias = filled<T>(d, T(0));
        b.qkv_weight = truncated<T>(rng, {d, 3 * d}, s);
        b.qkv_bias = filled<T>(3 * d, T(0));
        b.proj_weight = truncated<T>(rng, {d, d}, s);
        b.proj_bias = filled<T>(d, T(0));
        b.ln2_gain = filled<T>(d, T(1));
        b.ln2_bias = filled<T>(d, T(0));
        b.ffn_in_weight = truncated<T>(rng, {d, h}, s);
        b.ffn_in_bias = filled<T>(h, T(0));
        b.ffn_out_weight = truncated<T>(rng, {h, d}, s);
        b.ffn_out_bias = filled<T>(d, T(0));
        if (config.use_moae) b.moae.emplace(config.moae_config(), rng, s);
    }
    p.final_gain = filled<T>(d, T(1));
    p.final_bias = filled<T>(d, T(0));
    return p;
}

template <typename T>
BackboneOutput<T> forward_patches(Tape<T>& tape, const BackboneParams<T>& params, const Tensor<T>& patches,
                                  std::size_t batch, moae::MoaeStats* stats) {
    const ModelConfig& cfg = params.config;
    if (batch == 0) throw ShapeError("forward: empty batch");
    const std::size_t np = cfg.num_patches(), nc = cfg.num_cls_tokens(), tokens = cfg.tokens_per_image();
    if (patches.ndim() != 2 || patches.dim(0) != batch * np || patches.dim(1) != cfg.patch_dim()) {
        throw ShapeError("forward: patches " + tensor::shape_string(patches.shape()) + " do not match batch " +
                         std::to_string(batch) + " of " + std::to_string(np) + "x" + std::to_string(cfg.patch_dim()));
    }
    if (params.blocks.size() != cfg.num_layers || params.patch_weight.dim(0) != cfg.patch_dim() ||
        params.cls_tokens.dim(0) != nc) {
        throw ShapeError("forward: parameters do not match the model config");
    }
    const std::size_t rows = batch * tokens;

    std::vector<std::size_t> cls_src, cls_dst, patch_dst;
    std::array<std::vector<std::size_t>, kNumScenarios> scenario_rows;
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < nc; ++c) {
            cls_src.push_back(c);
            cls_dst.push_back(b * tokens + c);
        }
        for (std::size_t q = 0; q < np; ++q) patch_dst.push_back(b * tokens + nc + q);
        for (std::size_t s = 0; s < kNumScenarios; ++s) scenario_rows[s].push_back(b * tokens + (nc == 1 ? 0 : s));
    }

    auto embedded = ops::add_tiled(tape, ops::linear(tape, patches, params.patch_weight, params.patch_bias),
                                   params.pos_embed);
    auto x = ops::add(tape, ops::scatter_rows(tape, ops::gather_rows(tape, params.cls_tokens, cls_src), cls_dst, rows),
                      ops::scatter_rows(tape, embedded, patch_dst, rows));

    for (const auto& blk : params.blocks) {
        auto h = ops::layernorm(tape, x, blk.ln1_gain, blk.ln1_bias, T(kLayerNormEps));
        auto qkv = ops::linear(tape, h, blk.qkv_weight, blk.qkv_bias);
        auto attn = ops::attention(tape, qkv, batch, tokens, cfg.num_heads, cfg.isolate_cls ? nc : 0);
        x = ops::add(tape, x, ops::linear(tape, attn, blk.proj_weight, blk.proj_bias));

        auto h2 = ops::layernorm(tape, x, blk.ln2_gain, blk.ln2_bias, T(kLayerNormEps));
        auto ffn = [&](const Tensor<T>& in) {
            auto mid = ops::gelu(tape, ops::linear(tape, in, blk.ffn_in_weight, blk.ffn_in_bias));
            return ops::linear(tape, mid, blk.ffn_out_weight, blk.ffn_out_bias);
        };
        Tensor<T> update;
        if (blk.moae) {
            update = ops::scatter_rows(tape, ffn(ops::gather_rows(tape, h2, patch_dst)), patch_dst, rows);
            for (Scenario s : kAllScenarios) {
                const auto& idx = scenario_rows[s.index()];
                auto routed = blk.moae->forward(tape, ops::gather_rows(tape, h2, idx), s, stats);
                update = ops::add(tape, update, ops::scatter_rows(tape, routed, idx, rows));
            }
        } else {
            update = ffn(h2);
        }
        x = ops::add(tape, x, update);
    }

    auto final_x = ops::layernorm(tape, x, params.final_gain, params.final_bias, T(kLayerNormEps));
    BackboneOutput<T> out;
    if (nc == 1) {
        auto shared = ops::gather_rows(tape, final_x, scenario_rows[0]);
        out.cls.fill(shared);
    } else {
        for (std::size_t s = 0; s < kNumScenarios; ++s) out.cls[s] = ops::gather_rows(tape, final_x, scenario_rows[s]);
    }
    out.patches = ops::gather_rows(tape, final_x, patch_dst);
    return out;
}

template <typename T>
BackboneOutput<T> forward(Tape<T>& tape, const BackboneParams<T>& params, std::span<const Image> batch,
                          moae::MoaeStats* stats) {
    const ModelConfig& cfg = params.config;
    const std::size_t per = cfg.num_patches() * cfg.patch_dim();
    std::vector<T> flat;
    flat.reserve(batch.size() * per);
    for (const Image& img : batch) {
        auto p = patchify<T>(img, cfg);
        flat.insert(flat.end(), p.values().begin(), p.values().end());
    }
    Tensor<T> patches({batch.size() * cfg.num_patches(), cfg.patch_dim()}, std::move(flat));
    return forward_patches(tape, params, patches, batch.size(), stats);
}

#define UNIAT_INSTANTIATE_BACKBONE(T)                                                                          \
    template struct BackboneParams<T>;                                                                        \
    template Tensor<T> patchify<T>(const Image&, const ModelConfig&);                                         \
    template Image unpatchify<T>(const Tensor<T>&, const ModelConfig&);                                       \
    template BackboneParams<T> init_params<T>(const ModelConfig&, std::uint64_t);                             \
    template BackboneOutput<T> forward<T>(Tape<T>&, const BackboneParams<T>&, std::span<const Image>,         \
                                          moae::MoaeStats*);                                                  \
    template BackboneOutput<T> forward_patches<T>(Tape<T>&, const BackboneParams<T>&, const Tensor<T>&,       \
                                                  std::size_t, moae::MoaeStats*);

UNIAT_INSTANTIATE_BACKBONE(float)
UNIAT_INSTANTIATE_BACKBONE(double)

#undef UNIAT_INSTANTIATE_BACKBONE

}  // namespace uniat::backbone
