// SPDX-License-Identifier: Apache-2.0

#include "uniat/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "uniat/core/error.hpp"
#include "uniat/core/rng.hpp"

namespace uniat::data {

namespace {

constexpr std::size_t kChannels = 3;
constexpr std::size_t kBlobsPerBasis = 3;

struct Camera {
    std::int64_t id;
    Modality modality;
    double gain;
    std::array<double, kChannels> offset;
};

using Field = std::vector<double>;  // H*W

struct Renderer {
    std::size_t h, w;
    std::vector<Field> body_basis;
    std::vector<double> ir_upper, ir_lower;  // clothes -> thermal projections

    Renderer(const SyntheticGenConfig& c, Rng& rng) : h(c.image_height), w(c.image_width) {
        for (std::size_t k = 0; k < c.body_dim; ++k) {
            Field f(h * w, 0.0);
            for (std::size_t b = 0; b < kBlobsPerBasis; ++b) {
                const double cy = rng.uniform(0, double(h)), cx = rng.uniform(0, double(w));
                const double sigma = rng.uniform(1.5, 4.0), amp = rng.uniform(-1, 1);
                for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t x = 0; x < w; ++x) {
                        const double dy = double(y) - cy, dx = double(x) - cx;
                        f[y * w + x] += amp * std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
                    }
            }
            const double mx = std::max(1e-9, std::abs(*std::max_element(f.begin(), f.end(), [](double a, double b) {
                return std::abs(a) < std::abs(b);
            })));
            for (double& v : f) v /= mx;
            body_basis.push_back(std::move(f));
        }
        for (std::size_t k = 0; k < c.clothes_dim; ++k) {
            ir_upper.push_back(rng.normal() / std::sqrt(double(c.clothes_dim)));
            ir_lower.push_back(rng.normal() / std::sqrt(double(c.clothes_dim)));
        }
    }

    enum class Region { background, head, torso, legs };

    Region region(const std::vector<double>& body, std::size_t y, double x) const {
        const double fy = double(y) / double(h), cx = double(w) / 2.0 - 0.5;
        const double dx = std::abs(x - cx) / double(w);
        const double shoulders = 0.26 + 0.06 * std::tanh(body[0]);
        const double stance = 0.12 + 0.04 * std::tanh(body.size() > 1 ? body[1] : 0.0);
        if (fy < 0.2) {
            const double ry = (fy - 0.1) / 0.1, rx = dx / 0.17;
            return ry * ry + rx * rx <= 1.0 ? Region::head : Region::background;
        }
        if (fy < 0.6) return dx <= shoulders ? Region::torso : Region::background;
        return std::abs(dx - stance) <= 0.11 ? Region::legs : Region::background;
    }

    Image render(const std::vector<double>& body, const std::vector<double>& clothes, const Camera& cam, int shift,
                 Rng& rng, double noise) const {
        Field shape(h * w, 0.0);
        for (std::size_t k = 0; k < body_basis.size(); ++k)
            for (std::size_t i = 0; i < h * w; ++i) shape[i] += body[k] * body_basis[k][i];
        const double norm = std::sqrt(double(std::max<std::size_t>(body_basis.size(), 1)));
        for (double& v : shape) v = 0.5 + 0.5 * std::tanh(v / norm);

        std::array<double, kChannels> upper{}, lower{};
        for (std::size_t c = 0; c < kChannels; ++c) {
            upper[c] = 0.5 + 0.45 * std::tanh(clothes[c % clothes.size()]);
            lower[c] = 0.5 + 0.45 * std::tanh(clothes[(c + kChannels) % clothes.size()]);
        }
        const double stripe_amp = 0.15 * std::tanh(clothes[6 % clothes.size()]);
        const std::size_t stripe_period = 2 + static_cast<std::size_t>(std::abs(clothes[7 % clothes.size()]) * 2) % 3;
        double ir_u = 0, ir_l = 0;
        for (std::size_t k = 0; k < clothes.size(); ++k) {
            ir_u += clothes[k] * ir_upper[k];
            ir_l += clothes[k] * ir_lower[k];
        }
        ir_u = 0.1 * std::tanh(ir_u);
        ir_l = 0.1 * std::tanh(ir_l);

        Image img(h, w, kChannels);
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const double sx = double(x) - double(shift);
                const Region reg = region(body, y, sx);
                const double s = shape[y * w + x];
                for (std::size_t c = 0; c < kChannels; ++c) {
                    double v = 0;
                    if (cam.modality == Modality::RGB) {
                        const double stripe = (y / stripe_period) % 2 ? stripe_amp : -stripe_amp;
                        switch (reg) {
                            case Region::background: v = 0.1; break;
                            case Region::head: v = 0.3 + 0.6 * s; break;
                            case Region::torso: v = 0.6 * upper[c] + 0.4 * s + stripe; break;
                            case Region::legs: v = 0.6 * lower[c] + 0.4 * s; break;
                        }
                    } else {
                        switch (reg) {
                            case Region::background: v = 0.05; break;
                            case Region::head: v = 0.2 + 0.8 * s; break;
                            case Region::torso: v = 0.2 + 0.7 * s + ir_u; break;
                            case Region::legs: v = 0.2 + 0.7 * s + ir_l; break;
                        }
                    }
                    const std::size_t cc = cam.modality == Modality::RGB ? c : 0;
                    v = cam.gain * v + cam.offset[cc];
                    if (noise > 0 && (cam.modality == Modality::RGB || c == 0)) v += noise * rng.normal();
                    img.at(y, x, c) = static_cast<float>(v);
                }
                if (cam.modality == Modality::IR) img.at(y, x, 1) = img.at(y, x, 2) = img.at(y, x, 0);
            }
        }
        return img;
    }
};

std::vector<double> gaussian_vector(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

std::vector<double> jitter(const std::vector<double>& v, Rng& rng, double scale) {
    if (scale <= 0) return v;
    std::vector<double> out(v);
    for (double& x : out) x += scale * rng.normal();
    return out;
}

}  // namespace

void SyntheticGenConfig::validate() const {
    if (num_train_ids < 2 || num_test_ids < 1) throw ValidationError("synthetic: need >= 2 train and >= 1 test ids");
    if (clothes_min < 2 || clothes_max < clothes_min)
        throw ValidationError("synthetic: clothes range must satisfy 2 <= min <= max");
    if (num_rgb_cameras == 0 || num_ir_cameras == 0)
        throw ValidationError("synthetic: infeasible config, both modalities need at least one camera");
    if (images_per_cell < 6 || images_per_cell % 2 != 0)
        throw ValidationError("synthetic: images_per_cell must be even and >= 6");
    if (!(cross_modality_prob >= 0 && cross_modality_prob <= 1))
        throw ValidationError("synthetic: cross_modality_prob must lie in [0, 1]");
    if (body_dim < 2 || clothes_dim < 1) throw ValidationError("synthetic: latent dims too small");
    if (!(noise >= 0)) throw ValidationError("synthetic: noise must be non-negative");
    if (image_height < 8 || image_width < 8) throw ValidationError("synthetic: image must be at least 8x8");
}

DatasetManifest generate_synthetic(const SyntheticGenConfig& config) {
    config.validate();
    Rng root(config.seed);
    Rng basis_rng = root.split();
    Rng latent_rng = root.split();
    Rng capture_rng = root.split();
    Rng image_rng = root.split();
    const Renderer renderer(config, basis_rng);

    DatasetManifest m;
    m.image_height = config.image_height;
    m.image_width = config.image_width;
    m.channels = kChannels;

    std::vector<Camera> rgb, ir;
    std::int64_t next_cam = 0;
    for (std::size_t i = 0; i < config.num_rgb_cameras + config.num_ir_cameras; ++i) {
        const Modality mod = i < config.num_rgb_cameras ? Modality::RGB : Modality::IR;
        Camera cam{next_cam++, mod, capture_rng.uniform(0.85, 1.15), {}};
        for (double& o : cam.offset) o = capture_rng.uniform(-0.08, 0.08);
        m.cameras[cam.id] = mod;
        (mod == Modality::RGB ? rgb : ir).push_back(cam);
    }

    // Outfit counts cycle through the allowed range within each split, so the
    // test gallery size does not hinge on a few draws.
    const std::size_t total = config.num_train_ids + config.num_test_ids;
    const std::size_t range = config.clothes_max - config.clothes_min + 1;
    std::vector<std::size_t> outfit_counts;
    for (std::size_t split_size : {config.num_train_ids, config.num_test_ids}) {
        std::vector<std::size_t> counts(split_size);
        for (std::size_t i = 0; i < split_size; ++i) counts[i] = config.clothes_min + i % range;
        latent_rng.shuffle(std::span<std::size_t>(counts));
        outfit_counts.insert(outfit_counts.end(), counts.begin(), counts.end());
    }
    const double pose_noise = config.noise * 10;
    for (std::size_t p = 0; p < total; ++p) {
        const auto pid = static_cast<std::int64_t>(p);
        const bool train = p < config.num_train_ids;
        m.persons.insert(pid);
        const auto body = gaussian_vector(latent_rng, config.body_dim);
        const std::size_t n_clothes = outfit_counts[p];
        const bool first_home_rgb = latent_rng.bernoulli(0.5);
        const std::int64_t first_day = static_cast<std::int64_t>(latent_rng.below(30));

        for (std::size_t k = 0; k < n_clothes; ++k) {
            const auto cid = static_cast<std::int64_t>(k);
            m.clothes.insert({pid, cid});
            const auto clothes = gaussian_vector(latent_rng, config.clothes_dim);
            const bool home_rgb = (k % 2 == 0) == first_home_rgb;
            const auto& home = home_rgb ? rgb : ir;
            const auto& away = home_rgb ? ir : rgb;

            std::vector<Camera> cams(home);
            capture_rng.shuffle(std::span<Camera>(cams));
            cams.resize(std::min<std::size_t>(2, cams.size()));
            if (capture_rng.bernoulli(config.cross_modality_prob)) cams.push_back(away[capture_rng.below(away.size())]);
            std::sort(cams.begin(), cams.end(), [](const Camera& a, const Camera& b) { return a.id < b.id; });

            for (const Camera& cam : cams) {
                for (std::size_t i = 0; i < config.images_per_cell; ++i) {
                    SampleRecord r;
                    r.person_id = pid;
                    r.clothes_id = cid;
                    r.modality = cam.modality;
                    r.camera_id = cam.id;
                    r.timestamp = first_day + cid;
                    r.split = train ? Split::train : (i < config.images_per_cell / 2 ? Split::query : Split::gallery);
                    int shift = 0;
                    if (pose_noise > 0)
                        shift = static_cast<int>(std::clamp(std::lround(image_rng.normal() * pose_noise), -2L, 2L));
                    r.image = renderer.render(jitter(body, image_rng, config.noise),
                                              jitter(clothes, image_rng, config.noise), cam, shift, image_rng,
                                              config.noise);
                    m.records.push_back(std::move(r));
                }
            }
        }
    }
    m.validate();
    return m;
}

}  // namespace uniat::data
