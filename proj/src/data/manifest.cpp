// SPDX-License-Identifier: Apache-2.0

#include "uniat/data/manifest.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <sstream>

#include <json.hpp>

#include "uniat/core/digest.hpp"
#include "uniat/core/error.hpp"
#include "uniat/core/io.hpp"

namespace uniat::data {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "uniat-manifest";
constexpr int kVersion = 1;
constexpr std::size_t kMaxListed = 8;

std::string list_indices(const std::vector<std::size_t>& idx) {
    std::ostringstream os;
    for (std::size_t i = 0; i < idx.size() && i < kMaxListed; ++i) os << (i ? ", " : "") << idx[i];
    if (idx.size() > kMaxListed) os << ", ... (" << idx.size() << " total)";
    return os.str();
}

const json& field(const json& obj, const char* name, std::size_t line) {
    auto it = obj.find(name);
    if (it == obj.end() || it->is_null())
        throw ValidationError("manifest line " + std::to_string(line) + ": missing field '" + name + "'");
    return *it;
}

template <typename U>
U get_as(const json& obj, const char* name, std::size_t line) {
    const json& v = field(obj, name, line);
    try {
        return v.get<U>();
    } catch (const json::exception&) {
        throw ValidationError("manifest line " + std::to_string(line) + ": field '" + name + "' has the wrong type");
    }
}

Modality modality_field(const json& obj, std::size_t line) {
    const auto text = get_as<std::string>(obj, "modality", line);
    auto m = parse_modality(text);
    if (!m) throw ValidationError("manifest line " + std::to_string(line) + ": unknown modality '" + text + "'");
    return *m;
}

std::filesystem::path blob_path_for(const std::filesystem::path& manifest) {
    return manifest.parent_path() / (manifest.stem().string() + ".images.f32");
}

}  // namespace

std::string_view to_string(Split split) noexcept {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::query: return "query";
        case Split::gallery: return "gallery";
    }
    return "?";
}

Split parse_split(std::string_view text) {
    if (text == "train") return Split::train;
    if (text == "val") return Split::val;
    if (text == "query") return Split::query;
    if (text == "gallery") return Split::gallery;
    throw ValidationError("unknown split '" + std::string(text) + "'");
}

void DatasetManifest::validate() const {
    if (image_height == 0 || image_width == 0 || channels == 0)
        throw ValidationError("manifest: image dimensions must be positive");
    std::vector<std::size_t> dangling_owner;
    for (const auto& [owner, c] : clothes)
        if (!persons.count(owner)) dangling_owner.push_back(static_cast<std::size_t>(owner));
    if (!dangling_owner.empty()) {
        throw ValidationError("manifest: clothes owned by absent persons (person ids " + list_indices(dangling_owner) +
                              ")");
    }

    std::vector<std::size_t> bad_person, bad_clothes, bad_camera, bad_modality, bad_image;
    std::set<std::int64_t> train_persons, test_persons;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (!persons.count(r.person_id)) bad_person.push_back(i);
        if (!clothes.count({r.person_id, r.clothes_id})) bad_clothes.push_back(i);
        auto cam = cameras.find(r.camera_id);
        if (cam == cameras.end()) {
            bad_camera.push_back(i);
        } else if (cam->second != r.modality) {
            bad_modality.push_back(i);
        }
        const bool inline_ok = r.image.height == image_height && r.image.width == image_width &&
                               r.image.channels == channels &&
                               r.image.pixels.size() == image_height * image_width * channels;
        if (r.image.empty() ? r.image_path.empty() : !inline_ok) bad_image.push_back(i);
        if (r.split == Split::train) train_persons.insert(r.person_id);
        if (r.split == Split::query || r.split == Split::gallery) test_persons.insert(r.person_id);
    }
    auto report = [](const std::vector<std::size_t>& idx, const std::string& what) {
        if (!idx.empty()) throw ValidationError("manifest: " + what + " in records " + list_indices(idx));
    };
    report(bad_person, "unknown person");
    report(bad_clothes, "unregistered (person, clothes)");
    report(bad_camera, "unknown camera");
    report(bad_modality, "modality disagrees with camera");
    report(bad_image, "missing or mis-sized image");

    std::vector<std::size_t> overlap;
    for (std::int64_t p : train_persons)
        if (test_persons.count(p)) overlap.push_back(static_cast<std::size_t>(p));
    if (!overlap.empty()) {
        throw ValidationError("manifest: split overlap, persons in both train and test (person ids " +
                              list_indices(overlap) + ")");
    }
}

std::vector<std::size_t> DatasetManifest::indices(Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].split == split) out.push_back(i);
    return out;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    m.validate();
    const auto blob = blob_path_for(path);
    std::vector<float> pixels;
    std::ostringstream out;

    json header;
    header["format"] = kFormat;
    header["version"] = kVersion;
    header["image"] = {{"height", m.image_height}, {"width", m.image_width}, {"channels", m.channels}};
    const bool any_inline =
        std::any_of(m.records.begin(), m.records.end(), [](const SampleRecord& r) { return !r.image.empty(); });
    header["blob"] = any_inline ? json(blob.filename().string()) : json(nullptr);
    header["persons"] = json(std::vector<std::int64_t>(m.persons.begin(), m.persons.end()));
    json clothes = json::array();
    for (const auto& [p, c] : m.clothes) clothes.push_back({p, c});
    header["clothes"] = clothes;
    json cams = json::array();
    for (const auto& [id, mod] : m.cameras) cams.push_back({{"id", id}, {"modality", to_string(mod)}});
    header["cameras"] = cams;
    out << header.dump() << '\n';

    for (const auto& r : m.records) {
        json j;
        j["person"] = r.person_id;
        j["clothes"] = r.clothes_id;
        j["modality"] = to_string(r.modality);
        j["camera"] = r.camera_id;
        j["day"] = r.timestamp;
        j["split"] = to_string(r.split);
        if (!r.image.empty()) {
            j["offset"] = pixels.size();
            pixels.insert(pixels.end(), r.image.pixels.begin(), r.image.pixels.end());
        } else {
            j["path"] = r.image_path;
        }
        out << j.dump() << '\n';
    }
    static_assert(std::endian::native == std::endian::little, "blob format is little-endian float32");
    if (any_inline) atomic_write(blob, std::as_bytes(std::span<const float>(pixels)));
    atomic_write(path, out.str());
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ValidationError("manifest not found: " + path.string());
    std::istringstream in(read_text(path));
    std::string line;
    std::size_t line_no = 0;
    auto parse = [&](const std::string& text) {
        try {
            return json::parse(text);
        } catch (const json::parse_error& e) {
            throw ValidationError("manifest line " + std::to_string(line_no) + ": " + e.what());
        }
    };

    if (!std::getline(in, line)) throw ValidationError("manifest is empty: " + path.string());
    ++line_no;
    const json header = parse(line);
    if (get_as<std::string>(header, "format", 1) != kFormat) throw ValidationError("manifest: unknown format");
    if (get_as<int>(header, "version", 1) != kVersion) throw ValidationError("manifest: unsupported version");

    DatasetManifest m;
    const json& img = field(header, "image", 1);
    m.image_height = get_as<std::size_t>(img, "height", 1);
    m.image_width = get_as<std::size_t>(img, "width", 1);
    m.channels = get_as<std::size_t>(img, "channels", 1);
    for (const auto& p : field(header, "persons", 1)) m.persons.insert(p.get<std::int64_t>());
    for (const auto& c : field(header, "clothes", 1)) {
        if (!c.is_array() || c.size() != 2) throw ValidationError("manifest line 1: clothes entries are [person, clothes]");
        m.clothes.insert({c[0].get<std::int64_t>(), c[1].get<std::int64_t>()});
    }
    for (const auto& c : field(header, "cameras", 1))
        m.cameras[get_as<std::int64_t>(c, "id", 1)] = modality_field(c, 1);

    std::vector<float> pixels;
    if (auto b = header.find("blob"); b != header.end() && !b->is_null()) {
        const auto bytes = read_binary(path.parent_path() / b->get<std::string>());
        if (bytes.size() % sizeof(float) != 0) throw ValidationError("manifest blob size is not a multiple of 4");
        pixels.resize(bytes.size() / sizeof(float));
        std::memcpy(pixels.data(), bytes.data(), bytes.size());
    }
    const std::size_t image_size = m.image_height * m.image_width * m.channels;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const json j = parse(line);
        SampleRecord r;
        r.person_id = get_as<std::int64_t>(j, "person", line_no);
        r.clothes_id = get_as<std::int64_t>(j, "clothes", line_no);
        r.modality = modality_field(j, line_no);
        try {
            r.split = parse_split(get_as<std::string>(j, "split", line_no));
        } catch (const ValidationError& e) {
            throw ValidationError("manifest line " + std::to_string(line_no) + ": " + e.what());
        }
        r.camera_id = get_as<std::int64_t>(j, "camera", line_no);
        r.timestamp = get_as<std::int64_t>(j, "day", line_no);
        if (j.contains("offset")) {
            const auto off = get_as<std::size_t>(j, "offset", line_no);
            if (off + image_size > pixels.size())
                throw ValidationError("manifest line " + std::to_string(line_no) + ": offset beyond the image blob");
            r.image = Image(m.image_height, m.image_width, m.channels);
            std::copy_n(pixels.begin() + static_cast<std::ptrdiff_t>(off), image_size, r.image.pixels.begin());
        } else {
            r.image_path = get_as<std::string>(j, "path", line_no);
        }
        m.records.push_back(std::move(r));
    }
    m.validate();
    return m;
}

std::string manifest_digest(const DatasetManifest& m) {
    std::vector<std::string> hashes;
    hashes.reserve(m.records.size());
    for (const auto& r : m.records) {
        Sha256 h;
        std::ostringstream os;
        os << r.person_id << '|' << r.clothes_id << '|' << to_string(r.modality) << '|' << r.camera_id << '|'
           << r.timestamp << '|' << to_string(r.split) << '|';
        h.update(os.str());
        if (!r.image.empty()) {
            h.update(std::as_bytes(std::span<const float>(r.image.pixels)));
        } else {
            h.update("path:").update(r.image_path);
        }
        hashes.push_back(h.hex());
    }
    std::sort(hashes.begin(), hashes.end());
    Sha256 all;
    std::ostringstream head;
    head << kFormat << '|' << m.image_height << 'x' << m.image_width << 'x' << m.channels << "|persons";
    for (auto p : m.persons) head << ' ' << p;
    head << "|clothes";
    for (const auto& [p, c] : m.clothes) head << ' ' << p << ':' << c;
    head << "|cameras";
    for (const auto& [id, mod] : m.cameras) head << ' ' << id << ':' << to_string(mod);
    all.update(head.str());
    for (const auto& h : hashes) all.update(h);
    return all.hex();
}

}  // namespace uniat::data
