#include "brushtrace/dataset.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "brushtrace/errors.h"

namespace brushtrace {

using nlohmann::json;

namespace {

std::vector<json> read_json_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<json> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

template <typename T>
T field(const json& j, const char* key, const std::filesystem::path& path) {
    if (!j.contains(key)) throw FormatError(path.string() + ": record missing '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": bad '" + key + "': " + e.what());
    }
}

void write_lines(const std::filesystem::path& path, const std::vector<json>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (const json& r : rows) out << r.dump() << '\n';
}

template <typename T>
void put_le(std::string& out, T v) {
    using U = std::make_unsigned_t<T>;
    const U u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
    using U = std::make_unsigned_t<T>;
    if (pos + sizeof(T) > in.size()) throw FormatError("patch cache truncated");
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += sizeof(T);
    return static_cast<T>(u);
}

}  // namespace

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest) {
    const auto base = manifest.parent_path();
    std::vector<ManifestEntry> out;
    for (const json& j : read_json_lines(manifest)) {
        ManifestEntry e;
        e.path = field<std::string>(j, "path", manifest);
        if (e.path.is_relative()) e.path = base / e.path;
        e.painting_id = field<std::string>(j, "painting_id", manifest);
        e.author = parse_author(field<std::string>(j, "author", manifest));
        out.push_back(std::move(e));
    }
    return out;
}

void write_manifest(const std::filesystem::path& manifest, const std::vector<ManifestEntry>& entries) {
    std::vector<json> rows;
    for (const ManifestEntry& e : entries) {
        json j;
        j["path"] = e.path.generic_string();
        j["painting_id"] = e.painting_id;
        j["author"] = std::string(to_string(e.author));
        rows.push_back(std::move(j));
    }
    write_lines(manifest, rows);
}

std::vector<AnnotationRegion> read_annotations(const std::filesystem::path& path) {
    std::vector<AnnotationRegion> out;
    for (const json& j : read_json_lines(path)) {
        out.push_back({field<std::string>(j, "painting_id", path), field<int>(j, "x0", path), field<int>(j, "y0", path),
                       field<int>(j, "x1", path), field<int>(j, "y1", path)});
    }
    return out;
}

void write_annotations(const std::filesystem::path& path, const std::vector<AnnotationRegion>& regions) {
    std::vector<json> rows;
    for (const AnnotationRegion& r : regions) {
        rows.push_back({{"painting_id", r.painting_id}, {"x0", r.x0}, {"y0", r.y0}, {"x1", r.x1}, {"y1", r.y1}});
    }
    write_lines(path, rows);
}

void write_patch_cache(const std::filesystem::path& path, const std::vector<PatchRecord>& patches) {
    std::string out = "BTPC";
    put_le<std::uint8_t>(out, kPatchCacheVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(patches.size()));
    for (const PatchRecord& p : patches) {
        if (p.painting_id.size() >= kPatchCacheIdWidth) throw UsageError("painting id too long for patch cache: " + p.painting_id);
        std::string id = p.painting_id;
        id.resize(kPatchCacheIdWidth, '\0');
        out += id;
        put_le<std::int32_t>(out, p.x);
        put_le<std::int32_t>(out, p.y);
        put_le<std::int32_t>(out, p.size);
        put_le<std::uint8_t>(out, p.label ? static_cast<std::uint8_t>(*p.label) : 255);
        if (p.pixels.size() != static_cast<std::size_t>(p.size) * p.size) throw ShapeError("patch pixel count mismatch");
        for (float v : p.pixels) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

std::vector<PatchRecord> read_patch_cache(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    const std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (in.size() < 4 || in.compare(0, 4, "BTPC") != 0) throw FormatError("not a patch cache: " + path.string());
    std::size_t pos = 4;
    const auto version = get_le<std::uint8_t>(in, pos);
    if (version != kPatchCacheVersion) throw FormatError("unsupported patch cache version " + std::to_string(version));
    const auto count = get_le<std::uint32_t>(in, pos);
    std::vector<PatchRecord> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        if (pos + kPatchCacheIdWidth > in.size()) throw FormatError("patch cache truncated");
        PatchRecord p;
        p.painting_id = std::string(in.c_str() + pos, strnlen(in.c_str() + pos, kPatchCacheIdWidth));
        pos += kPatchCacheIdWidth;
        p.x = get_le<std::int32_t>(in, pos);
        p.y = get_le<std::int32_t>(in, pos);
        p.size = get_le<std::int32_t>(in, pos);
        const auto label = get_le<std::uint8_t>(in, pos);
        if (label != 255) p.label = class_from_index(label);
        if (p.size < 1) throw FormatError("bad patch size in cache");
        p.pixels.resize(static_cast<std::size_t>(p.size) * p.size);
        for (float& v : p.pixels) v = std::bit_cast<float>(get_le<std::uint32_t>(in, pos));
        out.push_back(std::move(p));
    }
    if (pos != in.size()) throw FormatError("trailing bytes in patch cache");
    return out;
}

}  // namespace brushtrace
