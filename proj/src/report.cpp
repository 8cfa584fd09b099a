#include "brushtrace/report.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "brushtrace/errors.h"

namespace brushtrace {

Rgb class_color(ClassLabel c) {
    switch (c) {
        case ClassLabel::Blank: return kBlankColor;
        case ClassLabel::Human: return kHumanColor;
        case ClassLabel::Robot: return kRobotColor;
    }
    return kUncovered;
}

namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

void put(RgbImage& img, std::size_t i, const Rgb& c) {
    img.rgb[3 * i] = c[0];
    img.rgb[3 * i + 1] = c[1];
    img.rgb[3 * i + 2] = c[2];
}

}  // namespace

Rgb entropy_color(double h) {
    const double t = std::clamp(h, 0.0, 1.0);
    Rgb out{};
    for (std::size_t k = 0; k < 3; ++k) out[k] = to_byte(kEntropyLow[k] + t * (kEntropyHigh[k] - kEntropyLow[k]));
    return out;
}

std::vector<double> average_patch_field(int width, int height, int patch_size, std::span<const PatchCoord> coords,
                                        std::span<const double> values) {
    if (coords.size() != values.size()) {
        throw UsageError("heatmap: " + std::to_string(values.size()) + " values for " + std::to_string(coords.size()) +
                         " grid patches");
    }
    if (width < 1 || height < 1 || patch_size < 1) throw UsageError("heatmap: bad raster or patch size");
    const std::size_t n = static_cast<std::size_t>(width) * height;
    std::vector<double> sum(n, 0.0);
    std::vector<int> count(n, 0);
    for (std::size_t k = 0; k < coords.size(); ++k) {
        const PatchCoord& c = coords[k];
        if (c.x < 0 || c.y < 0 || c.x + patch_size > width || c.y + patch_size > height) {
            throw UsageError("heatmap: patch at (" + std::to_string(c.x) + "," + std::to_string(c.y) + ") leaves the canvas");
        }
        if (std::isnan(values[k])) continue;
        for (int y = c.y; y < c.y + patch_size; ++y) {
            for (int x = c.x; x < c.x + patch_size; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * width + x;
                sum[i] += values[k];
                ++count[i];
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) sum[i] = count[i] ? sum[i] / count[i] : std::numeric_limits<double>::quiet_NaN();
    return sum;
}

RgbImage render_class_heatmap(int width, int height, int patch_size, std::span<const PatchCoord> coords,
                              std::span<const ClassLabel> classes) {
    if (coords.size() != classes.size()) {
        throw UsageError("heatmap: " + std::to_string(classes.size()) + " values for " + std::to_string(coords.size()) +
                         " grid patches");
    }
    std::array<std::vector<double>, 3> frac;
    for (ClassLabel c : kAllClasses) {
        std::vector<double> onehot;
        for (ClassLabel v : classes) onehot.push_back(v == c ? 1.0 : 0.0);
        frac[static_cast<std::size_t>(index_of(c))] = average_patch_field(width, height, patch_size, coords, onehot);
    }
    RgbImage img(width, height);
    for (std::size_t i = 0; i < frac[0].size(); ++i) {
        if (std::isnan(frac[0][i])) {
            put(img, i, kUncovered);
            continue;
        }
        Rgb px{};
        for (std::size_t k = 0; k < 3; ++k) {
            double v = 0.0;
            for (ClassLabel c : kAllClasses) v += frac[static_cast<std::size_t>(index_of(c))][i] * class_color(c)[k];
            px[k] = to_byte(v);
        }
        put(img, i, px);
    }
    return img;
}

RgbImage render_entropy_heatmap(int width, int height, int patch_size, std::span<const PatchCoord> coords,
                                std::span<const std::optional<double>> entropies) {
    std::vector<double> values;
    for (const auto& h : entropies) values.push_back(h ? *h : std::numeric_limits<double>::quiet_NaN());
    const std::vector<double> field = average_patch_field(width, height, patch_size, coords, values);
    RgbImage img(width, height);
    for (std::size_t i = 0; i < field.size(); ++i) put(img, i, std::isnan(field[i]) ? kUncovered : entropy_color(field[i]));
    return img;
}

double raster_mean_luminance(const RgbImage& image) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i + 2 < image.rgb.size(); i += 3) {
        if (image.rgb[i] == kUncovered[0] && image.rgb[i + 1] == kUncovered[1] && image.rgb[i + 2] == kUncovered[2]) continue;
        sum += 0.299 * image.rgb[i] + 0.587 * image.rgb[i + 1] + 0.114 * image.rgb[i + 2];
        ++n;
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& origin) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        }
        std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.rfind("--", 0) == 0) key.erase(0, 2);
        if (key.empty()) throw UsageError(origin + ":" + std::to_string(lineno) + ": empty key");
        out[key] = value;
    }
    return out;
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path.string());
}

nlohmann::json report_envelope(const std::string& kind, const nlohmann::json& config) {
    return {{"schema", "brushtrace." + kind}, {"version", kReportVersion}, {"config", config}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) { write_text(path, doc.dump(2) + "\n"); }

void write_json_lines(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows) {
    std::string text;
    for (const auto& r : rows) text += r.dump() + "\n";
    write_text(path, text);
}

std::vector<nlohmann::json> read_json_lines_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<nlohmann::json> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace brushtrace
