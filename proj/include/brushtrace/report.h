#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "brushtrace/image.h"
#include "brushtrace/labels.h"
#include "brushtrace/patches.h"

namespace brushtrace {

using Rgb = std::array<std::uint8_t, 3>;

// Class colors: blank white, human blue, robot red. Pixels no patch covers
// are drawn in kUncovered.
inline constexpr Rgb kBlankColor{255, 255, 255};
inline constexpr Rgb kHumanColor{31, 90, 200};
inline constexpr Rgb kRobotColor{210, 40, 40};
inline constexpr Rgb kUncovered{128, 128, 128};
// Entropy ramp endpoints: H = 0 is light, H = 1 is dark.
inline constexpr Rgb kEntropyLow{255, 247, 236};
inline constexpr Rgb kEntropyHigh{84, 0, 40};

Rgb class_color(ClassLabel c);
Rgb entropy_color(double h);

// Per-pixel mean of the values of every patch covering that pixel; pixels
// without a covering patch are NaN. Throws UsageError when coords and values
// differ in length or a patch leaves the canvas.
std::vector<double> average_patch_field(int width, int height, int patch_size, std::span<const PatchCoord> coords,
                                        std::span<const double> values);

// Averages each patch's one-hot class vector per pixel, then mixes the class
// colors by the averaged fractions.
RgbImage render_class_heatmap(int width, int height, int patch_size, std::span<const PatchCoord> coords,
                              std::span<const ClassLabel> classes);

// Averages entropy per pixel over covering patches that passed the tau gate
// (nullopt values contribute nothing) and maps through the entropy ramp.
RgbImage render_entropy_heatmap(int width, int height, int patch_size, std::span<const PatchCoord> coords,
                                std::span<const std::optional<double>> entropies);

// Mean of the per-pixel luminance (0.299R + 0.587G + 0.114B) over covered
// pixels, in [0,255].
double raster_mean_luminance(const RgbImage& image);

// Flat configuration file: one `key = value` per line, `#` starts a comment,
// blank lines ignored. Keys match the long flag names without dashes.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);
std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& origin = "config");

// Versioned report envelope shared by every subcommand.
inline constexpr int kReportVersion = 1;
nlohmann::json report_envelope(const std::string& kind, const nlohmann::json& config);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
void write_json_lines(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows);
std::vector<nlohmann::json> read_json_lines_file(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace brushtrace
