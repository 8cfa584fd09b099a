#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "brushtrace/labels.h"
#include "brushtrace/patches.h"

namespace brushtrace {

// One line of the dataset manifest (JSON Lines):
//   {"path": "human_01.png", "painting_id": "human_01", "author": "human"}
// Relative paths resolve against the manifest's directory.
struct ManifestEntry {
    std::filesystem::path path;
    std::string painting_id;
    Author author = Author::Human;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest);
void write_manifest(const std::filesystem::path& manifest, const std::vector<ManifestEntry>& entries);

// Rectangle [x0,x1) x [y0,y1) in scan pixels where both authors are present.
// One JSON object per line: {"painting_id": ..., "x0": .., "y0": .., "x1": .., "y1": ..}
struct AnnotationRegion {
    std::string painting_id;
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    friend bool operator==(const AnnotationRegion&, const AnnotationRegion&) = default;
};

std::vector<AnnotationRegion> read_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path, const std::vector<AnnotationRegion>& regions);

// Patch cache layout (little-endian):
//   char[4] "BTPC", u8 version (1), u32 record count, then per record
//   char[64] painting id (NUL padded), i32 x, i32 y, i32 size,
//   u8 label (0 blank, 1 human, 2 robot, 255 unlabeled),
//   f32 pixels[size*size].
inline constexpr std::uint8_t kPatchCacheVersion = 1;
inline constexpr std::size_t kPatchCacheIdWidth = 64;

void write_patch_cache(const std::filesystem::path& path, const std::vector<PatchRecord>& patches);
std::vector<PatchRecord> read_patch_cache(const std::filesystem::path& path);

}  // namespace brushtrace
