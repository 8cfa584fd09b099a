#include "brushtrace/image.h"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "brushtrace/errors.h"

namespace brushtrace {

GrayImage::GrayImage(int w, int h, float fill) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

namespace {

struct PngError {
    char message[256] = {0};
};

void png_error_fn(png_structp png, png_const_charp msg) {
    auto* err = static_cast<PngError*>(png_get_error_ptr(png));
    std::snprintf(err->message, sizeof(err->message), "%s", msg);
    png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

bool has_png_signature(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    unsigned char sig[8] = {0};
    in.read(reinterpret_cast<char*>(sig), 8);
    return in.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0;
}

// Decoded raster before grayscale reduction: channels in {1,2,3,4}, samples
// normalized to [0,1].
struct Raster {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> samples;
};

Raster decode_png(const std::filesystem::path& path, bool header_only) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("cannot open image: " + path.string());

    PngError err;
    Raster out;
    std::vector<png_byte> buffer;
    std::vector<png_bytep> rows;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(png ? &png : nullptr, nullptr, nullptr);
        std::fclose(fp);
        throw IoError("libpng initialization failed for " + path.string());
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw FormatError("corrupt PNG " + path.string() + ": " + err.message);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    if (!header_only) {
        const int color = png_get_color_type(png, info);
        const int depth = png_get_bit_depth(png, info);
        if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
        png_read_update_info(png, info);
        out.channels = png_get_channels(png, info);
        const int bits = png_get_bit_depth(png, info);
        const std::size_t rowbytes = png_get_rowbytes(png, info);
        buffer.resize(rowbytes * static_cast<std::size_t>(out.height));
        rows.resize(static_cast<std::size_t>(out.height));
        for (int y = 0; y < out.height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + rowbytes * y;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);

        const std::size_t count = static_cast<std::size_t>(out.width) * out.height * out.channels;
        out.samples.resize(count);
        if (bits == 8) {
            for (int y = 0; y < out.height; ++y) {
                for (std::size_t i = 0; i < static_cast<std::size_t>(out.width) * out.channels; ++i) {
                    out.samples[static_cast<std::size_t>(y) * out.width * out.channels + i] = rows[y][i] / 255.0f;
                }
            }
        } else if (bits == 16) {
            for (int y = 0; y < out.height; ++y) {
                for (std::size_t i = 0; i < static_cast<std::size_t>(out.width) * out.channels; ++i) {
                    const unsigned v = (static_cast<unsigned>(rows[y][2 * i]) << 8) | rows[y][2 * i + 1];
                    out.samples[static_cast<std::size_t>(y) * out.width * out.channels + i] = static_cast<float>(v / 65535.0);
                }
            }
        } else {
            png_destroy_read_struct(&png, &info, nullptr);
            std::fclose(fp);
            throw FormatError("unsupported PNG bit depth " + std::to_string(bits) + " in " + path.string());
        }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return out;
}

class PnmParser {
  public:
    PnmParser(std::string data, std::string name) : data_(std::move(data)), name_(std::move(name)) {}

    std::string token() {
        skip_space();
        std::string tok;
        while (pos_ < data_.size() && !std::isspace(static_cast<unsigned char>(data_[pos_])) && data_[pos_] != '#') {
            tok.push_back(data_[pos_++]);
        }
        if (tok.empty()) throw FormatError("truncated PNM header in " + name_);
        return tok;
    }

    long number() {
        const std::string tok = token();
        if (!std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
            throw FormatError("bad number '" + tok + "' in " + name_);
        }
        return std::stol(tok);
    }

    // Exactly one whitespace byte separates the header from binary payload.
    void skip_single_space() {
        if (pos_ >= data_.size() || !std::isspace(static_cast<unsigned char>(data_[pos_]))) {
            throw FormatError("malformed PNM header in " + name_);
        }
        ++pos_;
    }

    unsigned byte() {
        if (pos_ >= data_.size()) throw FormatError("truncated PNM payload in " + name_);
        return static_cast<unsigned char>(data_[pos_++]);
    }

  private:
    void skip_space() {
        while (pos_ < data_.size()) {
            if (data_[pos_] == '#') {
                while (pos_ < data_.size() && data_[pos_] != '\n') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(data_[pos_]))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::string data_;
    std::string name_;
    std::size_t pos_ = 0;
};

Raster decode_pnm(const std::filesystem::path& path, bool header_only) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image: " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    PnmParser p(std::move(data), path.string());
    const std::string magic = p.token();
    int channels = 0;
    bool binary = false;
    if (magic == "P2") channels = 1;
    else if (magic == "P3") channels = 3;
    else if (magic == "P5") channels = 1, binary = true;
    else if (magic == "P6") channels = 3, binary = true;
    else throw FormatError("unsupported image format '" + magic + "' in " + path.string());

    Raster out;
    out.width = static_cast<int>(p.number());
    out.height = static_cast<int>(p.number());
    const long maxval = p.number();
    if (out.width < 1 || out.height < 1) throw FormatError("empty image in " + path.string());
    if (maxval < 1 || maxval > 65535) throw FormatError("unsupported bit depth (maxval " + std::to_string(maxval) + ") in " + path.string());
    out.channels = channels;
    if (header_only) return out;

    const std::size_t count = static_cast<std::size_t>(out.width) * out.height * channels;
    out.samples.resize(count);
    if (binary) {
        p.skip_single_space();
        for (std::size_t i = 0; i < count; ++i) {
            unsigned v = p.byte();
            if (maxval > 255) v = (v << 8) | p.byte();
            if (v > static_cast<unsigned>(maxval)) throw FormatError("sample exceeds maxval in " + path.string());
            out.samples[i] = static_cast<float>(static_cast<double>(v) / maxval);
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            const long v = p.number();
            if (v > maxval) throw FormatError("sample exceeds maxval in " + path.string());
            out.samples[i] = static_cast<float>(static_cast<double>(v) / maxval);
        }
    }
    return out;
}

Raster decode_any(const std::filesystem::path& path, bool header_only) {
    if (!std::filesystem::exists(path)) throw IoError("image not found: " + path.string());
    if (has_png_signature(path)) return decode_png(path, header_only);
    return decode_pnm(path, header_only);
}

void write_png(const std::filesystem::path& path, int width, int height, int format, const void* data) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(width);
    img.height = static_cast<png_uint_32>(height);
    img.format = static_cast<png_uint_32>(format);
    if (!png_image_write_to_file(&img, path.c_str(), 0, data, 0, nullptr)) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw IoError("cannot write PNG " + path.string() + ": " + msg);
    }
}

}  // namespace

GrayImage load_image(const std::filesystem::path& path) {
    const Raster r = decode_any(path, false);
    GrayImage img(r.width, r.height);
    img.painting_id = path.stem().string();
    const std::size_t n = static_cast<std::size_t>(r.width) * r.height;
    for (std::size_t i = 0; i < n; ++i) {
        const float* s = r.samples.data() + i * r.channels;
        double v = 0.0, alpha = 1.0;
        switch (r.channels) {
            case 1: v = s[0]; break;
            case 2: v = s[0], alpha = s[1]; break;
            case 3: v = 0.299 * s[0] + 0.587 * s[1] + 0.114 * s[2]; break;
            case 4: v = 0.299 * s[0] + 0.587 * s[1] + 0.114 * s[2], alpha = s[3]; break;
            default: throw FormatError("unsupported channel count in " + path.string());
        }
        // Transparent regions read as white canvas.
        v = v * alpha + (1.0 - alpha);
        img.pixels[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    return img;
}

std::pair<int, int> image_dimensions(const std::filesystem::path& path) {
    const Raster r = decode_any(path, true);
    return {r.width, r.height};
}

void save_gray_png(const std::filesystem::path& path, const GrayImage& image) {
    std::vector<std::uint8_t> bytes(image.pixels.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image.pixels[i], 0.0f, 1.0f) * 255.0f));
    }
    write_png(path, image.width, image.height, PNG_FORMAT_GRAY, bytes.data());
}

void save_byte_png(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& bytes) {
    write_png(path, width, height, PNG_FORMAT_GRAY, bytes.data());
}

std::vector<std::uint8_t> load_byte_png(const std::filesystem::path& path, int& width, int& height) {
    const Raster r = decode_png(path, false);
    if (r.channels != 1) throw FormatError("expected a single-channel PNG: " + path.string());
    width = r.width;
    height = r.height;
    std::vector<std::uint8_t> bytes(r.samples.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = static_cast<std::uint8_t>(std::lround(r.samples[i] * 255.0f));
    return bytes;
}

void save_rgb_png(const std::filesystem::path& path, const RgbImage& image) {
    write_png(path, image.width, image.height, PNG_FORMAT_RGB, image.rgb.data());
}

}  // namespace brushtrace
