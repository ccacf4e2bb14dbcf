#ifndef EARBIO_IMAGE_IO_HPP
#define EARBIO_IMAGE_IO_HPP

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

#include "earbio/image.hpp"

namespace earbio {

namespace fs = std::filesystem;

enum class ImageFormat { Png, Jpeg, Unknown };

namespace detail {

inline ImageFormat sniff_format(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::UnreadableFile, path.string());
    std::array<unsigned char, 8> magic{};
    in.read(reinterpret_cast<char*>(magic.data()), magic.size());
    const auto n = in.gcount();
    static constexpr std::array<unsigned char, 8> png_sig{0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    if (n == 8 && magic == png_sig) return ImageFormat::Png;
    if (n >= 3 && magic[0] == 0xFF && magic[1] == 0xD8 && magic[2] == 0xFF) return ImageFormat::Jpeg;
    return ImageFormat::Unknown;
}

inline ImageFormat format_from_extension(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") return ImageFormat::Png;
    if (ext == ".jpg" || ext == ".jpeg") return ImageFormat::Jpeg;
    return ImageFormat::Unknown;
}

inline std::uint8_t quantize(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline void warn_alpha(const fs::path& path) {
    std::cerr << "warning: discarding alpha channel of " << path.string() << '\n';
}

inline Image load_png(const fs::path& path) {
    png_image pi{};
    pi.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&pi, path.string().c_str())) {
        throw Error(Errc::CorruptImage, path.string() + ": " + pi.message);
    }
    const bool color = (pi.format & PNG_FORMAT_FLAG_COLOR) != 0;
    const bool alpha = (pi.format & PNG_FORMAT_FLAG_ALPHA) != 0;
    if (alpha) warn_alpha(path);
    // Read with alpha when present so the colour values are not composited.
    pi.format = color ? (alpha ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB)
                      : (alpha ? PNG_FORMAT_GA : PNG_FORMAT_GRAY);
    const int in_ch = static_cast<int>(PNG_IMAGE_PIXEL_CHANNELS(pi.format));
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(pi));
    if (!png_image_finish_read(&pi, nullptr, buf.data(), 0, nullptr)) {
        std::string msg = pi.message;
        png_image_free(&pi);
        throw Error(Errc::CorruptImage, path.string() + ": " + msg);
    }
    const int w = static_cast<int>(pi.width), h = static_cast<int>(pi.height);
    const int out_ch = color ? 3 : 1;
    Image img(w, h, out_ch);
    auto dst = img.data();
    const std::size_t px = static_cast<std::size_t>(w) * h;
    for (std::size_t i = 0; i < px; ++i)
        for (int c = 0; c < out_ch; ++c) dst[i * out_ch + c] = buf[i * in_ch + c] / 255.0;
    return img;
}

inline void save_png(const Image& img, const fs::path& path) {
    png_image pi{};
    pi.version = PNG_IMAGE_VERSION;
    pi.width = static_cast<png_uint_32>(img.width());
    pi.height = static_cast<png_uint_32>(img.height());
    pi.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<png_byte> buf(img.size());
    std::transform(img.data().begin(), img.data().end(), buf.begin(), quantize);
    if (!png_image_write_to_file(&pi, path.string().c_str(), 0, buf.data(), 0, nullptr)) {
        std::string msg = pi.message;
        png_image_free(&pi);
        throw Error(Errc::IoError, path.string() + ": " + msg);
    }
}

struct JpegErrorMgr {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// No C++ objects with non-trivial destructors may be live between setjmp and
// longjmp here, so the decoded buffer is owned by the caller.
inline bool decode_jpeg(std::FILE* f, std::vector<unsigned char>& buf, int& w, int& h, int& ch,
                        std::string& err_msg) {
    jpeg_decompress_struct cinfo{};
    JpegErrorMgr err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        err_msg = err.message;
        jpeg_destroy_decompress(&cinfo);
        return false;
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f);
    jpeg_read_header(&cinfo, TRUE);
    if (cinfo.num_components != 1) cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    w = static_cast<int>(cinfo.output_width);
    h = static_cast<int>(cinfo.output_height);
    ch = cinfo.output_components;
    buf.resize(static_cast<std::size_t>(w) * h * ch);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = buf.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * ch;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return true;
}

inline Image load_jpeg(const fs::path& path) {
    FilePtr f(std::fopen(path.string().c_str(), "rb"));
    if (!f) throw Error(Errc::UnreadableFile, path.string());
    std::vector<unsigned char> buf;
    int w = 0, h = 0, ch = 0;
    std::string msg;
    if (!decode_jpeg(f.get(), buf, w, h, ch, msg)) throw Error(Errc::CorruptImage, path.string() + ": " + msg);
    if (ch != 1 && ch != 3) throw Error(Errc::UnsupportedFormat, path.string() + ": unsupported JPEG channel count");
    std::vector<double> data(buf.size());
    std::transform(buf.begin(), buf.end(), data.begin(), [](unsigned char v) { return v / 255.0; });
    return Image(w, h, ch, std::move(data));
}

inline bool encode_jpeg(std::FILE* f, const unsigned char* buf, int w, int h, int ch, std::string& err_msg) {
    jpeg_compress_struct cinfo{};
    JpegErrorMgr err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        err_msg = err.message;
        jpeg_destroy_compress(&cinfo);
        return false;
    }
    jpeg_create_compress(&cinfo);
    jpeg_stdio_dest(&cinfo, f);
    cinfo.image_width = static_cast<JDIMENSION>(w);
    cinfo.image_height = static_cast<JDIMENSION>(h);
    cinfo.input_components = ch;
    cinfo.in_color_space = ch == 3 ? JCS_RGB : JCS_GRAYSCALE;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, 95, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        auto* row = const_cast<JSAMPROW>(buf + static_cast<std::size_t>(cinfo.next_scanline) * w * ch);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
    return true;
}

inline void save_jpeg(const Image& img, const fs::path& path) {
    FilePtr f(std::fopen(path.string().c_str(), "wb"));
    if (!f) throw Error(Errc::IoError, "cannot open " + path.string() + " for writing");
    std::vector<unsigned char> buf(img.size());
    std::transform(img.data().begin(), img.data().end(), buf.begin(), quantize);
    std::string msg;
    if (!encode_jpeg(f.get(), buf.data(), img.width(), img.height(), img.channels(), msg)) {
        throw Error(Errc::IoError, path.string() + ": " + msg);
    }
}

}  // namespace detail

/// Decodes a PNG or JPEG; 8-bit value v maps to v / 255. Alpha is dropped.
inline Image load_image(const fs::path& path) {
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) throw Error(Errc::FileNotFound, path.string());
    switch (detail::sniff_format(path)) {
        case ImageFormat::Png: return detail::load_png(path);
        case ImageFormat::Jpeg: return detail::load_jpeg(path);
        case ImageFormat::Unknown: break;
    }
    throw Error(Errc::UnsupportedFormat, path.string());
}

/// Encodes by extension (.png, .jpg, .jpeg). Values are rounded to the nearest 8-bit level.
inline void save_image(const Image& img, const fs::path& path) {
    if (img.empty()) throw Error(Errc::InvalidArgument, "cannot save an empty image");
    const auto parent = path.parent_path();
    std::error_code ec;
    if (!parent.empty() && !fs::is_directory(parent, ec)) {
        throw Error(Errc::IoError, "parent directory does not exist: " + parent.string());
    }
    switch (detail::format_from_extension(path)) {
        case ImageFormat::Png: detail::save_png(img, path); return;
        case ImageFormat::Jpeg: detail::save_jpeg(img, path); return;
        case ImageFormat::Unknown: break;
    }
    throw Error(Errc::UnsupportedFormat, path.string());
}

/// Width and height from the file header, without decoding pixels (PNG only;
/// JPEG falls back to a full decode).
inline std::pair<int, int> image_dimensions(const fs::path& path) {
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) throw Error(Errc::FileNotFound, path.string());
    switch (detail::sniff_format(path)) {
        case ImageFormat::Png: {
            png_image pi{};
            pi.version = PNG_IMAGE_VERSION;
            if (!png_image_begin_read_from_file(&pi, path.string().c_str())) {
                throw Error(Errc::CorruptImage, path.string() + ": " + pi.message);
            }
            std::pair<int, int> dims{static_cast<int>(pi.width), static_cast<int>(pi.height)};
            png_image_free(&pi);
            return dims;
        }
        case ImageFormat::Jpeg: {
            Image img = detail::load_jpeg(path);
            return {img.width(), img.height()};
        }
        case ImageFormat::Unknown: break;
    }
    throw Error(Errc::UnsupportedFormat, path.string());
}

inline bool has_image_extension(const fs::path& path) {
    return detail::format_from_extension(path) != ImageFormat::Unknown;
}

}  // namespace earbio

#endif
