#include "mfuse/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace mfuse {
namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

std::string lower_ext(const std::string& path) {
  const size_t dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext;
}

uint8_t quantize(float v) {
  const float q = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f);
  return static_cast<uint8_t>(q);
}

LoadedImage load_png(const std::string& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    fail(path, image.message);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    fail(path, image.message);
  }
  LoadedImage out;
  out.is_color = color;
  const int w = static_cast<int>(image.width);
  const int h = static_cast<int>(image.height);
  if (color) {
    out.rgb = RgbImage(w, h);
    for (size_t i = 0; i < out.rgb.pix.size(); ++i) {
      out.rgb.pix[i] = buf[i] / 255.0f;
    }
  } else {
    out.gray = GrayImage(w, h);
    for (size_t i = 0; i < out.gray.pix.size(); ++i) {
      out.gray.pix[i] = buf[i] / 255.0f;
    }
  }
  return out;
}

/// PNM token reader skipping whitespace and '#' comments.
int next_pnm_int(std::ifstream& in, const std::string& path) {
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
    } else if (!std::isspace(c)) {
      break;
    }
  }
  if (c == EOF) fail(path, "truncated header");
  int v = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) fail(path, "malformed header");
  return v;
}

LoadedImage load_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  char p = 0, kind = 0;
  in.get(p);
  in.get(kind);
  if (p != 'P' || (kind != '2' && kind != '3' && kind != '5' && kind != '6')) {
    fail(path, "unsupported PNM magic");
  }
  const bool color = kind == '3' || kind == '6';
  const bool binary = kind == '5' || kind == '6';
  const int w = next_pnm_int(in, path);
  const int h = next_pnm_int(in, path);
  const int maxval = next_pnm_int(in, path);
  if (w < 1 || h < 1 || maxval < 1 || maxval > 65535) {
    fail(path, "bad PNM dimensions");
  }
  const size_t count = static_cast<size_t>(w) * h * (color ? 3 : 1);
  std::vector<float> vals(count);
  // divide rather than multiply by a reciprocal so a byte that came from the
  // writer maps back to exactly round(v*maxval)/maxval
  const float scale = static_cast<float>(maxval);
  if (binary) {
    // header terminates with exactly one whitespace byte, already consumed
    // by the maxval read
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<uint8_t> raw(count * bytes);
    in.read(reinterpret_cast<char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(in.gcount()) != raw.size()) {
      fail(path, "truncated pixel data");
    }
    for (size_t i = 0; i < count; ++i) {
      const int v = bytes == 2 ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
      vals[i] = v / scale;
    }
  } else {
    for (size_t i = 0; i < count; ++i) {
      vals[i] = next_pnm_int(in, path) / scale;
    }
  }
  LoadedImage out;
  out.is_color = color;
  if (color) {
    out.rgb = RgbImage(w, h);
    out.rgb.pix = std::move(vals);
  } else {
    out.gray = GrayImage(w, h);
    out.gray.pix = std::move(vals);
  }
  return out;
}

void save_png(const std::string& path, const uint8_t* buf, int w, int h,
              bool color) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buf, 0, nullptr)) {
    fail(path, image.message);
  }
}

void save_pnm(const std::string& path, const uint8_t* buf, int w, int h,
              bool color) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << (color ? "P6" : "P5") << "\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(buf),
            static_cast<std::streamsize>(static_cast<size_t>(w) * h *
                                         (color ? 3 : 1)));
  if (!out) fail(path, "write failed");
}

void dispatch_save(const std::string& path, const uint8_t* buf, int w, int h,
                   bool color) {
  const std::string ext = lower_ext(path);
  if (ext == "png") {
    save_png(path, buf, w, h, color);
  } else if ((ext == "pgm" && !color) || (ext == "ppm" && color)) {
    save_pnm(path, buf, w, h, color);
  } else {
    fail(path, "unsupported output extension ." + ext);
  }
}

}  // namespace

LoadedImage load_image(const std::string& path) {
  const std::string ext = lower_ext(path);
  if (ext == "png") return load_png(path);
  if (ext == "pgm" || ext == "ppm") return load_pnm(path);
  fail(path, "unsupported image extension ." + ext);
}

GrayImage load_gray(const std::string& path) {
  return load_image(path).to_gray();
}

void save_image(const std::string& path, const GrayImage& img) {
  std::vector<uint8_t> buf(img.pix.size());
  for (size_t i = 0; i < buf.size(); ++i) buf[i] = quantize(img.pix[i]);
  dispatch_save(path, buf.data(), img.width, img.height, false);
}

void save_image(const std::string& path, const RgbImage& img) {
  std::vector<uint8_t> buf(img.pix.size());
  for (size_t i = 0; i < buf.size(); ++i) buf[i] = quantize(img.pix[i]);
  dispatch_save(path, buf.data(), img.width, img.height, true);
}

}  // namespace mfuse
