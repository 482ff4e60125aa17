#include "iclkit/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "iclkit/errors.hpp"

namespace iclkit::plot {

namespace {

void append_be32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

void append_chunk(std::string& out, const char type[4], const std::string& data) {
  append_be32(out, static_cast<std::uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  out += body;
  std::uint32_t crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(body.data()),
              static_cast<uInt>(body.size()));
  append_be32(out, crc);
}

struct Canvas {
  int w, h;
  std::vector<unsigned char> rgb;

  Canvas(int w, int h) : w(w), h(h), rgb(static_cast<std::size_t>(w) * h * 3, 255) {}

  void set(int x, int y, unsigned char r, unsigned char g, unsigned char b) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    std::size_t at = (static_cast<std::size_t>(y) * w + x) * 3;
    rgb[at] = r;
    rgb[at + 1] = g;
    rgb[at + 2] = b;
  }

  void line(int x0, int y0, int x1, int y1, unsigned char r, unsigned char g,
            unsigned char b) {
    int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      set(x0, y0, r, g, b);
      if (x0 == x1 && y0 == y1) break;
      int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void fill_rect(int x0, int y0, int x1, int y1, unsigned char r, unsigned char g,
                 unsigned char b) {
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) set(x, y, r, g, b);
  }
};

// 5x7 bitmap glyphs; bit 4 is the leftmost column.
struct Glyph {
  char ch;
  unsigned char rows[7];
};

constexpr Glyph kFont[] = {
    {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}},
    {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
    {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}},
    {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
    {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}},
    {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
    {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}},
    {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}},
    {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
    {'a', {0x00, 0x00, 0x0e, 0x01, 0x0f, 0x11, 0x0f}},
    {'b', {0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x1e}},
    {'c', {0x00, 0x00, 0x0e, 0x10, 0x10, 0x11, 0x0e}},
    {'d', {0x01, 0x01, 0x0d, 0x13, 0x11, 0x11, 0x0f}},
    {'e', {0x00, 0x00, 0x0e, 0x11, 0x1f, 0x10, 0x0e}},
    {'f', {0x06, 0x09, 0x08, 0x1c, 0x08, 0x08, 0x08}},
    {'g', {0x00, 0x0f, 0x11, 0x11, 0x0f, 0x01, 0x0e}},
    {'h', {0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x11}},
    {'i', {0x04, 0x00, 0x0c, 0x04, 0x04, 0x04, 0x0e}},
    {'j', {0x02, 0x00, 0x06, 0x02, 0x02, 0x12, 0x0c}},
    {'k', {0x10, 0x10, 0x12, 0x14, 0x18, 0x14, 0x12}},
    {'l', {0x0c, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e}},
    {'m', {0x00, 0x00, 0x1a, 0x15, 0x15, 0x15, 0x15}},
    {'n', {0x00, 0x00, 0x16, 0x19, 0x11, 0x11, 0x11}},
    {'o', {0x00, 0x00, 0x0e, 0x11, 0x11, 0x11, 0x0e}},
    {'p', {0x00, 0x00, 0x1e, 0x11, 0x1e, 0x10, 0x10}},
    {'q', {0x00, 0x00, 0x0f, 0x11, 0x0f, 0x01, 0x01}},
    {'r', {0x00, 0x00, 0x16, 0x19, 0x10, 0x10, 0x10}},
    {'s', {0x00, 0x00, 0x0f, 0x10, 0x0e, 0x01, 0x1e}},
    {'t', {0x08, 0x08, 0x1c, 0x08, 0x08, 0x09, 0x06}},
    {'u', {0x00, 0x00, 0x11, 0x11, 0x11, 0x13, 0x0d}},
    {'v', {0x00, 0x00, 0x11, 0x11, 0x11, 0x0a, 0x04}},
    {'w', {0x00, 0x00, 0x11, 0x15, 0x15, 0x15, 0x0a}},
    {'x', {0x00, 0x00, 0x11, 0x0a, 0x04, 0x0a, 0x11}},
    {'y', {0x00, 0x00, 0x11, 0x11, 0x0f, 0x01, 0x0e}},
    {'z', {0x00, 0x00, 0x1f, 0x02, 0x04, 0x08, 0x1f}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c}},
    {',', {0x00, 0x00, 0x00, 0x00, 0x0c, 0x04, 0x08}},
    {'-', {0x00, 0x00, 0x00, 0x0e, 0x00, 0x00, 0x00}},
    {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1f}},
    {':', {0x00, 0x0c, 0x0c, 0x00, 0x0c, 0x0c, 0x00}},
    {'+', {0x00, 0x04, 0x04, 0x1f, 0x04, 0x04, 0x00}},
    {'/', {0x01, 0x02, 0x02, 0x04, 0x08, 0x08, 0x10}},
    {'%', {0x19, 0x19, 0x02, 0x04, 0x08, 0x13, 0x13}},
    {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
    {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
    {'=', {0x00, 0x00, 0x1f, 0x00, 0x1f, 0x00, 0x00}},
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
};

const unsigned char* glyph_rows(char c) {
  if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  for (const auto& g : kFont)
    if (g.ch == c) return g.rows;
  return kFont[std::size(kFont) - 1].rows;  // unknown -> blank
}

void draw_text(Canvas& cv, int x, int y, const std::string& text, unsigned char r = 40,
               unsigned char g = 40, unsigned char b = 40) {
  for (char c : text) {
    const unsigned char* rows = glyph_rows(c);
    for (int ry = 0; ry < 7; ++ry)
      for (int rx = 0; rx < 5; ++rx)
        if (rows[ry] & (1 << (4 - rx))) cv.set(x + rx, y + ry, r, g, b);
    x += 6;
  }
}

int text_width(const std::string& text) { return 6 * static_cast<int>(text.size()); }

std::string format_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

constexpr unsigned char kPalette[][3] = {
    {31, 119, 180}, {255, 127, 14}, {44, 160, 44},   {214, 39, 40},
    {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {127, 127, 127},
};

}  // namespace

void write_png_rgb(const std::string& path, int width, int height,
                   const std::vector<unsigned char>& rgb) {
  require(static_cast<std::size_t>(width) * height * 3 == rgb.size(), ErrorKind::contract,
          "pixel buffer size does not match dimensions");
  // raw scanlines, filter byte 0 per row
  std::string raw;
  raw.reserve(rgb.size() + height);
  for (int y = 0; y < height; ++y) {
    raw.push_back('\0');
    raw.append(reinterpret_cast<const char*>(rgb.data()) +
                   static_cast<std::size_t>(y) * width * 3,
               static_cast<std::size_t>(width) * 3);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::string compressed(bound, '\0');
  int rc = compress2(reinterpret_cast<Bytef*>(compressed.data()), &bound,
                     reinterpret_cast<const Bytef*>(raw.data()),
                     static_cast<uLong>(raw.size()), 6);
  require(rc == Z_OK, ErrorKind::io, "zlib compression failed");
  compressed.resize(bound);

  std::string png("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  append_be32(ihdr, static_cast<std::uint32_t>(width));
  append_be32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // truecolor
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // no interlace
  append_chunk(png, "IHDR", ihdr);
  append_chunk(png, "IDAT", compressed);
  append_chunk(png, "IEND", "");

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path);
  out.write(png.data(), static_cast<std::streamsize>(png.size()));
  require(static_cast<bool>(out), ErrorKind::io, "short write to " + path);
}

void write_line_chart_png(const std::string& path, const ChartSpec& spec,
                          const std::vector<Series>& series) {
  require(!series.empty(), ErrorKind::contract, "chart needs at least one series");
  const int w = spec.width, h = spec.height;
  const int ml = 64, mr = 24, mt = 28, mb = 44;
  Canvas cv(w, h);

  double x_min = 1e300, x_max = -1e300, y_min = 1e300, y_max = -1e300;
  for (const auto& s : series) {
    require(s.xs.size() == s.ys.size() && !s.xs.empty(), ErrorKind::contract,
            "series '" + s.name + "' is empty or ragged");
    for (double v : s.xs) {
      x_min = std::min(x_min, v);
      x_max = std::max(x_max, v);
    }
    for (double v : s.ys) {
      y_min = std::min(y_min, v);
      y_max = std::max(y_max, v);
    }
  }
  if (spec.y_min) y_min = *spec.y_min;
  if (spec.y_max) y_max = *spec.y_max;
  if (x_max == x_min) x_max = x_min + 1;
  if (y_max == y_min) y_max = y_min + 1;
  double y_pad = 0.05 * (y_max - y_min);
  if (!spec.y_min) y_min -= y_pad;
  if (!spec.y_max) y_max += y_pad;

  auto px = [&](double x) {
    return ml + static_cast<int>(std::lround((x - x_min) / (x_max - x_min) *
                                             (w - ml - mr - 1)));
  };
  auto py = [&](double y) {
    return h - mb - static_cast<int>(std::lround((y - y_min) / (y_max - y_min) *
                                                 (h - mt - mb - 1)));
  };

  // frame and gridlines
  cv.fill_rect(ml, mt, w - mr, h - mb, 252, 252, 252);
  for (int i = 0; i <= 4; ++i) {
    double y = y_min + i * (y_max - y_min) / 4;
    int yy = py(y);
    cv.line(ml, yy, w - mr, yy, 225, 225, 225);
    std::string label = format_tick(y);
    draw_text(cv, ml - 6 - text_width(label), yy - 3, label);
  }
  int x_ticks = std::min(10, static_cast<int>(std::lround(x_max - x_min)));
  x_ticks = std::max(1, x_ticks);
  for (int i = 0; i <= x_ticks; ++i) {
    double x = x_min + i * (x_max - x_min) / x_ticks;
    int xx = px(x);
    cv.line(xx, h - mb, xx, h - mb + 3, 120, 120, 120);
    std::string label = format_tick(x);
    draw_text(cv, xx - text_width(label) / 2, h - mb + 7, label);
  }
  cv.line(ml, mt, ml, h - mb, 120, 120, 120);
  cv.line(ml, h - mb, w - mr, h - mb, 120, 120, 120);

  draw_text(cv, ml + ((w - ml - mr) - text_width(spec.title)) / 2, 8, spec.title);
  draw_text(cv, w - mr - text_width(spec.x_label), h - 14, spec.x_label);
  draw_text(cv, 6, mt - 14, spec.y_label);

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& pal = kPalette[si % std::size(kPalette)];
    const auto& s = series[si];
    for (std::size_t i = 0; i + 1 < s.xs.size(); ++i)
      cv.line(px(s.xs[i]), py(s.ys[i]), px(s.xs[i + 1]), py(s.ys[i + 1]), pal[0], pal[1],
              pal[2]);
    for (std::size_t i = 0; i < s.xs.size(); ++i)
      cv.fill_rect(px(s.xs[i]) - 2, py(s.ys[i]) - 2, px(s.xs[i]) + 2, py(s.ys[i]) + 2,
                   pal[0], pal[1], pal[2]);
    int ly = mt + 6 + 12 * static_cast<int>(si);
    int lx = w - mr - 110;
    cv.line(lx, ly + 3, lx + 14, ly + 3, pal[0], pal[1], pal[2]);
    draw_text(cv, lx + 18, ly, s.name);
  }

  write_png_rgb(path, w, h, cv.rgb);
}

}  // namespace iclkit::plot
