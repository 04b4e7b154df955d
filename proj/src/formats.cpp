// PPM / PGM / DMAP codecs and the on-disk dataset layout.

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hybridnet/datakit.hpp"
#include "hybridnet/errors.hpp"

namespace hybridnet {
namespace {

static_assert(std::endian::native == std::endian::little, "DMAP codec assumes a little-endian host");

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }

  void expect(std::string_view magic, const char* what) {
    if (bytes_.size() < pos_ + magic.size() ||
        std::memcmp(bytes_.data() + pos_, magic.data(), magic.size()) != 0) {
      throw FormatError(std::string("bad magic for ") + what, pos_);
    }
    pos_ += magic.size();
  }

  std::uint8_t u8() { return take(1)[0]; }

  std::uint32_t u32() {
    auto b = take(4);
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("truncated data: need " + std::to_string(n) + " more bytes", pos_);
    }
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  // Netpbm header integer: skips whitespace and '#' comments.
  std::size_t header_int() {
    for (;;) {
      if (pos_ >= bytes_.size()) throw FormatError("truncated netpbm header", pos_);
      const char ch = static_cast<char>(bytes_[pos_]);
      if (ch == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        ++pos_;
      } else {
        break;
      }
    }
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > (1u << 30)) throw FormatError("netpbm header value too large", start);
      ++pos_;
    }
    if (pos_ == start) throw FormatError("expected integer in netpbm header", start);
    return v;
  }

  void single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      throw FormatError("expected whitespace after netpbm header", pos_);
    }
    ++pos_;
  }

  void expect_end(const char* what) {
    if (pos_ != bytes_.size()) throw FormatError(std::string("trailing bytes after ") + what, pos_);
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void append(Bytes& out, std::string_view s) { out.insert(out.end(), s.begin(), s.end()); }

void append_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

struct NetpbmHeader {
  std::size_t width, height;
};

NetpbmHeader read_netpbm_header(Reader& r, std::string_view magic) {
  r.expect(magic, magic == "P6" ? "PPM" : "PGM");
  NetpbmHeader h{};
  h.width = r.header_int();
  h.height = r.header_int();
  const std::size_t maxval_at = r.offset();
  const std::size_t maxval = r.header_int();
  if (maxval != 255) throw FormatError("only maxval 255 is supported", maxval_at);
  r.single_whitespace();
  if (h.width == 0 || h.height == 0) throw FormatError("zero image dimension", maxval_at);
  return h;
}

}  // namespace

Bytes encode_ppm(const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) throw ShapeError("encode_ppm: expected 3xHxW, got " + shape_to_string(rgb.dims()));
  const std::size_t h = rgb.dim(1);
  const std::size_t w = rgb.dim(2);
  Bytes out;
  append(out, "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n");
  const auto d = rgb.data();
  for (std::size_t i = 0; i < h * w; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::clamp(d[c * h * w + i], 0.0, 1.0);
      out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    }
  }
  return out;
}

Tensor decode_ppm(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto hdr = read_netpbm_header(r, "P6");
  const std::size_t n = hdr.width * hdr.height;
  auto px = r.take(3 * n);
  r.expect_end("PPM raster");
  std::vector<double> data(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) data[c * n + i] = static_cast<double>(px[3 * i + c]) / 255.0;
  }
  return Tensor({3, hdr.height, hdr.width}, std::move(data));
}

Bytes encode_pgm(const LabelMap& labels) {
  Bytes out;
  append(out, "P5\n" + std::to_string(labels.width) + " " + std::to_string(labels.height) + "\n255\n");
  for (int l : labels.labels) {
    if (l < 0 || l > 255) throw DataError("encode_pgm: label " + std::to_string(l) + " does not fit in 8 bits");
    out.push_back(static_cast<std::uint8_t>(l));
  }
  return out;
}

LabelMap decode_pgm(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto hdr = read_netpbm_header(r, "P5");
  auto px = r.take(hdr.width * hdr.height);
  r.expect_end("PGM raster");
  return LabelMap(hdr.height, hdr.width, std::vector<int>(px.begin(), px.end()));
}

Bytes encode_dmap(const Tensor& depth) {
  if (depth.rank() != 3 || depth.dim(0) != 1) {
    throw ShapeError("encode_dmap: expected 1xHxW, got " + shape_to_string(depth.dims()));
  }
  Bytes out;
  append(out, "DMAP");
  out.push_back(1);
  append_u32(out, static_cast<std::uint32_t>(depth.dim(1)));
  append_u32(out, static_cast<std::uint32_t>(depth.dim(2)));
  for (double v : depth.data()) {
    append_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

Tensor decode_dmap(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.expect("DMAP", "DMAP");
  const std::size_t version_at = r.offset();
  const auto version = r.u8();
  if (version != 1) throw FormatError("unsupported DMAP version " + std::to_string(version), version_at);
  const std::uint32_t h = r.u32();
  const std::uint32_t w = r.u32();
  const std::size_t n = static_cast<std::size_t>(h) * w;
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t at = r.offset();
    const float f = std::bit_cast<float>(r.u32());
    if (!std::isfinite(f)) throw FormatError("non-finite depth value", at);
    data[i] = static_cast<double>(f);
  }
  r.expect_end("DMAP raster");
  return Tensor({1, h, w}, std::move(data));
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  Bytes out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return out;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void write_dataset(const std::filesystem::path& dir, std::span<const SceneSample> samples) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  std::string manifest;
  for (const auto& s : samples) {
    if (s.id.empty() || s.id.find_first_of("/\\\n") != std::string::npos) {
      throw DataError("sample id '" + s.id + "' is not a valid file stem");
    }
    write_file(dir / (s.id + ".ppm"), encode_ppm(s.rgb));
    write_file(dir / (s.id + "_labels.pgm"), encode_pgm(s.labels_gt));
    write_file(dir / (s.id + "_depth.dmap"), encode_dmap(s.depth_gt));
    manifest += s.id + "\n";
  }
  write_file(dir / kManifestName, Bytes(manifest.begin(), manifest.end()));
}

std::vector<std::string> read_manifest(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("dataset directory '" + dir.string() + "' does not exist");
  const auto bytes = read_file(dir / kManifestName);
  std::vector<std::string> ids;
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

SceneSample load_sample(const std::filesystem::path& dir, const std::string& id) {
  SceneSample s;
  s.id = id;
  s.rgb = decode_ppm(read_file(dir / (id + ".ppm")));
  s.labels_gt = decode_pgm(read_file(dir / (id + "_labels.pgm")));
  s.depth_gt = decode_dmap(read_file(dir / (id + "_depth.dmap")));
  if (s.rgb.dim(1) != s.labels_gt.height || s.rgb.dim(2) != s.labels_gt.width ||
      s.depth_gt.dim(1) != s.labels_gt.height || s.depth_gt.dim(2) != s.labels_gt.width) {
    throw DataError("sample '" + id + "': rasters have different sizes");
  }
  return s;
}

std::vector<SceneSample> read_dataset(const std::filesystem::path& dir) {
  std::vector<SceneSample> out;
  for (const auto& id : read_manifest(dir)) out.push_back(load_sample(dir, id));
  return out;
}

}  // namespace hybridnet
