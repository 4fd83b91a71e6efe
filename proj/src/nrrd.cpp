#include "voxshape/nrrd.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "voxshape/error.hpp"

namespace voxshape {
namespace {

static_assert(std::endian::native == std::endian::little,
              "payload conversion assumes a little-endian host");

enum class ScalarType { uint8, int16, uint16, float32, float64 };

std::size_t type_size(ScalarType t) {
  switch (t) {
    case ScalarType::uint8: return 1;
    case ScalarType::int16:
    case ScalarType::uint16: return 2;
    case ScalarType::float32: return 4;
    case ScalarType::float64: return 8;
  }
  return 0;
}

ScalarType parse_type(const std::string& s) {
  static const std::map<std::string, ScalarType> names = {
      {"uchar", ScalarType::uint8},          {"unsigned char", ScalarType::uint8},
      {"uint8", ScalarType::uint8},          {"uint8_t", ScalarType::uint8},
      {"short", ScalarType::int16},          {"short int", ScalarType::int16},
      {"signed short", ScalarType::int16},   {"signed short int", ScalarType::int16},
      {"int16", ScalarType::int16},          {"int16_t", ScalarType::int16},
      {"ushort", ScalarType::uint16},        {"unsigned short", ScalarType::uint16},
      {"unsigned short int", ScalarType::uint16}, {"uint16", ScalarType::uint16},
      {"uint16_t", ScalarType::uint16},      {"float", ScalarType::float32},
      {"double", ScalarType::float64},
  };
  auto it = names.find(s);
  if (it == names.end()) throw UnsupportedFormatError("nrrd: unsupported type '" + s + "'");
  return it->second;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

double parse_double(const std::string& tok, const std::string& field) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError("nrrd: malformed value '" + tok + "' in field '" + field + "'");
  }
}

// Parses "(a,b,c)" vectors; returns nullopt for "none".
std::vector<std::optional<Vec3>> parse_vectors(const std::string& value, const std::string& field) {
  std::vector<std::optional<Vec3>> out;
  std::size_t pos = 0;
  while (pos < value.size()) {
    while (pos < value.size() && std::isspace(static_cast<unsigned char>(value[pos]))) ++pos;
    if (pos >= value.size()) break;
    if (value.compare(pos, 4, "none") == 0) {
      out.emplace_back(std::nullopt);
      pos += 4;
      continue;
    }
    if (value[pos] != '(') throw ParseError("nrrd: malformed vector in field '" + field + "'");
    const auto close = value.find(')', pos);
    if (close == std::string::npos)
      throw ParseError("nrrd: unterminated vector in field '" + field + "'");
    std::stringstream inner(value.substr(pos + 1, close - pos - 1));
    std::string tok;
    std::vector<double> comps;
    while (std::getline(inner, tok, ',')) comps.push_back(parse_double(trim(tok), field));
    if (comps.size() != 3)
      throw ParseError("nrrd: field '" + field + "' needs 3-component vectors");
    out.emplace_back(Vec3{comps[0], comps[1], comps[2]});
    pos = close + 1;
  }
  return out;
}

std::string gunzip(const char* data, std::size_t size) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 32) != Z_OK) throw IoError("nrrd: zlib init failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data));
  zs.avail_in = static_cast<uInt>(size);
  std::string out;
  char buffer[1 << 16];
  int ret = Z_OK;
  while (ret != Z_STREAM_END) {
    zs.next_out = reinterpret_cast<Bytef*>(buffer);
    zs.avail_out = sizeof(buffer);
    ret = inflate(&zs, Z_NO_FLUSH);
    if (ret != Z_OK && ret != Z_STREAM_END) {
      inflateEnd(&zs);
      throw ParseError("nrrd: corrupt gzip payload");
    }
    out.append(buffer, sizeof(buffer) - zs.avail_out);
    if (ret == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw ParseError("nrrd: truncated gzip payload");
    }
  }
  inflateEnd(&zs);
  return out;
}

std::string gzip(const std::string& raw) {
  z_stream zs{};
  // Fixed level/strategy and no timestamp in the gzip header keep output stable.
  if (deflateInit2(&zs, 6, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK)
    throw IoError("nrrd: zlib init failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(raw.data()));
  zs.avail_in = static_cast<uInt>(raw.size());
  std::string out;
  char buffer[1 << 16];
  int ret = Z_OK;
  do {
    zs.next_out = reinterpret_cast<Bytef*>(buffer);
    zs.avail_out = sizeof(buffer);
    ret = deflate(&zs, Z_FINISH);
    out.append(buffer, sizeof(buffer) - zs.avail_out);
  } while (ret == Z_OK);
  deflateEnd(&zs);
  if (ret != Z_STREAM_END) throw IoError("nrrd: gzip compression failed");
  return out;
}

template <typename T>
T load(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

VoxelGrid parse_nrrd(const std::string& bytes, const NrrdReadOptions& options) {
  std::size_t pos = 0;
  auto next_line = [&](std::string& line) {
    if (pos >= bytes.size()) return false;
    auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) nl = bytes.size();
    line = bytes.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = std::min(nl + 1, bytes.size());
    return true;
  };

  std::string line;
  if (!next_line(line) || line.rfind("NRRD000", 0) != 0)
    throw ParseError("nrrd: missing NRRD magic");

  std::map<std::string, std::string> fields;
  bool terminated = false;
  while (next_line(line)) {
    if (line.empty()) {
      terminated = true;
      break;
    }
    if (line[0] == '#') continue;
    if (line.find(":=") != std::string::npos) continue;  // key/value pairs are ignored
    const auto colon = line.find(": ");
    if (colon == std::string::npos) throw ParseError("nrrd: malformed header line '" + line + "'");
    fields[lower(trim(line.substr(0, colon)))] = trim(line.substr(colon + 2));
  }
  if (!terminated) throw ParseError("nrrd: header not terminated by a blank line");

  auto require = [&](const std::string& key) -> const std::string& {
    auto it = fields.find(key);
    if (it == fields.end()) throw ParseError("nrrd: missing required field '" + key + "'");
    return it->second;
  };

  if (fields.count("data file"))
    throw UnsupportedFormatError("nrrd: detached data files are unsupported");

  const std::string& dim_str = require("dimension");
  if (trim(dim_str) != "3") {
    (void)parse_double(dim_str, "dimension");
    throw ParseError("nrrd: unsupported dimension " + dim_str + " in field 'dimension'");
  }

  const ScalarType type = parse_type(lower(require("type")));

  Geometry geometry;
  {
    std::stringstream ss(require("sizes"));
    std::string tok;
    int a = 0;
    while (ss >> tok) {
      if (a >= 3) throw ParseError("nrrd: field 'sizes' has more than 3 entries");
      const double v = parse_double(tok, "sizes");
      if (v < 1 || v != std::floor(v)) throw ParseError("nrrd: invalid entry in field 'sizes'");
      geometry.dims[a++] = static_cast<std::int64_t>(v);
    }
    if (a != 3) throw ParseError("nrrd: field 'sizes' needs 3 entries");
  }

  const std::string encoding = lower(require("encoding"));
  if (encoding != "raw" && encoding != "gzip" && encoding != "gz")
    throw UnsupportedFormatError("nrrd: unsupported encoding '" + encoding + "'");

  if (type_size(type) > 1) {
    auto it = fields.find("endian");
    if (it == fields.end()) throw ParseError("nrrd: missing required field 'endian'");
    const std::string endian = lower(it->second);
    if (endian == "big") throw UnsupportedFormatError("nrrd: big-endian payloads are unsupported");
    if (endian != "little") throw ParseError("nrrd: malformed value in field 'endian'");
  }

  if (auto it = fields.find("space directions"); it != fields.end()) {
    auto dirs = parse_vectors(it->second, "space directions");
    if (dirs.size() != 3) throw ParseError("nrrd: field 'space directions' needs 3 vectors");
    for (int a = 0; a < 3; ++a) {
      if (!dirs[a]) throw ParseError("nrrd: 'none' axis in field 'space directions'");
      const auto& d = *dirs[a];
      geometry.spacing[a] = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    }
  } else if (auto sp = fields.find("spacings"); sp != fields.end()) {
    std::stringstream ss(sp->second);
    std::string tok;
    for (int a = 0; a < 3; ++a) {
      if (!(ss >> tok)) throw ParseError("nrrd: field 'spacings' needs 3 entries");
      geometry.spacing[a] = parse_double(tok, "spacings");
    }
  }
  if (auto it = fields.find("space origin"); it != fields.end()) {
    auto o = parse_vectors(it->second, "space origin");
    if (o.size() != 1 || !o[0]) throw ParseError("nrrd: field 'space origin' needs one vector");
    geometry.origin = *o[0];
  }
  try {
    geometry.validate();
  } catch (const ArgumentError& e) {
    throw ParseError(std::string("nrrd: invalid geometry: ") + e.what());
  }

  std::string payload;
  if (encoding == "raw") {
    payload = bytes.substr(pos);
  } else {
    payload = gunzip(bytes.data() + pos, bytes.size() - pos);
  }
  const std::size_t n = geometry.voxel_count();
  const std::size_t width = type_size(type);
  if (payload.size() < n * width)
    throw ParseError("nrrd: payload holds " + std::to_string(payload.size()) + " bytes, expected " +
                     std::to_string(n * width));

  std::vector<double> data(n);
  const char* p = payload.data();
  for (std::size_t i = 0; i < n; ++i, p += width) {
    switch (type) {
      case ScalarType::uint8: data[i] = static_cast<unsigned char>(*p); break;
      case ScalarType::int16: data[i] = load<std::int16_t>(p); break;
      case ScalarType::uint16: data[i] = load<std::uint16_t>(p); break;
      case ScalarType::float32: data[i] = load<float>(p); break;
      case ScalarType::float64: data[i] = load<double>(p); break;
    }
  }
  if (options.binarize)
    for (auto& v : data) v = v > 0.5 ? 1.0 : 0.0;
  return VoxelGrid(geometry, std::move(data));
}

std::string serialize_nrrd(const VoxelGrid& grid, const NrrdWriteOptions& options) {
  const bool binary = grid.is_binary();
  const auto& g = grid.geometry();
  std::ostringstream hdr;
  hdr << "NRRD0004\n";
  hdr << "# Complete NRRD file format specification at:\n";
  hdr << "# http://teem.sourceforge.net/nrrd/format.html\n";
  hdr << "type: " << (binary ? "uint8" : "double") << "\n";
  hdr << "dimension: 3\n";
  hdr << "space: left-posterior-superior\n";
  hdr << "sizes: " << g.dims[0] << " " << g.dims[1] << " " << g.dims[2] << "\n";
  hdr << "space directions: (" << format_double(g.spacing[0]) << ",0,0) (0,"
      << format_double(g.spacing[1]) << ",0) (0,0," << format_double(g.spacing[2]) << ")\n";
  hdr << "kinds: domain domain domain\n";
  hdr << "endian: little\n";
  hdr << "encoding: " << (options.encoding == NrrdEncoding::gzip ? "gzip" : "raw") << "\n";
  hdr << "space origin: (" << format_double(g.origin[0]) << "," << format_double(g.origin[1])
      << "," << format_double(g.origin[2]) << ")\n\n";

  std::string payload;
  auto values = grid.data();
  if (binary) {
    payload.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) payload[i] = values[i] != 0.0 ? 1 : 0;
  } else {
    payload.resize(values.size() * sizeof(double));
    std::memcpy(payload.data(), values.data(), payload.size());
  }
  if (options.encoding == NrrdEncoding::gzip) payload = gzip(payload);
  return hdr.str() + payload;
}

VoxelGrid read_nrrd(const std::filesystem::path& path, const NrrdReadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_nrrd(ss.str(), options);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_nrrd(const VoxelGrid& grid, const std::filesystem::path& path,
                const NrrdWriteOptions& options) {
  const std::string bytes = serialize_nrrd(grid, options);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace voxshape
