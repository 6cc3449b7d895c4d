// Volume file I/O.
//
// Primary container is a small NRRD subset: magic NRRD0001..NRRD0005,
// type in {uint8, uint32, float}, dimension 3, raw or gzip encoding,
// little-endian data in x-fastest order, spacing given either through
// `spacings` or a diagonal `space directions`. Fallback container is a
// raw little-endian file plus a JSON sidecar (<stem>.raw + <stem>.json
// with keys dims, spacing_mm, dtype).
//
// Payload kind is inferred from the element type: uint8 -> binary mask
// (values must be {0,1}), uint32 -> branch labels (values must be a
// contiguous 0..n_b set), float -> scalar field. Writing is deterministic:
// identical volumes produce byte-identical files.

#pragma once

#include <zlib.h>

#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

#include "json.hpp"
#include "vesselscale/volume.hpp"

namespace vesselscale {

using AnyVolume = std::variant<MaskVolume, LabelVolume, ScalarVolume>;

enum class VolumeEncoding { raw, gzip };

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (!in.good() && !in.eof()) throw IoError("read failure: " + path.string());
  return std::move(ss).str();
}

inline void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open file for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out.good()) throw IoError("write failure: " + path.string());
}

/// Write via a temp file in the same directory, then rename. Either the
/// complete file appears at `path` or nothing changes.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  write_file_bytes(tmp, bytes);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("rename failed for: " + path.string());
  }
}

inline std::string gzip_compress(std::string_view bytes) {
  z_stream strm{};
  if (deflateInit2(&strm, 6, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK)
    throw IoError("deflateInit2 failed");
  std::string out;
  out.resize(deflateBound(&strm, static_cast<uLong>(bytes.size())));
  strm.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(bytes.data()));
  strm.avail_in = static_cast<uInt>(bytes.size());
  strm.next_out = reinterpret_cast<Bytef*>(out.data());
  strm.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&strm, Z_FINISH);
  deflateEnd(&strm);
  if (rc != Z_STREAM_END) throw IoError("gzip compression failed");
  out.resize(out.size() - strm.avail_out);
  return out;
}

inline std::string gzip_decompress(std::string_view bytes, std::size_t expected_size) {
  z_stream strm{};
  if (inflateInit2(&strm, 15 + 32) != Z_OK) throw IoError("inflateInit2 failed");
  std::string out;
  out.resize(expected_size);
  strm.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(bytes.data()));
  strm.avail_in = static_cast<uInt>(bytes.size());
  strm.next_out = reinterpret_cast<Bytef*>(out.data());
  strm.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&strm, Z_FINISH);
  const bool all_input = (strm.avail_in == 0);
  inflateEnd(&strm);
  if (rc == Z_STREAM_END && strm.avail_out == 0 && all_input) return out;
  throw IoError("gzip data does not decode to the declared volume size");
}

enum class ElementType { u8, u32, f32 };

inline std::size_t element_size(ElementType t) {
  switch (t) {
    case ElementType::u8: return 1;
    case ElementType::u32: return 4;
    case ElementType::f32: return 4;
  }
  return 0;
}

inline std::optional<ElementType> parse_element_type(std::string_view s) {
  if (s == "uint8" || s == "uint8_t" || s == "uchar" || s == "unsigned char")
    return ElementType::u8;
  if (s == "uint32" || s == "uint32_t" || s == "uint" || s == "unsigned int")
    return ElementType::u32;
  if (s == "float") return ElementType::f32;
  return std::nullopt;
}

inline std::string trim(std::string_view s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

inline int parse_int_field(const std::string& tok, const char* field, const std::string& src) {
  int value = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
    throw IoError(std::string("malformed NRRD '") + field + "' value '" + tok + "': " + src);
  return value;
}

inline double parse_double_field(const std::string& tok, const char* field,
                                 const std::string& src) {
  try {
    std::size_t used = 0;
    const double value = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return value;
  } catch (const std::exception&) {
    throw IoError(std::string("malformed NRRD '") + field + "' value '" + tok + "': " + src);
  }
}

inline void validate_mask_payload(const std::vector<std::uint8_t>& data, const std::string& src) {
  for (std::uint8_t b : data)
    if (b > 1) throw IoError("uint8 volume contains values outside {0,1}: " + src);
}

inline void validate_label_payload(const std::vector<std::uint32_t>& data,
                                   const std::string& src) {
  std::uint32_t max = 0;
  for (std::uint32_t v : data) max = std::max(max, v);
  if (max == 0) return;
  std::vector<char> seen(max + 1, 0);
  for (std::uint32_t v : data) seen[v] = 1;
  for (std::uint32_t j = 1; j <= max; ++j)
    if (!seen[j])
      throw IoError("branch-label volume has a gap in its label set (missing " +
                    std::to_string(j) + "): " + src);
}

template <typename T>
std::vector<T> decode_payload(std::string_view bytes, std::int64_t count) {
  std::vector<T> out(static_cast<std::size_t>(count));
  static_assert(sizeof(T) == 1 || sizeof(T) == 4);
  // Data on disk is little endian; so are all platforms this builds on.
  std::memcpy(out.data(), bytes.data(), static_cast<std::size_t>(count) * sizeof(T));
  return out;
}

template <typename T>
std::string encode_payload(const std::vector<T>& data) {
  std::string bytes(data.size() * sizeof(T), '\0');
  std::memcpy(bytes.data(), data.data(), bytes.size());
  return bytes;
}

struct NrrdHeader {
  ElementType type = ElementType::u8;
  Dims3 dims{0, 0, 0};
  Spacing3 spacing{1, 1, 1};
  VolumeEncoding encoding = VolumeEncoding::raw;
  std::size_t data_offset = 0;
};

inline NrrdHeader parse_nrrd_header(std::string_view content, const std::string& src) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::optional<std::string> {
    if (pos >= content.size()) return std::nullopt;
    std::size_t end = content.find('\n', pos);
    std::string line;
    if (end == std::string_view::npos) {
      line = std::string(content.substr(pos));
      pos = content.size();
    } else {
      line = std::string(content.substr(pos, end - pos));
      pos = end + 1;
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  auto magic = next_line();
  if (!magic || magic->size() != 8 || magic->substr(0, 7) != "NRRD000" ||
      (*magic)[7] < '1' || (*magic)[7] > '5')
    throw IoError("not a supported NRRD file (bad magic line): " + src);

  NrrdHeader h;
  bool have_type = false, have_dim = false, have_sizes = false, have_spacing = false;
  bool have_encoding = false;
  std::optional<std::string> endian;

  while (true) {
    auto line = next_line();
    if (!line) throw IoError("NRRD header not terminated by a blank line: " + src);
    if (line->empty()) break;
    if ((*line)[0] == '#') continue;
    const std::size_t colon = line->find(": ");
    if (colon == std::string::npos) {
      // "key:=value" per-axis syntax and key-value pairs are outside the subset.
      if (line->find(":=") != std::string::npos) continue;
      throw IoError("malformed NRRD header line '" + *line + "': " + src);
    }
    const std::string key = lower(trim(line->substr(0, colon)));
    const std::string value = trim(line->substr(colon + 2));

    if (key == "type") {
      auto t = parse_element_type(value);
      if (!t) throw IoError("unsupported NRRD type '" + value + "': " + src);
      h.type = *t;
      have_type = true;
    } else if (key == "dimension") {
      if (value != "3") throw IoError("only dimension 3 NRRD supported: " + src);
      have_dim = true;
    } else if (key == "sizes") {
      auto toks = split_ws(value);
      if (toks.size() != 3) throw IoError("NRRD sizes must have 3 entries: " + src);
      for (int a = 0; a < 3; ++a) h.dims[a] = parse_int_field(toks[a], "sizes", src);
      have_sizes = true;
    } else if (key == "encoding") {
      if (value == "raw")
        h.encoding = VolumeEncoding::raw;
      else if (value == "gzip" || value == "gz")
        h.encoding = VolumeEncoding::gzip;
      else
        throw IoError("unsupported NRRD encoding '" + value + "': " + src);
      have_encoding = true;
    } else if (key == "endian") {
      endian = lower(value);
    } else if (key == "spacings") {
      auto toks = split_ws(value);
      if (toks.size() != 3) throw IoError("NRRD spacings must have 3 entries: " + src);
      for (int a = 0; a < 3; ++a) h.spacing[a] = parse_double_field(toks[a], "spacings", src);
      have_spacing = true;
    } else if (key == "space directions") {
      // Accept only a diagonal frame: (sx,0,0) (0,sy,0) (0,0,sz).
      std::string v = value;
      for (char& c : v)
        if (c == '(' || c == ')' || c == ',') c = ' ';
      auto toks = split_ws(v);
      if (toks.size() != 9) throw IoError("NRRD space directions must be 3 vectors: " + src);
      double m[9];
      for (int i = 0; i < 9; ++i) m[i] = parse_double_field(toks[i], "space directions", src);
      if (m[1] != 0 || m[2] != 0 || m[3] != 0 || m[5] != 0 || m[6] != 0 || m[7] != 0)
        throw IoError("non-diagonal NRRD space directions unsupported: " + src);
      h.spacing = {m[0], m[4], m[8]};
      have_spacing = true;
    } else if (key == "data file" || key == "datafile" || key == "byte skip" ||
               key == "byteskip" || key == "line skip" || key == "lineskip" ||
               key == "block size" || key == "blocksize") {
      throw IoError("unsupported NRRD feature '" + key + "': " + src);
    }
    // Anything else (content, space, kinds, space origin, ...) is ignored.
  }

  if (!have_type) throw IoError("NRRD header missing 'type': " + src);
  if (!have_dim) throw IoError("NRRD header missing 'dimension': " + src);
  if (!have_sizes) throw IoError("NRRD header missing 'sizes': " + src);
  if (!have_encoding) throw IoError("NRRD header missing 'encoding': " + src);
  if (!have_spacing)
    throw IoError("NRRD header missing 'spacings' or 'space directions': " + src);
  if (element_size(h.type) > 1 && (!endian || *endian != "little"))
    throw IoError("NRRD multi-byte data requires 'endian: little': " + src);
  if (endian && *endian != "little")
    throw IoError("big-endian NRRD unsupported: " + src);
  for (int a = 0; a < 3; ++a) {
    if (h.dims[a] <= 0) throw IoError("NRRD sizes must be positive: " + src);
    if (!(h.spacing[a] > 0.0)) throw IoError("NRRD spacing must be positive: " + src);
  }
  h.data_offset = pos;
  return h;
}

inline AnyVolume assemble_volume(ElementType type, Dims3 dims, Spacing3 spacing,
                                 std::string_view payload, const std::string& src) {
  const std::int64_t count = static_cast<std::int64_t>(dims[0]) * dims[1] * dims[2];
  switch (type) {
    case ElementType::u8: {
      auto data = decode_payload<std::uint8_t>(payload, count);
      validate_mask_payload(data, src);
      return MaskVolume(dims, spacing, std::move(data));
    }
    case ElementType::u32: {
      auto data = decode_payload<std::uint32_t>(payload, count);
      validate_label_payload(data, src);
      return LabelVolume(dims, spacing, std::move(data));
    }
    case ElementType::f32: {
      auto data = decode_payload<float>(payload, count);
      return ScalarVolume(dims, spacing, std::move(data));
    }
  }
  throw IoError("unreachable element type");
}

inline AnyVolume load_nrrd(const std::filesystem::path& path) {
  const std::string src = path.string();
  const std::string content = read_file_bytes(path);
  const NrrdHeader h = parse_nrrd_header(content, src);
  const std::int64_t count = static_cast<std::int64_t>(h.dims[0]) * h.dims[1] * h.dims[2];
  const std::size_t expected = static_cast<std::size_t>(count) * element_size(h.type);
  std::string_view body(content.data() + h.data_offset, content.size() - h.data_offset);
  std::string decoded;
  if (h.encoding == VolumeEncoding::gzip) {
    decoded = gzip_decompress(body, expected);
    body = decoded;
  }
  if (body.size() != expected)
    throw IoError("data length mismatch (header declares " + std::to_string(expected) +
                  " bytes, file provides " + std::to_string(body.size()) + "): " + src);
  return assemble_volume(h.type, h.dims, h.spacing, body, src);
}

inline const char* type_field_name(ElementType t) {
  switch (t) {
    case ElementType::u8: return "uint8";
    case ElementType::u32: return "uint32";
    case ElementType::f32: return "float";
  }
  return "";
}

template <typename T>
ElementType element_type_of() {
  if constexpr (std::is_same_v<T, std::uint8_t>) return ElementType::u8;
  else if constexpr (std::is_same_v<T, std::uint32_t>) return ElementType::u32;
  else return ElementType::f32;
}

template <typename T>
void save_nrrd(const Volume<T>& v, const std::filesystem::path& path,
               VolumeEncoding encoding) {
  std::string header;
  header += "NRRD0004\n";
  header += std::string("type: ") + type_field_name(element_type_of<T>()) + "\n";
  header += "dimension: 3\n";
  header += "sizes: " + std::to_string(v.dims()[0]) + " " + std::to_string(v.dims()[1]) +
            " " + std::to_string(v.dims()[2]) + "\n";
  header += "spacings: " + format_double(v.spacing()[0]) + " " +
            format_double(v.spacing()[1]) + " " + format_double(v.spacing()[2]) + "\n";
  header += "endian: little\n";
  header += std::string("encoding: ") +
            (encoding == VolumeEncoding::raw ? "raw" : "gzip") + "\n";
  header += "\n";

  std::string payload = encode_payload(v.data());
  if (encoding == VolumeEncoding::gzip) payload = gzip_compress(payload);
  header += payload;
  write_file_atomic(path, header);
}

inline const char* dtype_name(ElementType t) {
  switch (t) {
    case ElementType::u8: return "uint8";
    case ElementType::u32: return "uint32";
    case ElementType::f32: return "float32";
  }
  return "";
}

inline AnyVolume load_raw_pair(const std::filesystem::path& any_of_pair) {
  std::filesystem::path json_path = any_of_pair;
  json_path.replace_extension(".json");
  std::filesystem::path raw_path = any_of_pair;
  raw_path.replace_extension(".raw");
  const std::string src = raw_path.string();

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file_bytes(json_path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed sidecar JSON " + json_path.string() + ": " + e.what());
  }
  if (!meta.contains("dims") || !meta.contains("spacing_mm") || !meta.contains("dtype"))
    throw IoError("sidecar JSON missing dims/spacing_mm/dtype: " + json_path.string());
  Dims3 dims;
  Spacing3 spacing;
  try {
    for (int a = 0; a < 3; ++a) dims[a] = meta["dims"].at(a).get<int>();
    for (int a = 0; a < 3; ++a) spacing[a] = meta["spacing_mm"].at(a).get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed sidecar JSON " + json_path.string() + ": " + e.what());
  }
  const std::string dtype = meta["dtype"].get<std::string>();
  std::optional<ElementType> type;
  if (dtype == "uint8") type = ElementType::u8;
  else if (dtype == "uint32") type = ElementType::u32;
  else if (dtype == "float32" || dtype == "float") type = ElementType::f32;
  if (!type) throw IoError("unsupported sidecar dtype '" + dtype + "': " + json_path.string());

  const std::string payload = read_file_bytes(raw_path);
  const std::size_t expected =
      static_cast<std::size_t>(dims[0]) * dims[1] * dims[2] * element_size(*type);
  if (payload.size() != expected)
    throw IoError("data length mismatch (sidecar declares " + std::to_string(expected) +
                  " bytes, raw file provides " + std::to_string(payload.size()) + "): " + src);
  return assemble_volume(*type, dims, spacing, payload, src);
}

template <typename T>
void save_raw_pair(const Volume<T>& v, const std::filesystem::path& any_of_pair) {
  std::filesystem::path json_path = any_of_pair;
  json_path.replace_extension(".json");
  std::filesystem::path raw_path = any_of_pair;
  raw_path.replace_extension(".raw");

  nlohmann::json meta;
  meta["dims"] = {v.dims()[0], v.dims()[1], v.dims()[2]};
  meta["spacing_mm"] = {v.spacing()[0], v.spacing()[1], v.spacing()[2]};
  meta["dtype"] = dtype_name(element_type_of<T>());
  write_file_atomic(json_path, meta.dump(2) + "\n");
  write_file_atomic(raw_path, encode_payload(v.data()));
}

}  // namespace detail

/// Load a volume from .nrrd, or from a .raw/.json sidecar pair (either
/// member of the pair may be named). Payload kind follows the element type.
inline AnyVolume load_volume(const std::filesystem::path& path) {
  const std::string ext = detail::lower(path.extension().string());
  if (ext == ".raw" || ext == ".json") return detail::load_raw_pair(path);
  return detail::load_nrrd(path);
}

template <typename T>
void save_volume(const Volume<T>& v, const std::filesystem::path& path,
                 VolumeEncoding encoding = VolumeEncoding::raw) {
  const std::string ext = detail::lower(path.extension().string());
  if (ext == ".raw" || ext == ".json") {
    detail::save_raw_pair(v, path);
    return;
  }
  detail::save_nrrd(v, path, encoding);
}

inline void save_volume(const AnyVolume& v, const std::filesystem::path& path,
                        VolumeEncoding encoding = VolumeEncoding::raw) {
  std::visit([&](const auto& vol) { save_volume(vol, path, encoding); }, v);
}

inline MaskVolume load_mask(const std::filesystem::path& path) {
  AnyVolume v = load_volume(path);
  if (auto* m = std::get_if<MaskVolume>(&v)) return std::move(*m);
  throw IoError("expected a binary uint8 mask: " + path.string());
}

inline LabelVolume load_labels(const std::filesystem::path& path) {
  AnyVolume v = load_volume(path);
  if (auto* m = std::get_if<LabelVolume>(&v)) return std::move(*m);
  throw IoError("expected a uint32 branch-label volume: " + path.string());
}

}  // namespace vesselscale
