#pragma once

// HCNS snapshot files and the JSON run manifest.
//
// Snapshot layout, little-endian:
//   "HCNS" | u32 version (1) | u32 N | u32 cells[N] | f64 spacing[N] | f64 t
//   | f64 p[cells] (row-major, last axis fastest) | f64 m[N * cells] (component by component)

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <json.hpp>

#include "hcns/series.hpp"

namespace hcns {

namespace detail {

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
}

template <class T>
void put(std::vector<unsigned char>& buf, T v) {
  const auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(to_little(v));
  buf.insert(buf.end(), bytes.begin(), bytes.end());
}

class Reader {
 public:
  Reader(const std::vector<unsigned char>& b, std::string name) : buf_(b), name_(std::move(name)) {}
  template <class T>
  T get() {
    if (pos_ + sizeof(T) > buf_.size()) throw FormatError(name_ + ": truncated snapshot");
    std::array<unsigned char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little(std::bit_cast<T>(bytes));
  }
  bool done() const noexcept { return pos_ == buf_.size(); }

 private:
  const std::vector<unsigned char>& buf_;
  std::string name_;
  std::size_t pos_ = 0;
};

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

inline constexpr std::uint32_t kSnapshotVersion = 1;

inline std::vector<unsigned char> encode_snapshot(const GridSpec& g, const Snapshot& s) {
  require_same_grid(g, s.p.grid, "encode_snapshot");
  require_same_grid(g, s.m.grid, "encode_snapshot");
  std::vector<unsigned char> buf{'H', 'C', 'N', 'S'};
  detail::put<std::uint32_t>(buf, kSnapshotVersion);
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(g.dim()));
  for (int a = 0; a < g.dim(); ++a) detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(g.cells(a)));
  for (int a = 0; a < g.dim(); ++a) detail::put<double>(buf, g.spacing(a));
  detail::put<double>(buf, s.t);
  for (double v : s.p.values) detail::put<double>(buf, v);
  for (double v : s.m.values) detail::put<double>(buf, v);
  return buf;
}

inline std::uint32_t crc32_of(const std::vector<unsigned char>& bytes) {
  uLong c = crc32(0L, Z_NULL, 0);
  c = crc32(c, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(c);
}

inline std::uint32_t file_crc32(const std::filesystem::path& path) { return crc32_of(detail::read_bytes(path)); }

/// Writes the snapshot and returns the CRC-32 of the written bytes.
inline std::uint32_t write_snapshot(const std::filesystem::path& path, const GridSpec& g, const Snapshot& s) {
  const auto buf = encode_snapshot(g, s);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot write");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError(path.string() + ": write failed");
  return crc32_of(buf);
}

struct LoadedSnapshot {
  GridSpec grid;
  Snapshot snapshot;
};

inline LoadedSnapshot decode_snapshot(const std::vector<unsigned char>& buf, const std::string& name) {
  if (buf.size() < 4 || std::memcmp(buf.data(), "HCNS", 4) != 0) throw FormatError(name + ": bad magic");
  std::vector<unsigned char> rest(buf.begin() + 4, buf.end());
  detail::Reader r(rest, name);
  const auto version = r.get<std::uint32_t>();
  if (version != kSnapshotVersion) throw FormatError(name + ": unsupported version " + std::to_string(version));
  const auto n = r.get<std::uint32_t>();
  if (n < 1 || n > 3) throw FormatError(name + ": bad dimension");
  Index cells{1, 1, 1};
  Point extent{1.0, 1.0, 1.0};
  for (std::uint32_t a = 0; a < n; ++a) cells[a] = static_cast<int>(r.get<std::uint32_t>());
  for (std::uint32_t a = 0; a < n; ++a) extent[a] = r.get<double>() * cells[a];
  GridSpec g;
  try {
    g = GridSpec(static_cast<int>(n), cells, extent);
  } catch (const Error& e) {
    throw FormatError(name + ": " + e.what());
  }
  LoadedSnapshot out{g, {r.get<double>(), ScalarField(g), VectorField(g)}};
  for (auto& v : out.snapshot.p.values) v = r.get<double>();
  for (auto& v : out.snapshot.m.values) v = r.get<double>();
  if (!r.done()) throw FormatError(name + ": trailing bytes");
  return out;
}

inline LoadedSnapshot read_snapshot(const std::filesystem::path& path) {
  return decode_snapshot(detail::read_bytes(path), path.string());
}

struct ManifestEntry {
  std::size_t step = 0;
  double t = 0.0;
  std::string file;  // relative to the manifest directory
  std::uint32_t crc32 = 0;
  double lyapunov = 0.0;
  double max_abs_m = 0.0;
  double max_abs_p = 0.0;
};

struct SnapshotManifest {
  nlohmann::ordered_json config;  // echo of the run configuration
  int dim = 0;
  Index cells{1, 1, 1};
  Point extent{1.0, 1.0, 1.0};
  double horizon = 0.0;
  double cadence = 0.0;
  std::string diagnostics;  // CSV file name
  std::vector<ManifestEntry> snapshots;

  GridSpec grid() const { return GridSpec(dim, cells, extent); }
};

inline nlohmann::ordered_json to_json(const SnapshotManifest& m) {
  nlohmann::ordered_json j;
  j["format"] = "hcns-manifest";
  j["version"] = 1;
  j["config"] = m.config;
  j["grid"] = {{"dim", m.dim},
               {"cells", std::vector<int>(m.cells.begin(), m.cells.begin() + m.dim)},
               {"extent", std::vector<double>(m.extent.begin(), m.extent.begin() + m.dim)}};
  j["horizon"] = m.horizon;
  j["cadence"] = m.cadence;
  j["diagnostics"] = m.diagnostics;
  auto& arr = j["snapshots"] = nlohmann::ordered_json::array();
  for (const auto& e : m.snapshots)
    arr.push_back({{"step", e.step},
                   {"t", e.t},
                   {"file", e.file},
                   {"crc32", e.crc32},
                   {"lyapunov", e.lyapunov},
                   {"max_abs_m", e.max_abs_m},
                   {"max_abs_p", e.max_abs_p}});
  return j;
}

inline void write_manifest(const std::filesystem::path& path, const SnapshotManifest& m) {
  std::ofstream out(path);
  if (!out) throw DataError(path.string() + ": cannot write");
  out << to_json(m).dump(2) << '\n';
}

inline SnapshotManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open");
  SnapshotManifest m;
  try {
    const auto j = nlohmann::ordered_json::parse(in);
    if (j.value("format", "") != "hcns-manifest") throw FormatError(path.string() + ": not a manifest");
    m.config = j.at("config");
    m.dim = j.at("grid").at("dim").get<int>();
    const auto cells = j.at("grid").at("cells").get<std::vector<int>>();
    const auto extent = j.at("grid").at("extent").get<std::vector<double>>();
    if (m.dim < 1 || m.dim > 3 || cells.size() != static_cast<std::size_t>(m.dim) || extent.size() != cells.size())
      throw FormatError(path.string() + ": inconsistent grid");
    for (int a = 0; a < m.dim; ++a) {
      m.cells[a] = cells[a];
      m.extent[a] = extent[a];
    }
    m.horizon = j.at("horizon").get<double>();
    m.cadence = j.at("cadence").get<double>();
    m.diagnostics = j.value("diagnostics", "");
    for (const auto& e : j.at("snapshots"))
      m.snapshots.push_back({e.at("step").get<std::size_t>(), e.at("t").get<double>(), e.at("file").get<std::string>(),
                             e.at("crc32").get<std::uint32_t>(), e.value("lyapunov", 0.0), e.value("max_abs_m", 0.0),
                             e.value("max_abs_p", 0.0)});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return m;
}

/// Loads every snapshot listed in a manifest, verifying checksums, grids and times.
inline SpaceTimeSeries load_series(const std::filesystem::path& manifest_path, SnapshotManifest* manifest_out = nullptr) {
  const auto man = read_manifest(manifest_path);
  const auto dir = manifest_path.parent_path();
  const GridSpec g = man.grid();
  SpaceTimeSeries s(g, man.horizon, man.cadence);
  for (const auto& e : man.snapshots) {
    const auto file = dir / e.file;
    const auto bytes = detail::read_bytes(file);
    if (crc32_of(bytes) != e.crc32) throw FormatError(file.string() + ": checksum mismatch");
    auto loaded = decode_snapshot(bytes, file.string());
    if (!(loaded.grid == g)) throw FormatError(file.string() + ": grid differs from manifest");
    if (loaded.snapshot.t != e.t) throw FormatError(file.string() + ": time differs from manifest");
    s.push_back(std::move(loaded.snapshot));
  }
  if (manifest_out) *manifest_out = man;
  return s;
}

}  // namespace hcns
