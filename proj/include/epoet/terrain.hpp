#pragma once

// Heightmaps composed from a reseeded random bowl part and a CPPN part.
//
// World frame: x runs over [0, world_size] (the finish line is x = world_size),
// y over [-world_size/2, world_size/2]. Grid entry (i, j) sits at
// x = i/(res-1) * world_size, y = (j/(res-1) - 0.5) * world_size.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "epoet/cppn.hpp"
#include "epoet/error.hpp"
#include "epoet/numeric.hpp"
#include "epoet/random.hpp"

namespace epoet::terrain {

struct BowlParams {
  std::uint64_t rng_seed = 0;
  int coarse_resolution = 8;
  double threshold = 0.0;  // subtracted from the cosine field before clamping at 0
};

/// Schedule knobs shared by every environment of a run.
struct TerrainSettings {
  int resolution = 64;
  int bowl_coarse_resolution = 8;
  double elevation_initial = 1.0;
  double elevation_step = 0.01;
  double bowl_threshold_rate = 0.002;
  double bowl_threshold_max = 0.5;
  double bowl_weight = 0.3;
  double cppn_weight = 0.7;
  double world_size = 12.0;

  bool operator==(const TerrainSettings&) const = default;

  void validate() const {
    require(resolution >= 2, ErrorKind::config, "terrain_resolution must be >= 2");
    require(bowl_coarse_resolution >= 2 && bowl_coarse_resolution <= resolution, ErrorKind::config,
            "bowl_coarse_resolution must lie in [2, terrain_resolution]");
    require(elevation_initial >= 0 && elevation_step >= 0, ErrorKind::config, "elevation schedule must be >= 0");
    require(bowl_threshold_rate >= 0 && bowl_threshold_max >= 0, ErrorKind::config, "bowl threshold must be >= 0");
    require(bowl_weight >= 0 && cppn_weight >= 0 && bowl_weight + cppn_weight <= 1.0 + 1e-12, ErrorKind::config,
            "composition weights must be non-negative and sum to at most 1");
    require(world_size > 0, ErrorKind::config, "terrain_world_size must be positive");
  }
};

/// Everything needed to regenerate one heightmap. `iteration` drives the bowl
/// reseed and the elevation schedule; the genome changes only on reproduction.
struct TerrainSpec {
  cppn::CppnGenome genome;
  std::uint64_t terrain_seed = 0;
  std::int64_t iteration = 0;
  TerrainSettings settings;

  double elevation_z() const {
    return settings.elevation_initial + settings.elevation_step * static_cast<double>(iteration);
  }
  double bowl_threshold() const {
    return std::min(settings.bowl_threshold_max, settings.bowl_threshold_rate * static_cast<double>(iteration));
  }
  BowlParams bowl_params() const {
    return {derive_seed(terrain_seed, Stream::bowl, {static_cast<std::uint64_t>(iteration)}),
            settings.bowl_coarse_resolution, bowl_threshold()};
  }
  TerrainSpec at_iteration(std::int64_t t) const {
    TerrainSpec s = *this;
    s.iteration = t;
    return s;
  }

  bool operator==(const TerrainSpec&) const = default;
};

struct Heightmap {
  Eigen::MatrixXd grid;  // normalized heights in [0, 1]
  int resolution = 0;
  double elevation_z = 1.0;
  double world_size = 12.0;

  double world_height(int i, int j) const { return grid(i, j) * elevation_z; }

  /// Bilinear world height at a world (x, y); coordinates are clamped to the map.
  double sample(double x, double y) const {
    const double scale = static_cast<double>(resolution - 1);
    const double u = std::clamp(x / world_size, 0.0, 1.0) * scale;
    const double v = std::clamp(y / world_size + 0.5, 0.0, 1.0) * scale;
    const int i0 = std::min(static_cast<int>(u), resolution - 2);
    const int j0 = std::min(static_cast<int>(v), resolution - 2);
    const double fu = u - i0, fv = v - j0;
    const double h = (1 - fu) * (1 - fv) * grid(i0, j0) + fu * (1 - fv) * grid(i0 + 1, j0) +
                     (1 - fu) * fv * grid(i0, j0 + 1) + fu * fv * grid(i0 + 1, j0 + 1);
    return h * elevation_z;
  }
};

/// Min-max normalization onto [0, 1]; a constant grid maps to zeros.
inline Eigen::MatrixXd minmax_normalize(const Eigen::MatrixXd& g) {
  const double lo = g.minCoeff(), hi = g.maxCoeff();
  if (!(hi > lo)) return Eigen::MatrixXd::Zero(g.rows(), g.cols());
  return ((g.array() - lo) / (hi - lo)).matrix();
}

/// Bowl part from an explicit coarse uniform field: bilinear upsample, then
/// cos(2*pi*U) - threshold, clamped below at 0 and min-max normalized.
inline Eigen::MatrixXd generate_bowl_from_field(const Eigen::MatrixXd& coarse, int resolution, double threshold) {
  require(resolution >= 2, ErrorKind::argument, "resolution must be >= 2");
  const int c = static_cast<int>(coarse.rows());
  require(c >= 2 && coarse.cols() == c && c <= resolution, ErrorKind::argument,
          "coarse field must be square with 2 <= size <= resolution");
  const double ratio = static_cast<double>(c - 1) / static_cast<double>(resolution - 1);
  Eigen::MatrixXd out(resolution, resolution);
  for (int i = 0; i < resolution; ++i) {
    const double u = i * ratio;
    const int i0 = std::min(static_cast<int>(u), c - 2);
    const double fu = u - i0;
    for (int j = 0; j < resolution; ++j) {
      const double v = j * ratio;
      const int j0 = std::min(static_cast<int>(v), c - 2);
      const double fv = v - j0;
      const double sample = (1 - fu) * (1 - fv) * coarse(i0, j0) + fu * (1 - fv) * coarse(i0 + 1, j0) +
                            (1 - fu) * fv * coarse(i0, j0 + 1) + fu * fv * coarse(i0 + 1, j0 + 1);
      out(i, j) = std::max(0.0, std::cos(2.0 * std::numbers::pi * sample) - threshold);
    }
  }
  return minmax_normalize(out);
}

/// Coarse field drawn row-major from Uniform[0, 1).
inline Eigen::MatrixXd bowl_field(const BowlParams& params) {
  Rng rng(params.rng_seed);
  Eigen::MatrixXd coarse(params.coarse_resolution, params.coarse_resolution);
  for (int i = 0; i < params.coarse_resolution; ++i)
    for (int j = 0; j < params.coarse_resolution; ++j) coarse(i, j) = uniform01(rng);
  return coarse;
}

inline Eigen::MatrixXd generate_bowl(const BowlParams& params, int resolution) {
  require(resolution >= 2, ErrorKind::argument, "resolution must be >= 2");
  require(params.coarse_resolution >= 2 && params.coarse_resolution <= resolution, ErrorKind::argument,
          "coarse_resolution must lie in [2, resolution]");
  return generate_bowl_from_field(bowl_field(params), resolution, params.threshold);
}

/// Weighted sum of the two normalized parts.
inline Eigen::MatrixXd compose_grids(const Eigen::MatrixXd& bowl, const Eigen::MatrixXd& cppn_normalized,
                                     double bowl_weight, double cppn_weight) {
  return bowl_weight * bowl + cppn_weight * cppn_normalized;
}

inline Heightmap compose_heightmap(const TerrainSpec& spec) {
  spec.settings.validate();
  const int res = spec.settings.resolution;
  const Eigen::MatrixXd bowl = generate_bowl(spec.bowl_params(), res);
  Eigen::MatrixXd cppn_part = Eigen::MatrixXd::Zero(res, res);
  if (spec.settings.cppn_weight != 0.0) cppn_part = minmax_normalize(cppn::query_grid(spec.genome, res));
  Heightmap map;
  map.grid = compose_grids(bowl, cppn_part, spec.settings.bowl_weight, spec.settings.cppn_weight);
  map.resolution = res;
  map.elevation_z = spec.elevation_z();
  map.world_size = spec.settings.world_size;
  return map;
}

/// Population variance of world-unit heights over all cells.
inline double height_variance(const Heightmap& map) {
  const Eigen::MatrixXd world = map.grid * map.elevation_z;
  return population_variance(std::span<const double>(world.data(), static_cast<std::size_t>(world.size())));
}

// ---------------------------------------------------------------------------
// Export

enum class ExportFormat { csv, pgm };

inline ExportFormat parse_export_format(const std::string& s) {
  if (s == "csv") return ExportFormat::csv;
  if (s == "pgm") return ExportFormat::pgm;
  fail(ErrorKind::config, "unknown terrain export format '" + s + "'");
}

/// CSV: first line is the resolution, then one row per i with world heights
/// at 9 decimal places (at least 9 significant digits for heights >= 0.1).
inline void write_heightmap_csv(std::ostream& os, const Heightmap& map) {
  os << map.resolution << '\n';
  char buf[32];
  for (int i = 0; i < map.resolution; ++i) {
    for (int j = 0; j < map.resolution; ++j) {
      std::snprintf(buf, sizeof(buf), "%.9f", map.world_height(i, j));
      if (j) os << ',';
      os << buf;
    }
    os << '\n';
  }
}

inline std::uint16_t pgm_level(double world_height, double elevation_z) {
  if (!(elevation_z > 0.0)) return 0;
  const double scaled = std::clamp(world_height / elevation_z, 0.0, 1.0) * 65535.0;
  return static_cast<std::uint16_t>(std::lround(scaled));
}

/// Binary 16-bit PGM (P5, maxval 65535, big-endian), heights mapped
/// linearly from [0, elevation_z] onto [0, 65535]. Image row r is grid row i = r.
inline void write_heightmap_pgm(std::ostream& os, const Heightmap& map) {
  os << "P5\n" << map.resolution << ' ' << map.resolution << "\n65535\n";
  for (int i = 0; i < map.resolution; ++i)
    for (int j = 0; j < map.resolution; ++j) {
      const std::uint16_t level = pgm_level(map.world_height(i, j), map.elevation_z);
      const char bytes[2] = {static_cast<char>(level >> 8), static_cast<char>(level & 0xff)};
      os.write(bytes, 2);
    }
}

inline void export_heightmap(const Heightmap& map, const std::string& path, ExportFormat format) {
  std::ofstream out(path, format == ExportFormat::pgm ? std::ios::binary : std::ios::out);
  if (!out) fail(ErrorKind::io, "cannot open '" + path + "' for writing");
  if (format == ExportFormat::csv)
    write_heightmap_csv(out, map);
  else
    write_heightmap_pgm(out, map);
  out.flush();
  if (!out) fail(ErrorKind::io, "write failed for '" + path + "'");
}

/// Reads the CSV form back as a matrix of world heights.
inline Eigen::MatrixXd import_heightmap_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open '" + path + "'");
  int res = 0;
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::io, "empty heightmap file '" + path + "'");
  res = std::stoi(line);
  require(res >= 2, ErrorKind::io, "bad resolution in '" + path + "'");
  Eigen::MatrixXd grid(res, res);
  for (int i = 0; i < res; ++i) {
    if (!std::getline(in, line)) fail(ErrorKind::io, "truncated heightmap file '" + path + "'");
    std::stringstream row(line);
    std::string cell;
    for (int j = 0; j < res; ++j) {
      if (!std::getline(row, cell, ',')) fail(ErrorKind::io, "short row in '" + path + "'");
      grid(i, j) = std::stod(cell);
    }
  }
  return grid;
}

/// Reads a 16-bit PGM written by write_heightmap_pgm.
inline std::vector<std::uint16_t> import_pgm_levels(const std::string& path, int* resolution = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open '" + path + "'");
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  in.get();
  require(magic == "P5" && maxval == 65535 && w == h, ErrorKind::io, "unsupported pgm '" + path + "'");
  std::vector<std::uint16_t> px(static_cast<std::size_t>(w) * h);
  for (auto& p : px) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    p = static_cast<std::uint16_t>((b[0] << 8) | b[1]);
  }
  if (!in) fail(ErrorKind::io, "truncated pgm '" + path + "'");
  if (resolution) *resolution = w;
  return px;
}

}  // namespace epoet::terrain
