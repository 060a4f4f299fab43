#include "gsmem/grid.hpp"

#include "gsmem/binary_io.hpp"

#include <fstream>

namespace gsmem {

namespace {
constexpr std::uint32_t kVgridVersion = 1;
}

void GridGeometry::validate() const {
  if (!(voxel_size > 0.0)) throw InvalidInput("voxel_size must be positive");
  for (int d : dims)
    if (d < 1) throw InvalidInput("grid dims must be >= 1");
}

GridGeometry default_geometry() { return GridGeometry{}; }

VoxelGrid VoxelGrid::probability(const GridGeometry& g, std::uint32_t classes) {
  g.validate();
  VoxelGrid out;
  out.geometry = g;
  out.mode = GridMode::probability;
  out.classes = classes;
  out.probs.assign(g.voxel_count() * classes, 0.0f);
  return out;
}

VoxelGrid VoxelGrid::label(const GridGeometry& g, std::uint32_t classes) {
  g.validate();
  VoxelGrid out;
  out.geometry = g;
  out.mode = GridMode::label;
  out.classes = classes;
  out.labels.assign(g.voxel_count(), static_cast<std::uint16_t>(classes - 1));
  return out;
}

void write_vgrid(std::ostream& os, const VoxelGrid& grid) {
  using namespace binary;
  put_magic(os, "VGRD");
  put<std::uint32_t>(os, kVgridVersion);
  put<std::uint8_t>(os, static_cast<std::uint8_t>(grid.mode));
  put<std::uint32_t>(os, grid.classes);
  for (int d : grid.geometry.dims) put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  for (int k = 0; k < 3; ++k) put<double>(os, grid.geometry.origin[k]);
  put<double>(os, grid.geometry.voxel_size);
  if (grid.mode == GridMode::probability) {
    os.write(reinterpret_cast<const char*>(grid.probs.data()),
             static_cast<std::streamsize>(grid.probs.size() * sizeof(float)));
  } else {
    os.write(reinterpret_cast<const char*>(grid.labels.data()),
             static_cast<std::streamsize>(grid.labels.size() * sizeof(std::uint16_t)));
  }
  if (!os) throw FormatError("failed to write voxel grid");
}

VoxelGrid read_vgrid(std::istream& is) {
  using namespace binary;
  expect_magic(is, "VGRD");
  if (get<std::uint32_t>(is) != kVgridVersion) throw FormatError("unsupported vgrid version");
  const auto mode = get<std::uint8_t>(is);
  if (mode > 1) throw FormatError("invalid vgrid mode");
  VoxelGrid grid;
  grid.mode = static_cast<GridMode>(mode);
  grid.classes = get<std::uint32_t>(is);
  if (grid.classes < 2 || grid.classes > 65535) throw FormatError("invalid class count");
  for (int& d : grid.geometry.dims) {
    const auto v = get<std::uint32_t>(is);
    if (v < 1 || v > (1u << 20)) throw FormatError("invalid grid dimension");
    d = static_cast<int>(v);
  }
  for (int k = 0; k < 3; ++k) grid.geometry.origin[k] = get<double>(is);
  grid.geometry.voxel_size = get<double>(is);
  if (!(grid.geometry.voxel_size > 0.0)) throw FormatError("invalid voxel size");
  const std::size_t n = grid.geometry.voxel_count();
  if (grid.mode == GridMode::probability) {
    grid.probs.resize(n * grid.classes);
    if (!is.read(reinterpret_cast<char*>(grid.probs.data()),
                 static_cast<std::streamsize>(grid.probs.size() * sizeof(float))))
      throw FormatError("truncated vgrid payload");
  } else {
    grid.labels.resize(n);
    if (!is.read(reinterpret_cast<char*>(grid.labels.data()),
                 static_cast<std::streamsize>(n * sizeof(std::uint16_t))))
      throw FormatError("truncated vgrid payload");
  }
  return grid;
}

void save_vgrid(const std::filesystem::path& path, const VoxelGrid& grid) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_vgrid(os, grid);
}

VoxelGrid load_vgrid(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_vgrid(is);
}

}  // namespace gsmem
