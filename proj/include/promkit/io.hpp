#pragma once

// Complex image container (raw little-endian payload plus JSON sidecar),
// velocity map output and atomic file writes.

#include <complex>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "promkit/covariance.hpp"

namespace promkit {

/// Ne x Nc x Ny x Nx complex samples, x fastest, then y, coil, encoding.
struct ComplexImage {
  int ne = 0, nc = 0, ny = 0, nx = 0;
  std::vector<std::complex<float>> data;

  ComplexImage() = default;
  ComplexImage(int ne_, int nc_, int ny_, int nx_);

  std::size_t index(int e, int c, int y, int x) const {
    return ((static_cast<std::size_t>(e) * nc + c) * ny + y) * nx + x;
  }
  std::size_t num_voxels() const { return static_cast<std::size_t>(ny) * nx; }
  MeasurementMatrix voxel(int y, int x) const;
  void set_voxel(int y, int x, const MeasurementMatrix& m);
};

struct ContainerSidecar {
  std::vector<double> gamma_m1;  // s/cm
  std::vector<double> venc;      // cm/s
  double offset = 0.0;
  std::string units = "cm/s";
  std::uint64_t seed = 0;
  std::string provenance;
};

inline constexpr char kContainerMagic[8] = {'P', 'R', 'O', 'M', 'C', 'I', 'M', 'G'};
inline constexpr std::uint16_t kContainerVersion = 1;
inline constexpr std::uint16_t kDtypeComplexFloat32 = 1;
inline constexpr std::size_t kContainerHeaderBytes = 28;

/// Header and payload as bytes.
std::string encode_container(const ComplexImage& image);
/// Throws Io with the byte offset of the first inconsistency.
ComplexImage decode_container(std::string_view bytes);

/// Writes `<path>` and `<path>.json`, each atomically.
void write_container(const std::filesystem::path& path, const ComplexImage& image,
                     const ContainerSidecar& sidecar);
ComplexImage read_container(const std::filesystem::path& path);
/// Reads `<path>.json`; checks venc against gamma_m1 to 1e-6 relative.
ContainerSidecar read_sidecar(const std::filesystem::path& path);

/// Temp file in the same directory, then rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t x);

/// Float32 little-endian map, row-major (x fastest), NaN for masked voxels.
std::string encode_float_map(const std::vector<double>& values);
/// Inverse of encode_float_map; `expected` = 0 accepts any length. Throws Io.
std::vector<double> decode_float_map(std::string_view bytes, std::size_t expected = 0);

}  // namespace promkit
