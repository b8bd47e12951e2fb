#include "promkit/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "promkit/congruence.hpp"
#include "promkit/errors.hpp"

namespace promkit {

namespace {

static_assert(std::endian::native == std::endian::little,
              "container encoding assumes a little-endian host");

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(std::string_view in, std::size_t offset) {
  T value;
  std::memcpy(&value, in.data() + offset, sizeof(T));
  return value;
}

[[noreturn]] void io_error(std::size_t offset, const std::string& what) {
  std::ostringstream os;
  os << "byte " << offset << ": " << what;
  throw Error(ErrorKind::Io, os.str());
}

}  // namespace

ComplexImage::ComplexImage(int ne_, int nc_, int ny_, int nx_)
    : ne(ne_), nc(nc_), ny(ny_), nx(nx_),
      data(static_cast<std::size_t>(ne_) * nc_ * ny_ * nx_) {}

MeasurementMatrix ComplexImage::voxel(int y, int x) const {
  MeasurementMatrix m(ne, nc);
  for (int e = 0; e < ne; ++e)
    for (int c = 0; c < nc; ++c) {
      const auto v = data[index(e, c, y, x)];
      m(e, c) = {v.real(), v.imag()};
    }
  return m;
}

void ComplexImage::set_voxel(int y, int x, const MeasurementMatrix& m) {
  for (int e = 0; e < ne; ++e)
    for (int c = 0; c < nc; ++c)
      data[index(e, c, y, x)] = {static_cast<float>(m(e, c).real()),
                                 static_cast<float>(m(e, c).imag())};
}

std::string encode_container(const ComplexImage& image) {
  std::string out;
  out.reserve(kContainerHeaderBytes + image.data.size() * 8);
  out.append(kContainerMagic, sizeof(kContainerMagic));
  put<std::uint16_t>(out, kContainerVersion);
  for (int d : {image.ne, image.nc, image.ny, image.nx}) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  put<std::uint16_t>(out, kDtypeComplexFloat32);
  for (const auto& v : image.data) {
    put<float>(out, v.real());
    put<float>(out, v.imag());
  }
  return out;
}

ComplexImage decode_container(std::string_view bytes) {
  if (bytes.size() < kContainerHeaderBytes) io_error(bytes.size(), "truncated header");
  if (std::memcmp(bytes.data(), kContainerMagic, sizeof(kContainerMagic)) != 0)
    io_error(0, "bad magic");
  if (get<std::uint16_t>(bytes, 8) != kContainerVersion) io_error(8, "unsupported version");
  std::uint32_t dims[4];
  for (int i = 0; i < 4; ++i) dims[i] = get<std::uint32_t>(bytes, 10 + 4 * static_cast<std::size_t>(i));
  if (get<std::uint16_t>(bytes, 26) != kDtypeComplexFloat32) io_error(26, "unsupported dtype");
  for (int i = 0; i < 4; ++i)
    if (dims[i] == 0 || dims[i] > (1u << 20)) io_error(10 + 4 * static_cast<std::size_t>(i), "bad dimension");
  if (dims[0] < 2) io_error(10, "need at least two encodings");

  ComplexImage image(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                     static_cast<int>(dims[2]), static_cast<int>(dims[3]));
  const std::size_t expected = kContainerHeaderBytes + image.data.size() * 8;
  if (bytes.size() != expected) {
    std::ostringstream os;
    os << "payload length mismatch, expected " << expected << " bytes total";
    io_error(std::min(bytes.size(), expected), os.str());
  }
  std::size_t off = kContainerHeaderBytes;
  for (auto& v : image.data) {
    v = {get<float>(bytes, off), get<float>(bytes, off + 4)};
    off += 8;
  }
  return image;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::random_device rd;
  const fs::path tmp = path.string() + ".tmp" + std::to_string(rd());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(ErrorKind::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error(ErrorKind::Io, "cannot rename onto " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_container(const std::filesystem::path& path, const ComplexImage& image,
                     const ContainerSidecar& sidecar) {
  write_file_atomic(path, encode_container(image));
  nlohmann::json j = {{"gamma_m1", sidecar.gamma_m1}, {"venc", sidecar.venc},
                      {"offset", sidecar.offset},     {"units", sidecar.units},
                      {"seed", sidecar.seed},         {"provenance", sidecar.provenance}};
  write_file_atomic(path.string() + ".json", j.dump(2) + "\n");
}

ComplexImage read_container(const std::filesystem::path& path) {
  return decode_container(read_file(path));
}

ContainerSidecar read_sidecar(const std::filesystem::path& path) {
  const std::string name = path.string() + ".json";
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(name));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Io, name + ": " + e.what());
  }
  ContainerSidecar s;
  try {
    s.gamma_m1 = j.at("gamma_m1").get<std::vector<double>>();
    s.venc = j.at("venc").get<std::vector<double>>();
    s.offset = j.value("offset", 0.0);
    s.units = j.value("units", std::string("cm/s"));
    s.seed = j.value("seed", std::uint64_t{0});
    s.provenance = j.value("provenance", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Io, name + ": " + e.what());
  }
  const VencSet derived = vencs_from_moments(EncodingScheme(s.gamma_m1));
  if (derived.size() != s.venc.size())
    throw Error(ErrorKind::Validation, name + ": venc count does not match gamma_m1");
  for (std::size_t i = 0; i < s.venc.size(); ++i)
    if (std::abs(derived[i] - s.venc[i]) > 1e-6 * derived[i])
      throw Error(ErrorKind::Validation, name + ": venc inconsistent with gamma_m1");
  return s;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t x) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << x;
  return os.str();
}

std::string encode_float_map(const std::vector<double>& values) {
  std::string out;
  out.reserve(values.size() * 4);
  for (double v : values) put<float>(out, static_cast<float>(v));
  return out;
}

std::vector<double> decode_float_map(std::string_view bytes, std::size_t expected) {
  if (bytes.size() % 4 != 0) io_error(bytes.size() - bytes.size() % 4, "float map length is not a multiple of 4");
  if (expected != 0 && bytes.size() != expected * 4)
    io_error(std::min(bytes.size(), expected * 4), "float map has " + std::to_string(bytes.size() / 4) +
                                                       " values, expected " + std::to_string(expected));
  std::vector<double> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = get<float>(bytes, 4 * i);
  return out;
}

}  // namespace promkit
