#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wormhole/pointcloud.hpp"

namespace wormhole {

static_assert(std::endian::native == std::endian::little,
              "cohort container assumes a little-endian host");

namespace io_detail {

template <class T>
void write_raw(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_raw(std::istream& in, const std::string& field) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) {
    std::ostringstream msg;
    msg << "unexpected end of file while reading " << field << " at byte "
        << in.gcount();
    throw std::runtime_error(msg.str());
  }
  return value;
}

inline std::uint32_t read_be_u32(std::istream& in, const std::string& field) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw std::runtime_error("unexpected end of file while reading " + field);
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

inline std::filesystem::path meta_path(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  p.replace_extension(".meta.json");
  return p;
}

}  // namespace io_detail

inline constexpr char kCohortMagic[4] = {'O', 'T', 'W', 'C'};
inline constexpr std::uint32_t kCohortVersion = 1;

// Binary cohort container: magic "OTWC", version u32, N u64, d u64, then per
// cloud n u64 + n*d float32 row-major, then a labels block (flag u8, N i32
// when every cloud is labeled).  NormalizationInfo travels in a JSON sidecar
// next to the file.
inline void write_cohort(const std::filesystem::path& path, const Cohort& cohort) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(kCohortMagic, 4);
  io_detail::write_raw(out, kCohortVersion);
  io_detail::write_raw(out, static_cast<std::uint64_t>(cohort.size()));
  io_detail::write_raw(out, static_cast<std::uint64_t>(cohort.dim()));
  for (const auto& cloud : cohort.clouds) {
    io_detail::write_raw(out, static_cast<std::uint64_t>(cloud.size()));
    for (Eigen::Index i = 0; i < cloud.size(); ++i)
      for (Eigen::Index j = 0; j < cloud.dim(); ++j)
        io_detail::write_raw(out, static_cast<float>(cloud.points(i, j)));
  }
  bool all_labeled = !cohort.clouds.empty();
  for (const auto& cloud : cohort.clouds)
    all_labeled = all_labeled && cloud.label.has_value();
  io_detail::write_raw(out, static_cast<std::uint8_t>(all_labeled ? 1 : 0));
  if (all_labeled)
    for (const auto& cloud : cohort.clouds)
      io_detail::write_raw(out, static_cast<std::int32_t>(*cloud.label));
  if (!out) throw std::runtime_error("write failed for " + path.string());
  out.close();

  if (cohort.norm) {
    nlohmann::json meta;
    meta["axis_min"] = std::vector<double>(
        cohort.norm->axis_min.data(),
        cohort.norm->axis_min.data() + cohort.norm->axis_min.size());
    meta["axis_max"] = std::vector<double>(
        cohort.norm->axis_max.data(),
        cohort.norm->axis_max.data() + cohort.norm->axis_max.size());
    meta["extra_scale"] = cohort.norm->extra_scale;
    std::ofstream meta_out(io_detail::meta_path(path));
    meta_out << meta.dump(2) << "\n";
  }
}

inline Cohort read_cohort(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCohortMagic, 4) != 0)
    throw std::runtime_error("bad magic at byte 0 of " + path.string() +
                             " (expected OTWC)");
  const auto version = io_detail::read_raw<std::uint32_t>(in, "version");
  if (version != kCohortVersion)
    throw std::runtime_error("unsupported cohort version " + std::to_string(version));
  const auto n_clouds = io_detail::read_raw<std::uint64_t>(in, "cloud count");
  const auto dim = io_detail::read_raw<std::uint64_t>(in, "dimension");
  if (dim == 0) throw std::runtime_error("cohort field 'dimension' is zero");
  Cohort cohort;
  cohort.clouds.reserve(n_clouds);
  for (std::uint64_t c = 0; c < n_clouds; ++c) {
    const auto n =
        io_detail::read_raw<std::uint64_t>(in, "point count of cloud " + std::to_string(c));
    PointCloud cloud;
    cloud.points.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (std::uint64_t i = 0; i < n; ++i)
      for (std::uint64_t j = 0; j < dim; ++j)
        cloud.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            io_detail::read_raw<float>(in, "coordinates of cloud " + std::to_string(c));
    cohort.clouds.push_back(std::move(cloud));
  }
  const auto labeled = io_detail::read_raw<std::uint8_t>(in, "labels flag");
  if (labeled == 1)
    for (auto& cloud : cohort.clouds)
      cloud.label = io_detail::read_raw<std::int32_t>(in, "labels");

  const auto meta = io_detail::meta_path(path);
  if (std::filesystem::exists(meta)) {
    std::ifstream meta_in(meta);
    nlohmann::json j;
    meta_in >> j;
    NormalizationInfo info;
    const auto lo = j.at("axis_min").get<std::vector<double>>();
    const auto hi = j.at("axis_max").get<std::vector<double>>();
    info.axis_min = Eigen::Map<const Vector>(lo.data(), static_cast<Eigen::Index>(lo.size()));
    info.axis_max = Eigen::Map<const Vector>(hi.data(), static_cast<Eigen::Index>(hi.size()));
    info.extra_scale = j.at("extra_scale").get<double>();
    cohort.norm = info;
  }
  return cohort;
}

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;

// IDX3 ubyte image container (big-endian dimensions); pixel values scaled to
// [0, 1].
inline std::vector<Matrix> read_idx_images(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::uint32_t magic = io_detail::read_be_u32(in, "IDX magic");
  if (magic != kIdxImagesMagic) {
    std::ostringstream msg;
    msg << "bad IDX magic at byte 0: 0x" << std::hex << magic
        << " (expected 0x00000803)";
    throw std::runtime_error(msg.str());
  }
  const std::uint32_t count = io_detail::read_be_u32(in, "image count");
  const std::uint32_t rows = io_detail::read_be_u32(in, "image rows");
  const std::uint32_t cols = io_detail::read_be_u32(in, "image cols");
  std::vector<Matrix> images;
  images.reserve(count);
  std::vector<unsigned char> buffer(static_cast<std::size_t>(rows) * cols);
  for (std::uint32_t k = 0; k < count; ++k) {
    in.read(reinterpret_cast<char*>(buffer.data()),
            static_cast<std::streamsize>(buffer.size()));
    if (!in) {
      std::ostringstream msg;
      msg << "unexpected end of file in image " << k << " (offset "
          << 16 + static_cast<std::uint64_t>(k) * buffer.size() << ")";
      throw std::runtime_error(msg.str());
    }
    Matrix img(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c)
        img(r, c) = buffer[static_cast<std::size_t>(r) * cols + c] / 255.0;
    images.push_back(std::move(img));
  }
  return images;
}

}  // namespace wormhole
