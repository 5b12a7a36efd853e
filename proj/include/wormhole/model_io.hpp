#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wormhole/cohort_io.hpp"
#include "wormhole/model.hpp"

namespace wormhole {

inline constexpr char kCheckpointMagic[4] = {'O', 'T', 'W', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Versioned tensor container: per tensor, name length u32 + UTF-8 name +
// rank u32 + dims u64[] + float32 data row-major.  The ModelConfig manifest
// sits in a JSON file next to the checkpoint.
inline void save_checkpoint(const std::filesystem::path& path, ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(kCheckpointMagic, 4);
  io_detail::write_raw(out, kCheckpointVersion);
  std::uint32_t count = 0;
  params.for_each_param([&](const std::string&, Param&) { ++count; });
  io_detail::write_raw(out, count);
  params.for_each_param([&](const std::string& name, Param& p) {
    io_detail::write_raw(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    io_detail::write_raw(out, static_cast<std::uint32_t>(2));
    io_detail::write_raw(out, static_cast<std::uint64_t>(p.value.rows()));
    io_detail::write_raw(out, static_cast<std::uint64_t>(p.value.cols()));
    for (Eigen::Index i = 0; i < p.value.rows(); ++i)
      for (Eigen::Index j = 0; j < p.value.cols(); ++j)
        io_detail::write_raw(out, static_cast<float>(p.value(i, j)));
  });
  if (!out) throw std::runtime_error("write failed for " + path.string());
  out.close();

  nlohmann::json manifest;
  manifest["input_dim"] = params.cfg.input_dim;
  manifest["embed_dim"] = params.cfg.embed_dim;
  manifest["n_blocks"] = params.cfg.n_blocks;
  manifest["n_heads"] = params.cfg.n_heads;
  manifest["ffn_hidden"] = params.cfg.ffn_hidden;
  manifest["decoder_points"] = params.cfg.decoder_points;
  std::ofstream meta(io_detail::meta_path(path));
  meta << manifest.dump(2) << "\n";
}

inline ModelParams load_checkpoint(const std::filesystem::path& path) {
  const auto meta = io_detail::meta_path(path);
  if (!std::filesystem::exists(meta))
    throw std::runtime_error("missing model manifest " + meta.string());
  std::ifstream meta_in(meta);
  nlohmann::json j;
  meta_in >> j;
  ModelConfig cfg;
  cfg.input_dim = j.at("input_dim").get<int>();
  cfg.embed_dim = j.at("embed_dim").get<int>();
  cfg.n_blocks = j.at("n_blocks").get<int>();
  cfg.n_heads = j.at("n_heads").get<int>();
  cfg.ffn_hidden = j.at("ffn_hidden").get<int>();
  cfg.decoder_points = j.at("decoder_points").get<int>();
  ModelParams params = make_params(cfg);

  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw std::runtime_error("bad checkpoint magic in " + path.string());
  const auto version = io_detail::read_raw<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const auto count = io_detail::read_raw<std::uint32_t>(in, "tensor count");

  std::map<std::string, Matrix> tensors;
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name_len = io_detail::read_raw<std::uint32_t>(in, "tensor name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw std::runtime_error("unexpected end of file reading tensor name");
    const auto rank = io_detail::read_raw<std::uint32_t>(in, "tensor rank");
    if (rank != 2)
      throw std::runtime_error("unsupported tensor rank " + std::to_string(rank) +
                               " for " + name);
    const auto rows = io_detail::read_raw<std::uint64_t>(in, "tensor rows");
    const auto cols = io_detail::read_raw<std::uint64_t>(in, "tensor cols");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::uint64_t i = 0; i < rows; ++i)
      for (std::uint64_t j = 0; j < cols; ++j)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            io_detail::read_raw<float>(in, "tensor data of " + name);
    tensors.emplace(std::move(name), std::move(m));
  }

  params.for_each_param([&](const std::string& name, Param& p) {
    const auto it = tensors.find(name);
    if (it == tensors.end())
      throw std::runtime_error("checkpoint is missing tensor " + name);
    if (it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols())
      throw std::runtime_error("tensor shape mismatch for " + name);
    p.value = it->second;
  });
  return params;
}

}  // namespace wormhole
