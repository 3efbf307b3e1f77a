#include "genie/model/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "genie/error.hpp"

namespace genie::model {

static_assert(std::endian::native == std::endian::little, "checkpoint blob is written in host byte order");

namespace {

std::uint32_t crc32_of(const std::vector<char>& blob) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* p = reinterpret_cast<const Bytef*>(blob.data());
  std::size_t left = blob.size();
  while (left > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    left -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, GenieModel<float>& model, const nlohmann::json& metadata) {
  nlohmann::json manifest = nlohmann::json::array();
  std::vector<char> blob;
  for (const auto& p : model.named_parameters()) {
    manifest.push_back({{"name", p.name}, {"shape", p.tensor->shape()}, {"offset", blob.size()}});
    const auto* bytes = reinterpret_cast<const char*>(p.tensor->data());
    blob.insert(blob.end(), bytes, bytes + p.tensor->size() * sizeof(float));
  }
  const nlohmann::json header = {{"format", "genie-checkpoint"}, {"version", kCheckpointVersion},
                                 {"config", model.config()},     {"parameters", manifest},
                                 {"blob_bytes", blob.size()},    {"crc32", crc32_of(blob)},
                                 {"metadata", metadata}};

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp);
    out << header.dump() << '\n';
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw CheckpointError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::string where = "checkpoint " + path.string() + ": ";
  std::string line;
  if (!std::getline(in, line)) throw CheckpointError(where + "missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(where + "unreadable header (" + e.what() + ")");
  }
  if (header.value("format", "") != "genie-checkpoint") throw CheckpointError(where + "not a checkpoint");
  const int version = header.value("version", -1);
  if (version != kCheckpointVersion)
    throw CheckpointError(where + "unsupported version " + std::to_string(version));

  std::vector<char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() != header.value("blob_bytes", std::size_t{0}))
    throw CheckpointError(where + "blob is " + std::to_string(blob.size()) + " bytes, header says " +
                          std::to_string(header.value("blob_bytes", std::size_t{0})));
  if (crc32_of(blob) != header.value("crc32", std::uint32_t{0})) throw CheckpointError(where + "checksum mismatch");

  ModelConfig config;
  try {
    config = header.at("config").get<ModelConfig>();
  } catch (const std::exception& e) {
    throw CheckpointError(where + "bad config (" + e.what() + ")");
  }
  GenieModel<float> model(config);
  auto params = model.named_parameters();
  const auto& manifest = header.at("parameters");
  if (manifest.size() != params.size())
    throw CheckpointError(where + "manifest lists " + std::to_string(manifest.size()) + " tensors, model has " +
                          std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = manifest[i];
    const auto& p = params[i];
    if (entry.value("name", "") != p.name) throw CheckpointError(where + "unexpected tensor " + entry.dump());
    if (entry.at("shape").get<nn::Shape>() != p.tensor->shape())
      throw CheckpointError(where + "shape mismatch for " + p.name);
    const auto offset = entry.at("offset").get<std::size_t>();
    const std::size_t bytes = p.tensor->size() * sizeof(float);
    if (offset > blob.size() || blob.size() - offset < bytes)
      throw CheckpointError(where + "tensor " + p.name + " runs past the blob");
    std::memcpy(p.tensor->data(), blob.data() + offset, bytes);
  }
  return {std::move(model), header.value("metadata", nlohmann::json::object())};
}

}  // namespace genie::model
