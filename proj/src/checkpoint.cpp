#include "dnclab/checkpoint.hpp"

#include "dnclab/config.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace dnclab {

namespace fs = std::filesystem;

namespace {

constexpr const char* kFormat = "dnclab.checkpoint";
constexpr int kVersion = 1;

void to_little_endian(char* bytes, std::size_t count) {
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < count; ++i) std::reverse(bytes + 8 * i, bytes + 8 * i + 8);
  }
}

Json shape_of(Index rows, Index cols, bool vector) {
  return vector ? Json::array({rows}) : Json::array({rows, cols});
}

void write_file(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

}  // namespace

void save_checkpoint(const fs::path& manifest, const Checkpoint& ckpt, const std::string& blob_name) {
  if (blob_name.empty() || blob_name.find('/') != std::string::npos) {
    throw ConfigError("checkpoint blob name must be a plain file name");
  }
  std::string blob;
  Json tensors = Json::array();
  ckpt.params.for_each_tensor([&](const std::string& name, const auto& t) {
    using T = std::decay_t<decltype(t)>;
    const std::size_t offset = blob.size();
    const std::size_t count = static_cast<std::size_t>(t.size());
    blob.resize(offset + 8 * count);
    std::memcpy(blob.data() + offset, t.data(), 8 * count);
    to_little_endian(blob.data() + offset, count);
    tensors.push_back({{"name", name}, {"shape", shape_of(t.rows(), t.cols(), T::ColsAtCompileTime == 1)}, {"offset", offset}});
  });

  const fs::path dir = manifest.parent_path();
  write_file(dir / blob_name, blob);
  Json j = {{"format", kFormat},
            {"version", kVersion},
            {"task", to_string(ckpt.task)},
            {"iteration", ckpt.iteration},
            {"config", to_json(ckpt.config)},
            {"blob", blob_name},
            {"dtype", "float64"},
            {"byte_order", "little"},
            {"size_bytes", blob.size()},
            {"tensors", tensors}};
  write_file(manifest, j.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw ConfigError("cannot open checkpoint '" + manifest.string() + "'");
  Checkpoint ckpt;
  std::string blob_name;
  Json tensors;
  std::size_t size_bytes = 0;
  try {
    const Json j = Json::parse(in);
    if (j.at("format") != kFormat) throw ConfigError("'" + manifest.string() + "' is not a dnclab checkpoint");
    if (j.at("version") != kVersion) throw ConfigError("unsupported checkpoint version in '" + manifest.string() + "'");
    if (j.at("dtype") != "float64" || j.at("byte_order") != "little") {
      throw ConfigError("unsupported tensor encoding in '" + manifest.string() + "'");
    }
    ckpt.task = task_kind_from_string(j.at("task").get<std::string>());
    ckpt.iteration = j.at("iteration").get<long>();
    ckpt.config = dnc_config_from_json(j.at("config"));
    blob_name = j.at("blob").get<std::string>();
    size_bytes = j.at("size_bytes").get<std::size_t>();
    tensors = j.at("tensors");
  } catch (const Json::exception& e) {
    throw ConfigError("malformed checkpoint '" + manifest.string() + "': " + e.what());
  }
  if (blob_name.find('/') != std::string::npos) throw ConfigError("checkpoint blob name must be a plain file name");

  std::ifstream blob_in(manifest.parent_path() / blob_name, std::ios::binary);
  if (!blob_in) throw ConfigError("missing checkpoint blob '" + blob_name + "'");
  std::string blob((std::istreambuf_iterator<char>(blob_in)), std::istreambuf_iterator<char>());
  if (blob.size() != size_bytes) throw ConfigError("checkpoint blob '" + blob_name + "' has the wrong size");

  ckpt.params = DncParams::zeros(ckpt.config);
  if (!tensors.is_array()) throw ConfigError("checkpoint tensor table must be an array");
  std::size_t index = 0;
  ckpt.params.for_each_tensor([&](const std::string& name, auto& t) {
    using T = std::decay_t<decltype(t)>;
    if (index >= tensors.size()) throw ConfigError("checkpoint is missing tensor '" + name + "'");
    const Json& entry = tensors[index++];
    try {
      if (entry.at("name") != name) {
        throw ConfigError("checkpoint tensor " + std::to_string(index - 1) + " is '" +
                          entry.at("name").get<std::string>() + "', expected '" + name + "'");
      }
      if (entry.at("shape") != shape_of(t.rows(), t.cols(), T::ColsAtCompileTime == 1)) {
        throw ConfigError("checkpoint tensor '" + name + "' has shape " + entry.at("shape").dump() + ", expected " +
                          shape_of(t.rows(), t.cols(), T::ColsAtCompileTime == 1).dump());
      }
      const std::size_t offset = entry.at("offset").get<std::size_t>();
      const std::size_t count = static_cast<std::size_t>(t.size());
      if (offset > blob.size() || blob.size() - offset < 8 * count) {
        throw ConfigError("checkpoint tensor '" + name + "' lies outside the blob");
      }
      to_little_endian(blob.data() + offset, count);
      std::memcpy(t.data(), blob.data() + offset, 8 * count);
    } catch (const Json::exception& e) {
      throw ConfigError("malformed checkpoint tensor entry: " + std::string(e.what()));
    }
  });
  if (index != tensors.size()) throw ConfigError("checkpoint has unexpected extra tensors");
  return ckpt;
}

}  // namespace dnclab
