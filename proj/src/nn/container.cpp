// SPDX-License-Identifier: Apache-2.0
#include "tlc/nn/container.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "tlc/common/error.hpp"
#include "tlc/common/hash.hpp"

namespace tlc::nn {

namespace {

static_assert(std::endian::native == std::endian::little, "f32le I/O assumes a little-endian host");

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw LoadError("cannot open " + p.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

const Mat& Container::tensor(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t.value;
  throw LoadError("container has no tensor " + name);
}

bool Container::has(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return true;
  return false;
}

void Container::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format_version"] = kContainerFormatVersion;
  manifest["config"] = config;
  manifest["tensors"] = nlohmann::json::array();
  std::string blob;
  for (const auto& t : tensors) {
    const std::size_t offset = blob.size();
    for (Eigen::Index i = 0; i < t.value.size(); ++i) {
      const float f = static_cast<float>(t.value.data()[i]);
      char bytes[4];
      std::memcpy(bytes, &f, 4);
      blob.append(bytes, 4);
    }
    manifest["tensors"].push_back({{"name", t.name},
                                   {"shape", {t.value.rows(), t.value.cols()}},
                                   {"dtype", "f32le"},
                                   {"offset", offset},
                                   {"length", blob.size() - offset}});
  }
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  std::ofstream(dir / "weights.bin", std::ios::binary).write(blob.data(),
                                                            static_cast<std::streamsize>(blob.size()));
}

Container Container::load(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  if (manifest.value("format_version", -1) != kContainerFormatVersion)
    throw LoadError("container format version mismatch in " + dir.string());
  const std::string blob = read_file(dir / "weights.bin");
  Container c;
  c.config = manifest.value("config", nlohmann::json::object());
  try {
    for (const auto& entry : manifest.at("tensors")) {
      if (entry.at("dtype").get<std::string>() != "f32le")
        throw LoadError("unsupported dtype for " + entry.at("name").get<std::string>());
      const auto rows = entry.at("shape").at(0).get<Eigen::Index>();
      const auto cols = entry.at("shape").at(1).get<Eigen::Index>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto length = entry.at("length").get<std::size_t>();
      if (length != static_cast<std::size_t>(rows * cols) * 4 || offset + length > blob.size())
        throw LoadError("tensor " + entry.at("name").get<std::string>() + " is out of bounds");
      Mat m(rows, cols);
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        float f;
        std::memcpy(&f, blob.data() + offset + 4 * static_cast<std::size_t>(i), 4);
        m.data()[i] = f;
      }
      c.tensors.push_back({entry.at("name").get<std::string>(), std::move(m)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("malformed tensor entry in " + dir.string() + ": " + e.what());
  }
  return c;
}

std::string container_digest(const std::filesystem::path& dir) {
  std::uint64_t h = fnv1a64(read_file(dir / "manifest.json"));
  h = fnv1a64(read_file(dir / "weights.bin"), h);
  return to_hex(h);
}

void append_params(Container& c, const ParamStore& store, const std::string& prefix) {
  for (const auto& p : store.all()) c.tensors.push_back({prefix + p.name, p.value});
}

void assign_params(ParamStore& store, const Container& c, const std::string& prefix) {
  for (int i = 0; i < store.size(); ++i) {
    Parameter& p = store.at(i);
    const Mat& src = c.tensor(prefix + p.name);
    if (src.rows() != p.value.rows() || src.cols() != p.value.cols())
      throw LoadError("tensor " + prefix + p.name + " has the wrong shape");
    p.value = src;
  }
}

}  // namespace tlc::nn
