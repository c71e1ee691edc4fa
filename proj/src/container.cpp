#include "forge/container.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "forge/errors.hpp"

namespace forge {

namespace {
constexpr char kMagic[8] = {'F', 'O', 'R', 'G', 'E', 'B', 'I', 'N'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void Container::put(const std::string& name, const Eigen::VectorXf& data,
                    std::vector<int> shape) {
  if (shape.empty()) shape = {static_cast<int>(data.size())};
  long total = 1;
  for (int d : shape) total *= d;
  require(total == data.size(), "ParamsError",
          "shape does not match data size for tensor " + name);
  tensors_[name] = data;
  shapes_[name] = std::move(shape);
}

void Container::put(const std::string& name, const Eigen::MatrixXf& data) {
  Eigen::VectorXf flat = Eigen::Map<const Eigen::VectorXf>(data.data(), data.size());
  put(name, flat, {static_cast<int>(data.rows()), static_cast<int>(data.cols())});
}

const Eigen::VectorXf& Container::get(const std::string& name,
                                      const std::vector<int>& expect_shape) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) fail("ParamsError", "missing tensor " + name);
  if (!expect_shape.empty() && shapes_.at(name) != expect_shape) {
    std::string got, want;
    for (int d : shapes_.at(name)) got += std::to_string(d) + " ";
    for (int d : expect_shape) want += std::to_string(d) + " ";
    fail("ParamsError", "tensor " + name + " has shape [ " + got +
                            "] but [ " + want + "] was expected");
  }
  return it->second;
}

Eigen::MatrixXf Container::get_matrix(const std::string& name, int rows, int cols) const {
  const Eigen::VectorXf& v = get(name, {rows, cols});
  return Eigen::Map<const Eigen::MatrixXf>(v.data(), rows, cols);
}

const std::vector<int>& Container::shape(const std::string& name) const {
  auto it = shapes_.find(name);
  if (it == shapes_.end()) fail("ParamsError", "missing tensor " + name);
  return it->second;
}

std::vector<std::string> Container::names() const {
  std::vector<std::string> out;
  out.reserve(tensors_.size());
  for (const auto& [name, _] : tensors_) out.push_back(name);
  return out;
}

void Container::save(const std::filesystem::path& path) const {
  if (!path.parent_path().empty()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  nlohmann::json header = meta_;
  header["tensors"] = nlohmann::json::array();
  for (const auto& [name, data] : tensors_) {
    header["tensors"].push_back(
        {{"name", name}, {"shape", shapes_.at(name)}, {"count", data.size()}});
  }
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("ExportError", "cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const std::uint32_t version = kVersion;
  const auto hlen = static_cast<std::uint32_t>(hs.size());
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(hs.data(), hs.size());
  for (const auto& [name, data] : tensors_) {
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
  }
  if (!out) fail("ExportError", "short write to " + path.string());
}

Container Container::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("ParamsError", "cannot open " + path.string());

  char magic[8];
  std::uint32_t version = 0, hlen = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0 || version != kVersion)
    fail("ParamsError", "not a forge container: " + path.string());

  std::string hs(hlen, '\0');
  in.read(hs.data(), hlen);
  nlohmann::json header = nlohmann::json::parse(hs, nullptr, false);
  if (header.is_discarded()) fail("ParamsError", "corrupt header in " + path.string());

  Container c;
  c.meta_ = header;
  c.meta_.erase("tensors");
  for (const auto& t : header.at("tensors")) {
    const std::string name = t.at("name");
    const auto count = t.at("count").get<std::int64_t>();
    Eigen::VectorXf data(count);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (!in) fail("ParamsError", "truncated tensor " + name + " in " + path.string());
    c.tensors_[name] = std::move(data);
    c.shapes_[name] = t.at("shape").get<std::vector<int>>();
  }
  return c;
}

}  // namespace forge
