#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace forge {

// Self-describing binary container used for network checkpoints and
// deformation-basis files: a JSON header (kind, hyperparameters, tensor
// directory) followed by raw little-endian float32 blobs.
class Container {
 public:
  Container() = default;
  explicit Container(std::string kind) { meta_["kind"] = std::move(kind); }

  nlohmann::json& meta() { return meta_; }
  const nlohmann::json& meta() const { return meta_; }

  const std::string kind() const { return meta_.value("kind", ""); }

  void put(const std::string& name, const Eigen::VectorXf& data,
           std::vector<int> shape = {});
  void put(const std::string& name, const Eigen::MatrixXf& data);

  bool has(const std::string& name) const { return tensors_.count(name) > 0; }

  // Fetches a tensor; throws ParamsError when missing or when `expect_shape`
  // (if given) does not match the stored shape.
  const Eigen::VectorXf& get(const std::string& name,
                             const std::vector<int>& expect_shape = {}) const;
  Eigen::MatrixXf get_matrix(const std::string& name, int rows, int cols) const;

  const std::vector<int>& shape(const std::string& name) const;
  std::vector<std::string> names() const;

  void save(const std::filesystem::path& path) const;
  static Container load(const std::filesystem::path& path);

 private:
  nlohmann::json meta_;
  std::map<std::string, Eigen::VectorXf> tensors_;
  std::map<std::string, std::vector<int>> shapes_;
};

}  // namespace forge
