// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fgs {

/// Named f32 matrices stored in a "HEAD" sidecar file:
///   "HEAD", u32 version=1, u32 count, then per tensor
///   u32 name_len, name bytes, u32 rows, u32 cols, rows*cols f32 (row-major).
/// All integers and floats are little-endian.
class TensorFile {
  public:
    void put(const std::string &name, const Eigen::MatrixXd &value);
    bool contains(const std::string &name) const { return tensors_.count(name) != 0; }
    const Eigen::MatrixXd &get(const std::string &name) const;
    const std::map<std::string, Eigen::MatrixXd> &tensors() const { return tensors_; }

    static TensorFile load(const std::filesystem::path &path);
    void save(const std::filesystem::path &path) const;

  private:
    std::map<std::string, Eigen::MatrixXd> tensors_;
};

/// Stack of affine layers y = W x + b. Hidden layers use ReLU, the last layer
/// is linear; output nonlinearities belong to the caller.
class AffineStack {
  public:
    struct Layer {
        Eigen::MatrixXd weight; // out x in
        Eigen::VectorXd bias;
    };

    AffineStack() = default;
    explicit AffineStack(std::vector<Layer> layers);

    /// Layer sizes {in, hidden..., out} with N(0, 1/in) weights and zero bias.
    static AffineStack seeded(const std::vector<int> &sizes, std::uint64_t seed, double gain = 1.0);
    static AffineStack zeros(const std::vector<int> &sizes);

    bool empty() const { return layers_.empty(); }
    int input_dim() const;
    int output_dim() const;
    const std::vector<Layer> &layers() const { return layers_; }
    std::vector<Layer> &layers() { return layers_; }

    /// Throws InvalidInput on an input dimension mismatch.
    Eigen::VectorXd forward(const Eigen::VectorXd &x) const;

    /// Stores layers as "<prefix>.<i>.weight" / "<prefix>.<i>.bias".
    void store(TensorFile &file, const std::string &prefix) const;
    /// Loads consecutive layers under prefix; empty stack when none exist.
    static AffineStack load(const TensorFile &file, const std::string &prefix);

  private:
    std::vector<Layer> layers_;
};

} // namespace fgs
