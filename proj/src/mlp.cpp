// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#include "fgs/mlp.hpp"

#include "fgs/error.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace fgs {
namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

constexpr std::array<char, 4> kMagic{'H', 'E', 'A', 'D'};

void write_u32(std::ostream &os, std::uint32_t v) { os.write(reinterpret_cast<const char *>(&v), sizeof v); }

std::uint32_t read_u32(std::istream &is) {
    std::uint32_t v = 0;
    if (!is.read(reinterpret_cast<char *>(&v), sizeof v)) {
        throw IoError("truncated HEAD file");
    }
    return v;
}

} // namespace

void TensorFile::put(const std::string &name, const Eigen::MatrixXd &value) { tensors_[name] = value; }

const Eigen::MatrixXd &TensorFile::get(const std::string &name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) {
        throw InvalidInput("tensor '" + name + "' missing from weight file");
    }
    return it->second;
}

TensorFile TensorFile::load(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), 4) || magic != kMagic) {
        throw IoError(path.string() + ": not a HEAD weight file");
    }
    if (read_u32(in) != 1) {
        throw IoError(path.string() + ": unsupported HEAD version");
    }
    const std::uint32_t count = read_u32(in);
    TensorFile file;
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint32_t len = read_u32(in);
        std::string name(len, '\0');
        if (!in.read(name.data(), len)) {
            throw IoError("truncated HEAD file");
        }
        const std::uint32_t rows = read_u32(in);
        const std::uint32_t cols = read_u32(in);
        std::vector<float> buf(static_cast<std::size_t>(rows) * cols);
        if (!in.read(reinterpret_cast<char *>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
            throw IoError("truncated HEAD file");
        }
        Eigen::MatrixXd m(rows, cols);
        for (std::uint32_t r = 0; r < rows; ++r) {
            for (std::uint32_t c = 0; c < cols; ++c) {
                m(r, c) = buf[static_cast<std::size_t>(r) * cols + c];
            }
        }
        file.tensors_[name] = std::move(m);
    }
    return file;
}

void TensorFile::save(const std::filesystem::path &path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out.write(kMagic.data(), 4);
    write_u32(out, 1);
    write_u32(out, static_cast<std::uint32_t>(tensors_.size()));
    for (const auto &[name, m] : tensors_) {
        write_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(out, static_cast<std::uint32_t>(m.rows()));
        write_u32(out, static_cast<std::uint32_t>(m.cols()));
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                const auto v = static_cast<float>(m(r, c));
                out.write(reinterpret_cast<const char *>(&v), sizeof v);
            }
        }
    }
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

AffineStack::AffineStack(std::vector<Layer> layers) : layers_(std::move(layers)) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i].bias.size() != layers_[i].weight.rows()) {
            throw InvalidInput("affine layer bias does not match its weight rows");
        }
        if (i > 0 && layers_[i].weight.cols() != layers_[i - 1].weight.rows()) {
            throw InvalidInput("affine layer sizes do not chain");
        }
    }
}

AffineStack AffineStack::seeded(const std::vector<int> &sizes, std::uint64_t seed, double gain) {
    if (sizes.size() < 2) {
        throw InvalidInput("an affine stack needs at least input and output sizes");
    }
    std::mt19937_64 rng(seed);
    std::vector<Layer> layers;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
        std::normal_distribution<double> dist(0.0, gain / std::sqrt(static_cast<double>(sizes[i])));
        Layer layer{Eigen::MatrixXd(sizes[i + 1], sizes[i]), Eigen::VectorXd::Zero(sizes[i + 1])};
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
                layer.weight(r, c) = dist(rng);
            }
        }
        layers.push_back(std::move(layer));
    }
    return AffineStack(std::move(layers));
}

AffineStack AffineStack::zeros(const std::vector<int> &sizes) {
    if (sizes.size() < 2) {
        throw InvalidInput("an affine stack needs at least input and output sizes");
    }
    std::vector<Layer> layers;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
        layers.push_back({Eigen::MatrixXd::Zero(sizes[i + 1], sizes[i]), Eigen::VectorXd::Zero(sizes[i + 1])});
    }
    return AffineStack(std::move(layers));
}

int AffineStack::input_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols()); }

int AffineStack::output_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows()); }

Eigen::VectorXd AffineStack::forward(const Eigen::VectorXd &x) const {
    if (layers_.empty()) {
        throw InvalidInput("affine stack has no layers");
    }
    if (x.size() != layers_.front().weight.cols()) {
        throw InvalidInput("affine stack input dimension mismatch");
    }
    Eigen::VectorXd h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i].weight * h + layers_[i].bias;
        if (i + 1 < layers_.size()) {
            h = h.cwiseMax(0.0);
        }
    }
    return h;
}

void AffineStack::store(TensorFile &file, const std::string &prefix) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const std::string base = prefix + "." + std::to_string(i);
        file.put(base + ".weight", layers_[i].weight);
        file.put(base + ".bias", layers_[i].bias);
    }
}

AffineStack AffineStack::load(const TensorFile &file, const std::string &prefix) {
    std::vector<Layer> layers;
    for (std::size_t i = 0;; ++i) {
        const std::string base = prefix + "." + std::to_string(i);
        if (!file.contains(base + ".weight")) {
            break;
        }
        const Eigen::MatrixXd &bias = file.get(base + ".bias");
        if (bias.cols() != 1) {
            throw InvalidInput(base + ".bias must be a column vector");
        }
        layers.push_back({file.get(base + ".weight"), bias.col(0)});
    }
    return AffineStack(std::move(layers));
}

} // namespace fgs
