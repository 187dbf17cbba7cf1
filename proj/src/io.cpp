// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#include "fgs/io.hpp"

#include "fgs/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fgs::io {
namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

using json = nlohmann::json;
namespace fs = std::filesystem;

class Writer {
  public:
    explicit Writer(const fs::path &path) : path_(path), out_(path, std::ios::binary) {
        if (!out_) {
            throw IoError("cannot write " + path.string());
        }
    }
    void magic(const char (&m)[5]) { out_.write(m, 4); }
    template <typename T> void put(T v) { out_.write(reinterpret_cast<const char *>(&v), sizeof v); }
    template <typename T> void put_all(const std::vector<T> &v) {
        out_.write(reinterpret_cast<const char *>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
    }
    void finish() {
        out_.flush();
        if (!out_) {
            throw IoError("failed writing " + path_.string());
        }
    }

  private:
    fs::path path_;
    std::ofstream out_;
};

class Reader {
  public:
    explicit Reader(const fs::path &path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) {
            throw IoError("cannot open " + path.string());
        }
    }
    void expect_magic(const char (&m)[5]) {
        std::array<char, 4> got{};
        if (!in_.read(got.data(), 4) || std::memcmp(got.data(), m, 4) != 0) {
            throw IoError(path_.string() + ": expected " + std::string(m, 4) + " magic");
        }
    }
    template <typename T> T get() {
        T v{};
        if (!in_.read(reinterpret_cast<char *>(&v), sizeof v)) {
            throw IoError(path_.string() + ": truncated file");
        }
        return v;
    }
    template <typename T> std::vector<T> get_all(std::size_t n) {
        std::vector<T> v(n);
        if (!in_.read(reinterpret_cast<char *>(v.data()), static_cast<std::streamsize>(n * sizeof(T)))) {
            throw IoError(path_.string() + ": truncated file");
        }
        return v;
    }

  private:
    fs::path path_;
    std::ifstream in_;
};

json read_json(const fs::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::exception &e) {
        throw InvalidInput(path.string() + ": " + e.what());
    }
}

void write_json(const fs::path &path, const json &doc) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << doc.dump(2) << '\n';
}

void write_ppm_like(const fs::path &path, const char *magic, int width, int height, const std::vector<std::uint8_t> &px) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << magic << '\n' << width << ' ' << height << "\n255\n";
    out.write(reinterpret_cast<const char *>(px.data()), static_cast<std::streamsize>(px.size()));
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

std::vector<double> normalized_depth(const std::vector<double> &depth, const std::vector<std::uint8_t> &valid) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < depth.size(); ++i) {
        if (valid[i]) {
            lo = std::min(lo, depth[i]);
            hi = std::max(hi, depth[i]);
        }
    }
    std::vector<double> t(depth.size(), -1.0);
    const double span = hi > lo ? hi - lo : 1.0;
    for (std::size_t i = 0; i < depth.size(); ++i) {
        if (valid[i]) {
            t[i] = (depth[i] - lo) / span;
        }
    }
    return t;
}

} // namespace

void write_scene(const fs::path &path, const GaussianScene &scene) {
    scene.validate();
    Writer w(path);
    w.magic("FGSC");
    w.put<std::uint32_t>(1);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(scene.size()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(scene.feature_dim));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(scene.layer_offsets.size()));
    for (const auto off : scene.layer_offsets) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(off));
    }
    std::vector<float> record(11 + scene.feature_dim);
    for (const auto &g : scene.gaussians) {
        for (int i = 0; i < 3; ++i) {
            record[i] = static_cast<float>(g.mean[i]);
            record[3 + i] = static_cast<float>(g.scale[i]);
        }
        for (int i = 0; i < 4; ++i) {
            record[6 + i] = static_cast<float>(g.rotation[i]);
        }
        record[10] = static_cast<float>(g.opacity);
        for (std::size_t i = 0; i < scene.feature_dim; ++i) {
            record[11 + i] = static_cast<float>(g.feature[static_cast<Eigen::Index>(i)]);
        }
        w.put_all(record);
    }
    w.finish();
}

GaussianScene read_scene(const fs::path &path) {
    Reader r(path);
    r.expect_magic("FGSC");
    if (r.get<std::uint32_t>() != 1) {
        throw IoError(path.string() + ": unsupported scene version");
    }
    GaussianScene scene;
    const auto n = r.get<std::uint32_t>();
    scene.feature_dim = r.get<std::uint32_t>();
    const auto layers = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < layers; ++i) {
        scene.layer_offsets.push_back(r.get<std::uint32_t>());
    }
    scene.gaussians.reserve(n);
    for (std::uint32_t k = 0; k < n; ++k) {
        const auto rec = r.get_all<float>(11 + scene.feature_dim);
        FeatureGaussian g;
        g.mean = Vec3(rec[0], rec[1], rec[2]);
        g.scale = Vec3(rec[3], rec[4], rec[5]);
        g.rotation = Vec4(rec[6], rec[7], rec[8], rec[9]);
        // f32 storage loses a few ulps of the unit norm.
        if (g.rotation.norm() > 0.0) {
            g.rotation.normalize();
        }
        g.opacity = rec[10];
        g.feature.resize(static_cast<Eigen::Index>(scene.feature_dim));
        for (std::size_t i = 0; i < scene.feature_dim; ++i) {
            g.feature[static_cast<Eigen::Index>(i)] = rec[11 + i];
        }
        scene.gaussians.push_back(std::move(g));
    }
    scene.validate();
    return scene;
}

void write_plane(const fs::path &path, const Plane &plane) {
    Writer w(path);
    w.magic("PLNE");
    w.put<std::uint32_t>(static_cast<std::uint32_t>(plane.height));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(plane.width));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(plane.channels));
    w.put_all(plane.data);
    w.finish();
}

Plane read_plane(const fs::path &path) {
    Reader r(path);
    r.expect_magic("PLNE");
    const auto h = r.get<std::uint32_t>();
    const auto w = r.get<std::uint32_t>();
    const auto c = r.get<std::uint32_t>();
    Plane p;
    p.height = static_cast<int>(h);
    p.width = static_cast<int>(w);
    p.channels = static_cast<int>(c);
    p.data = r.get_all<float>(static_cast<std::size_t>(h) * w * c);
    return p;
}

void write_rig(const fs::path &path, const std::vector<CameraView> &views) {
    const fs::path dir = path.parent_path();
    const std::string stem = path.stem().string();
    json doc;
    doc["views"] = json::array();
    for (std::size_t i = 0; i < views.size(); ++i) {
        const auto &v = views[i];
        v.validate();
        json jv;
        jv["fx"] = v.intrinsics.fx;
        jv["fy"] = v.intrinsics.fy;
        jv["cx"] = v.intrinsics.cx;
        jv["cy"] = v.intrinsics.cy;
        jv["width"] = v.width;
        jv["height"] = v.height;
        jv["timestamp"] = v.timestamp;
        json pose = json::array();
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                pose.push_back(v.camera_to_ego.rotation(r, c));
            }
            pose.push_back(v.camera_to_ego.translation[r]);
        }
        jv["pose"] = pose;
        const std::string base = stem + "_view" + std::to_string(i);
        if (v.ref_depth) {
            Plane d = v.ref_depth->depth;
            for (std::size_t k = 0; k < d.data.size(); ++k) {
                if (!v.ref_depth->valid[k]) {
                    d.data[k] = 0.0f;
                }
            }
            write_plane(dir / (base + "_depth.plne"), d);
            jv["depth"] = base + "_depth.plne";
        }
        if (v.ref_feature) {
            write_plane(dir / (base + "_feature.plne"), *v.ref_feature);
            jv["feature"] = base + "_feature.plne";
        }
        if (v.photo) {
            write_plane(dir / (base + "_photo.plne"), *v.photo);
            jv["photo"] = base + "_photo.plne";
        }
        doc["views"].push_back(jv);
    }
    write_json(path, doc);
}

std::vector<CameraView> read_rig(const fs::path &path) {
    const json doc = read_json(path);
    const fs::path dir = path.parent_path();
    std::vector<CameraView> views;
    try {
        for (const auto &jv : doc.at("views")) {
            CameraView v;
            v.intrinsics = {jv.at("fx").get<double>(), jv.at("fy").get<double>(), jv.at("cx").get<double>(),
                            jv.at("cy").get<double>()};
            v.width = jv.at("width").get<int>();
            v.height = jv.at("height").get<int>();
            v.timestamp = jv.value("timestamp", std::int64_t{0});
            const auto &pose = jv.at("pose");
            if (pose.size() != 12) {
                throw InvalidInput(path.string() + ": pose must hold 12 numbers (3x4 row-major)");
            }
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < 3; ++c) {
                    v.camera_to_ego.rotation(r, c) = pose[static_cast<std::size_t>(r * 4 + c)].get<double>();
                }
                v.camera_to_ego.translation[r] = pose[static_cast<std::size_t>(r * 4 + 3)].get<double>();
            }
            if (jv.contains("depth")) {
                v.ref_depth = DepthMap::from_plane(read_plane(dir / jv["depth"].get<std::string>()));
            }
            if (jv.contains("feature")) {
                v.ref_feature = read_plane(dir / jv["feature"].get<std::string>());
            }
            if (jv.contains("photo")) {
                v.photo = read_plane(dir / jv["photo"].get<std::string>());
            }
            v.validate();
            views.push_back(std::move(v));
        }
    } catch (const json::exception &e) {
        throw InvalidInput(path.string() + ": " + e.what());
    }
    return views;
}

void write_depth_pgm(const fs::path &path, const std::vector<double> &depth, const std::vector<std::uint8_t> &valid,
                     int width, int height) {
    const auto t = normalized_depth(depth, valid);
    std::vector<std::uint8_t> px(t.size(), 0);
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] >= 0.0) {
            // Near is bright.
            px[i] = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - t[i])));
        }
    }
    write_ppm_like(path, "P5", width, height, px);
}

void write_depth_ppm(const fs::path &path, const std::vector<double> &depth, const std::vector<std::uint8_t> &valid,
                     int width, int height) {
    const auto t = normalized_depth(depth, valid);
    std::vector<std::uint8_t> px(t.size() * 3, 0);
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < 0.0) {
            continue;
        }
        const double s = t[i];
        px[3 * i + 0] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(1.5 - std::abs(4.0 * s - 1.0), 0.0, 1.0)));
        px[3 * i + 1] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(1.5 - std::abs(4.0 * s - 2.0), 0.0, 1.0)));
        px[3 * i + 2] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(1.5 - std::abs(4.0 * s - 3.0), 0.0, 1.0)));
    }
    write_ppm_like(path, "P6", width, height, px);
}

Plane depth_plane(const RenderOutput &out) {
    Plane p(out.height, out.width, 1);
    for (std::size_t i = 0; i < out.pixel_count(); ++i) {
        p.data[i] = out.valid[i] ? static_cast<float>(out.depth[i]) : 0.0f;
    }
    return p;
}

Plane feature_plane(const RenderOutput &out) {
    Plane p(out.height, out.width, static_cast<int>(out.feature_dim));
    p.data = out.feature;
    return p;
}

void write_grid(const fs::path &path, const VoxelGrid &grid) {
    const std::size_t n = grid.spec.voxel_count();
    if (grid.occ_mass.size() != n || grid.labels.size() != n) {
        throw InvalidInput("voxel grid payload does not match its dimensions");
    }
    Writer w(path);
    w.magic("VOXG");
    for (int d : grid.spec.dims) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    }
    for (int i = 0; i < 3; ++i) {
        w.put<float>(static_cast<float>(grid.spec.origin[i]));
    }
    w.put<float>(static_cast<float>(grid.spec.voxel_size));
    std::vector<float> occ(grid.occ_mass.begin(), grid.occ_mass.end());
    w.put_all(occ);
    w.put_all(grid.labels);
    w.finish();
}

VoxelGrid read_grid(const fs::path &path) {
    Reader r(path);
    r.expect_magic("VOXG");
    GridSpec spec;
    for (int &d : spec.dims) {
        d = static_cast<int>(r.get<std::uint32_t>());
    }
    for (int i = 0; i < 3; ++i) {
        spec.origin[i] = r.get<float>();
    }
    spec.voxel_size = r.get<float>();
    VoxelGrid grid;
    grid.spec = spec;
    const auto occ = r.get_all<float>(spec.voxel_count());
    grid.occ_mass.assign(occ.begin(), occ.end());
    grid.labels = r.get_all<std::uint16_t>(spec.voxel_count());
    return grid;
}

void write_points(const fs::path &path, const std::vector<Vec3> &points) {
    Writer w(path);
    w.magic("PNTS");
    w.put<std::uint32_t>(static_cast<std::uint32_t>(points.size()));
    w.put<std::uint32_t>(3);
    for (const auto &p : points) {
        for (int i = 0; i < 3; ++i) {
            w.put<float>(static_cast<float>(p[i]));
        }
    }
    w.finish();
}

void write_points_text(const fs::path &path, const std::vector<Vec3> &points) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out.precision(9);
    for (const auto &p : points) {
        out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
    }
}

std::vector<Vec3> read_points(const fs::path &path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) {
        throw IoError("cannot open " + path.string());
    }
    std::array<char, 4> head{};
    probe.read(head.data(), 4);
    const bool binary = probe.gcount() == 4 && std::memcmp(head.data(), "PNTS", 4) == 0;
    probe.close();

    std::vector<Vec3> points;
    if (binary) {
        Reader r(path);
        r.expect_magic("PNTS");
        const auto n = r.get<std::uint32_t>();
        const auto c = r.get<std::uint32_t>();
        if (c != 3) {
            throw IoError(path.string() + ": PNTS must have 3 channels");
        }
        const auto raw = r.get_all<float>(static_cast<std::size_t>(n) * 3);
        points.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            points.emplace_back(raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]);
        }
        return points;
    }
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        double x = 0.0, y = 0.0, z = 0.0;
        if (!(ls >> x)) {
            continue; // blank line
        }
        if (!(ls >> y >> z)) {
            throw InvalidInput(path.string() + ": expected three coordinates per line");
        }
        points.emplace_back(x, y, z);
    }
    return points;
}

TextBank read_bank(const fs::path &path) {
    const json doc = read_json(path);
    const fs::path dir = path.parent_path();
    TextBank bank;
    try {
        const json &entries = doc.is_array() ? doc : doc.at("classes");
        if (doc.is_object() && doc.value("reduce", std::string("max")) == "mean") {
            bank.reduce = TextBank::PromptReduce::Mean;
        }
        for (const auto &je : entries) {
            TextBank::Entry e;
            e.name = je.at("class").get<std::string>();
            e.prompts = je.at("prompts").get<std::vector<std::string>>();
            const Plane emb = read_plane(dir / je.at("embedding_path").get<std::string>());
            if (static_cast<std::size_t>(emb.height) * static_cast<std::size_t>(emb.width) != e.prompts.size()) {
                throw InvalidInput(path.string() + ": embedding rows do not match the prompt count of " + e.name);
            }
            if (bank.feature_dim == 0) {
                bank.feature_dim = static_cast<std::size_t>(emb.channels);
            }
            e.embeddings.resize(static_cast<Eigen::Index>(e.prompts.size()), emb.channels);
            for (std::size_t p = 0; p < e.prompts.size(); ++p) {
                for (int c = 0; c < emb.channels; ++c) {
                    e.embeddings(static_cast<Eigen::Index>(p), c) = emb.data[p * static_cast<std::size_t>(emb.channels) + c];
                }
                // f32 storage loses a few ulps of the unit norm.
                e.embeddings.row(static_cast<Eigen::Index>(p)).normalize();
            }
            bank.entries.push_back(std::move(e));
        }
    } catch (const json::exception &ex) {
        throw InvalidInput(path.string() + ": " + ex.what());
    }
    bank.validate();
    return bank;
}

void write_bank(const fs::path &path, const TextBank &bank) {
    bank.validate();
    const fs::path dir = path.parent_path();
    const std::string stem = path.stem().string();
    json doc = json::array();
    for (std::size_t i = 0; i < bank.entries.size(); ++i) {
        const auto &e = bank.entries[i];
        Plane emb(static_cast<int>(e.prompts.size()), 1, static_cast<int>(bank.feature_dim));
        for (std::size_t p = 0; p < e.prompts.size(); ++p) {
            for (std::size_t c = 0; c < bank.feature_dim; ++c) {
                emb.data[p * bank.feature_dim + c] =
                    static_cast<float>(e.embeddings(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(c)));
            }
        }
        const std::string file = stem + "_class" + std::to_string(i) + ".plne";
        write_plane(dir / file, emb);
        doc.push_back({{"class", e.name}, {"prompts", e.prompts}, {"embedding_path", file}});
    }
    write_json(path, doc);
}

} // namespace fgs::io
