#include "esm/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace esm {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[] = "esmtensor 1";

void require(bool ok, const std::string& msg) {
    if (!ok) throw input_error(msg);
}

static_assert(std::endian::native == std::endian::little,
              "TensorFile payload assumes a little-endian host");

}  // namespace

void write_tensor(const fs::path& path, const Image& img, const std::vector<std::string>& channels,
                  const std::map<std::string, std::string>& meta) {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), "cannot write " + path.string());
    out << kMagic << "\n";
    out << "dtype float32\n";
    out << "shape " << img.h() << " " << img.w() << " " << img.c() << "\n";
    if (!channels.empty()) {
        out << "channels";
        for (const auto& c : channels) out << " " << c;
        out << "\n";
    }
    for (const auto& [k, v] : meta) out << "meta " << k << " " << v << "\n";
    out << "data\n";
    std::vector<float> buf(img.size());
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(img.data()[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    require(static_cast<bool>(out), "short write to " + path.string());
}

Image read_tensor(const fs::path& path, TensorHeader* header) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), "missing tensor file " + path.string());
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && line == kMagic,
            path.string() + ": not a tensor file");
    TensorHeader hdr;
    bool have_shape = false;
    while (std::getline(in, line)) {
        if (line == "data") break;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "dtype") {
            std::string dt;
            ls >> dt;
            require(dt == "float32", path.string() + ": unsupported dtype " + dt);
        } else if (key == "shape") {
            int v;
            while (ls >> v) hdr.shape.push_back(v);
            require(hdr.shape.size() == 3, path.string() + ": expected rank-3 shape");
            have_shape = true;
        } else if (key == "channels") {
            std::string c;
            while (ls >> c) hdr.channels.push_back(c);
        } else if (key == "meta") {
            std::string k;
            ls >> k;
            std::string v;
            std::getline(ls, v);
            if (!v.empty() && v.front() == ' ') v.erase(0, 1);
            hdr.meta[k] = v;
        } else {
            throw input_error(path.string() + ": unknown header field " + key);
        }
    }
    require(have_shape, path.string() + ": header has no shape");
    Image img(hdr.shape[0], hdr.shape[1], hdr.shape[2]);
    std::vector<float> buf(img.size());
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    require(in.gcount() == static_cast<std::streamsize>(buf.size() * sizeof(float)),
            path.string() + ": truncated payload");
    for (size_t i = 0; i < buf.size(); ++i) img.data()[i] = buf[i];
    if (header) *header = std::move(hdr);
    return img;
}

namespace {

std::vector<std::string> state_channels(int n) {
    std::vector<std::string> ch = {"phi", "theta", "depth"};
    for (int k = 0; k < n; ++k) ch.push_back("f" + std::to_string(k));
    ch.push_back("var_depth");
    for (int k = 0; k < n; ++k) ch.push_back("var_f" + std::to_string(k));
    return ch;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

void write_state(const fs::path& path, const EgosphereState& state, const EsmConfig& cfg) {
    const int h = state.h(), w = state.w(), n = state.n;
    Image packed(h, w, (3 + n) + (1 + n));
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            for (int k = 0; k < 3 + n; ++k) packed(i, j, k) = state.mean(i, j, k);
            for (int k = 0; k < 1 + n; ++k) packed(i, j, 3 + n + k) = state.var(i, j, k);
        }
    }
    std::map<std::string, std::string> meta = {
        {"n", std::to_string(n)},
        {"frame_id", std::to_string(state.frame_id)},
        {"prior_depth", fmt(cfg.prior_depth)},
        {"prior_var", fmt(cfg.prior_var)},
        {"dup_var_threshold", fmt(cfg.dup_var_threshold)},
        {"rel_depth_threshold", fmt(cfg.rel_depth_threshold)},
        {"smooth_patch", std::to_string(cfg.smooth_patch)},
    };
    write_tensor(path, packed, state_channels(n), meta);
}

std::pair<EgosphereState, EsmConfig> read_state(const fs::path& path) {
    TensorHeader hdr;
    Image packed = read_tensor(path, &hdr);
    require(hdr.meta.count("n") > 0, path.string() + ": state file missing n");
    int n = std::stoi(hdr.meta.at("n"));
    require(packed.c() == 4 + 2 * n, path.string() + ": state channel count mismatch");
    require(packed.w() == 2 * packed.h(), path.string() + ": state not 2:1 equirectangular");

    EsmConfig cfg;
    cfg.h_s = packed.h();
    cfg.w_s = packed.w();
    cfg.n = n;
    auto get = [&](const char* k, double dflt) {
        auto it = hdr.meta.find(k);
        return it == hdr.meta.end() ? dflt : std::stod(it->second);
    };
    cfg.prior_depth = get("prior_depth", cfg.prior_depth);
    cfg.prior_var = get("prior_var", cfg.prior_var);
    cfg.dup_var_threshold = get("dup_var_threshold", cfg.dup_var_threshold);
    cfg.rel_depth_threshold = get("rel_depth_threshold", cfg.rel_depth_threshold);
    cfg.smooth_patch = static_cast<int>(get("smooth_patch", cfg.smooth_patch));

    EgosphereState s;
    s.n = n;
    s.frame_id = hdr.meta.count("frame_id") ? std::stoll(hdr.meta.at("frame_id")) : 0;
    s.mean = Image(packed.h(), packed.w(), 3 + n);
    s.var = Image(packed.h(), packed.w(), 1 + n);
    for (int i = 0; i < packed.h(); ++i) {
        for (int j = 0; j < packed.w(); ++j) {
            for (int k = 0; k < 3 + n; ++k) s.mean(i, j, k) = packed(i, j, k);
            for (int k = 0; k < 1 + n; ++k) s.var(i, j, k) = packed(i, j, 3 + n + k);
        }
    }
    return {std::move(s), cfg};
}

std::vector<std::pair<int64_t, Pose6>> read_trajectory(const fs::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "missing trajectory file " + path.string());
    std::vector<std::pair<int64_t, Pose6>> out;
    std::string line;
    int64_t prev = -1;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        int64_t idx;
        double tx, ty, tz, rx, ry, rz;
        require(static_cast<bool>(ls >> idx >> tx >> ty >> tz >> rx >> ry >> rz),
                path.string() + ": malformed trajectory line: " + line);
        require(idx > prev, path.string() + ": non-monotonic frame indices");
        prev = idx;
        out.push_back({idx, Pose6({tx, ty, tz}, RotVec(rx, ry, rz))});
    }
    return out;
}

void write_trajectory(const fs::path& path, const std::vector<std::pair<int64_t, Pose6>>& poses) {
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot write " + path.string());
    out.precision(17);
    for (const auto& [idx, p] : poses) {
        out << idx << " " << p.t.x() << " " << p.t.y() << " " << p.t.z() << " " << p.r.r.x() << " "
            << p.r.r.y() << " " << p.r.r.z() << "\n";
    }
}

void convert_tum_trajectory(const fs::path& in_path, const fs::path& out_path) {
    std::ifstream in(in_path);
    require(static_cast<bool>(in), "missing trajectory file " + in_path.string());
    std::vector<std::pair<int64_t, Pose6>> out;
    std::string line;
    int64_t idx = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        double ts, tx, ty, tz, qx, qy, qz, qw;
        require(static_cast<bool>(ls >> ts >> tx >> ty >> tz >> qx >> qy >> qz >> qw),
                in_path.string() + ": malformed TUM line: " + line);
        Eigen::Quaterniond q(qw, qx, qy, qz);
        require(q.norm() > 1e-9, in_path.string() + ": zero quaternion");
        q.normalize();
        out.push_back({idx++, Pose6({tx, ty, tz}, matrix_to_rotvec(q.toRotationMatrix()))});
    }
    write_trajectory(out_path, out);
}

void write_manifest(const fs::path& path, const SequenceManifest& m) {
    nlohmann::json j;
    j["format"] = "esm-sequence-v1";
    j["frame_count"] = m.frame_count;
    j["n"] = m.n;
    j["intrinsics"] = {{"fx", m.intrinsics.fx}, {"fy", m.intrinsics.fy}, {"cx", m.intrinsics.cx},
                       {"cy", m.intrinsics.cy}, {"width", m.intrinsics.width},
                       {"height", m.intrinsics.height}};
    j["pose_format"] = m.pose_format;
    auto co = m.camera_offset.vec();
    j["camera_offset"] = {co[0], co[1], co[2], co[3], co[4], co[5]};
    j["default_depth_var"] = m.default_depth_var;
    j["default_feature_var"] = m.default_feature_var;
    j["pose_increment_var"] = m.pose_increment_var;
    j["seed"] = m.seed;
    j["esm_config"] = {{"h_s", m.cfg.h_s},
                       {"w_s", m.cfg.w_s},
                       {"n", m.cfg.n},
                       {"prior_depth", m.cfg.prior_depth},
                       {"prior_var", m.cfg.prior_var},
                       {"dup_var_threshold", m.cfg.dup_var_threshold},
                       {"rel_depth_threshold", m.cfg.rel_depth_threshold},
                       {"smooth_patch", m.cfg.smooth_patch}};
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot write " + path.string());
    out << j.dump(2) << "\n";
}

SequenceManifest read_manifest(const fs::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "missing manifest " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw input_error(path.string() + ": manifest parse error: " + e.what());
    }
    SequenceManifest m;
    try {
        require(j.at("format") == "esm-sequence-v1", path.string() + ": unknown sequence format");
        m.frame_count = j.at("frame_count").get<int>();
        m.n = j.at("n").get<int>();
        const auto& in_j = j.at("intrinsics");
        m.intrinsics.fx = in_j.at("fx").get<double>();
        m.intrinsics.fy = in_j.at("fy").get<double>();
        m.intrinsics.cx = in_j.at("cx").get<double>();
        m.intrinsics.cy = in_j.at("cy").get<double>();
        m.intrinsics.width = in_j.at("width").get<int>();
        m.intrinsics.height = in_j.at("height").get<int>();
        m.pose_format = j.at("pose_format").get<std::string>();
        const auto& co = j.at("camera_offset");
        Vec6 v;
        for (int k = 0; k < 6; ++k) v[k] = co.at(k).get<double>();
        m.camera_offset = Pose6::from_vec(v);
        m.default_depth_var = j.at("default_depth_var").get<double>();
        m.default_feature_var = j.at("default_feature_var").get<double>();
        m.pose_increment_var = j.value("pose_increment_var", 0.0);
        m.seed = j.value("seed", uint64_t{0});
        const auto& cj = j.at("esm_config");
        m.cfg.h_s = cj.at("h_s").get<int>();
        m.cfg.w_s = cj.at("w_s").get<int>();
        m.cfg.n = cj.at("n").get<int>();
        m.cfg.prior_depth = cj.at("prior_depth").get<double>();
        m.cfg.prior_var = cj.at("prior_var").get<double>();
        m.cfg.dup_var_threshold = cj.at("dup_var_threshold").get<double>();
        m.cfg.rel_depth_threshold = cj.at("rel_depth_threshold").get<double>();
        m.cfg.smooth_patch = cj.at("smooth_patch").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw input_error(path.string() + ": manifest field error: " + e.what());
    }
    return m;
}

fs::path Sequence::frame_stem(const fs::path& dir, int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d", i);
    return dir / "frames" / buf;
}

Sequence::Sequence(const fs::path& dir) : dir_(dir) {
    manifest_ = read_manifest(dir / "manifest.json");
    auto traj = read_trajectory(dir / "traj.txt");
    require(static_cast<int>(traj.size()) == manifest_.frame_count,
            dir.string() + ": trajectory length differs from manifest frame count");
    poses_.reserve(traj.size());
    for (const auto& [idx, p] : traj) poses_.push_back(p);
}

ProjectiveFrame Sequence::frame(int i) const {
    require(i >= 0 && i < manifest_.frame_count, "frame index out of range");
    fs::path stem = frame_stem(dir_, i);
    ProjectiveFrame f;
    f.intrinsics = manifest_.intrinsics;
    f.depth = read_tensor(stem.string() + ".depth.tensor");
    const int h = manifest_.intrinsics.height, w = manifest_.intrinsics.width;
    require(f.depth.h() == h && f.depth.w() == w && f.depth.c() == 1,
            stem.string() + ".depth.tensor: shape mismatch with manifest");
    if (manifest_.n > 0) {
        f.features = read_tensor(stem.string() + ".feat.tensor");
        require(f.features.h() == h && f.features.w() == w && f.features.c() == manifest_.n,
                stem.string() + ".feat.tensor: shape mismatch with manifest");
    } else {
        f.features = Image(h, w, 0);
    }
    fs::path var_path = stem.string() + ".var.tensor";
    if (fs::exists(var_path)) {
        f.var = read_tensor(var_path);
        require(f.var.h() == h && f.var.w() == w && f.var.c() == 1 + manifest_.n,
                var_path.string() + ": shape mismatch with manifest");
    } else {
        f.var = Image(h, w, 1 + manifest_.n, manifest_.default_feature_var);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c)
                f.var(r, c, 0) = f.depth(r, c, 0) > 0 ? manifest_.default_depth_var
                                                      : manifest_.cfg.prior_var;
    }
    f.pose = manifest_.camera_offset;
    return f;
}

Sequence load_sequence(const fs::path& dir) { return Sequence(dir); }

void save_frame(const fs::path& dir, int index, const ProjectiveFrame& frame) {
    fs::create_directories(dir / "frames");
    fs::path stem = Sequence::frame_stem(dir, index);
    write_tensor(stem.string() + ".depth.tensor", frame.depth, {"depth"});
    if (frame.n() > 0) write_tensor(stem.string() + ".feat.tensor", frame.features);
    write_tensor(stem.string() + ".var.tensor", frame.var);
}

void write_preview_ppm(const fs::path& path, const EgosphereState& state, double depth_max) {
    const int h = state.h(), w = state.w(), n = state.n;
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), "cannot write " + path.string());
    out << "P6\n" << w << " " << 2 * h << "\n255\n";
    auto to8 = [](double v) {
        return static_cast<unsigned char>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
    };
    std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
    for (int i = 0; i < h; ++i) {  // features panel
        for (int j = 0; j < w; ++j) {
            for (int k = 0; k < 3; ++k)
                row[j * 3 + k] = to8(k < n ? state.mean(i, j, 3 + k) : 0.0);
        }
        out.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    for (int i = 0; i < h; ++i) {  // depth panel
        for (int j = 0; j < w; ++j) {
            unsigned char g = to8(state.mean(i, j, 2) / depth_max);
            row[j * 3 + 0] = row[j * 3 + 1] = row[j * 3 + 2] = g;
        }
        out.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
}

void write_pointcloud_ply(const fs::path& path, const EgosphereState& state, double prior_var) {
    const int h = state.h(), w = state.w(), n = state.n;
    std::vector<std::array<double, 6>> pts;
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            if (state.var(i, j, 0) >= prior_var) continue;
            double d = state.mean(i, j, 2);
            if (d <= 0) continue;
            Eigen::Vector3d p =
                polar_to_cartesian({state.mean(i, j, 0), state.mean(i, j, 1), d});
            double r = n > 0 ? state.mean(i, j, 3) : 0.5;
            double g = n > 1 ? state.mean(i, j, 4) : r;
            double b = n > 2 ? state.mean(i, j, 5) : r;
            pts.push_back({p.x(), p.y(), p.z(), r, g, b});
        }
    }
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot write " + path.string());
    out << "ply\nformat ascii 1.0\nelement vertex " << pts.size()
        << "\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nproperty "
           "uchar green\nproperty uchar blue\nend_header\n";
    out.precision(9);
    for (const auto& p : pts) {
        out << p[0] << " " << p[1] << " " << p[2];
        for (int k = 3; k < 6; ++k)
            out << " " << static_cast<int>(std::clamp(p[k], 0.0, 1.0) * 255.0 + 0.5);
        out << "\n";
    }
}

uint64_t state_checksum(const EgosphereState& state) {
    uint64_t hash = 1469598103934665603ull;  // FNV-1a
    auto mix = [&hash](const std::vector<double>& v) {
        const unsigned char* bytes = reinterpret_cast<const unsigned char*>(v.data());
        size_t nb = v.size() * sizeof(double);
        for (size_t i = 0; i < nb; ++i) {
            hash ^= bytes[i];
            hash *= 1099511628211ull;
        }
    };
    mix(state.mean.data());
    mix(state.var.data());
    return hash;
}

}  // namespace esm
