#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "esm/core.hpp"
#include "esm/geom.hpp"
#include "esm/state.hpp"

namespace esm {

/// On-disk tensor: text header (dtype, shape, channel names, metadata)
/// followed by a raw little-endian float32 payload, row-major.
struct TensorHeader {
    std::vector<int> shape;
    std::vector<std::string> channels;
    std::map<std::string, std::string> meta;
};

void write_tensor(const std::filesystem::path& path, const Image& img,
                  const std::vector<std::string>& channels = {},
                  const std::map<std::string, std::string>& meta = {});
Image read_tensor(const std::filesystem::path& path, TensorHeader* header = nullptr);

/// Whole belief in one file: mean and variance channels concatenated,
/// with the filter config snapshot in the header metadata.
void write_state(const std::filesystem::path& path, const EgosphereState& state,
                 const EsmConfig& cfg);
std::pair<EgosphereState, EsmConfig> read_state(const std::filesystem::path& path);

// Trajectory text: one frame per line, "index tx ty tz rx ry rz".
std::vector<std::pair<int64_t, Pose6>> read_trajectory(const std::filesystem::path& path);
void write_trajectory(const std::filesystem::path& path,
                      const std::vector<std::pair<int64_t, Pose6>>& poses);

// TUM-style "timestamp tx ty tz qx qy qz qw" lines to the native format.
void convert_tum_trajectory(const std::filesystem::path& in, const std::filesystem::path& out);

struct SequenceManifest {
    int frame_count = 0;
    int n = 3;
    Intrinsics intrinsics;
    std::string pose_format = "index_xyz_rotvec";
    Pose6 camera_offset;          // camera body in agent frame, fixed
    double default_depth_var = 1e-6;
    double default_feature_var = 1e-6;
    double pose_increment_var = 0.0;  // diagonal of the derived increment covariance
    uint64_t seed = 0;
    EsmConfig cfg;
};

void write_manifest(const std::filesystem::path& path, const SequenceManifest& m);
SequenceManifest read_manifest(const std::filesystem::path& path);

/// A sequence directory opened for replay: manifest + absolute agent poses
/// + lazily loaded frames.
class Sequence {
  public:
    explicit Sequence(const std::filesystem::path& dir);

    const SequenceManifest& manifest() const { return manifest_; }
    const std::vector<Pose6>& poses() const { return poses_; }
    int frame_count() const { return manifest_.frame_count; }

    /// Frame i with pose re-expressed as camera-in-agent (the fixed offset).
    ProjectiveFrame frame(int i) const;

    static std::filesystem::path frame_stem(const std::filesystem::path& dir, int i);

  private:
    std::filesystem::path dir_;
    SequenceManifest manifest_;
    std::vector<Pose6> poses_;
};

Sequence load_sequence(const std::filesystem::path& dir);

void save_frame(const std::filesystem::path& dir, int index, const ProjectiveFrame& frame);

// Cosmetic exports; never read back.
void write_preview_ppm(const std::filesystem::path& path, const EgosphereState& state,
                       double depth_max = 10.0);
void write_pointcloud_ply(const std::filesystem::path& path, const EgosphereState& state,
                          double prior_var);

uint64_t state_checksum(const EgosphereState& state);

}  // namespace esm
