#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "relharm/envlight.hpp"
#include "relharm/image.hpp"

namespace relharm {

enum class Geometry { sphere, capsule, bust };

std::string to_string(Geometry g);
Geometry geometry_from_string(const std::string& s);

/// Parametric subject in camera units: the orthographic frame spans [-1, 1] on
/// both axes, x to the right and y up. The camera looks along +z so visible
/// normals have a negative z component.
struct SubjectSpec {
    Geometry geometry = Geometry::sphere;
    double cx = 0.0;
    double cy = 0.0;
    double radius = 0.5;
    double half_length = 0.0;  // capsule only
    Rgb albedo{0.7, 0.7, 0.7};
    double specular_strength = 0.0;
    double specular_exponent = 16.0;
    int subject_id = 0;

    void validate() const;
};

struct RenderResult {
    Image linear;  // pre-tonemap radiance, zero outside coverage
    Image fg;      // tonemapped LDR
    Mask alpha;
};

/// Renders the subject lit by `env`. The camera frame is yawed/pitched like
/// `view` so lighting stays consistent with a background projected with the
/// same crop. Throws ContractError("subject out of frame") when the
/// silhouette leaves the frame.
RenderResult render_subject(const SubjectSpec& subject, const EnvMap& env, int size, const CropSpec& view = {});

/// out = alpha * fg + (1 - alpha) * bg
Image composite(const Image& fg, const Mask& alpha, const Image& bg);

struct TupleMeta {
    int id = 0;
    SubjectSpec subject;
    int env_a = 0;
    double rot_a = 0.0;
    int env_b = 0;
    double rot_b = 0.0;
    CropSpec crop;
    std::uint64_t seed = 0;
};

struct TrainingTuple {
    Image x_a;
    Mask m;
    Image y_b;
    EnvMap z_b;
    Image z_thumb;
    Image x_b;
    TupleMeta meta;
};

/// Renders one tuple. The input composites the source-lit subject over the
/// target background, which is the situation the harmonizer faces at
/// inference.
TrainingTuple render_tuple(const SubjectSpec& subject, const EnvMap& env_a, const EnvMap& env_b, const CropSpec& crop_b,
                           int size, std::uint64_t seed);

/// Checks the TrainingTuple invariants; throws std::runtime_error on violation.
void validate_tuple(const TrainingTuple& t);

struct Range {
    double lo;
    double hi;
};

/// Procedural lighting: sky/ground ambient gradient plus 1..3 Gaussian lobes,
/// each with a tight core and a broad halo.
struct EnvGenConfig {
    int height = 32;
    int min_blobs = 1;
    int max_blobs = 3;
    Range ambient{0.05, 0.35};
    Range peak{4.0, 14.0};
    Range halo{0.3, 1.2};
    Range sharpness{0.04, 0.12};  // angular std-dev of the core, radians
    Range elevation{-0.2, 0.8};   // sin(elevation) range of lobe directions
    Range azimuth{-kPi, kPi};     // lobe azimuth, 0 is the view direction
};

EnvMap generate_envmap(const EnvGenConfig& cfg, std::uint64_t seed);
SubjectSpec generate_subject(int subject_id, std::uint64_t seed, const std::vector<Geometry>& geometries);

struct DatasetConfig {
    int size = 32;
    int n_subjects = 10;
    int n_envs = 20;
    std::uint64_t pool_seed = 1;
    EnvGenConfig env;
    Range fov_deg{40.0, 90.0};
    Range yaw{0.0, 0.0};
    Range pitch{-0.1, 0.1};
    bool rotate_envs = true;
    std::vector<Geometry> geometries{Geometry::sphere, Geometry::capsule, Geometry::bust};
};

/// Deterministic pools derived from the config.
std::vector<SubjectSpec> subject_pool(const DatasetConfig& cfg);
std::vector<EnvMap> env_pool(const DatasetConfig& cfg);

/// Samples tuple metadata (subject, env pair, rotations, crop) for index `i`.
TupleMeta sample_tuple_meta(const DatasetConfig& cfg, const std::vector<SubjectSpec>& subjects, int i,
                            std::uint64_t seed);
TrainingTuple render_from_meta(const DatasetConfig& cfg, const std::vector<EnvMap>& envs, const TupleMeta& meta);

nlohmann::json dataset_config_to_json(const DatasetConfig& c);
DatasetConfig dataset_config_from_json(const nlohmann::json& j);

/// Writes `<root>/manifest.tsv`, `<root>/config.json` and per-tuple PNG/ENVM
/// files. Same config and seed give byte-identical output.
void build_dataset(const DatasetConfig& cfg, int n_tuples, std::uint64_t seed, const std::filesystem::path& root);

/// One manifest row as read back from disk.
struct ManifestRow {
    TupleMeta meta;
    std::string x_a, m, y_b, x_b, z_thumb, z_b;
    std::string provenance;  // empty for light-stage data
    std::uint64_t content_hash = 0;
};

struct Dataset {
    std::filesystem::path root;
    DatasetConfig config;
    std::vector<ManifestRow> rows;

    TrainingTuple load(std::size_t i) const;
    std::size_t size() const { return rows.size(); }
};

Dataset open_dataset(const std::filesystem::path& root);

/// Reloads every tuple and checks its invariants and content hash; returns the
/// number of tuples checked.
std::size_t validate_dataset(const std::filesystem::path& root);

/// FNV-1a over the manifest bytes.
std::uint64_t manifest_hash(const std::filesystem::path& root);

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 14695981039346656037ull);
std::uint64_t file_hash(const std::filesystem::path& path, std::uint64_t h = 14695981039346656037ull);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// Manifest plumbing shared with the synthesized-pair writer.
std::string manifest_header();
std::string manifest_line(const ManifestRow& row);
void write_tuple_files(const std::filesystem::path& root, const TrainingTuple& t, ManifestRow& row);
void write_dataset_config(const std::filesystem::path& root, const DatasetConfig& cfg);

}  // namespace relharm
