// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "conesplat/field.hpp"
#include "conesplat/types.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace conesplat {

namespace fs = std::filesystem;

/// Property names of the binary PLY layout, in file order.
std::vector<std::string> ply_property_names(int sh_order);

/// Binary little-endian PLY with float32 properties x y z, nx ny nz (zero), f_dc_0..2,
/// f_rest_* (channel-major), opacity (logit), scale_0..2 (log), rot_0..3 (w first).
void save_ply(const GaussianScene& scene, const fs::path& path);
std::string ply_bytes(const GaussianScene& scene);

/// Reads the layout above; extra properties are ignored and any scalar type is accepted.
GaussianScene load_ply(const fs::path& path);

void save_cameras(const std::vector<Camera>& cameras, const fs::path& path);
std::vector<Camera> load_cameras(const fs::path& path);

/// 8-bit RGB PNG of the image clamped to [0, 1].
void save_png(const ImageBuffer& image, const fs::path& path);
/// RGB PNG as linear floats in [0, 1] (value / 255).
ImageBuffer load_png(const fs::path& path);

/// Headerless row-major interleaved RGB float32.
void save_raw(const ImageBuffer& image, const fs::path& path);
ImageBuffer load_raw(const fs::path& path, int width, int height);

void save_analytic_field(const AnalyticField& field, const fs::path& path);
AnalyticField load_analytic_field(const fs::path& path);

/// Dataset manifest: JSON with camera files and image lists for the training
/// split and an optional held-out split, plus an optional analytic field file.
/// Paths are relative to the manifest directory.
struct Manifest {
    fs::path cameras;
    std::vector<fs::path> images;
    std::optional<fs::path> holdout_cameras;
    std::vector<fs::path> holdout_images;
    std::optional<fs::path> field;
    Vec3 background = Vec3::Zero();
};

Manifest load_manifest(const fs::path& path);
void save_manifest(const Manifest& manifest, const fs::path& path);

enum class Split { Train, Holdout };

/// Loads cameras and images of one split; paths resolve against the manifest directory.
Dataset load_dataset(const fs::path& manifest_path, Split split = Split::Train);

/// Writes cameras, PNG images and the manifest of a dataset into `dir`.
void write_dataset(const fs::path& dir, const Dataset& train, const Dataset* holdout,
                   const AnalyticField* field);

/// Loads either a dense grid checkpoint or an analytic field description (.json).
std::unique_ptr<RadianceField> load_field(const fs::path& path);

} // namespace conesplat
