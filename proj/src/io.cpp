// Copyright Contributors to the conesplat Project
// SPDX-License-Identifier: Apache-2.0

#include "conesplat/io.hpp"

#include <json.hpp>
#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace conesplat {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

using nlohmann::json;

namespace {

std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw DomainError("cannot open " + path.string() + " for writing");
    }
    return os;
}

std::ifstream open_in(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DomainError("cannot open " + path.string());
    }
    return is;
}

json read_json(const fs::path& path) {
    auto is = open_in(path);
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw DomainError(path.string() + ": " + e.what());
    }
}

void write_json(const json& j, const fs::path& path) {
    auto os = open_out(path);
    os << j.dump(2) << '\n';
}

template <typename T>
std::vector<double> to_vec(const T& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Vec3 vec3_from(const json& j) {
    if (!j.is_array() || j.size() != 3) {
        throw DomainError("expected a 3-vector");
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

int sh_order_from_rest(std::size_t rest) {
    for (int order = 0; order <= 3; ++order) {
        if (3 * (static_cast<std::size_t>(sh_coeff_count(order)) - 1) == rest) {
            return order;
        }
    }
    throw DomainError("PLY has an unsupported number of f_rest properties");
}

std::size_t ply_type_size(const std::string& t) {
    static const std::map<std::string, std::size_t> sizes = {
        {"char", 1},   {"uchar", 1},  {"int8", 1},    {"uint8", 1},  {"short", 2},
        {"ushort", 2}, {"int16", 2},  {"uint16", 2},  {"int", 4},    {"uint", 4},
        {"int32", 4},  {"uint32", 4}, {"float", 4},   {"float32", 4}, {"double", 8},
        {"float64", 8}};
    const auto it = sizes.find(t);
    if (it == sizes.end()) {
        throw DomainError("unsupported PLY property type '" + t + "'");
    }
    return it->second;
}

double ply_read_scalar(const std::string& t, const char* p) {
    auto get = [p]<typename T>(T) {
        T v;
        std::memcpy(&v, p, sizeof(T));
        return static_cast<double>(v);
    };
    if (t == "float" || t == "float32") return get(float{});
    if (t == "double" || t == "float64") return get(double{});
    if (t == "char" || t == "int8") return get(std::int8_t{});
    if (t == "uchar" || t == "uint8") return get(std::uint8_t{});
    if (t == "short" || t == "int16") return get(std::int16_t{});
    if (t == "ushort" || t == "uint16") return get(std::uint16_t{});
    if (t == "int" || t == "int32") return get(std::int32_t{});
    return get(std::uint32_t{});
}

} // namespace

std::vector<std::string> ply_property_names(int sh_order) {
    std::vector<std::string> names = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
    const int rest = 3 * (sh_coeff_count(sh_order) - 1);
    for (int i = 0; i < rest; ++i) {
        names.push_back("f_rest_" + std::to_string(i));
    }
    names.push_back("opacity");
    for (const char* n : {"scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"}) {
        names.emplace_back(n);
    }
    return names;
}

std::string ply_bytes(const GaussianScene& scene) {
    const auto names = ply_property_names(scene.sh_order);
    const int coeffs = sh_coeff_count(scene.sh_order);
    std::ostringstream os(std::ios::binary);
    os << "ply\nformat binary_little_endian 1.0\n";
    os << "comment iteration " << scene.iteration << '\n';
    os << "element vertex " << scene.primitives.size() << '\n';
    for (const auto& n : names) {
        os << "property float " << n << '\n';
    }
    os << "end_header\n";
    std::vector<float> row(names.size());
    for (const auto& p : scene.primitives) {
        if (p.sh.size() != static_cast<std::size_t>(3 * coeffs)) {
            throw DomainError("primitive SH size does not match the scene order");
        }
        std::size_t k = 0;
        for (int a = 0; a < 3; ++a) row[k++] = static_cast<float>(p.position[a]);
        for (int a = 0; a < 3; ++a) row[k++] = 0.0f;
        for (int c = 0; c < 3; ++c) row[k++] = static_cast<float>(p.sh[static_cast<std::size_t>(c)]);
        // f_rest is channel-major: all coefficients of red, then green, then blue.
        for (int c = 0; c < 3; ++c) {
            for (int l = 1; l < coeffs; ++l) {
                row[k++] = static_cast<float>(p.sh[static_cast<std::size_t>(l * 3 + c)]);
            }
        }
        row[k++] = static_cast<float>(p.opacity_logit);
        for (int a = 0; a < 3; ++a) row[k++] = static_cast<float>(p.log_scale[a]);
        for (int a = 0; a < 4; ++a) row[k++] = static_cast<float>(p.rotation[a]);
        os.write(reinterpret_cast<const char*>(row.data()),
                 static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    return os.str();
}

void save_ply(const GaussianScene& scene, const fs::path& path) {
    const std::string bytes = ply_bytes(scene);
    auto os = open_out(path);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) {
        throw DomainError("failed writing " + path.string());
    }
}

GaussianScene load_ply(const fs::path& path) {
    auto is = open_in(path);
    std::string line;
    if (!std::getline(is, line) || line != "ply") {
        throw DomainError(path.string() + " is not a PLY file");
    }
    struct Prop {
        std::string type;
        std::string name;
        std::size_t offset;
    };
    std::vector<Prop> props;
    std::size_t stride = 0;
    std::size_t count = 0;
    bool in_vertex = false;
    bool seen_vertex = false;
    std::uint64_t iteration = 0;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "end_header") {
            break;
        }
        if (word == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "binary_little_endian") {
                throw DomainError("only binary_little_endian PLY is supported");
            }
        } else if (word == "comment") {
            std::string key;
            ls >> key;
            if (key == "iteration") {
                ls >> iteration;
            }
        } else if (word == "element") {
            std::string name;
            ls >> name;
            if (seen_vertex) {
                throw DomainError("PLY elements after 'vertex' are not supported");
            }
            in_vertex = name == "vertex";
            if (in_vertex) {
                ls >> count;
                seen_vertex = true;
            } else {
                std::size_t n = 0;
                ls >> n;
                if (n != 0) {
                    throw DomainError("PLY elements before 'vertex' are not supported");
                }
            }
        } else if (word == "property") {
            std::string type, name;
            ls >> type;
            if (type == "list") {
                throw DomainError("PLY list properties are not supported");
            }
            ls >> name;
            if (in_vertex) {
                props.push_back({type, name, stride});
                stride += ply_type_size(type);
            }
        }
    }
    if (!is || !seen_vertex) {
        throw DomainError(path.string() + ": malformed PLY header");
    }
    std::map<std::string, const Prop*> by_name;
    std::size_t rest = 0;
    for (const auto& p : props) {
        by_name[p.name] = &p;
        if (p.name.rfind("f_rest_", 0) == 0) {
            ++rest;
        }
    }
    const int order = sh_order_from_rest(rest);
    // Normals are written as zeros for viewer compatibility and not required on load.
    auto names = ply_property_names(order);
    std::erase_if(names, [](const std::string& n) { return n == "nx" || n == "ny" || n == "nz"; });
    std::vector<const Prop*> layout;
    for (const auto& n : names) {
        const auto it = by_name.find(n);
        if (it == by_name.end()) {
            throw DomainError("PLY is missing property '" + n + "'");
        }
        layout.push_back(it->second);
    }

    GaussianScene scene;
    scene.sh_order = order;
    scene.iteration = iteration;
    const int coeffs = sh_coeff_count(order);
    std::vector<char> buf(stride);
    std::vector<double> row(names.size());
    scene.primitives.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        is.read(buf.data(), static_cast<std::streamsize>(stride));
        if (!is) {
            throw DomainError(path.string() + ": truncated vertex data");
        }
        for (std::size_t k = 0; k < layout.size(); ++k) {
            row[k] = ply_read_scalar(layout[k]->type, buf.data() + layout[k]->offset);
        }
        GaussianPrimitive p = make_primitive(order);
        std::size_t k = 0;
        for (int a = 0; a < 3; ++a) p.position[a] = row[k++];
        for (int c = 0; c < 3; ++c) p.sh[static_cast<std::size_t>(c)] = row[k++];
        for (int c = 0; c < 3; ++c) {
            for (int l = 1; l < coeffs; ++l) {
                p.sh[static_cast<std::size_t>(l * 3 + c)] = row[k++];
            }
        }
        p.opacity_logit = row[k++];
        for (int a = 0; a < 3; ++a) p.log_scale[a] = row[k++];
        for (int a = 0; a < 4; ++a) p.rotation[a] = row[k++];
        scene.primitives.push_back(std::move(p));
    }
    return scene;
}

void save_cameras(const std::vector<Camera>& cameras, const fs::path& path) {
    json arr = json::array();
    for (const auto& c : cameras) {
        const Eigen::Matrix<double, 3, 3, Eigen::RowMajor> r = c.rotation;
        arr.push_back({{"fx", c.fx},
                       {"fy", c.fy},
                       {"cx", c.cx},
                       {"cy", c.cy},
                       {"width", c.width},
                       {"height", c.height},
                       {"R", to_vec(r)},
                       {"t", to_vec(c.translation)}});
    }
    write_json(arr, path);
}

std::vector<Camera> load_cameras(const fs::path& path) {
    const json arr = read_json(path);
    if (!arr.is_array()) {
        throw DomainError(path.string() + ": expected an array of cameras");
    }
    std::vector<Camera> out;
    try {
        for (const auto& j : arr) {
            Camera c;
            c.fx = j.at("fx").get<double>();
            c.fy = j.at("fy").get<double>();
            c.cx = j.at("cx").get<double>();
            c.cy = j.at("cy").get<double>();
            c.width = j.at("width").get<int>();
            c.height = j.at("height").get<int>();
            const auto r = j.at("R").get<std::vector<double>>();
            const auto t = j.at("t").get<std::vector<double>>();
            if (r.size() != 9 || t.size() != 3) {
                throw DomainError("camera R must have 9 values and t 3 values");
            }
            for (int a = 0; a < 3; ++a) {
                for (int b = 0; b < 3; ++b) {
                    c.rotation(a, b) = r[static_cast<std::size_t>(3 * a + b)];
                }
                c.translation[a] = t[static_cast<std::size_t>(a)];
            }
            c.validate();
            out.push_back(c);
        }
    } catch (const json::exception& e) {
        throw DomainError(path.string() + ": " + e.what());
    }
    return out;
}

void save_png(const ImageBuffer& image, const fs::path& path) {
    std::vector<png_byte> bytes(image.data().size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        const double v = std::clamp(image.data()[i], 0.0, 1.0);
        bytes[i] = static_cast<png_byte>(std::lround(v * 255.0));
    }
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width());
    img.height = static_cast<png_uint_32>(image.height());
    img.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.c_str(), 0, bytes.data(), 0, nullptr)) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw DomainError("cannot write " + path.string() + ": " + msg);
    }
}

ImageBuffer load_png(const fs::path& path) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str())) {
        throw DomainError("cannot read " + path.string() + ": " + img.message);
    }
    img.format = PNG_FORMAT_RGB;
    std::vector<png_byte> bytes(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, bytes.data(), 0, nullptr)) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw DomainError("cannot decode " + path.string() + ": " + msg);
    }
    ImageBuffer out(static_cast<int>(img.width), static_cast<int>(img.height));
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        out.data()[i] = bytes[i] / 255.0;
    }
    return out;
}

void save_raw(const ImageBuffer& image, const fs::path& path) {
    std::vector<float> f(image.data().begin(), image.data().end());
    auto os = open_out(path);
    os.write(reinterpret_cast<const char*>(f.data()),
             static_cast<std::streamsize>(f.size() * sizeof(float)));
}

ImageBuffer load_raw(const fs::path& path, int width, int height) {
    ImageBuffer out(width, height);
    std::vector<float> f(out.data().size());
    auto is = open_in(path);
    is.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
    if (!is) {
        throw DomainError(path.string() + ": raw image is smaller than expected");
    }
    std::copy(f.begin(), f.end(), out.data().begin());
    return out;
}

namespace {

const char* kind_name(ShapeKind k) {
    switch (k) {
    case ShapeKind::Sphere:
        return "sphere";
    case ShapeKind::Box:
        return "box";
    case ShapeKind::Slab:
        return "slab";
    }
    return "sphere";
}

ShapeKind kind_from(const std::string& s) {
    if (s == "sphere") return ShapeKind::Sphere;
    if (s == "box") return ShapeKind::Box;
    if (s == "slab") return ShapeKind::Slab;
    throw DomainError("unknown shape kind '" + s + "'");
}

} // namespace

void save_analytic_field(const AnalyticField& field, const fs::path& path) {
    json shapes = json::array();
    for (const auto& s : field.shapes()) {
        const Eigen::Matrix<double, 3, 3, Eigen::RowMajor> g = s.color_gradient;
        shapes.push_back({{"kind", kind_name(s.kind)},
                          {"center", to_vec(s.center)},
                          {"size", to_vec(s.size)},
                          {"normal", to_vec(s.normal)},
                          {"density", s.density},
                          {"color", to_vec(s.color)},
                          {"color_gradient", to_vec(g)},
                          {"softness", s.softness},
                          {"texture_amplitude", to_vec(s.texture_amplitude)},
                          {"texture_frequency", s.texture_frequency}});
    }
    const json j = {{"type", "analytic"},
                    {"bounds", {{"lo", to_vec(field.bounds().lo)}, {"hi", to_vec(field.bounds().hi)}}},
                    {"shapes", shapes}};
    write_json(j, path);
}

AnalyticField load_analytic_field(const fs::path& path) {
    const json j = read_json(path);
    try {
        Aabb bounds{vec3_from(j.at("bounds").at("lo")), vec3_from(j.at("bounds").at("hi"))};
        std::vector<Shape> shapes;
        for (const auto& js : j.at("shapes")) {
            Shape s;
            s.kind = kind_from(js.at("kind").get<std::string>());
            s.center = vec3_from(js.at("center"));
            s.size = vec3_from(js.at("size"));
            s.normal = vec3_from(js.value("normal", json::array({0.0, 0.0, 1.0})));
            s.density = js.at("density").get<double>();
            s.color = vec3_from(js.at("color"));
            if (js.contains("color_gradient")) {
                const auto g = js.at("color_gradient").get<std::vector<double>>();
                if (g.size() != 9) {
                    throw DomainError("color_gradient needs 9 values");
                }
                for (int a = 0; a < 3; ++a) {
                    for (int b = 0; b < 3; ++b) {
                        s.color_gradient(a, b) = g[static_cast<std::size_t>(3 * a + b)];
                    }
                }
            }
            s.softness = js.value("softness", 0.0);
            if (js.contains("texture_amplitude")) {
                s.texture_amplitude = vec3_from(js.at("texture_amplitude"));
            }
            s.texture_frequency = js.value("texture_frequency", 0.0);
            shapes.push_back(s);
        }
        return AnalyticField(std::move(shapes), bounds);
    } catch (const json::exception& e) {
        throw DomainError(path.string() + ": " + e.what());
    }
}

Manifest load_manifest(const fs::path& path) {
    const json j = read_json(path);
    Manifest m;
    try {
        m.cameras = j.at("cameras").get<std::string>();
        for (const auto& s : j.at("images")) {
            m.images.emplace_back(s.get<std::string>());
        }
        if (j.contains("holdout")) {
            m.holdout_cameras = fs::path(j["holdout"].at("cameras").get<std::string>());
            for (const auto& s : j["holdout"].at("images")) {
                m.holdout_images.emplace_back(s.get<std::string>());
            }
        }
        if (j.contains("field")) {
            m.field = fs::path(j["field"].get<std::string>());
        }
        if (j.contains("background")) {
            m.background = vec3_from(j["background"]);
        }
    } catch (const json::exception& e) {
        throw DomainError(path.string() + ": " + e.what());
    }
    return m;
}

void save_manifest(const Manifest& m, const fs::path& path) {
    json j;
    j["cameras"] = m.cameras.generic_string();
    j["images"] = json::array();
    for (const auto& p : m.images) {
        j["images"].push_back(p.generic_string());
    }
    if (m.holdout_cameras) {
        j["holdout"]["cameras"] = m.holdout_cameras->generic_string();
        j["holdout"]["images"] = json::array();
        for (const auto& p : m.holdout_images) {
            j["holdout"]["images"].push_back(p.generic_string());
        }
    }
    if (m.field) {
        j["field"] = m.field->generic_string();
    }
    j["background"] = to_vec(m.background);
    write_json(j, path);
}

Dataset load_dataset(const fs::path& manifest_path, Split split) {
    const Manifest m = load_manifest(manifest_path);
    const fs::path base = manifest_path.parent_path();
    Dataset d;
    d.background = m.background;
    const bool holdout = split == Split::Holdout;
    if (holdout && !m.holdout_cameras) {
        throw DomainError("manifest has no held-out split");
    }
    d.cameras = load_cameras(base / (holdout ? *m.holdout_cameras : m.cameras));
    const auto& images = holdout ? m.holdout_images : m.images;
    if (images.size() != d.cameras.size()) {
        throw DomainError("manifest lists " + std::to_string(images.size()) + " images for " +
                          std::to_string(d.cameras.size()) + " cameras");
    }
    for (std::size_t i = 0; i < images.size(); ++i) {
        ImageBuffer img = load_png(base / images[i]);
        if (img.width() != d.cameras[i].width || img.height() != d.cameras[i].height) {
            throw DomainError("image " + images[i].string() + " does not match its camera");
        }
        d.images.push_back(std::move(img));
    }
    return d;
}

void write_dataset(const fs::path& dir, const Dataset& train, const Dataset* holdout,
                   const AnalyticField* field) {
    fs::create_directories(dir / "images");
    Manifest m;
    m.background = train.background;
    m.cameras = "cameras.json";
    save_cameras(train.cameras, dir / m.cameras);
    char name[64];
    for (std::size_t i = 0; i < train.images.size(); ++i) {
        std::snprintf(name, sizeof(name), "images/train_%03zu.png", i);
        save_png(train.images[i], dir / name);
        m.images.emplace_back(name);
    }
    if (holdout && !holdout->empty()) {
        m.holdout_cameras = fs::path("holdout_cameras.json");
        save_cameras(holdout->cameras, dir / *m.holdout_cameras);
        for (std::size_t i = 0; i < holdout->images.size(); ++i) {
            std::snprintf(name, sizeof(name), "images/holdout_%03zu.png", i);
            save_png(holdout->images[i], dir / name);
            m.holdout_images.emplace_back(name);
        }
    }
    if (field) {
        m.field = fs::path("field.json");
        save_analytic_field(*field, dir / *m.field);
    }
    save_manifest(m, dir / "manifest.json");
}

std::unique_ptr<RadianceField> load_field(const fs::path& path) {
    if (path.extension() == ".json") {
        return std::make_unique<AnalyticField>(load_analytic_field(path));
    }
    return std::make_unique<DenseGridField>(DenseGridField::load(path));
}

} // namespace conesplat
