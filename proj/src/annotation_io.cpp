#include "genfusion/annotation_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "genfusion/error.hpp"

namespace genfusion {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RuntimeError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeError("cannot write '" + path.string() + "'");
    out << text;
}

double number_field(const ordered_json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) fail_validation(where + ": missing field '" + key + "'");
    if (!obj[key].is_number()) fail_validation(where + ": field '" + key + "' is not a number");
    return obj[key].get<double>();
}

}  // namespace

std::string annotations_to_json(const ImageAnnotations& ann) {
    ordered_json j;
    j["image"] = ann.image;
    j["width"] = ann.width;
    j["height"] = ann.height;
    j["boxes"] = ordered_json::array();
    for (const auto& b : ann.boxes) {
        ordered_json jb;
        jb["x_min"] = b.box.x_min;
        jb["y_min"] = b.box.y_min;
        jb["x_max"] = b.box.x_max;
        jb["y_max"] = b.box.y_max;
        jb["class"] = b.box.class_label;
        if (b.confidence) jb["confidence"] = *b.confidence;
        j["boxes"].push_back(std::move(jb));
    }
    return j.dump(2) + "\n";
}

ImageAnnotations annotations_from_json(const std::string& text, const std::string& source) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail_validation(source + ": " + e.what());
    }
    if (!j.is_object()) fail_validation(source + ": top level is not an object");
    ImageAnnotations ann;
    if (!j.contains("image") || !j["image"].is_string()) fail_validation(source + ": missing string field 'image'");
    ann.image = j["image"].get<std::string>();
    for (const char* key : {"width", "height"})
        if (!j.contains(key) || !j[key].is_number_integer())
            fail_validation(source + ": missing integer field '" + key + "'");
    ann.width = j["width"].get<int>();
    ann.height = j["height"].get<int>();
    if (!j.contains("boxes") || !j["boxes"].is_array()) fail_validation(source + ": missing array field 'boxes'");
    std::size_t index = 0;
    for (const auto& jb : j["boxes"]) {
        const std::string where = source + ": boxes[" + std::to_string(index++) + "]";
        if (!jb.is_object()) fail_validation(where + " is not an object");
        AnnotatedBox b;
        b.box.x_min = number_field(jb, "x_min", where);
        b.box.y_min = number_field(jb, "y_min", where);
        b.box.x_max = number_field(jb, "x_max", where);
        b.box.y_max = number_field(jb, "y_max", where);
        if (!jb.contains("class") || !jb["class"].is_string()) fail_validation(where + ": missing string field 'class'");
        b.box.class_label = jb["class"].get<std::string>();
        if (!b.box.valid()) fail_validation(where + ": box has non-positive area");
        if (jb.contains("confidence")) {
            const double c = number_field(jb, "confidence", where);
            if (c < 0.0 || c > 1.0) fail_validation(where + ": confidence outside [0, 1]");
            b.confidence = c;
        }
        ann.boxes.push_back(std::move(b));
    }
    return ann;
}

void write_annotations_json(const std::filesystem::path& path, const ImageAnnotations& ann) {
    write_text(path, annotations_to_json(ann));
}

ImageAnnotations read_annotations_json(const std::filesystem::path& path) {
    return annotations_from_json(read_text(path), path.string());
}

std::string annotations_to_yolo(const ImageAnnotations& ann, const std::vector<std::string>& classes) {
    require(ann.width > 0 && ann.height > 0, "YOLO export needs positive image dimensions");
    std::string out;
    char line[128];
    for (const auto& b : ann.boxes) {
        auto it = std::find(classes.begin(), classes.end(), b.box.class_label);
        if (it == classes.end()) fail_validation("class '" + b.box.class_label + "' has no YOLO index");
        std::snprintf(line, sizeof line, "%d %.6f %.6f %.6f %.6f\n", static_cast<int>(it - classes.begin()),
                      b.box.center_x() / ann.width, b.box.center_y() / ann.height, b.box.width() / ann.width,
                      b.box.height() / ann.height);
        out += line;
        if (b.confidence) {
            out.pop_back();
            std::snprintf(line, sizeof line, " %.6f\n", *b.confidence);
            out += line;
        }
    }
    return out;
}

ImageAnnotations annotations_from_yolo(const std::string& text, const std::string& image, int width, int height,
                                       const std::vector<std::string>& classes, const std::string& source) {
    require(width > 0 && height > 0, "YOLO import needs positive image dimensions");
    ImageAnnotations ann{image, width, height, {}};
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    const char* fields[] = {"class_index", "cx", "cy", "w", "h"};
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        const std::string where = source + ":" + std::to_string(line_no);
        long cls = 0;
        double v[4];
        if (!(ls >> cls)) fail_validation(where + ": bad field '" + fields[0] + "'");
        for (int k = 0; k < 4; ++k)
            if (!(ls >> v[k])) fail_validation(where + ": bad field '" + fields[k + 1] + "'");
        std::optional<double> conf;
        if (double c; ls >> c) {
            if (c < 0.0 || c > 1.0) fail_validation(where + ": confidence outside [0, 1]");
            conf = c;
        } else if (!ls.eof()) {
            fail_validation(where + ": bad field 'confidence'");
        }
        ls.clear();
        std::string extra;
        if (ls >> extra) fail_validation(where + ": trailing data '" + extra + "'");
        if (cls < 0 || cls >= static_cast<long>(classes.size()))
            fail_validation(where + ": class index " + std::to_string(cls) + " out of range");
        if (v[2] <= 0.0 || v[3] <= 0.0) fail_validation(where + ": box has non-positive area");
        AnnotatedBox b;
        b.box.x_min = (v[0] - v[2] / 2) * width;
        b.box.x_max = (v[0] + v[2] / 2) * width;
        b.box.y_min = (v[1] - v[3] / 2) * height;
        b.box.y_max = (v[1] + v[3] / 2) * height;
        b.box.class_label = classes[static_cast<std::size_t>(cls)];
        b.confidence = conf;
        ann.boxes.push_back(std::move(b));
    }
    return ann;
}

}  // namespace genfusion
