#include "genfusion/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "genfusion/error.hpp"
#include "genfusion/rng.hpp"

namespace genfusion {

using ordered_json = nlohmann::ordered_json;

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::real: return "real";
        case Provenance::generated: return "generated";
        case Provenance::prior: return "prior";
    }
    return "?";
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    fail_validation("unknown split tag '" + s + "'");
}

Provenance provenance_from_string(const std::string& s) {
    if (s == "real") return Provenance::real;
    if (s == "generated") return Provenance::generated;
    if (s == "prior") return Provenance::prior;
    fail_validation("unknown provenance '" + s + "'");
}

std::size_t DatasetManifest::count(Split s) const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [s](const ManifestEntry& e) { return e.split == s; }));
}

void DatasetManifest::validate() const {
    std::set<std::string> seen;
    for (const auto& e : entries) {
        require(!e.image.empty(), "manifest entry has an empty image path");
        require(seen.insert(e.image).second, "duplicate image path '" + e.image + "' in manifest");
    }
}

std::string manifest_to_jsonl(const DatasetManifest& m) {
    m.validate();
    std::string out;
    ordered_json header;
    header["type"] = "header";
    header["format_version"] = m.format_version;
    header["seed"] = m.seed;
    header["count"] = m.entries.size();
    out += header.dump() + "\n";
    for (const auto& e : m.entries) {
        ordered_json j;
        j["image"] = e.image;
        j["annotation"] = e.annotation;
        j["split"] = to_string(e.split);
        j["color"] = e.color;
        j["provenance"] = to_string(e.provenance);
        out += j.dump() + "\n";
    }
    return out;
}

DatasetManifest manifest_from_jsonl(const std::string& text, const std::string& source) {
    DatasetManifest m;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    bool have_header = false;
    auto string_field = [](const ordered_json& j, const char* key, const std::string& where) {
        if (!j.contains(key) || !j[key].is_string()) fail_validation(where + ": missing string field '" + key + "'");
        return j[key].get<std::string>();
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = source + ":" + std::to_string(line_no);
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            fail_validation(where + ": " + e.what());
        }
        if (!have_header) {
            if (!j.contains("type") || j["type"] != "header") fail_validation(where + ": expected header record");
            if (!j.contains("format_version") || !j["format_version"].is_number_integer())
                fail_validation(where + ": missing format_version");
            m.format_version = j["format_version"].get<int>();
            if (m.format_version != DatasetManifest::kFormatVersion)
                fail_validation(where + ": unsupported manifest version " + std::to_string(m.format_version));
            if (!j.contains("seed") || !j["seed"].is_number_unsigned()) fail_validation(where + ": missing seed");
            m.seed = j["seed"].get<std::uint64_t>();
            have_header = true;
            continue;
        }
        ManifestEntry e;
        e.image = string_field(j, "image", where);
        e.annotation = string_field(j, "annotation", where);
        e.split = split_from_string(string_field(j, "split", where));
        e.color = string_field(j, "color", where);
        e.provenance = provenance_from_string(string_field(j, "provenance", where));
        m.entries.push_back(std::move(e));
    }
    if (!have_header) fail_validation(source + ": empty manifest");
    m.validate();
    return m;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeError("cannot write '" + path.string() + "'");
    out << manifest_to_jsonl(m);
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RuntimeError("cannot open manifest '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return manifest_from_jsonl(ss.str(), path.string());
}

DatasetManifest split_manifest(const DatasetManifest& m, std::size_t train_count, std::size_t val_count, Rng& rng) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < m.entries.size(); ++i)
        if (m.entries[i].split != Split::test) pool.push_back(i);
    require(train_count + val_count <= pool.size(),
            "split of " + std::to_string(train_count) + " + " + std::to_string(val_count) + " exceeds the " +
                std::to_string(pool.size()) + " assignable entries");
    for (std::size_t i = pool.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(pool[i - 1], pool[j]);
    }
    DatasetManifest out = m;
    for (std::size_t k = 0; k < pool.size(); ++k) {
        Split s = Split::test;
        if (k < train_count) s = Split::train;
        else if (k < train_count + val_count) s = Split::val;
        out.entries[pool[k]].split = s;
    }
    return out;
}

}  // namespace genfusion
