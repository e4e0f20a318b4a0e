#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace genfusion {

class Rng;

enum class Split { train, val, test };
enum class Provenance { real, generated, prior };

std::string to_string(Split s);
std::string to_string(Provenance p);
Split split_from_string(const std::string& s);
Provenance provenance_from_string(const std::string& s);

struct ManifestEntry {
    std::string image;       // relative to the manifest's directory
    std::string annotation;  // may be empty
    Split split = Split::train;
    std::string color;
    Provenance provenance = Provenance::real;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
    static constexpr int kFormatVersion = 1;

    std::uint64_t seed = 0;
    int format_version = kFormatVersion;
    std::vector<ManifestEntry> entries;

    std::size_t count(Split s) const;
    void validate() const;

    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// Line-delimited JSON: a header record, then one record per entry.
std::string manifest_to_jsonl(const DatasetManifest& m);
DatasetManifest manifest_from_jsonl(const std::string& text, const std::string& source = "<string>");
void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Seeded shuffle of the entries not tagged test; the first `train_count`
/// become train, the next `val_count` val, the rest test. Entry order is
/// preserved, only tags change.
DatasetManifest split_manifest(const DatasetManifest& m, std::size_t train_count, std::size_t val_count, Rng& rng);

}  // namespace genfusion
