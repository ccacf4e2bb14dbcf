#ifndef EARBIO_DATASET_HPP
#define EARBIO_DATASET_HPP

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "earbio/chain.hpp"
#include "earbio/image_io.hpp"
#include "earbio/random.hpp"

namespace earbio {

enum class Split { Train, Test, Unsplit };
enum class Provenance { Original, Augmented, EdgeMap };

NLOHMANN_JSON_SERIALIZE_ENUM(Split, {{Split::Train, "TRAIN"}, {Split::Test, "TEST"}, {Split::Unsplit, "UNSPLIT"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Provenance, {{Provenance::Original, "original"},
                                          {Provenance::Augmented, "augmented"},
                                          {Provenance::EdgeMap, "edge_map"}})

struct Record {
    std::string id;
    fs::path path;
    std::string label;
    Split split = Split::Unsplit;
    Provenance provenance = Provenance::Original;
    std::optional<TransformChain> chain;  // present iff provenance == Augmented

    friend bool operator==(const Record&, const Record&) = default;
};

struct DatasetManifest {
    std::string dataset_name;
    std::vector<Record> records;
    std::size_t class_count = 0;
    std::optional<std::uint64_t> created_with_seed;

    /// Distinct labels in sorted order; position is the dense class index.
    std::vector<std::string> labels() const {
        std::set<std::string> s;
        for (const auto& r : records) s.insert(r.label);
        return {s.begin(), s.end()};
    }

    void refresh_class_count() { class_count = labels().size(); }

    std::size_t count(Split s) const {
        return static_cast<std::size_t>(
            std::count_if(records.begin(), records.end(), [s](const Record& r) { return r.split == s; }));
    }

    std::vector<Record> select(Split s) const {
        std::vector<Record> out;
        std::copy_if(records.begin(), records.end(), std::back_inserter(out),
                     [s](const Record& r) { return r.split == s; });
        return out;
    }

    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

enum class Layout { PerSubjectDirectories, FilenamePattern };

struct DatasetProfile {
    Layout layout = Layout::PerSubjectDirectories;
    std::string label_pattern;  // one capture group, matched against the file name
    std::optional<std::pair<int, int>> expected_resolution;
    bool zoom_enabled = true;

    /// AMI: 492 x 702 images, zoomed.
    static DatasetProfile ami() { return {Layout::PerSubjectDirectories, "", std::pair{492, 702}, true}; }
    /// EarVN1.0: variable resolution, never zoomed.
    static DatasetProfile earvn() { return {Layout::PerSubjectDirectories, "", std::nullopt, false}; }
};

struct ScanResult {
    DatasetManifest manifest;
    std::vector<std::string> warnings;
};

/// One record per PNG/JPEG under `root`, sorted by path, all UNSPLIT.
inline ScanResult scan_dataset(const fs::path& root, const DatasetProfile& profile,
                               const std::string& dataset_name = "") {
    std::error_code ec;
    if (!fs::is_directory(root, ec)) throw Error(Errc::FileNotFound, "dataset root " + root.string());

    std::optional<std::regex> pattern;
    if (profile.layout == Layout::FilenamePattern) {
        try {
            pattern.emplace(profile.label_pattern);
        } catch (const std::regex_error& e) {
            throw Error(Errc::InvalidConfig, "bad label pattern: " + std::string(e.what()));
        }
        if (pattern->mark_count() != 1) {
            throw Error(Errc::InvalidConfig, "label pattern needs exactly one capture group");
        }
    }

    std::vector<fs::path> files;
    for (auto it = fs::recursive_directory_iterator(root, fs::directory_options::skip_permission_denied);
         it != fs::recursive_directory_iterator(); ++it) {
        if (it->is_regular_file() && has_image_extension(it->path())) files.push_back(it->path());
    }
    if (files.empty()) throw Error(Errc::EmptyDataset, "no images under " + root.string());
    std::sort(files.begin(), files.end());

    ScanResult res;
    res.manifest.dataset_name = dataset_name.empty() ? root.filename().string() : dataset_name;
    for (const auto& f : files) {
        const fs::path rel = f.lexically_relative(root);
        Record r;
        r.id = rel.generic_string();
        r.path = f;
        if (profile.layout == Layout::PerSubjectDirectories) {
            if (std::distance(rel.begin(), rel.end()) < 2) {
                throw Error(Errc::NoLabelMatch, f.string() + " is not inside a subject directory");
            }
            r.label = rel.begin()->string();
        } else {
            std::smatch m;
            const std::string name = f.filename().string();
            if (!std::regex_search(name, m, *pattern)) throw Error(Errc::NoLabelMatch, f.string());
            r.label = m[1].str();
        }
        if (!std::ifstream(f, std::ios::binary)) throw Error(Errc::UnreadableFile, f.string());
        if (profile.expected_resolution) {
            const auto dims = image_dimensions(f);
            if (dims != *profile.expected_resolution) {
                res.warnings.push_back(f.string() + ": resolution " + std::to_string(dims.first) + "x" +
                                       std::to_string(dims.second) + " differs from expected " +
                                       std::to_string(profile.expected_resolution->first) + "x" +
                                       std::to_string(profile.expected_resolution->second));
            }
        }
        res.manifest.records.push_back(std::move(r));
    }
    res.manifest.refresh_class_count();
    return res;
}

/// Number of TEST records drawn from a class of size n.
inline std::size_t test_count_for(std::size_t n, double test_fraction) {
    // The epsilon keeps products like 0.3 * 10 from rounding up past an integer.
    auto k = static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(n) - 1e-9));
    return std::clamp<std::size_t>(k, 1, n - 1);
}

/// Stratified split: ceil(test_fraction * n) records of each label go to TEST
/// (at least one, never all), chosen by a per-label seeded shuffle.
inline DatasetManifest split_manifest(const DatasetManifest& m, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw Error(Errc::InvalidArgument, "test fraction must lie in (0, 1)");
    }
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < m.records.size(); ++i) groups[m.records[i].label].push_back(i);
    for (const auto& [label, idx] : groups) {
        if (idx.size() < 2) throw Error(Errc::SingletonClass, "label '" + label + "' has a single record");
    }
    DatasetManifest out = m;
    for (auto& [label, idx] : groups) {
        Rng rng(combine_seed(seed, label));
        rng.shuffle(idx);
        const std::size_t k = test_count_for(idx.size(), test_fraction);
        for (std::size_t j = 0; j < idx.size(); ++j) out.records[idx[j]].split = j < k ? Split::Test : Split::Train;
    }
    out.created_with_seed = seed;
    out.refresh_class_count();
    return out;
}

inline constexpr const char* kManifestVersion = "manifest_v1";

inline nlohmann::json manifest_to_json(const DatasetManifest& m, const fs::path& base_dir) {
    nlohmann::json recs = nlohmann::json::array();
    const fs::path base = fs::weakly_canonical(fs::absolute(base_dir));
    for (const auto& r : m.records) {
        const fs::path abs = fs::weakly_canonical(fs::absolute(r.path));
        nlohmann::json j{{"id", r.id},
                         {"path", abs.lexically_relative(base).generic_string()},
                         {"label", r.label},
                         {"split", r.split},
                         {"provenance", r.provenance}};
        if (r.chain) j["chain"] = *r.chain;
        recs.push_back(std::move(j));
    }
    nlohmann::json j{{"version", kManifestVersion},
                     {"dataset_name", m.dataset_name},
                     {"class_count", m.class_count},
                     {"records", std::move(recs)}};
    if (m.created_with_seed) j["seed"] = *m.created_with_seed;
    return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw Error(Errc::MalformedManifest, "manifest must be a JSON object");
    if (!j.contains("version")) throw Error(Errc::MalformedManifest, "missing 'version'");
    if (j.at("version") != kManifestVersion) {
        throw Error(Errc::SchemaVersionMismatch, "expected " + std::string(kManifestVersion) + ", got " +
                                                     j.at("version").dump());
    }
    DatasetManifest m;
    try {
        m.dataset_name = j.at("dataset_name").get<std::string>();
        m.class_count = j.at("class_count").get<std::size_t>();
        if (j.contains("seed")) m.created_with_seed = j.at("seed").get<std::uint64_t>();
        std::set<std::string> seen;
        for (const auto& jr : j.at("records")) {
            Record r;
            r.id = jr.at("id").get<std::string>();
            r.path = (base_dir / fs::path(jr.at("path").get<std::string>())).lexically_normal();
            r.label = jr.at("label").get<std::string>();
            const std::string split = jr.at("split").get<std::string>();
            const std::string prov = jr.at("provenance").get<std::string>();
            r.split = jr.at("split").get<Split>();
            r.provenance = jr.at("provenance").get<Provenance>();
            if (nlohmann::json(r.split).get<std::string>() != split ||
                nlohmann::json(r.provenance).get<std::string>() != prov) {
                throw Error(Errc::MalformedManifest, "record " + r.id + ": bad split or provenance");
            }
            if (jr.contains("chain")) r.chain = jr.at("chain").get<TransformChain>();
            if ((r.provenance == Provenance::Augmented) != r.chain.has_value()) {
                throw Error(Errc::MalformedManifest, "record " + r.id + ": chain must accompany augmented records");
            }
            if (!seen.insert(r.id).second) throw Error(Errc::MalformedManifest, "duplicate record id " + r.id);
            m.records.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::MalformedManifest, e.what());
    }
    if (m.labels().size() != m.class_count) {
        throw Error(Errc::MalformedManifest, "class_count does not match the distinct labels");
    }
    return m;
}

/// Paths are stored relative to the manifest's directory.
inline void write_manifest(const DatasetManifest& m, const fs::path& path) {
    const fs::path dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
    const std::string text = manifest_to_json(m, dir).dump(2) + "\n";
    std::ofstream out(path, std::ios::binary);
    if (!out || !out.write(text.data(), static_cast<std::streamsize>(text.size()))) {
        throw Error(Errc::IoError, "cannot write manifest " + path.string());
    }
}

inline DatasetManifest read_manifest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot read manifest " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::MalformedManifest, path.string() + ": " + e.what());
    }
    const fs::path dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
    return manifest_from_json(j, fs::weakly_canonical(fs::absolute(dir)));
}

}  // namespace earbio

#endif
