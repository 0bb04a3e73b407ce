#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tempofit/extractors.hpp"
#include "tempofit/rng.hpp"
#include "tempofit/tensor.hpp"
#include "tempofit/videoio.hpp"

namespace tempofit {

struct ManifestEntry {
    std::string path;         // relative paths resolve against the manifest's directory
    std::string label;        // class name, must appear in the labels file
    std::size_t class_id = 0;
};

// CSV with header `path,label` plus a companion labels file, one class name
// per line, line index = class id.
struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::vector<std::string> class_names;
    std::filesystem::path base_dir;

    std::size_t num_classes() const { return class_names.size(); }

    std::filesystem::path resolve(std::size_t i) const {
        std::filesystem::path p(entries.at(i).path);
        return p.is_absolute() ? p : base_dir / p;
    }
};

inline std::vector<std::string> read_label_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open labels file: " + path.string());
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) names.push_back(line);
    }
    if (names.empty()) throw FormatError("labels file is empty: " + path.string());
    return names;
}

inline DatasetManifest load_manifest(const std::filesystem::path& csv_path,
                                     const std::filesystem::path& labels_path) {
    std::ifstream in(csv_path);
    if (!in) throw std::runtime_error("cannot open manifest: " + csv_path.string());

    DatasetManifest m;
    m.class_names = read_label_file(labels_path);
    m.base_dir = csv_path.parent_path();

    std::string line;
    if (!std::getline(in, line)) throw FormatError("manifest is empty: " + csv_path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "path,label") throw FormatError("manifest must start with header `path,label`");

    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.rfind(',');
        if (comma == std::string::npos) throw FormatError("manifest row missing comma: " + line);
        ManifestEntry e;
        e.path = line.substr(0, comma);
        e.label = line.substr(comma + 1);
        bool found = false;
        for (std::size_t c = 0; c < m.class_names.size(); ++c) {
            if (m.class_names[c] == e.label) {
                e.class_id = c;
                found = true;
                break;
            }
        }
        if (!found) throw FormatError("manifest label not in labels file: " + e.label);
        m.entries.push_back(std::move(e));
    }
    if (m.entries.empty()) throw FormatError("manifest has no samples: " + csv_path.string());
    return m;
}

enum class SplitBucket : std::uint8_t { train, val, test };

struct SplitAssignment {
    std::vector<SplitBucket> bucket;  // one per manifest entry

    std::vector<std::size_t> indices(SplitBucket b) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < bucket.size(); ++i) {
            if (bucket[i] == b) out.push_back(i);
        }
        return out;
    }
};

// Per class: hold out max(1, floor(n/5)) for test, then max(1, floor(n'/5))
// of the remainder for validation, rest train. Seeded shuffle makes the
// assignment deterministic.
inline SplitAssignment split_dataset(const DatasetManifest& manifest, std::uint64_t seed) {
    SplitAssignment out;
    out.bucket.assign(manifest.entries.size(), SplitBucket::train);
    Rng rng(mix_seed(seed, 0x59117));

    for (std::size_t c = 0; c < manifest.num_classes(); ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
            if (manifest.entries[i].class_id == c) idx.push_back(i);
        }
        const std::size_t n = idx.size();
        if (n < 3) {
            throw std::invalid_argument("class `" + manifest.class_names[c] +
                                        "` has fewer than 3 samples; cannot split");
        }
        rng.shuffle(idx);
        const std::size_t n_test = std::max<std::size_t>(1, n / 5);
        const std::size_t n_rem = n - n_test;
        const std::size_t n_val = std::max<std::size_t>(1, n_rem / 5);
        for (std::size_t j = 0; j < n; ++j) {
            if (j < n_test) {
                out.bucket[idx[j]] = SplitBucket::test;
            } else if (j < n_test + n_val) {
                out.bucket[idx[j]] = SplitBucket::val;
            } else {
                out.bucket[idx[j]] = SplitBucket::train;
            }
        }
    }
    return out;
}

template <typename S>
struct LoadedSample {
    Tensor<S> data;  // (T,H,W,C) from FSEQ or (T,D) from FEAT
    std::size_t label = 0;
};

// Loads every sample into memory; training data here is desk-scale.
template <typename S>
std::vector<LoadedSample<S>> load_samples(const DatasetManifest& manifest) {
    std::vector<LoadedSample<S>> out;
    out.reserve(manifest.entries.size());
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const auto path = manifest.resolve(i);
        const std::string ext = path.extension().string();
        LoadedSample<S> s;
        s.label = manifest.entries[i].class_id;
        if (ext == ".fseq") {
            s.data = tensor_cast<S>(read_fseq(path));
        } else if (ext == ".feat") {
            s.data = tensor_cast<S>(read_feat(path));
        } else {
            throw std::runtime_error("unsupported sample type (want .fseq or .feat): " + path.string());
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace tempofit
