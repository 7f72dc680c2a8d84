#pragma once

// File formats: CSV for tables and matrices, JSON for metadata, configs and
// reports. Numbers are written with 17 significant digits so values
// round-trip exactly.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "koopman/dictionary.hpp"
#include "koopman/edmd.hpp"
#include "koopman/ranking.hpp"
#include "koopman/systems.hpp"

namespace koopman::io {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string format_double(double v);
double parse_double(const std::string& s);

/// 64-bit FNV-1a, as 16 hex digits.
std::string fnv1a64(const std::string& bytes);
std::string hash_file(const fs::path& path);

/// Writes `content`, creating parent directories.
void write_text(const fs::path& path, const std::string& content);
std::string read_text(const fs::path& path);
void write_json(const fs::path& path, const json& j);
json read_json(const fs::path& path);

/// One row per matrix row; an optional header line of column names.
std::string matrix_csv(const Matrix& m, const std::vector<std::string>& header = {});
/// Parses a numeric CSV. A first line that does not parse as numbers is
/// returned in `header`.
Matrix parse_matrix_csv(const std::string& text, std::vector<std::string>* header = nullptr);

json to_json(const SystemSpec& spec);
SystemSpec system_from_json(const json& j);

/// Ordered list of {index, name, group, tags}.
json dictionary_manifest(const Dictionary& dict);
std::string manifest_hash(const Dictionary& dict);

/// <base>.csv (header x1..xd,y1..yd) and <base>.json (spec, seed, counts).
void write_snapshots(const fs::path& base, const SnapshotSet& s);
SnapshotSet read_snapshots(const fs::path& base);

/// <base>.csv (header = observable names) and <base>.json {manifest hash,
/// split, residual, names}.
void write_koopman(const fs::path& base, const KoopmanMatrix& k, const std::string& dict_hash);
KoopmanMatrix read_koopman(const fs::path& base);

/// Signed entries as an array of rows, optionally passed through the display
/// rescale.
json heatmap_json(const Matrix& k, const std::vector<std::string>& names, bool rescale);

json to_json(const BlockReport& r);
json to_json(const GapReport& g);
json to_json(const PprResult& r, const std::vector<std::string>& names);
json to_json(const PerturbationReport& r);
json to_json(const LeakageReport& r);
json to_json(const FiniteSampleParams& p);

/// Columns epsilon, alpha_star_pr, alpha_star_ppr, alpha_star_pr_closed,
/// alpha_star_ppr_closed, alpha_star_pr_mixing.
std::string window_csv(const std::vector<WindowPoint>& points);

/// Record of one CLI run.
struct RunManifest {
    std::string tool_version;
    std::string command;
    std::string config_hash;
    std::vector<std::uint64_t> seeds;
    std::string started;
    std::string finished;
    struct File {
        std::string path;  ///< relative to the output root
        std::string hash;
    };
    std::vector<File> files;

    void add(const fs::path& root, const fs::path& file);
    json to_json() const;
};

std::string utc_timestamp();

}  // namespace koopman::io
