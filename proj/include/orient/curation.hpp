#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "orient/sampling.hpp"
#include "orient/vlm.hpp"

namespace orient {

enum class CurationStatus { kAligned, kExcludedNoFront, kFailed };

std::string_view to_string(CurationStatus status);
CurationStatus curation_status_from_string(std::string_view s);

struct CurationEntry {
  std::string id;        // "<category>/<stem>"
  std::string category;  // name of the parent directory
  std::string source;    // path relative to the input directory
  CurationStatus status = CurationStatus::kFailed;
  std::optional<double> applied_yaw_deg;  // aligned objects only
  std::string verdict_raw;
  int attempts = 0;
  std::string error;  // failed objects only
  std::optional<double> cd_vs_reference;
};

/// JSON with "schema": 1. `objects` is sorted by id; `review_queue` lists
/// the ids that need a human look (excluded, failed, or flagged by error
/// analysis).
struct CurationManifest {
  std::vector<CurationEntry> objects;
  std::vector<std::string> review_queue;

  const CurationEntry* find(std::string_view id) const;
};

nlohmann::json to_json(const CurationManifest& manifest);
CurationManifest manifest_from_json(const nlohmann::json& j);
CurationManifest load_curation_manifest(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames it over `path`.
void save_curation_manifest(const std::filesystem::path& path, const CurationManifest& manifest);

inline constexpr std::string_view kManifestName = "manifest.json";

struct CurationOptions {
  bool resume = false;
  int workers = 4;
};

struct MeshEntry {
  std::string id;
  std::string category;
  std::filesystem::path relative;
};

/// Mesh files under `dir`, laid out as <category>/<stem>.obj|ply, sorted by
/// id. Files directly inside `dir` get the category "uncategorized".
std::vector<MeshEntry> list_mesh_entries(const std::filesystem::path& dir);

/// Normalizes and canonicalizes every mesh under in_dir, mirroring the
/// layout into out_dir, and keeps out_dir/manifest.json current after every
/// object. Per-object failures are recorded, never thrown.
CurationManifest curate_directory(const std::filesystem::path& in_dir, const std::filesystem::path& out_dir,
                                  const VlmClient& client, const CurationOptions& options = {});
CurationManifest curate_directory(const std::filesystem::path& in_dir, const std::filesystem::path& out_dir,
                                  const VlmConfig& config, bool resume);

struct CategoryError {
  std::size_t n = 0;
  std::size_t errors = 0;
  double error_rate = 0.0;  // percent
};

struct ErrorAnalysisReport {
  std::map<std::string, CategoryError> per_category;
  CategoryError overall;
  double gamma = 0.01;
  std::vector<std::string> flagged;  // ids with CD > gamma
  std::vector<std::string> skipped;  // shared ids excluded by the skip list
  std::map<std::string, double> cd;  // every compared id
};

nlohmann::json to_json(const ErrorAnalysisReport& report);

struct ErrorAnalysisOptions {
  double gamma = 0.01;
  std::size_t samples = 10000;
  std::uint64_t seed = 0;
  std::set<std::string> skip;  // ids ("<category>/<stem>") or bare stems
  ChamferVariant variant = kDefaultChamferVariant;
};

/// Newline-delimited ids; blank lines and lines starting with '#' ignored.
std::set<std::string> read_skip_list(const std::filesystem::path& path);

/// Compares identically named meshes of both trees (after normalization)
/// with flag_misalignment. Throws Error(kEmptyInput) if nothing is shared.
ErrorAnalysisReport vlm_error_analysis(const std::filesystem::path& candidate_dir,
                                       const std::filesystem::path& reference_dir,
                                       const ErrorAnalysisOptions& options = {});

/// Copies CDs into the manifest and queues flagged objects for review.
void annotate_manifest(CurationManifest& manifest, const ErrorAnalysisReport& report);

}  // namespace orient
