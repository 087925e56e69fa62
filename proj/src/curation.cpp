#include "orient/curation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include "orient/error.hpp"

namespace orient {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> number_or_null(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

void rebuild_review_queue(CurationManifest& m, const std::set<std::string>& extra) {
  std::set<std::string> queue(extra.begin(), extra.end());
  for (const CurationEntry& e : m.objects) {
    if (e.status != CurationStatus::kAligned) queue.insert(e.id);
  }
  m.review_queue.assign(queue.begin(), queue.end());
}

CurationEntry process_one(const MeshEntry& entry, const fs::path& in_dir, const fs::path& out_dir,
                          const VlmClient& client) {
  CurationEntry out;
  out.id = entry.id;
  out.category = entry.category;
  out.source = entry.relative.generic_string();
  try {
    const TriMesh mesh = normalize_mesh(load_mesh(in_dir / entry.relative));
    auto [aligned, verdict] = client.canonicalize(mesh, entry.category);
    out.verdict_raw = verdict.raw_response;
    out.attempts = verdict.attempts;
    if (verdict.label == ViewLabel::kNoFrontView) {
      out.status = CurationStatus::kExcludedNoFront;
      return out;
    }
    const fs::path target = out_dir / entry.relative;
    fs::create_directories(target.parent_path());
    save_mesh(target, aligned);
    out.status = CurationStatus::kAligned;
    out.applied_yaw_deg = verdict.correction_yaw_deg();
  } catch (const std::exception& e) {
    out.status = CurationStatus::kFailed;
    out.applied_yaw_deg.reset();
    out.error = e.what();
  }
  return out;
}

}  // namespace

std::string_view to_string(CurationStatus status) {
  switch (status) {
    case CurationStatus::kAligned: return "aligned";
    case CurationStatus::kExcludedNoFront: return "excluded_no_front";
    case CurationStatus::kFailed: return "failed";
  }
  return "failed";
}

CurationStatus curation_status_from_string(std::string_view s) {
  if (s == "aligned") return CurationStatus::kAligned;
  if (s == "excluded_no_front") return CurationStatus::kExcludedNoFront;
  if (s == "failed") return CurationStatus::kFailed;
  throw Error(ErrorCode::kParse, "unknown curation status: " + std::string(s));
}

const CurationEntry* CurationManifest::find(std::string_view id) const {
  for (const CurationEntry& e : objects) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

json to_json(const CurationManifest& manifest) {
  json objects = json::array();
  for (const CurationEntry& e : manifest.objects) {
    json o = {{"id", e.id},
              {"category", e.category},
              {"source", e.source},
              {"status", to_string(e.status)},
              {"applied_yaw_deg", optional_number(e.applied_yaw_deg)},
              {"verdict_raw", e.verdict_raw},
              {"attempts", e.attempts},
              {"cd_vs_reference", optional_number(e.cd_vs_reference)}};
    if (!e.error.empty()) o["error"] = e.error;
    objects.push_back(std::move(o));
  }
  return {{"schema", 1}, {"objects", objects}, {"review_queue", manifest.review_queue}};
}

CurationManifest manifest_from_json(const json& j) {
  try {
    if (j.at("schema").get<int>() != 1) throw Error(ErrorCode::kUnsupportedFormat, "unsupported manifest schema");
    CurationManifest m;
    for (const json& o : j.at("objects")) {
      CurationEntry e;
      e.id = o.at("id").get<std::string>();
      e.category = o.at("category").get<std::string>();
      e.source = o.value("source", std::string{});
      e.status = curation_status_from_string(o.at("status").get<std::string>());
      e.applied_yaw_deg = number_or_null(o, "applied_yaw_deg");
      e.verdict_raw = o.value("verdict_raw", std::string{});
      e.attempts = o.value("attempts", 0);
      e.error = o.value("error", std::string{});
      e.cd_vs_reference = number_or_null(o, "cd_vs_reference");
      m.objects.push_back(std::move(e));
    }
    if (j.contains("review_queue")) m.review_queue = j["review_queue"].get<std::vector<std::string>>();
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("invalid curation manifest: ") + e.what());
  }
}

CurationManifest load_curation_manifest(const fs::path& path) {
  const json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kParse, "manifest is not valid JSON: " + path.string());
  return manifest_from_json(j);
}

void save_curation_manifest(const fs::path& path, const CurationManifest& manifest) {
  fs::path tmp = path;
  tmp += ".tmp";
  write_file(tmp, to_json(manifest).dump(2) + "\n");
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot replace " + path.string() + ": " + ec.message());
}

std::vector<MeshEntry> list_mesh_entries(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(ErrorCode::kNotFound, "not a directory: " + dir.string());
  std::vector<MeshEntry> out;
  for (const auto& de : fs::recursive_directory_iterator(dir)) {
    if (!de.is_regular_file() || !is_mesh_file(de.path())) continue;
    MeshEntry e;
    e.relative = fs::relative(de.path(), dir);
    e.category = e.relative.has_parent_path() ? e.relative.parent_path().filename().string() : "uncategorized";
    e.id = e.category + "/" + e.relative.stem().string();
    out.push_back(std::move(e));
  }
  std::sort(out.begin(), out.end(), [](const MeshEntry& a, const MeshEntry& b) {
    return a.id != b.id ? a.id < b.id : a.relative < b.relative;
  });
  // Same stem with two extensions: keep ids unique by suffixing the later one.
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].id == out[i - 1].id) out[i].id += out[i].relative.extension().string();
  }
  return out;
}

CurationManifest curate_directory(const fs::path& in_dir, const fs::path& out_dir, const VlmClient& client,
                                  const CurationOptions& options) {
  const std::vector<MeshEntry> entries = list_mesh_entries(in_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + out_dir.string() + ": " + ec.message());
  const fs::path manifest_path = out_dir / kManifestName;

  std::map<std::string, CurationEntry> done;
  std::set<std::string> carried_queue;
  if (options.resume && fs::exists(manifest_path)) {
    CurationManifest previous = load_curation_manifest(manifest_path);
    for (CurationEntry& e : previous.objects) done.emplace(e.id, std::move(e));
    carried_queue.insert(previous.review_queue.begin(), previous.review_queue.end());
  }

  std::vector<const MeshEntry*> todo;
  for (const MeshEntry& e : entries) {
    if (!done.count(e.id)) todo.push_back(&e);
  }
  if (!todo.empty()) (void)client.api_key();  // a missing key would fail every object

  std::mutex writer;
  auto snapshot = [&] {
    CurationManifest m;
    for (const auto& [id, e] : done) m.objects.push_back(e);
    rebuild_review_queue(m, carried_queue);
    return m;
  };
  save_curation_manifest(manifest_path, snapshot());  // fails early on an unwritable out_dir

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < todo.size(); i = next++) {
      CurationEntry result = process_one(*todo[i], in_dir, out_dir, client);
      std::lock_guard lock(writer);
      done[result.id] = std::move(result);
      save_curation_manifest(manifest_path, snapshot());
    }
  };
  const std::size_t n_workers = std::min<std::size_t>(std::max(1, options.workers), todo.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  if (n_workers > 0) worker();
  for (std::thread& t : pool) t.join();

  return snapshot();
}

CurationManifest curate_directory(const fs::path& in_dir, const fs::path& out_dir, const VlmConfig& config,
                                  bool resume) {
  const VlmClient client(config);
  CurationOptions options;
  options.resume = resume;
  return curate_directory(in_dir, out_dir, client, options);
}

json to_json(const ErrorAnalysisReport& report) {
  auto cat_json = [](const CategoryError& c) {
    return json{{"n", c.n}, {"errors", c.errors}, {"error_rate", c.error_rate}};
  };
  json per = json::object();
  for (const auto& [name, c] : report.per_category) per[name] = cat_json(c);
  json cds = json::object();
  for (const auto& [id, cd] : report.cd) cds[id] = std::isfinite(cd) ? json(cd) : json(nullptr);
  return {{"schema", 1},
          {"gamma", report.gamma},
          {"overall", cat_json(report.overall)},
          {"per_category", per},
          {"flagged", report.flagged},
          {"skipped", report.skipped},
          {"cd", cds}};
}

std::set<std::string> read_skip_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read skip list " + path.string());
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    out.insert(line.substr(b, e - b + 1));
  }
  return out;
}

ErrorAnalysisReport vlm_error_analysis(const fs::path& candidate_dir, const fs::path& reference_dir,
                                       const ErrorAnalysisOptions& options) {
  const std::vector<MeshEntry> cand = list_mesh_entries(candidate_dir);
  std::map<std::string, const MeshEntry*> ref;
  const std::vector<MeshEntry> ref_entries = list_mesh_entries(reference_dir);
  for (const MeshEntry& e : ref_entries) ref.emplace(e.id, &e);

  ErrorAnalysisReport report;
  report.gamma = options.gamma;
  MisalignmentOptions mo;
  mo.gamma = options.gamma;
  mo.samples = options.samples;
  mo.seed = options.seed;
  mo.variant = options.variant;

  std::size_t shared = 0;
  for (const MeshEntry& c : cand) {
    const auto it = ref.find(c.id);
    if (it == ref.end()) continue;
    ++shared;
    const std::string stem = c.relative.stem().string();
    if (options.skip.count(c.id) || options.skip.count(stem)) {
      report.skipped.push_back(c.id);
      continue;
    }
    double cd = std::numeric_limits<double>::infinity();
    bool flagged = true;
    try {
      const TriMesh a = normalize_mesh(load_mesh(candidate_dir / c.relative));
      const TriMesh b = normalize_mesh(load_mesh(reference_dir / it->second->relative));
      const MisalignmentResult r = flag_misalignment(a, b, mo);
      cd = r.cd;
      flagged = r.flagged;
    } catch (const Error&) {
      // An unreadable mesh on either side counts against the candidate.
    }
    report.cd[c.id] = cd;
    CategoryError& cat = report.per_category[c.category];
    ++cat.n;
    ++report.overall.n;
    if (flagged) {
      ++cat.errors;
      ++report.overall.errors;
      report.flagged.push_back(c.id);
    }
  }
  if (shared == 0) throw Error(ErrorCode::kEmptyInput, "candidate and reference share no objects");

  auto rate = [](CategoryError& c) { c.error_rate = c.n ? 100.0 * static_cast<double>(c.errors) / c.n : 0.0; };
  for (auto& [name, c] : report.per_category) rate(c);
  rate(report.overall);
  return report;
}

void annotate_manifest(CurationManifest& manifest, const ErrorAnalysisReport& report) {
  std::set<std::string> queue(manifest.review_queue.begin(), manifest.review_queue.end());
  for (CurationEntry& e : manifest.objects) {
    if (const auto it = report.cd.find(e.id); it != report.cd.end() && std::isfinite(it->second)) {
      e.cd_vs_reference = it->second;
    }
  }
  queue.insert(report.flagged.begin(), report.flagged.end());
  manifest.review_queue.assign(queue.begin(), queue.end());
}

}  // namespace orient
